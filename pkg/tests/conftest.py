import csv

import pytest
from hypothesis import HealthCheck, settings

from windbench.data import CANONICAL_FEATURES, TARGET_NAME, ColumnMapping

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TS_COL = "time"
TS_FMT = "%Y-%m-%d %H:%M"


def mapping_for(features=CANONICAL_FEATURES, aggregation=None, missing=("NaN",)):
    """Identity mapping: source columns carry the canonical names."""
    return ColumnMapping(
        target=TARGET_NAME,
        features={f: f for f in features},
        timestamp_column=TS_COL,
        timestamp_format=TS_FMT,
        aggregation=dict(aggregation or {}),
        missing_values=tuple(missing),
    )


def write_rows(path, mapping, rows):
    """rows: list of (timestamp text, {column: value or text}); unspecified cells get 1.0."""
    cols = [mapping.target, *mapping.features.values()]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([TS_COL, *cols])
        for ts, values in rows:
            w.writerow([ts, *[values.get(c, 1.0) for c in cols]])
    return path


@pytest.fixture
def identity_mapping():
    return mapping_for()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(verdicts):
        terminalreporter.write_line(verdicts[k])
