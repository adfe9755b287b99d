"""Exception hierarchy shared by the pipeline stages.

The CLI maps the three top-level families onto exit codes, so anything a
module raises on purpose should derive from one of them.
"""


class WindbenchError(Exception):
    pass


class DataError(WindbenchError):
    """Input files or prepared artifacts are unusable."""


class TrainingError(WindbenchError):
    """A model could not be fitted."""


class NotFittedError(WindbenchError, AttributeError):
    pass


class ShapeMismatch(WindbenchError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped at max_iter; the best iterate was kept."""


# data ingestion

class MissingColumn(DataError):
    def __init__(self, name):
        super().__init__(f"column not found in CSV header: {name!r}")
        self.name = name


class MalformedTimestamp(DataError):
    def __init__(self, row, value=None):
        msg = f"unparseable or out-of-order timestamp at data row {row}"
        if value is not None:
            msg += f": {value!r}"
        super().__init__(msg)
        self.row = row


class EmptyFile(DataError):
    pass


class EmptyInput(DataError):
    pass


class NoCompleteRows(DataError):
    pass


class DegenerateSplit(DataError):
    pass


# metrics

class LengthMismatch(WindbenchError, ValueError):
    pass


class EmptyMetricInput(WindbenchError, ValueError):
    pass


class ZeroVariance(WindbenchError, ValueError):
    pass


class SingularCovariance(WindbenchError, ValueError):
    pass


# neural

class SequenceTooShort(WindbenchError, ValueError):
    pass


class DivergedLoss(TrainingError):
    def __init__(self, epoch, trace):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch
        self.trace = trace
