"""Layer stacks, the three architectures, optimizers, the training loop and
parameter (de)serialization."""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DivergedLoss, SequenceTooShort
from .layers import Conv1d, Dense, Flatten, MaxPool1d, Reshape
from .lstm import LSTM

MAGIC = b"WBNN0001"


class LayerStack:
    """Ordered layers whose parameters and gradients live in two flat
    buffers; each layer's arrays are views into them, so optimizers update
    everything with a handful of vector operations."""

    def __init__(self, layers):
        self.layers = list(layers)
        slots = [(layer, name) for layer in self.layers for name in layer.params]
        total = sum(layer.params[name].size for layer, name in slots)
        self.flat_params = np.zeros(total)
        self.flat_grads = np.zeros(total)
        off = 0
        for layer, name in slots:
            value = layer.params[name]
            view = self.flat_params[off:off + value.size].reshape(value.shape)
            view[...] = value
            layer.params[name] = view  # in place: the LSTM cell shares this dict
            layer.grads[name] = self.flat_grads[off:off + value.size].reshape(value.shape)
            off += value.size

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grad(self):
        self.flat_grads.fill(0.0)

    def named_params(self):
        for k, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield f"{k}.{layer.kind}.{name}", value, layer.grads, name

    def n_params(self):
        return sum(layer.n_params() for layer in self.layers)

    def kink_state(self):
        return [s for layer in self.layers for s in layer.kink_state()]

    def config(self):
        return [layer.config() for layer in self.layers]

    def predict(self, x, batch_size=4096):
        out = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)


def build_mlp(d_in, hidden_layers=13, width=32, activation="relu", seed=0, init="he"):
    """``hidden_layers`` activation layers of ``width`` units, then a linear unit."""
    if width < 1:
        raise ValueError("width must be at least 1")
    rng = np.random.default_rng(seed)
    layers, n = [], d_in
    for _ in range(hidden_layers):
        layers.append(Dense(n, width, activation, rng, init))
        n = width
    layers.append(Dense(n, 1, "linear", rng, init))
    return LayerStack(layers)


def build_cnn1d(d_in, filters=64, kernel_size=2, pool=2, dense_width=50, seed=0, init="he"):
    """Features read as a length-d_in single-channel sequence:
    Conv1d -> MaxPool1d -> Flatten -> Dense(relu) -> Dense(linear)."""
    if d_in < kernel_size:
        raise SequenceTooShort(f"{d_in} features cannot feed a width-{kernel_size} kernel")
    conv_len = d_in - kernel_size + 1
    pooled = conv_len // pool
    if pooled == 0:
        raise SequenceTooShort(f"conv output length {conv_len} is shorter than pool {pool}")
    rng = np.random.default_rng(seed)
    return LayerStack([
        Reshape((d_in, 1)),
        Conv1d(1, filters, kernel_size, "relu", rng, init),
        MaxPool1d(pool),
        Flatten(),
        Dense(pooled * filters, dense_width, "relu", rng, init),
        Dense(dense_width, 1, "linear", rng, init),
    ])


def build_lstm(d_in, hidden=50, seed=0, init="normal", forget_bias=1.0):
    """LSTM over (batch, T, d_in) followed by a linear read-out of h_T."""
    rng = np.random.default_rng(seed)
    return LayerStack([
        LSTM(d_in, hidden, rng, init, forget_bias),
        Dense(hidden, 1, "linear", rng, init),
    ])


def stack_from_config(config):
    layers = []
    for spec in config:
        kind = spec["kind"]
        if kind == "dense":
            layers.append(Dense(spec["n_in"], spec["n_out"], spec["activation"], init="zeros"))
        elif kind == "conv1d":
            layers.append(Conv1d(spec["in_channels"], spec["filters"], spec["kernel_size"],
                                 spec["activation"], init="zeros"))
        elif kind == "maxpool1d":
            layers.append(MaxPool1d(spec["pool"]))
        elif kind == "flatten":
            layers.append(Flatten())
        elif kind == "reshape":
            layers.append(Reshape(spec["shape"]))
        elif kind == "lstm":
            layers.append(LSTM(spec["input_dim"], spec["hidden"], init="zeros",
                               forget_bias=spec.get("forget_bias", 1.0)))
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
    return LayerStack(layers)


def mse_loss(pred, target):
    """Mean squared error and its gradient w.r.t. ``pred``."""
    diff = pred - target.reshape(pred.shape)
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


class SGD:
    def __init__(self, lr=0.01):
        self.lr = lr

    def step(self, stack):
        stack.flat_params -= self.lr * stack.flat_grads


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, stack):
        g = stack.flat_grads
        if self.m is None:
            self.m = np.zeros_like(g)
            self.v = np.zeros_like(g)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * g
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (g * g)
        denom = np.sqrt(self.v / c2)
        denom += self.eps
        stack.flat_params -= (self.lr / c1) * self.m / denom


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def make_optimizer(self):
        if self.optimizer == "sgd":
            return SGD(self.lr)
        return Adam(self.lr, self.beta1, self.beta2, self.eps)

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochTrace:
    loss: list = field(default_factory=list)  # running mean of mini-batch losses
    mse: list = field(default_factory=list)   # full-pass train MSE after the epoch

    def __len__(self):
        return len(self.loss)

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "mse"])
            for k, (a, b) in enumerate(zip(self.loss, self.mse), start=1):
                w.writerow([k, repr(a), repr(b)])

    @classmethod
    def from_csv(cls, path):
        trace = cls()
        with Path(path).open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                trace.loss.append(float(row["loss"]))
                trace.mse.append(float(row["mse"]))
        return trace


def train(stack: LayerStack, X, y, config: TrainConfig, log=None):
    """Mini-batch MSE training with a seeded shuffle each epoch.

    Raises DivergedLoss (carrying the partial trace) if the loss stops
    being finite.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    n = len(X)
    if n == 0:
        raise ValueError("no training samples")
    rng = np.random.default_rng(config.seed)
    opt = config.make_optimizer()
    trace = EpochTrace()
    bs = config.batch_size
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        running = 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, bs):
                rows = perm[start:start + bs]
                stack.zero_grad()
                pred = stack.forward(X[rows])
                loss, grad = mse_loss(pred, y[rows])
                if not math.isfinite(loss):
                    raise DivergedLoss(epoch, trace)
                stack.backward(grad)
                opt.step(stack)
                running += loss * len(rows)
            full = float(np.mean((stack.predict(X) - y) ** 2))
        if not math.isfinite(full):
            raise DivergedLoss(epoch, trace)
        trace.loss.append(running / n)
        trace.mse.append(full)
        if log is not None and (epoch == 1 or epoch % 50 == 0 or epoch == config.epochs):
            log(f"epoch {epoch:4d}  loss {trace.loss[-1]:.6g}  mse {full:.6g}")
    return stack, trace


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_excluded: int
    worst: str = ""
    excluded: list = field(default_factory=list)

    def passed(self, tol=1e-5):
        return self.max_rel_error < tol


def rel_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def gradient_check(stack: LayerStack, X, y=None, step=1e-6, check_input=True, seed=0):
    """Compare backward() with central differences over every parameter (and
    optionally every input entry).

    The loss is MSE against ``y`` or, when ``y`` is None, a fixed random
    projection of the output. Probes that flip a relu sign or a max-pool
    winner are excluded and listed rather than scored.

    Parameters stay fp64, but the probe forward passes run in extended
    precision where the platform has it: at step 1e-6 an fp64 forward pass
    resolves gradients only down to about eps * |output| / step, which is
    coarser than the smallest gradients of a full-size LSTM.
    """
    X = np.array(X, dtype=np.float64)
    Xe = X.astype(np.longdouble)
    if y is None:
        proj = np.random.default_rng(seed).normal(size=stack.forward(X).shape)

        def grad_of(out):
            return proj

        def loss_delta(op, om):
            return np.sum(proj * (op - om))
    else:
        target = np.asarray(y, dtype=np.float64).reshape(stack.forward(X).shape)

        def grad_of(out):
            return mse_loss(out, target)[1]

        def loss_delta(op, om):
            # (op - t)^2 - (om - t)^2, factored so the outputs are differenced first
            return np.mean((op - om) * (op + om - 2.0 * target))

    stack.zero_grad()
    g_out = grad_of(stack.forward(X))
    g_in = stack.backward(g_out)
    analytic = {key: grads[name].copy() for key, _, grads, name in stack.named_params()}
    stack.forward(Xe)
    base_kinks = stack.kink_state()

    def probe(arr, idx):
        old = arr[idx]
        arr[idx] = old + step
        up = np.longdouble(arr[idx]) - np.longdouble(old)  # the step actually taken
        op = stack.forward(Xe)
        kp = stack.kink_state()
        arr[idx] = old - step
        down = np.longdouble(old) - np.longdouble(arr[idx])
        om = stack.forward(Xe)
        km = stack.kink_state()
        arr[idx] = old
        same = all(np.array_equal(a, b) and np.array_equal(a, c)
                   for a, b, c in zip(base_kinks, kp, km))
        return float(loss_delta(op, om) / (up + down)), same

    worst, where, checked, excluded = 0.0, "", 0, []
    targets = [(key, value, analytic[key]) for key, value, _, _ in stack.named_params()]
    if check_input:
        targets.append(("input", Xe, g_in))
    for key, arr, grad in targets:
        for idx in np.ndindex(arr.shape):
            fd, same = probe(arr, idx)
            if not same:
                excluded.append(f"{key}{list(idx)}")
                continue
            err = rel_error(grad[idx], fd)
            checked += 1
            if err > worst:
                worst, where = err, f"{key}{list(idx)}"
    stack.forward(X)  # leave caches consistent with unperturbed parameters
    return GradCheckResult(float(worst), checked, len(excluded), where, excluded)


def save_stack(stack: LayerStack, bin_path, manifest_extra=None):
    """Write parameters as a length-prefixed little-endian fp64 tensor table;
    returns the JSON-able manifest describing architecture and tensor order."""
    tensors = [(key, value) for key, value, _, _ in stack.named_params()]
    with Path(bin_path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for _, value in tensors:
            fh.write(struct.pack("<Q", value.size))
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    manifest = {"architecture": stack.config(),
                "tensors": [{"name": k, "shape": list(v.shape)} for k, v in tensors]}
    if manifest_extra:
        manifest.update(manifest_extra)
    return manifest


def load_stack(bin_path, manifest) -> LayerStack:
    stack = stack_from_config(manifest["architecture"])
    slots = list(stack.named_params())
    data = Path(bin_path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{bin_path} is not a windbench parameter file")
    (count,) = struct.unpack_from("<I", data, 8)
    if count != len(slots) or count != len(manifest["tensors"]):
        raise ValueError("parameter file does not match its manifest")
    off = 12
    for (key, value, _, _), spec in zip(slots, manifest["tensors"]):
        (size,) = struct.unpack_from("<Q", data, off)
        off += 8
        if key != spec["name"] or size != value.size or list(value.shape) != spec["shape"]:
            raise ValueError(f"tensor {key} does not match manifest entry {spec['name']}")
        value[...] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(value.shape)
        off += 8 * size
    return stack


def dump_manifest(path, manifest):
    Path(path).write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
