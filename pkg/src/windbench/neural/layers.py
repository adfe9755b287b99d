"""Layers with explicit forward/backward passes.

Batches are leading-axis arrays. Sequence-shaped tensors are channels-last:
``(batch, length, channels)``. Each layer keeps what its backward pass
needs from the latest forward call, so forward/backward must alternate.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import SequenceTooShort, ShapeMismatch


sigmoid = expit


def init_weights(rng, shape, fan_in, scheme):
    if scheme == "normal":
        return rng.normal(0.0, 0.05, size=shape)
    if scheme == "he":
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    if scheme == "zeros":
        return np.zeros(shape)
    raise ValueError(f"unknown init scheme {scheme!r}")


class Layer:
    kind = ""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        if self.grads.keys() == self.params.keys():
            for g in self.grads.values():
                g.fill(0.0)
        else:
            self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def config(self) -> dict:
        return {"kind": self.kind}

    def kink_state(self):
        """Discrete choices made in the last forward pass (relu signs, pool
        winners). A finite-difference probe is only valid if both sides of
        the probe keep these unchanged."""
        return ()

    def n_params(self):
        return sum(v.size for v in self.params.values())


class Dense(Layer):
    """h = g(x W^T + c) with W of shape (out, in)."""

    kind = "dense"

    def __init__(self, n_in, n_out, activation="linear", rng=None, init="he"):
        super().__init__()
        if activation not in ("relu", "linear"):
            raise ValueError(f"unsupported activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        self.params = {"W": init_weights(rng, (n_out, n_in), n_in, init), "c": np.zeros(n_out)}
        self.zero_grad()

    def config(self):
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out,
                "activation": self.activation}

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeMismatch(f"dense layer expects (batch, {self.n_in}), got {x.shape}")
        self._x = x
        z = x @ self.params["W"].T + self.params["c"]
        self._z = z
        return np.maximum(z, 0.0) if self.activation == "relu" else z

    def backward(self, grad_out):
        dz = grad_out * (self._z > 0) if self.activation == "relu" else grad_out
        self.grads["W"] += dz.T @ self._x
        self.grads["c"] += dz.sum(axis=0)
        return dz @ self.params["W"]

    def kink_state(self):
        return (self._z > 0,) if self.activation == "relu" else ()


class Conv1d(Layer):
    """Valid (unpadded) 1-D convolution, stride 1, relu by default.

    weights: (filters, in_channels, kernel_size); output length L - k + 1.
    """

    kind = "conv1d"

    def __init__(self, in_channels, filters, kernel_size, activation="relu", rng=None, init="he"):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels, self.filters, self.kernel_size = in_channels, filters, kernel_size
        self.activation = activation
        fan_in = in_channels * kernel_size
        self.params = {"W": init_weights(rng, (filters, in_channels, kernel_size), fan_in, init),
                       "b": np.zeros(filters)}
        self.zero_grad()

    def config(self):
        return {"kind": self.kind, "in_channels": self.in_channels, "filters": self.filters,
                "kernel_size": self.kernel_size, "activation": self.activation}

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeMismatch(f"conv1d expects (batch, length, {self.in_channels}), got {x.shape}")
        L = x.shape[1]
        if L < self.kernel_size:
            raise SequenceTooShort(f"length {L} is shorter than kernel {self.kernel_size}")
        n_out = L - self.kernel_size + 1
        # im2col: column block k holds x[t + k], so one matmul does the whole layer
        self._cols = np.concatenate([x[:, k:k + n_out, :] for k in range(self.kernel_size)], axis=2)
        self._in_shape = x.shape
        z = self._cols @ self._wmat() + self.params["b"]
        self._z = z
        return np.maximum(z, 0.0) if self.activation == "relu" else z

    def _wmat(self):
        # (filters, C, K) -> (K*C, filters) matching the im2col column order
        K, C, F = self.kernel_size, self.in_channels, self.filters
        return self.params["W"].transpose(2, 1, 0).reshape(K * C, F)

    def backward(self, grad_out):
        dz = grad_out * (self._z > 0) if self.activation == "relu" else grad_out
        K, C, F = self.kernel_size, self.in_channels, self.filters
        dz2 = dz.reshape(-1, F)
        dw = self._cols.reshape(-1, K * C).T @ dz2
        self.grads["W"] += dw.reshape(K, C, F).transpose(2, 1, 0)
        self.grads["b"] += dz2.sum(axis=0)
        dcols = dz @ self._wmat().T
        n_out = dz.shape[1]
        dx = np.zeros(self._in_shape)
        for k in range(K):
            dx[:, k:k + n_out, :] += dcols[:, :, k * C:(k + 1) * C]
        return dx

    def kink_state(self):
        return (self._z > 0,) if self.activation == "relu" else ()


class MaxPool1d(Layer):
    """Non-overlapping max pooling; trailing elements that do not fill a
    window are dropped (output length floor(L / pool))."""

    kind = "maxpool1d"

    def __init__(self, pool=2):
        super().__init__()
        self.pool = pool

    def config(self):
        return {"kind": self.kind, "pool": self.pool}

    def forward(self, x):
        B, L, C = x.shape
        n_out = L // self.pool
        if n_out == 0:
            raise SequenceTooShort(f"length {L} is shorter than pool {self.pool}")
        self._shape = x.shape
        windows = x[:, : n_out * self.pool, :].reshape(B, n_out, self.pool, C)
        # running max over the (small) pool axis; strict > keeps the first winner
        best = windows[:, :, 0, :]
        arg = np.zeros(best.shape, dtype=np.int8)
        for k in range(1, self.pool):
            cand = windows[:, :, k, :]
            arg[cand > best] = k
            best = np.maximum(best, cand)
        self._arg = arg
        return np.ascontiguousarray(best)

    def backward(self, grad_out):
        B, L, C = self._shape
        n_out = grad_out.shape[1]
        # gradient goes to the first maximal element of each window
        hit = np.arange(self.pool)[None, None, :, None] == self._arg[:, :, None, :]
        dwin = hit * grad_out[:, :, None, :]
        dx = np.zeros(self._shape)
        dx[:, : n_out * self.pool, :] = dwin.reshape(B, n_out * self.pool, C)
        return dx

    def kink_state(self):
        return (self._arg,)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


class Reshape(Layer):
    """Reshape each sample, e.g. a feature vector into a 1-channel sequence."""

    kind = "reshape"

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def config(self):
        return {"kind": self.kind, "shape": list(self.shape)}

    def forward(self, x):
        self._shape = x.shape
        return x.reshape((x.shape[0], *self.shape))

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)
