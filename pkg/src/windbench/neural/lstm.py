"""LSTM cell and sequence layer with backpropagation through time.

Per step, for gate g in {f, i, o}:
    g_t = sigmoid(W_g x_t + U_g h_{t-1} + b_g)
    c_t = f_t * c_{t-1} + i_t * tanh(W_c x_t + U_c h_{t-1} + b_c)
    h_t = o_t * tanh(c_t)

The four gate blocks are stored stacked in the order f, i, o, c:
``W`` is (4h, d), ``U`` is (4h, h), ``b`` is (4h,). ``cell.W_f``,
``cell.U_o``, ``cell.b_c`` etc. are views of the matching block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from .layers import Layer, init_weights, sigmoid

GATES = ("f", "i", "o", "c")


@dataclass
class StepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    pre: np.ndarray  # (B, 4h) gate pre-activations
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    g: np.ndarray  # tanh candidate
    c: np.ndarray
    tanh_c: np.ndarray


class LSTMCell:
    """One LSTM unit of ``hidden`` cells over ``input_dim`` inputs.

    ``force_gates`` is a test hook: e.g. ``{"f": 1.0, "i": 0.0}`` pins those
    gate activations to constants (and zeroes their gradients).
    """

    def __init__(self, input_dim, hidden, rng=None, init="normal", forget_bias=1.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim, self.hidden = input_dim, hidden
        self.params = {
            "W": init_weights(rng, (4 * hidden, input_dim), input_dim, init),
            "U": init_weights(rng, (4 * hidden, hidden), hidden, init),
            "b": np.zeros(4 * hidden),
        }
        self.params["b"][:hidden] = forget_bias
        self.force_gates = None

    def __getattr__(self, name):
        kind, _, gate = name.partition("_")
        if kind in ("W", "U", "b") and gate in GATES and "params" in self.__dict__:
            k, h = GATES.index(gate), self.hidden
            return self.params[kind][k * h:(k + 1) * h]
        raise AttributeError(name)

    def step(self, x, h_prev, c_prev):
        """One timestep; returns (h_t, c_t, cache)."""
        x = np.atleast_2d(x)
        if x.shape[-1] != self.input_dim or h_prev.shape[-1] != self.hidden:
            raise ShapeMismatch(f"cell expects x (..., {self.input_dim}), h (..., {self.hidden})")
        h = self.hidden
        p = self.params
        pre = x @ p["W"].T + h_prev @ p["U"].T + p["b"]
        gates = sigmoid(pre[:, :3 * h])
        f, i, o = gates[:, :h], gates[:, h:2 * h], gates[:, 2 * h:]
        if self.force_gates:
            pinned = {"f": f, "i": i, "o": o}
            for name, value in self.force_gates.items():
                pinned[name][...] = value
        g = np.tanh(pre[:, 3 * h:])
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        return o * tanh_c, c, StepCache(x, h_prev, c_prev, pre, f, i, o, g, c, tanh_c)

    def step_backward(self, cache: StepCache, dh, dc, grads):
        """Accumulate parameter gradients into ``grads``; return (dx, dh_prev, dc_prev)."""
        h = self.hidden
        dc = dc + dh * cache.o * (1.0 - cache.tanh_c ** 2)
        da = np.empty_like(cache.pre)
        da[:, :h] = dc * cache.c_prev * cache.f * (1.0 - cache.f)
        da[:, h:2 * h] = dc * cache.g * cache.i * (1.0 - cache.i)
        da[:, 2 * h:3 * h] = dh * cache.tanh_c * cache.o * (1.0 - cache.o)
        da[:, 3 * h:] = dc * cache.i * (1.0 - cache.g ** 2)
        if self.force_gates:
            for name in self.force_gates:
                k = GATES.index(name)
                da[:, k * h:(k + 1) * h] = 0.0
        p = self.params
        grads["W"] += da.T @ cache.x
        grads["U"] += da.T @ cache.h_prev
        grads["b"] += da.sum(axis=0)
        return da @ p["W"], da @ p["U"], dc * cache.f


def lstm_step(cell: LSTMCell, x_t, h_prev, c_prev):
    return cell.step(x_t, h_prev, c_prev)


class LSTM(Layer):
    """Runs a cell over (batch, T, d) from zero state and emits h_T."""

    kind = "lstm"

    def __init__(self, input_dim, hidden, rng=None, init="normal", forget_bias=1.0):
        super().__init__()
        self.cell = LSTMCell(input_dim, hidden, rng, init, forget_bias)
        self.params = self.cell.params
        self.forget_bias = forget_bias
        self.zero_grad()

    def config(self):
        return {"kind": self.kind, "input_dim": self.cell.input_dim, "hidden": self.cell.hidden,
                "forget_bias": self.forget_bias}

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.cell.input_dim:
            raise ShapeMismatch(f"lstm expects (batch, T, {self.cell.input_dim}), got {x.shape}")
        B, T, _ = x.shape
        h = np.zeros((B, self.cell.hidden))
        c = np.zeros((B, self.cell.hidden))
        self._caches = []
        for t in range(T):
            h, c, cache = self.cell.step(x[:, t, :], h, c)
            self._caches.append(cache)
        return h

    def backward(self, grad_out):
        B = grad_out.shape[0]
        T = len(self._caches)
        dx = np.zeros((B, T, self.cell.input_dim))
        dh = grad_out
        dc = np.zeros_like(grad_out)
        for t in reversed(range(T)):
            dx[:, t, :], dh, dc = self.cell.step_backward(self._caches[t], dh, dc, self.grads)
        return dx
