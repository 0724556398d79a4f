"""Layers with explicit forward/backward passes, all in float64.

Shapes follow the ``[batch, time, ...]`` convention.  Each layer caches what
its backward pass needs during ``forward``; calling ``backward`` without a
preceding ``forward`` raises :class:`NoForwardState`.

Gate layout for both recurrent cells is ``[i, f, o, g]`` along the last axis:
three sigmoid gates followed by the tanh candidate.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ._kernels import convlstm_sequence_backward, convlstm_sequence_forward


class ShapeMismatch(ValueError):
    pass


class KernelTooLong(ShapeMismatch):
    pass


class NoForwardState(RuntimeError):
    pass


def sigmoid(z):
    # expit branches on the sign of z internally, so it never overflows.
    return expit(z)


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------- functional

def dense_forward(x, W, b):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeMismatch(f"dense input {x.shape} does not match weights {W.shape}")
    return x @ W + b


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """[B, T, C] -> [B, T-k+1, k*C], tap-major (valid padding)."""
    B, T, C = x.shape
    Tp = T - k + 1
    cols = np.empty((B, Tp, k, C))
    for j in range(k):
        cols[:, :, j, :] = x[:, j : j + Tp, :]
    return cols.reshape(B, Tp, k * C)


def _col2im(dcols: np.ndarray, k: int, T: int) -> np.ndarray:
    B, Tp, kc = dcols.shape
    d = dcols.reshape(B, Tp, k, kc // k)
    dx = np.zeros((B, T, kc // k))
    for j in range(k):
        dx[:, j : j + Tp, :] += d[:, :, j, :]
    return dx


def _same_pad(k: int) -> tuple[int, int]:
    left = (k - 1) // 2
    return left, k - 1 - left


def _same_spans(k: int, S: int):
    """Per tap j: output rows [s0, s1) read input rows shifted by ``off``."""
    lo, _ = _same_pad(k)
    spans = []
    for j in range(k):
        off = j - lo
        s0, s1 = max(0, -off), min(S, S - off)
        spans.append((j, off, s0, s1))
    return spans


def _im2col_same(x: np.ndarray, k: int) -> np.ndarray:
    """[B, S, C] -> [B, S, k*C] with zero ("same") padding."""
    B, S, C = x.shape
    cols = np.zeros((B, S, k, C))
    for j, off, s0, s1 in _same_spans(k, S):
        if s1 > s0:
            cols[:, s0:s1, j, :] = x[:, s0 + off : s1 + off, :]
    return cols.reshape(B, S, k * C)


def _col2im_same(dcols: np.ndarray, k: int) -> np.ndarray:
    B, S, kc = dcols.shape
    d = dcols.reshape(B, S, k, kc // k)
    dx = np.zeros((B, S, kc // k))
    for j, off, s0, s1 in _same_spans(k, S):
        if s1 > s0:
            dx[:, s0 + off : s1 + off, :] += d[:, s0:s1, j, :]
    return dx


def conv1d_forward(x, kernel, bias):
    """Valid cross-correlation along axis 1: [B, T, C] * [k, C, F] -> [B, T-k+1, F]."""
    x = np.asarray(x, dtype=np.float64)
    k, C, F = kernel.shape
    if x.ndim != 3 or x.shape[2] != C:
        raise ShapeMismatch(f"conv1d input {x.shape} does not match kernel {kernel.shape}")
    if x.shape[1] < k:
        raise KernelTooLong(f"kernel of length {k} exceeds {x.shape[1]} steps")
    return _im2col(x, k) @ kernel.reshape(k * C, F) + bias


def lstm_cell_step(x, h, c, W, U, b):
    """One LSTM step.  Returns ``(h_t, c_t, cache)``."""
    u = h.shape[1]
    z = x @ W + h @ U + b
    s = sigmoid(z[:, : 3 * u])
    i, f, o = s[:, :u], s[:, u : 2 * u], s[:, 2 * u :]
    g = np.tanh(z[:, 3 * u :])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, s, g, tc)


def lstm_cell_step_backward(dh, dc, cache, W, U):
    """Backward of :func:`lstm_cell_step`.

    Returns ``(dx, dh_prev, dc_prev, dW, dU, db)``.
    """
    x, h, c, s, g, tc = cache
    u = h.shape[1]
    i, f, o = s[:, :u], s[:, u : 2 * u], s[:, 2 * u :]
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.empty((x.shape[0], 4 * u))
    dz[:, :u] = dc * g
    dz[:, u : 2 * u] = dc * c
    dz[:, 2 * u : 3 * u] = dh * tc
    dz[:, : 3 * u] *= s * (1.0 - s)
    dz[:, 3 * u :] = dc * i * (1.0 - g * g)
    return dz @ W.T, dz @ U.T, dc * f, x.T @ dz, h.T @ dz, dz.sum(axis=0)


def lstm_cell(x_t, h_prev, c_prev, params: dict):
    """LSTM cell with params ``W [in, 4u]``, ``U [u, 4u]``, ``b [4u]``."""
    W, U, b = params["W"], params["U"], params["b"]
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.ndim != 2 or x_t.shape[1] != W.shape[0] or h_prev.shape != c_prev.shape:
        raise ShapeMismatch(f"lstm_cell input {x_t.shape} / state {h_prev.shape} mismatch")
    if h_prev.shape != (x_t.shape[0], U.shape[0]):
        raise ShapeMismatch(f"state shape {h_prev.shape} != {(x_t.shape[0], U.shape[0])}")
    h, c, _ = lstm_cell_step(x_t, h_prev, c_prev, W, U, b)
    return h, c


def _convlstm_gates(z, c, F):
    s = sigmoid(z[..., : 3 * F])
    g = np.tanh(z[..., 3 * F :])
    c_new = s[..., F : 2 * F] * c + s[..., :F] * g
    tc = np.tanh(c_new)
    return s[..., 2 * F :] * tc, c_new, s, g, tc


def convlstm_cell_step(x, h, c, Wx, Wh, b, zx=None):
    """One Conv-LSTM step over a 1-D spatial axis with same padding.

    ``x [B, S, C]``, ``h, c [B, S, F]``, ``Wx [k, C, 4F]``, ``Wh [k, F, 4F]``.
    ``zx`` may carry a precomputed input-to-state convolution of ``x``.
    """
    k = Wh.shape[0]
    F = h.shape[2]
    xcols = None
    if zx is None:
        xcols = _im2col_same(x, Wx.shape[0])
        zx = xcols @ Wx.reshape(-1, 4 * F)
    hcols = _im2col_same(h, k)
    z = zx + hcols @ Wh.reshape(-1, 4 * F) + b
    h_new, c_new, s, g, tc = _convlstm_gates(z, c, F)
    return h_new, c_new, (xcols, hcols, c, s, g, tc)


def _convlstm_recurrent_backward(dh, dc, cache, Wh):
    """Gradient through one step's gates and state-to-state convolution.

    Returns ``(dz, dh_prev, dc_prev, dWh)``; ``dz`` is the gradient at the
    gate pre-activations, from which the input-side gradients follow.
    """
    _, hcols, c, s, g, tc = cache
    F = c.shape[2]
    i, f, o = s[..., :F], s[..., F : 2 * F], s[..., 2 * F :]
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.empty(c.shape[:2] + (4 * F,))
    dz[..., :F] = dc * g
    dz[..., F : 2 * F] = dc * c
    dz[..., 2 * F : 3 * F] = dh * tc
    dz[..., : 3 * F] *= s * (1.0 - s)
    dz[..., 3 * F :] = dc * i * (1.0 - g * g)
    k = Wh.shape[0]
    dz2 = dz.reshape(-1, 4 * F)
    dWh = (hcols.reshape(-1, hcols.shape[2]).T @ dz2).reshape(Wh.shape)
    dh_prev = _col2im_same(dz @ Wh.reshape(-1, 4 * F).T, k)
    return dz, dh_prev, dc * f, dWh


def convlstm_cell_step_backward(dh, dc, cache, Wx, Wh):
    """Returns ``(dx, dh_prev, dc_prev, dWx, dWh, db)``."""
    xcols = cache[0]
    dz, dh_prev, dc_prev, dWh = _convlstm_recurrent_backward(dh, dc, cache, Wh)
    F4 = dz.shape[2]
    dz2 = dz.reshape(-1, F4)
    dWx = (xcols.reshape(-1, xcols.shape[2]).T @ dz2).reshape(Wx.shape)
    dx = _col2im_same(dz @ Wx.reshape(-1, F4).T, Wx.shape[0])
    return dx, dh_prev, dc_prev, dWx, dWh, dz2.sum(axis=0)


def convlstm_cell(x_t, h_prev, c_prev, params: dict):
    """Conv-LSTM cell with params ``Wx [k, C, 4F]``, ``Wh [k, F, 4F]``, ``b [4F]``."""
    Wx, Wh, b = params["Wx"], params["Wh"], params["b"]
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.ndim != 3 or x_t.shape[2] != Wx.shape[1]:
        raise ShapeMismatch(f"convlstm_cell input {x_t.shape} does not match Wx {Wx.shape}")
    expected = (x_t.shape[0], x_t.shape[1], Wh.shape[1])
    if h_prev.shape != expected or c_prev.shape != expected:
        raise ShapeMismatch(f"state shapes {h_prev.shape}, {c_prev.shape} != {expected}")
    h, c, _ = convlstm_cell_step(x_t, h_prev, c_prev, Wx, Wh, b)
    return h, c


# -------------------------------------------------------------------- layers

class Layer:
    """Base layer: parameter dict, gradient dict, forward/backward."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _need_cache(self):
        if self._cache is None:
            raise NoForwardState(f"{type(self).__name__}.backward called before forward")
        return self._cache

    def zero_grads(self):
        for name, p in self.params.items():
            self.grads[name] = np.zeros_like(p)

    def config(self) -> dict:
        return {"type": type(self).__name__}


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params["W"] = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.params["b"] = np.zeros(n_out)
        self.zero_grads()

    def forward(self, x):
        y = dense_forward(x, self.params["W"], self.params["b"])
        self._cache = x
        return y

    def backward(self, dy):
        x = self._need_cache()
        self.grads["W"] = x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T

    def config(self):
        n_in, n_out = self.params["W"].shape
        return {"type": "Dense", "n_in": n_in, "n_out": n_out}


class Conv1D(Layer):
    """Valid 1-D convolution over the time axis."""

    def __init__(self, channels: int, filters: int, kernel_size: int, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        k = kernel_size
        self.params["W"] = glorot_uniform(rng, (k, channels, filters), k * channels, k * filters)
        self.params["b"] = np.zeros(filters)
        self.zero_grads()

    def forward(self, x):
        y = conv1d_forward(x, self.params["W"], self.params["b"])
        self._cache = x
        return y

    def backward(self, dy):
        x = self._need_cache()
        W = self.params["W"]
        k, C, F = W.shape
        cols = _im2col(x, k)
        self.grads["W"] = (cols.reshape(-1, k * C).T @ dy.reshape(-1, F)).reshape(k, C, F)
        self.grads["b"] = dy.sum(axis=(0, 1))
        return _col2im(dy @ W.reshape(k * C, F).T, k, x.shape[1])

    def config(self):
        k, C, F = self.params["W"].shape
        return {"type": "Conv1D", "channels": C, "filters": F, "kernel_size": k}


class ReLU(Layer):
    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dy):
        return dy * self._need_cache()


class Flatten(Layer):
    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._need_cache())


class Reshape(Layer):
    """Reshape the non-batch axes to ``shape``."""

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x):
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, dy):
        return dy.reshape(self._need_cache())

    def config(self):
        return {"type": "Reshape", "shape": list(self.shape)}


class LSTM(Layer):
    """LSTM unrolled over the time axis; returns the last hidden state."""

    def __init__(self, n_in: int, units: int, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.units = units
        self.params["W"] = glorot_uniform(rng, (n_in, 4 * units), n_in, 4 * units)
        self.params["U"] = glorot_uniform(rng, (units, 4 * units), units, 4 * units)
        b = np.zeros(4 * units)
        b[units : 2 * units] = 1.0  # forget gate
        self.params["b"] = b
        self.zero_grads()

    def forward(self, x):
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        if x.ndim != 3 or x.shape[2] != W.shape[0]:
            raise ShapeMismatch(f"LSTM input {x.shape} does not match W {W.shape}")
        B = x.shape[0]
        h = np.zeros((B, self.units))
        c = np.zeros((B, self.units))
        caches = []
        for t in range(x.shape[1]):
            h, c, cache = lstm_cell_step(x[:, t, :], h, c, W, U, b)
            caches.append(cache)
        self._cache = (x.shape, caches)
        return h

    def backward(self, dy):
        shape, caches = self._need_cache()
        W, U = self.params["W"], self.params["U"]
        dx = np.empty(shape)
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        db = np.zeros_like(self.params["b"])
        dh = dy
        dc = np.zeros_like(dy)
        for t in range(shape[1] - 1, -1, -1):
            dx[:, t, :], dh, dc, gW, gU, gb = lstm_cell_step_backward(dh, dc, caches[t], W, U)
            dW += gW
            dU += gU
            db += gb
        self.grads.update(W=dW, U=dU, b=db)
        return dx

    def config(self):
        return {"type": "LSTM", "n_in": self.params["W"].shape[0], "units": self.units}


class ConvLSTM(Layer):
    """Conv-LSTM over ``[B, T, S, C]`` sequences; returns the last hidden state ``[B, S, F]``."""

    def __init__(self, channels: int, filters: int, kernel_size: int, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        k = kernel_size
        self.filters = filters
        self.params["Wx"] = glorot_uniform(rng, (k, channels, 4 * filters), k * channels, k * 4 * filters)
        self.params["Wh"] = glorot_uniform(rng, (k, filters, 4 * filters), k * filters, k * 4 * filters)
        b = np.zeros(4 * filters)
        b[filters : 2 * filters] = 1.0
        self.params["b"] = b
        self.zero_grads()

    def forward(self, x):
        Wx, Wh, b = self.params["Wx"], self.params["Wh"], self.params["b"]
        if x.ndim != 4 or x.shape[3] != Wx.shape[1]:
            raise ShapeMismatch(f"ConvLSTM input {x.shape} does not match Wx {Wx.shape}")
        B, T, S, C = x.shape
        F = self.filters
        # The input-to-state convolution does not depend on h: do all steps at once.
        x = np.ascontiguousarray(x, dtype=np.float64)
        xcols = _im2col_same(x.reshape(B * T, S, C), Wx.shape[0])
        zx = (xcols @ Wx.reshape(-1, 4 * F)).reshape(B, T, S, 4 * F)
        hs, cs, sg, gg, tc = convlstm_sequence_forward(zx, Wh, b)
        self._cache = (x.shape, xcols, hs, cs, sg, gg, tc)
        return hs[:, T].copy()

    def backward(self, dy):
        shape, xcols, hs, cs, sg, gg, tc = self._need_cache()
        Wx, Wh = self.params["Wx"], self.params["Wh"]
        B, T, S, C = shape
        F4 = 4 * self.filters
        dzs, dWh = convlstm_sequence_backward(np.ascontiguousarray(dy, dtype=np.float64), hs, cs, sg, gg, tc, Wh)
        dz2 = dzs.reshape(-1, F4)
        dWx = (xcols.reshape(-1, xcols.shape[2]).T @ dz2).reshape(Wx.shape)
        dx = _col2im_same(dzs.reshape(B * T, S, F4) @ Wx.reshape(-1, F4).T, Wx.shape[0])
        self.grads.update(Wx=dWx, Wh=dWh, b=dz2.sum(axis=0))
        return dx.reshape(shape)

    def config(self):
        k, C, _ = self.params["Wx"].shape
        return {"type": "ConvLSTM", "channels": C, "filters": self.filters, "kernel_size": k}


class Sequential:
    """A stack of layers trained end to end."""

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def named_params(self) -> dict[str, np.ndarray]:
        return {f"{i}.{name}": p for i, layer in enumerate(self.layers) for name, p in layer.params.items()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {f"{i}.{name}": g for i, layer in enumerate(self.layers) for name, g in layer.grads.items()}

    def load_params(self, weights: dict[str, np.ndarray]) -> None:
        own = self.named_params()
        if set(own) != set(weights):
            raise ShapeMismatch(f"weight names differ: {sorted(set(own) ^ set(weights))}")
        for key, value in weights.items():
            i, name = key.split(".", 1)
            if own[key].shape != np.shape(value):
                raise ShapeMismatch(f"{key}: expected {own[key].shape}, got {np.shape(value)}")
            self.layers[int(i)].params[name] = np.array(value, dtype=np.float64)
