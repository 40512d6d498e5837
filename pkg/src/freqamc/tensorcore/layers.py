"""Layer kernels with exact reverse-mode gradients.

All layers work on batches (leading axis B). ``forward`` caches what
``backward`` needs; ``backward`` takes dL/d(output), fills ``self.grads`` and
returns dL/d(input) (or None when ``need_input_grad`` is False).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, NumericError, ShapeError


def sigmoid(a):
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(logits, axis=-1):
    """Numerically stable softmax (max-subtracted)."""
    logits = np.asarray(logits)
    if not np.all(np.isfinite(logits)):
        raise NumericError("softmax received non-finite logits")
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def dropout_mask(shape, rate, rng=None, train=True, dtype=np.float32):
    """Inverted-dropout mask: 0 with probability ``rate``, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= rate
    return (keep / (1.0 - rate)).astype(dtype)


class Layer:
    kind = "layer"
    param_names: tuple = ()

    def __init__(self):
        self.params = {}
        self.grads = {}

    def build(self, in_shape, rng, dtype):
        """Allocate parameters for per-sample input shape; return output shape."""
        self.in_shape = tuple(in_shape)
        self.out_shape = self._build(tuple(in_shape), rng, dtype)
        return self.out_shape

    def _build(self, in_shape, rng, dtype):
        return in_shape

    def check_input(self, x):
        if tuple(x.shape[1:]) != self.in_shape:
            raise ShapeError(f"{self.kind} expects per-sample shape {self.in_shape}, got {x.shape[1:]}")

    def spec(self) -> dict:
        return {"kind": self.kind}

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dy, need_input_grad=True):
        raise NotImplementedError


def _uniform(rng, limit, shape, dtype):
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Dense(Layer):
    kind = "dense"
    param_names = ("W", "b")

    def __init__(self, units: int):
        super().__init__()
        if units < 1:
            raise ConfigurationError("dense units must be positive")
        self.units = int(units)

    def _build(self, in_shape, rng, dtype):
        if len(in_shape) != 1:
            raise ShapeError(f"dense layer needs flat input, got {in_shape}")
        fan_in = in_shape[0]
        self.params = {
            "W": _uniform(rng, math.sqrt(6.0 / fan_in), (fan_in, self.units), dtype),
            "b": np.zeros(self.units, dtype=dtype),
        }
        return (self.units,)

    def spec(self):
        return {"kind": self.kind, "units": self.units}

    def forward(self, x, train=False, rng=None):
        self.check_input(x)
        self.x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy, need_input_grad=True):
        self.grads = {"W": self.x.T @ dy, "b": dy.sum(axis=0)}
        return dy @ self.params["W"].T if need_input_grad else None


class Conv2D(Layer):
    """Valid-padding, stride-1 cross-correlation over (C, H, W) inputs."""

    kind = "conv2d"
    param_names = ("W", "b")

    def __init__(self, feature_maps: int, kernel):
        super().__init__()
        kh, kw = (int(k) for k in kernel)
        if feature_maps < 1 or kh < 1 or kw < 1:
            raise ConfigurationError("conv2d sizes must be positive")
        self.feature_maps = int(feature_maps)
        self.kernel = (kh, kw)

    def _build(self, in_shape, rng, dtype):
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d needs (C, H, W) input, got {in_shape}")
        c_in, h, w = in_shape
        kh, kw = self.kernel
        if kh > h or kw > w:
            raise ShapeError(f"kernel {self.kernel} larger than input {h}x{w}")
        fan_in = c_in * kh * kw
        self.params = {
            "W": _uniform(rng, math.sqrt(6.0 / fan_in), (self.feature_maps, c_in, kh, kw), dtype),
            "b": np.zeros(self.feature_maps, dtype=dtype),
        }
        return (self.feature_maps, h - kh + 1, w - kw + 1)

    def spec(self):
        return {"kind": self.kind, "feature_maps": self.feature_maps, "kernel": list(self.kernel)}

    def forward(self, x, train=False, rng=None):
        self.check_input(x)
        kh, kw = self.kernel
        b = x.shape[0]
        _, ho, wo = self.out_shape
        win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # (B, C, H', W', kh, kw)
        self.cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, -1)
        w = self.params["W"].reshape(self.feature_maps, -1)
        out = self.cols @ w.T + self.params["b"]
        return out.reshape(b, ho, wo, self.feature_maps).transpose(0, 3, 1, 2)

    def backward(self, dy, need_input_grad=True):
        b = dy.shape[0]
        c_in, h, w = self.in_shape
        kh, kw = self.kernel
        _, ho, wo = self.out_shape
        dyt = dy.transpose(0, 2, 3, 1).reshape(-1, self.feature_maps)
        self.grads = {
            "W": (dyt.T @ self.cols).reshape(self.params["W"].shape),
            "b": dyt.sum(axis=0),
        }
        if not need_input_grad:
            return None
        dcols = (dyt @ self.params["W"].reshape(self.feature_maps, -1)).reshape(b, ho, wo, c_in, kh, kw)
        dx = np.zeros((b, c_in, h, w), dtype=dy.dtype)
        for i in range(kh):
            for j in range(kw):
                dx[:, :, i:i + ho, j:j + wo] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dx


class LSTM(Layer):
    """Three-gate LSTM over (T, F) sequences, zero initial state.

    Gate blocks in the fused weight matrices are ordered input, forget,
    output, candidate. Returns the full (T, units) hidden sequence.
    """

    kind = "lstm"
    param_names = ("Wx", "Wh", "b")

    def __init__(self, units: int):
        super().__init__()
        if units < 1:
            raise ConfigurationError("lstm units must be positive")
        self.units = int(units)

    def _build(self, in_shape, rng, dtype):
        if len(in_shape) != 2:
            raise ShapeError(f"lstm needs (T, F) input, got {in_shape}")
        t, f = in_shape
        if t < 1:
            raise ShapeError("lstm needs at least one time step")
        u = self.units
        limit = 1.0 / math.sqrt(u)
        bias = np.zeros(4 * u, dtype=dtype)
        bias[u:2 * u] = 1.0
        self.params = {
            "Wx": _uniform(rng, limit, (f, 4 * u), dtype),
            "Wh": _uniform(rng, limit, (u, 4 * u), dtype),
            "b": bias,
        }
        return (t, u)

    def spec(self):
        return {"kind": self.kind, "units": self.units}

    def forward(self, x, train=False, rng=None):
        self.check_input(x)
        b, t_len, _ = x.shape
        u = self.units
        wh = self.params["Wh"]
        xw = x @ self.params["Wx"] + self.params["b"]
        gates = np.empty((b, t_len, 4 * u), dtype=x.dtype)
        cells = np.empty((b, t_len, u), dtype=x.dtype)
        hs = np.empty((b, t_len, u), dtype=x.dtype)
        h = np.zeros((b, u), dtype=x.dtype)
        c = np.zeros((b, u), dtype=x.dtype)
        for t in range(t_len):
            a = xw[:, t] + h @ wh
            g = gates[:, t]
            g[:, :3 * u] = sigmoid(a[:, :3 * u])
            g[:, 3 * u:] = np.tanh(a[:, 3 * u:])
            c = g[:, u:2 * u] * c + g[:, :u] * g[:, 3 * u:]
            h = g[:, 2 * u:3 * u] * np.tanh(c)
            cells[:, t] = c
            hs[:, t] = h
        self.x, self.gates, self.cells, self.hs = x, gates, cells, hs
        return hs

    def backward(self, dy, need_input_grad=True):
        b, t_len, _ = dy.shape
        u = self.units
        wh = self.params["Wh"]
        da_all = np.empty((b, t_len, 4 * u), dtype=dy.dtype)
        dwh = np.zeros_like(wh)
        dh_next = np.zeros((b, u), dtype=dy.dtype)
        dc_next = np.zeros((b, u), dtype=dy.dtype)
        for t in reversed(range(t_len)):
            g = self.gates[:, t]
            gi, gf, go, gc = g[:, :u], g[:, u:2 * u], g[:, 2 * u:3 * u], g[:, 3 * u:]
            c_prev = self.cells[:, t - 1] if t > 0 else np.zeros((b, u), dtype=dy.dtype)
            tc = np.tanh(self.cells[:, t])
            dh = dy[:, t] + dh_next
            dc = dh * go * (1.0 - tc * tc) + dc_next
            da = da_all[:, t]
            da[:, :u] = dc * gc * gi * (1.0 - gi)
            da[:, u:2 * u] = dc * c_prev * gf * (1.0 - gf)
            da[:, 2 * u:3 * u] = dh * tc * go * (1.0 - go)
            da[:, 3 * u:] = dc * gi * (1.0 - gc * gc)
            if t > 0:
                dwh += self.hs[:, t - 1].T @ da
            dh_next = da @ wh.T
            dc_next = dc * gf
        f = self.x.shape[2]
        flat = da_all.reshape(-1, 4 * u)
        self.grads = {
            "Wx": self.x.reshape(-1, f).T @ flat,
            "Wh": dwh,
            "b": flat.sum(axis=0),
        }
        return da_all @ self.params["Wx"].T if need_input_grad else None


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False, rng=None):
        self.mask = x > 0
        return x * self.mask

    def backward(self, dy, need_input_grad=True):
        return dy * self.mask


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = float(rate)

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}

    def forward(self, x, train=False, rng=None):
        if train and self.rate > 0 and rng is None:
            raise ConfigurationError("training-mode dropout needs an rng")
        self.mask = dropout_mask(x.shape, self.rate, rng, train, x.dtype)
        return x * self.mask

    def backward(self, dy, need_input_grad=True):
        return dy * self.mask


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, train=False, rng=None):
        self.p = softmax(x.astype(np.float64)).astype(x.dtype)
        return self.p

    def backward(self, dy, need_input_grad=True):
        p = self.p
        return p * (dy - np.sum(dy * p, axis=-1, keepdims=True))


class Flatten(Layer):
    kind = "flatten"

    def _build(self, in_shape, rng, dtype):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False, rng=None):
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, need_input_grad=True):
        return dy.reshape((dy.shape[0],) + self.in_shape)


class ToImage(Layer):
    """(l, 2) frame -> (1, 2, l) single-channel image, rows are I and Q."""

    kind = "to_image"

    def _build(self, in_shape, rng, dtype):
        if len(in_shape) != 2:
            raise ShapeError(f"to_image needs (l, 2) input, got {in_shape}")
        return (1, in_shape[1], in_shape[0])

    def forward(self, x, train=False, rng=None):
        return x.transpose(0, 2, 1)[:, None]

    def backward(self, dy, need_input_grad=True):
        return dy[:, 0].transpose(0, 2, 1)


class ToSequence(Layer):
    """(C, H, W) feature maps -> (W, C*H) sequence along the width axis."""

    kind = "to_sequence"

    def _build(self, in_shape, rng, dtype):
        if len(in_shape) != 3:
            raise ShapeError(f"to_sequence needs (C, H, W) input, got {in_shape}")
        c, h, w = in_shape
        return (w, c * h)

    def forward(self, x, train=False, rng=None):
        b, c, h, w = x.shape
        return x.reshape(b, c * h, w).transpose(0, 2, 1)

    def backward(self, dy, need_input_grad=True):
        return dy.transpose(0, 2, 1).reshape((dy.shape[0],) + self.in_shape)


class LastStep(Layer):
    kind = "last_step"

    def _build(self, in_shape, rng, dtype):
        if len(in_shape) != 2:
            raise ShapeError(f"last_step needs (T, F) input, got {in_shape}")
        return (in_shape[1],)

    def forward(self, x, train=False, rng=None):
        return x[:, -1]

    def backward(self, dy, need_input_grad=True):
        dx = np.zeros((dy.shape[0],) + self.in_shape, dtype=dy.dtype)
        dx[:, -1] = dy
        return dx


LAYER_KINDS = {
    cls.kind: cls
    for cls in (Dense, Conv2D, LSTM, ReLU, Dropout, Softmax, Flatten, ToImage, ToSequence, LastStep)
}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in LAYER_KINDS:
        raise ConfigurationError(f"unknown layer kind {kind!r}")
    try:
        return LAYER_KINDS[kind](**spec)
    except TypeError as exc:
        raise ConfigurationError(f"bad {kind} layer spec: {exc}") from exc
