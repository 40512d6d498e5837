"""Sequential layer stacks, cross-entropy loss and backpropagation."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, NumericError, ShapeError
from .layers import Softmax, layer_from_spec, softmax

LOG_FLOOR = 1e-12
MODES = ("train", "eval")


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy_loss(predicted, target) -> float:
    """Mean categorical cross-entropy of probability rows against one-hot rows.

    Probabilities are floored at LOG_FLOOR before the log.
    """
    predicted = np.atleast_2d(np.asarray(predicted, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if predicted.shape != target.shape:
        raise ShapeError(f"prediction {predicted.shape} vs target {target.shape}")
    per_sample = -np.sum(target * np.log(np.maximum(predicted, LOG_FLOOR)), axis=1)
    return float(per_sample.mean())


def _softmax_xent_head(logits, labels):
    """Loss and dL/dlogits of mean cross-entropy on softmax(logits), in float64."""
    z = logits.astype(np.float64)
    p = softmax(z)
    n = len(labels)
    rows = np.arange(n)
    p_true = p[rows, labels]
    clamped = p_true < LOG_FLOOR
    loss = float(np.mean(-np.log(np.maximum(p_true, LOG_FLOOR))))
    d = p.copy()
    d[rows, labels] -= 1.0
    d[clamped] = 0.0
    return loss, d / n, p


@dataclass
class BackpropResult:
    loss: float
    grads: dict
    input_grad: np.ndarray
    probs: np.ndarray


class Network:
    """A stack of layers mapping (B, *input_shape) to class probabilities."""

    def __init__(self, specs, input_shape, rng=None, dtype=np.float32):
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        self.layers = [layer_from_spec(s) for s in specs]
        if not self.layers:
            raise ConfigurationError("empty layer stack")
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.build(shape, rng, self.dtype)
        self.output_shape = shape

    @property
    def specs(self) -> list:
        return [layer.spec() for layer in self.layers]

    def parameters(self):
        """(name, array) pairs in checkpoint order: layer index, then layer param order."""
        for i, layer in enumerate(self.layers):
            for name in layer.param_names:
                yield f"{i}.{name}", layer.params[name]

    def num_parameters(self) -> int:
        return sum(a.size for _, a in self.parameters())

    def get_param(self, key):
        i, name = key.split(".")
        return self.layers[int(i)].params[name]

    def astype(self, dtype) -> "Network":
        net = copy.deepcopy(self)
        net.dtype = np.dtype(dtype)
        for layer in net.layers:
            layer.params = {k: v.astype(dtype) for k, v in layer.params.items()}
            layer.grads = {}
        return net

    def _prepare(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if tuple(x.shape[1:]) != self.input_shape:
            if tuple(x.shape) == self.input_shape:
                x = x[None]
            else:
                raise ShapeError(f"network expects input {self.input_shape}, got {x.shape}")
        return x

    def _run(self, x, train, rng, stop=None):
        layers = self.layers if stop is None else self.layers[:stop]
        for i, layer in enumerate(layers):
            x = layer.forward(x, train=train, rng=rng)
            if not np.all(np.isfinite(x)):
                raise NumericError(f"non-finite activation after layer {i} ({layer.kind})")
        return x

    def forward(self, x, train=False, rng=None, batch_size=None):
        x = self._prepare(x)
        if batch_size is None or len(x) <= batch_size:
            return self._run(x, train, rng)
        return np.concatenate([self._run(x[i:i + batch_size], train, rng)
                               for i in range(0, len(x), batch_size)])

    def backprop(self, x, labels, mode="eval", rng=None, input_grad=True) -> BackpropResult:
        """Gradients of the mean batch cross-entropy w.r.t. parameters and input."""
        if mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if not isinstance(self.layers[-1], Softmax):
            raise ConfigurationError("backprop needs a softmax output layer")
        x = self._prepare(x)
        labels = np.asarray(labels, dtype=np.int64)
        if len(labels) != len(x):
            raise ShapeError("label count differs from batch size")
        logits = self._run(x, mode == "train", rng, stop=-1)
        loss, dz, p = _softmax_xent_head(logits, labels)
        d = dz.astype(self.dtype)
        first_param = next((i for i, l in enumerate(self.layers) if l.param_names), 0)
        dx = None
        for i in range(len(self.layers) - 2, -1, -1):
            need = input_grad or i > first_param
            d = self.layers[i].backward(d, need_input_grad=need)
            if d is not None and not np.all(np.isfinite(d)):
                raise NumericError(f"non-finite gradient in layer {i} ({self.layers[i].kind})")
            if not need:
                break
            dx = d
        grads = {}
        for i, layer in enumerate(self.layers):
            for name in layer.param_names:
                grads[f"{i}.{name}"] = layer.grads[name]
        return BackpropResult(loss, grads, dx if input_grad else None, p)


def backprop(model, batch, labels, mode="eval", rng=None):
    """Functional form of ``Network.backprop``: (loss, parameter grads, input grads)."""
    net = getattr(model, "network", model)
    res = net.backprop(batch, labels, mode=mode, rng=rng)
    return res.loss, res.grads, res.input_grad
