"""l2-budgeted gradient attacks crafted on a time-domain surrogate.

FGSM takes a single step of length r along the normalized input gradient of
the cross-entropy loss. BIM takes ``iterations`` steps of length ``alpha``,
recomputing the gradient each time, and projects the cumulative perturbation
back onto the l2 ball of radius r after every step.

r is the effective radius: ``power_budget`` itself under the ``radius``
convention, ``sqrt(power_budget)`` under the ``power`` convention.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DomainError, ThreatModelError
from .sigsynth import LabeledDataset
from .zoo import Model

log = logging.getLogger(__name__)

METHODS = ("FGSM", "BIM")
NORM_CONVENTIONS = ("radius", "power")
_CHUNK = 256


def effective_radius(power_budget: float, norm_convention: str = "radius") -> float:
    if norm_convention not in NORM_CONVENTIONS:
        raise ConfigurationError(f"norm_convention must be one of {NORM_CONVENTIONS}")
    if power_budget < 0:
        raise ConfigurationError("power budget must be nonnegative")
    return power_budget if norm_convention == "radius" else math.sqrt(power_budget)


@dataclass(frozen=True)
class AttackConfig:
    method: str = "FGSM"
    power_budget: float = 0.02
    alpha: Optional[float] = None
    iterations: int = 10
    norm_convention: str = "radius"

    def __post_init__(self):
        object.__setattr__(self, "method", self.method.upper())
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown attack method {self.method!r}")
        r = effective_radius(self.power_budget, self.norm_convention)
        if self.method == "BIM":
            if self.alpha is None:
                raise ConfigurationError("BIM needs a step size alpha")
            # alpha = 0 is allowed so that alpha sweeps can start at the clean point.
            if not 0.0 <= self.alpha <= r * (1 + 1e-12):
                raise ConfigurationError(f"alpha must lie in [0, {r}], got {self.alpha}")
            if self.iterations < 1:
                raise ConfigurationError("iterations must be >= 1")

    @property
    def radius(self) -> float:
        return effective_radius(self.power_budget, self.norm_convention)

    def record(self) -> dict:
        d = asdict(self)
        if self.method == "FGSM":
            d["alpha"] = None
            d["iterations"] = 1
        return d


@dataclass
class AttackResult:
    """Perturbed frames plus per-frame bookkeeping."""

    frames: np.ndarray
    delta_norms: np.ndarray
    zero_gradient: np.ndarray

    @property
    def zero_gradient_count(self) -> int:
        return int(self.zero_gradient.sum())


def _check_surrogate(surrogate: Model):
    if surrogate.domain != "time":
        raise ThreatModelError(
            f"attacks are crafted on time-domain surrogates; {surrogate.name} is {surrogate.domain}-domain")


def _as_batch(frames, labels):
    frames = np.asarray(frames)
    single = frames.ndim == 2
    if single:
        frames = frames[None]
        labels = np.atleast_1d(labels)
    return frames, np.asarray(labels, dtype=np.int64), single


def gradient_directions(surrogate: Model, frames, labels) -> tuple[np.ndarray, np.ndarray]:
    """Unit-l2 input gradients of each frame's loss, float64, plus a zero-gradient mask."""
    net = surrogate.network
    out = np.empty(frames.shape, dtype=np.float64)
    for i in range(0, len(frames), _CHUNK):
        sl = slice(i, i + _CHUNK)
        res = net.backprop(frames[sl], labels[sl], mode="eval")
        out[sl] = res.input_grad
    norms = np.sqrt(np.sum(out * out, axis=(1, 2)))
    zero = norms == 0
    safe = np.where(zero, 1.0, norms)
    return out / safe[:, None, None], zero


def _finish(x, delta, zero, single):
    adv = (x + delta).astype(np.float32)
    norms = np.sqrt(np.sum((adv.astype(np.float64) - x) ** 2, axis=(1, 2)))
    if zero.any():
        log.warning("%d frame(s) had a zero loss gradient and were left unperturbed", int(zero.sum()))
    if single:
        return AttackResult(adv[0], norms[0:1], zero[0:1])
    return AttackResult(adv, norms, zero)


def fgsm(surrogate: Model, frames, labels, power_budget: float,
         norm_convention: str = "radius") -> AttackResult:
    _check_surrogate(surrogate)
    r = effective_radius(power_budget, norm_convention)
    frames, labels, single = _as_batch(frames, labels)
    x = frames.astype(np.float64)
    if r == 0:
        return _finish(x, np.zeros_like(x), np.zeros(len(x), dtype=bool), single)
    u, zero = gradient_directions(surrogate, frames, labels)
    return _finish(x, r * u, zero, single)


def project_l2(delta: np.ndarray, radius: float) -> np.ndarray:
    """Project each (l, 2) perturbation onto the l2 ball of the given radius."""
    norms = np.sqrt(np.sum(delta * delta, axis=(1, 2)))
    scale = np.where(norms > radius, radius / np.where(norms > 0, norms, 1.0), 1.0)
    return delta * scale[:, None, None]


def bim(surrogate: Model, frames, labels, power_budget: float, alpha: float, iterations: int = 10,
        norm_convention: str = "radius") -> AttackResult:
    cfg = AttackConfig("BIM", power_budget, alpha, iterations, norm_convention)
    _check_surrogate(surrogate)
    frames, labels, single = _as_batch(frames, labels)
    x = frames.astype(np.float64)
    delta = np.zeros_like(x)
    zero = np.zeros(len(x), dtype=bool)
    if cfg.radius == 0 or alpha == 0:
        return _finish(x, delta, zero, single)
    dtype = surrogate.network.dtype
    for k in range(iterations):
        u, zero_k = gradient_directions(surrogate, (x + delta).astype(dtype), labels)
        if k == 0:
            zero = zero_k
        delta = project_l2(delta + alpha * u, cfg.radius)
    return _finish(x, delta, zero, single)


def attack(surrogate: Model, frames, labels, cfg: AttackConfig) -> AttackResult:
    if cfg.method == "FGSM":
        return fgsm(surrogate, frames, labels, cfg.power_budget, cfg.norm_convention)
    return bim(surrogate, frames, labels, cfg.power_budget, cfg.alpha, cfg.iterations,
               cfg.norm_convention)


def model_checksum(model: Model) -> str:
    return hashlib.sha256(model.to_bytes()).hexdigest()


def perturb_dataset(surrogate: Model, ds: LabeledDataset, cfg: AttackConfig) -> LabeledDataset:
    """Untargeted attack on every frame using its true label; labels and order kept."""
    if ds.domain != "time":
        raise DomainError("attacks perturb time-domain datasets only")
    result = attack(surrogate, ds.frames, ds.labels, cfg)
    record = cfg.record()
    record.update({
        "surrogate": surrogate.name,
        "surrogate_checksum": model_checksum(surrogate),
        "zero_gradient_frames": result.zero_gradient_count,
        "max_delta_norm": float(result.delta_norms.max()) if len(ds) else 0.0,
    })
    if ds.attack is not None:
        record["source_attack"] = ds.attack
    return LabeledDataset(result.frames, ds.labels.copy(), "time", ds.snr_db, ds.seed,
                          list(ds.class_names), record)
