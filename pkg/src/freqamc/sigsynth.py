"""Synthetic labeled baseband frames for CPFSK, GFSK, PAM4 and QPSK.

Frames follow the received-signal model ``x[k] = sqrt(rho) (s * h)[k] + n[k]``
with complex unit-variance AWGN, then get cropped to ``frame_len`` samples and
normalized to unit energy. Each frame draws from its own substream keyed by
``(seed, class, index)`` so generation order never changes the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, InputError, ShapeError

CLASS_NAMES = ("CPFSK", "GFSK", "PAM4", "QPSK")
DOMAINS = ("time", "freq")

_BITS_PER_SYMBOL = {"CPFSK": 1, "GFSK": 1, "PAM4": 2, "QPSK": 2}

# Gray-coded two-bit maps, indexed by 2*b0 + b1.
_PAM4_LEVELS = np.array([-3.0, -1.0, 3.0, 1.0]) / math.sqrt(5.0)
_QPSK_POINTS = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / math.sqrt(2.0)

# Symbols of guard on either side of the crop window, and the number of
# symbol-aligned crop offsets to choose from.
_GUARD_SYMBOLS = 4
_OFFSET_CHOICES = 8


@dataclass(frozen=True)
class ModulationScheme:
    name: str
    samples_per_symbol: int = 8
    modulation_index: float = 0.5
    gaussian_bt: float = 0.35
    gaussian_span: int = 4

    def __post_init__(self):
        if self.name not in _BITS_PER_SYMBOL:
            raise ConfigurationError(f"unknown modulation scheme {self.name!r}")
        if self.samples_per_symbol < 1:
            raise ConfigurationError("samples_per_symbol must be >= 1")
        if not 0.0 < self.gaussian_bt <= 1.0:
            raise ConfigurationError("gaussian_bt must lie in (0, 1]")

    @property
    def bits_per_symbol(self) -> int:
        return _BITS_PER_SYMBOL[self.name]


def default_schemes() -> list[ModulationScheme]:
    return [ModulationScheme(name) for name in CLASS_NAMES]


@dataclass(frozen=True)
class ChannelConfig:
    """Impairments applied between transmitter and receiver.

    ``fading_taps`` is the channel impulse response; ``cfo_hz_normalized`` is
    the carrier offset in cycles per sample and ``sro_ppm`` the sample-rate
    offset in parts per million. With ``random_phase`` every frame also gets a
    carrier phase drawn uniformly from [0, 2 pi), unknown to the receiver.
    """

    snr_db: float = 18.0
    cfo_hz_normalized: float = 0.0
    sro_ppm: float = 0.0
    fading_taps: tuple = (1 + 0j,)
    noise_enabled: bool = True
    random_phase: bool = True

    def __post_init__(self):
        if len(self.fading_taps) == 0:
            raise ConfigurationError("fading_taps must be nonempty")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ConfigurationError(f"invalid snr_db {self.snr_db}")

    @property
    def rho(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)


@dataclass
class LabeledDataset:
    """Frames of shape (N, frame_len, 2) with integer class labels.

    ``attack`` holds the attack record of perturbed datasets and is None for
    clean ones.
    """

    frames: np.ndarray
    labels: np.ndarray
    domain: str = "time"
    snr_db: float = 18.0
    seed: int = 0
    class_names: list = field(default_factory=lambda: list(CLASS_NAMES))
    attack: Optional[dict] = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.frames.ndim != 3 or self.frames.shape[2] != 2:
            if not (self.frames.size == 0 and self.frames.ndim == 3):
                raise ShapeError(f"frames must be (N, l, 2), got {self.frames.shape}")
        if len(self.frames) != len(self.labels):
            raise ShapeError("frame and label counts differ")
        if self.domain not in DOMAINS:
            raise ConfigurationError(f"unknown domain {self.domain!r}")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InputError("label outside [0, C)")

    def __len__(self):
        return len(self.labels)

    @property
    def frame_len(self) -> int:
        return self.frames.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            self.frames[indices], self.labels[indices], self.domain, self.snr_db,
            self.seed, list(self.class_names), self.attack,
        )


def modulate(bits, scheme: ModulationScheme) -> np.ndarray:
    """Map a bit sequence to unit-average-power complex baseband samples.

    QPSK and PAM4 use Gray-coded rectangular pulses; CPFSK and GFSK are
    continuous-phase, so every output sample has modulus one.
    """
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size == 0:
        raise InputError("empty bit sequence")
    if np.any((bits != 0) & (bits != 1)):
        raise InputError("bits must be 0 or 1")
    sps = scheme.samples_per_symbol
    bps = scheme.bits_per_symbol
    n_sym = bits.size // bps
    if n_sym == 0:
        raise InputError(f"{scheme.name} needs at least {bps} bits")
    bits = bits[: n_sym * bps]

    if scheme.name in ("QPSK", "PAM4"):
        idx = 2 * bits[0::2] + bits[1::2]
        table = _QPSK_POINTS if scheme.name == "QPSK" else _PAM4_LEVELS.astype(complex)
        return np.repeat(table[idx], sps)

    nrz = np.repeat(2.0 * bits - 1.0, sps)
    if scheme.name == "GFSK":
        nrz = np.convolve(nrz, gaussian_pulse(scheme), mode="same")
    phase = np.cumsum(nrz) * (math.pi * scheme.modulation_index / sps)
    return np.exp(1j * phase)


def gaussian_pulse(scheme: ModulationScheme) -> np.ndarray:
    sps = scheme.samples_per_symbol
    t = np.arange(-scheme.gaussian_span * sps // 2, scheme.gaussian_span * sps // 2 + 1) / sps
    bt = scheme.gaussian_bt
    g = np.exp(-2.0 * (math.pi * bt) ** 2 * t**2 / math.log(2.0))
    return g / g.sum()


def apply_channel(signal, cfg: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    signal = np.asarray(signal, dtype=complex)
    taps = np.asarray(cfg.fading_taps, dtype=complex)
    if signal.size < taps.size:
        raise InputError("signal shorter than the channel impulse response")
    y = np.convolve(signal, taps, mode="valid") if taps.size > 1 or taps[0] != 1 else signal.copy()
    if cfg.sro_ppm:
        t = np.arange(y.size) * (1.0 + cfg.sro_ppm * 1e-6)
        t = t[t <= y.size - 1]
        y = np.interp(t, np.arange(y.size), y.real) + 1j * np.interp(t, np.arange(y.size), y.imag)
    if cfg.cfo_hz_normalized:
        y = y * np.exp(2j * math.pi * cfg.cfo_hz_normalized * np.arange(y.size))
    if cfg.random_phase:
        y = y * np.exp(1j * rng.uniform(0.0, 2.0 * math.pi))
    y = math.sqrt(cfg.rho) * y
    if cfg.noise_enabled:
        y = y + (rng.standard_normal(y.size) + 1j * rng.standard_normal(y.size)) * math.sqrt(0.5)
    return y


def normalize_unit_energy(frame) -> np.ndarray:
    """Scale a frame (or a batch of frames) so that sum(I^2 + Q^2) == 1."""
    frame = np.asarray(frame)
    energy = np.sum(frame.astype(np.float64) ** 2, axis=(-2, -1), keepdims=True)
    if np.any(energy == 0):
        raise DegenerateInputError("cannot normalize an all-zero frame")
    return (frame / np.sqrt(energy)).astype(frame.dtype if frame.dtype.kind == "f" else np.float64)


def iq_matrix(samples: np.ndarray) -> np.ndarray:
    return np.stack([samples.real, samples.imag], axis=-1)


def frame_substream(seed: int, class_index: int, frame_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, class_index, frame_index]))


def synthesize_frame(scheme: ModulationScheme, frame_len: int, cfg: ChannelConfig,
                     rng: np.random.Generator) -> np.ndarray:
    sps = scheme.samples_per_symbol
    needed = frame_len + len(cfg.fading_taps) - 1
    if cfg.sro_ppm > 0:
        needed = int(math.ceil(needed * (1.0 + cfg.sro_ppm * 1e-6))) + 1
    n_sym = -(-needed // sps) + 2 * _GUARD_SYMBOLS + _OFFSET_CHOICES
    bits = rng.integers(0, 2, size=n_sym * scheme.bits_per_symbol)
    x = apply_channel(modulate(bits, scheme), cfg, rng)
    start = (_GUARD_SYMBOLS + int(rng.integers(0, _OFFSET_CHOICES))) * sps
    if start + frame_len > x.size:
        raise RuntimeError("generated sequence shorter than the requested frame")
    return normalize_unit_energy(iq_matrix(x[start:start + frame_len]))


def synthesize_dataset(per_class: int, frame_len: int = 128,
                       schemes: Optional[Sequence[ModulationScheme]] = None,
                       cfg: Optional[ChannelConfig] = None, seed: int = 0) -> LabeledDataset:
    if per_class < 1:
        raise InputError("per_class must be >= 1")
    if frame_len < 1:
        raise InputError("frame_len must be >= 1")
    schemes = default_schemes() if schemes is None else list(schemes)
    if not schemes:
        raise InputError("no modulation schemes given")
    cfg = cfg or ChannelConfig()
    frames = np.empty((per_class * len(schemes), frame_len, 2), dtype=np.float32)
    labels = np.repeat(np.arange(len(schemes)), per_class)
    for ci, scheme in enumerate(schemes):
        for i in range(per_class):
            rng = frame_substream(seed, ci, i)
            frames[ci * per_class + i] = synthesize_frame(scheme, frame_len, cfg, rng)
    return LabeledDataset(frames, labels, "time", float(cfg.snr_db), int(seed),
                          [s.name for s in schemes])
