"""Frequency-domain features.

``dft`` computes the unnormalized forward transform
``X[p] = sum_k x[k] exp(-j 2 pi p k / l)`` of frames stored as (..., l, 2)
real/imag matrices. Power-of-two lengths go through an iterative radix-2
transform; other lengths fall back to the dense DFT matrix. Accumulation is
float64 and output is float32, matching the on-disk frame precision.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DomainError, ShapeError
from .sigsynth import LabeledDataset


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def fft_radix2(x: np.ndarray) -> np.ndarray:
    """Decimation-in-time FFT along the last axis; length must be 2**m."""
    n = x.shape[-1]
    if n & (n - 1):
        raise ShapeError(f"radix-2 transform needs a power-of-two length, got {n}")
    a = np.asarray(x, dtype=np.complex128)[..., _bit_reverse(n)]
    lead = a.shape[:-1]
    half = 1
    while half < n:
        twiddle = np.exp(-1j * np.pi * np.arange(half) / half)
        blocks = a.reshape(*lead, n // (2 * half), 2, half)
        even = blocks[..., 0, :]
        odd = blocks[..., 1, :] * twiddle
        a = np.stack([even + odd, even - odd], axis=-2).reshape(*lead, n)
        half *= 2
    return a


def dft(frames) -> np.ndarray:
    """Transform one (l, 2) frame or a batch (N, l, 2) into frequency bins."""
    frames = np.asarray(frames)
    if frames.ndim < 2 or frames.shape[-1] != 2 or frames.shape[-2] < 1:
        raise ShapeError(f"expected (..., l, 2) frames, got {frames.shape}")
    x = frames[..., 0].astype(np.float64) + 1j * frames[..., 1].astype(np.float64)
    n = x.shape[-1]
    X = fft_radix2(x) if n & (n - 1) == 0 else x @ _dft_matrix(n).T
    return np.stack([X.real, X.imag], axis=-1).astype(np.float32)


def transform_dataset(ds: LabeledDataset) -> LabeledDataset:
    if ds.domain != "time":
        raise DomainError(f"dataset is already in the {ds.domain} domain")
    frames = dft(ds.frames) if len(ds) else ds.frames.copy()
    return LabeledDataset(frames, ds.labels.copy(), "freq", ds.snr_db, ds.seed,
                          list(ds.class_names), ds.attack)
