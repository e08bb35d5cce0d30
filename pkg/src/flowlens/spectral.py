"""Orthonormal Haar wavelet decomposition and band-energy summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from flowlens.errors import DataError, SizeError

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class DwtDecomposition:
    """``details[0]`` is the finest level (level 1); ``approx`` is level L."""

    details: tuple[np.ndarray, ...]
    approx: np.ndarray

    @property
    def levels(self) -> int:
        return len(self.details)


@dataclass(frozen=True, eq=False)
class BandEnergyProfile:
    energies: np.ndarray  # detail levels 1..L, then the approximation band
    total: float


def _haar_step(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if s.size % 2:
        s = np.append(s, s[-1])
    even, odd = s[0::2], s[1::2]
    return (even + odd) / _SQRT2, (even - odd) / _SQRT2


def haar_dwt(signal, levels: int) -> DwtDecomposition:
    """Multi-level Haar analysis.

    Odd-length inputs at any level get their last sample repeated before
    filtering. ``levels`` is clamped to ``floor(log2(len(signal)))``.
    """
    s = np.asarray(signal, dtype=float).ravel()
    if s.size < 2:
        raise SizeError(f"Haar DWT needs at least 2 samples, got {s.size}")
    if not np.all(np.isfinite(s)):
        raise DataError("signal contains non-finite values")
    if levels < 1:
        raise SizeError(f"levels must be >= 1, got {levels}")
    levels = min(levels, int(math.floor(math.log2(s.size))))
    details = []
    approx = s
    for _ in range(levels):
        approx, detail = _haar_step(approx)
        details.append(detail)
    return DwtDecomposition(tuple(details), approx)


def haar_idwt(decomp: DwtDecomposition) -> np.ndarray:
    """Inverse of :func:`haar_dwt` for inputs whose length never needed padding."""
    approx = decomp.approx
    for detail in reversed(decomp.details):
        out = np.empty(2 * approx.size)
        out[0::2] = (approx + detail) / _SQRT2
        out[1::2] = (approx - detail) / _SQRT2
        approx = out
    return approx


def band_energies(decomp: DwtDecomposition) -> BandEnergyProfile:
    energies = np.array([float(np.dot(d, d)) for d in decomp.details]
                        + [float(np.dot(decomp.approx, decomp.approx))])
    return BandEnergyProfile(energies, float(energies.sum()))


def spectral_entropy(profile: BandEnergyProfile) -> float:
    """Shannon entropy in bits of the normalized band energies (0 for zero energy)."""
    e = np.asarray(profile.energies, dtype=float)
    total = e.sum()
    if total <= 0:
        return 0.0
    p = e / total
    p = p[p > 0]  # drop bands whose share underflows to zero
    return float(max(0.0, -np.sum(p * np.log2(p))))
