"""Haar wavelet decompositions across dyadic scales ``tau_j = 2**j``.

Only the Haar filter is implemented.  MODWT coefficients keep the
boundary-free part of each level (``T - 2**j + 1`` values); the DWT is the
orthonormal pyramid algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["FILTERS", "WaveletDecomposition", "default_levels", "dwt_haar", "modwt_haar"]

FILTERS = ("haar",)
_UNIMPLEMENTED = ("d4", "d6", "d8", "fk4", "fk8", "bl14", "la8", "la16", "mb4", "mb8")


@dataclass(frozen=True)
class WaveletDecomposition:
    transform: str
    coefficients: tuple[np.ndarray, ...]
    scaling: np.ndarray | None = None

    @property
    def levels(self) -> int:
        return len(self.coefficients)

    @property
    def scales(self) -> np.ndarray:
        return 2.0 ** np.arange(1, self.levels + 1)

    @property
    def filter_lengths(self) -> np.ndarray:
        return 2 ** np.arange(1, self.levels + 1)

    @property
    def counts(self) -> np.ndarray:
        return np.array([c.size for c in self.coefficients])


def default_levels(n: int) -> int:
    """``floor(log2(n)) - 1``, which leaves at least two coarse coefficients."""
    if n < 4:
        raise ValueError("signal too short: need at least 4 samples")
    return int(np.floor(np.log2(n))) - 1


def _check(signal, levels: int | None, wavelet: str) -> tuple[np.ndarray, int]:
    if wavelet.lower() != "haar":
        if wavelet.lower() in _UNIMPLEMENTED:
            raise NotImplementedError(f"wavelet filter {wavelet!r} is not implemented; only 'haar' is")
        raise ValueError(f"unknown wavelet filter {wavelet!r}")
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    if levels is None:
        levels = default_levels(x.size)
    levels = int(levels)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if x.size < 2**levels:
        raise ValueError(f"signal of length {x.size} too short for {levels} levels (need {2**levels})")
    return x, levels


def modwt_haar(signal, levels: int | None = None, wavelet: str = "haar") -> WaveletDecomposition:
    """Boundary-free Haar MODWT wavelet coefficients.

    Level ``j`` holds ``W[j, t] = 2**-j * (sum of the last 2**(j-1) samples
    minus the sum of the 2**(j-1) before them)`` for every ``t`` with a full
    filter window.  Window sums are built by pairwise doubling, O(T) per
    level, without a global running sum (which loses precision on
    random-walk-like signals).
    """
    x, levels = _check(signal, levels, wavelet)
    window = x  # window[k] = sum of x[k : k + m]
    out = []
    for j in range(1, levels + 1):
        m = 2 ** (j - 1)
        w = window[m:] - window[:-m]
        w *= 2.0**-j  # exact: power of two
        out.append(w)
        window = window[:-m] + window[m:]
    return WaveletDecomposition("MODWT", tuple(out))


def dwt_haar(signal, levels: int | None = None, wavelet: str = "haar") -> WaveletDecomposition:
    """Orthonormal Haar DWT by the pyramid algorithm.

    Level ``j`` has ``floor(T / 2**j)`` coefficients; trailing samples that do
    not fill a pair are dropped, so Parseval holds exactly when ``2**levels``
    divides ``T``.
    """
    x, levels = _check(signal, levels, wavelet)
    a = x
    out = []
    for _ in range(levels):
        n = (a.size // 2) * 2
        even, odd = a[0:n:2], a[1:n:2]
        out.append((odd - even) / np.sqrt(2.0))
        a = (odd + even) / np.sqrt(2.0)
    return WaveletDecomposition("DWT", tuple(out), scaling=a)
