"""Empirical wavelet, Allan and Hadamard variances.

All scales are in samples; divide by the sampling frequency for seconds.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .robust import m_scale2, tuning_constant
from .wavelets import dwt_haar, modwt_haar

__all__ = [
    "AvSeries",
    "ComparisonReport",
    "WvSeries",
    "avar",
    "chi2_interval",
    "compare_wvar",
    "equivalent_dof",
    "hvar",
    "wvar",
    "wvar_clustered",
    "wvar_robust",
]


def equivalent_dof(n: int, levels: Sequence[int] | np.ndarray) -> np.ndarray:
    """``max((n - 2**j + 1) / 2**j, 1)`` per level ``j``."""
    j = np.asarray(levels, dtype=float)
    return np.maximum((n - 2.0**j + 1.0) / 2.0**j, 1.0)


def chi2_interval(estimate, edf, alpha: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Chi-square interval ``[eta*v / q(1-alpha/2), eta*v / q(alpha/2)]``."""
    estimate = np.asarray(estimate, dtype=float)
    edf = np.asarray(edf, dtype=float)
    lo = edf * estimate / stats.chi2.ppf(1.0 - alpha / 2.0, edf)
    hi = edf * estimate / stats.chi2.ppf(alpha / 2.0, edf)
    return lo, hi


@dataclass(frozen=True)
class WvSeries:
    """Wavelet variance per dyadic scale with chi-square confidence bounds."""

    scales: np.ndarray
    estimates: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    counts: np.ndarray
    edf: np.ndarray
    n: int
    transform: str = "MODWT"
    robust: bool = False
    efficiency: float = 1.0
    alpha: float = 0.05
    freq: float = 1.0
    degenerate: bool = False

    @property
    def levels(self) -> int:
        return int(self.scales.size)

    @property
    def time_scales(self) -> np.ndarray:
        return self.scales / self.freq

    def rows(self) -> list[tuple[float, float, float, float, int]]:
        return [
            (float(s), float(e), float(lo), float(hi), int(c))
            for s, e, lo, hi, c in zip(self.time_scales, self.estimates, self.ci_lo, self.ci_hi, self.counts)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scale", "estimate", "ci_lo", "ci_hi", "n"])
        for s, e, lo, hi, c in self.rows():
            w.writerow([repr(s), repr(e), repr(lo), repr(hi), c])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "kind": "wvar",
            "transform": self.transform,
            "robust": self.robust,
            "efficiency": self.efficiency,
            "alpha": self.alpha,
            "freq": self.freq,
            "n": self.n,
            "degenerate": self.degenerate,
            "scale": [float(s) for s in self.time_scales],
            "estimate": [float(v) for v in self.estimates],
            "ci_lo": [float(v) for v in self.ci_lo],
            "ci_hi": [float(v) for v in self.ci_hi],
            "count": [int(c) for c in self.counts],
            "edf": [float(v) for v in self.edf],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _build(est, counts, n, levels, alpha, transform, robust, efficiency, freq) -> WvSeries:
    est = np.asarray(est, dtype=float)
    edf = equivalent_dof(n, levels)
    lo, hi = chi2_interval(est, edf * efficiency, alpha)
    return WvSeries(
        scales=2.0 ** np.asarray(levels, dtype=float),
        estimates=est,
        ci_lo=lo,
        ci_hi=hi,
        counts=np.asarray(counts, dtype=int),
        edf=edf,
        n=int(n),
        transform=transform,
        robust=robust,
        efficiency=float(efficiency),
        alpha=alpha,
        freq=float(freq),
        degenerate=bool(np.all(est == 0.0)),
    )


def _decompose(signal, levels, transform):
    transform = transform.upper()
    if transform == "MODWT":
        dec = modwt_haar(signal, levels)
        return dec, [c for c in dec.coefficients]
    if transform == "DWT":
        dec = dwt_haar(signal, levels)
        # rescale to MODWT amplitude so both estimate the same quantity
        return dec, [c / 2.0 ** ((j + 1) / 2.0) for j, c in enumerate(dec.coefficients)]
    raise ValueError(f"unknown transform {transform!r}")


def wvar(signal, levels: int | None = None, transform: str = "MODWT", alpha: float = 0.05, freq: float = 1.0) -> WvSeries:
    """Classical wavelet variance: mean of squared coefficients per level."""
    dec, coefs = _decompose(signal, levels, transform)
    n = int(np.asarray(signal).size)
    est = [float(np.dot(c, c)) / c.size for c in coefs]
    return _build(est, dec.counts, n, np.arange(1, dec.levels + 1), alpha, transform.upper(), False, 1.0, freq)


def wvar_robust(
    signal,
    levels: int | None = None,
    efficiency: float = 0.6,
    transform: str = "MODWT",
    alpha: float = 0.05,
    freq: float = 1.0,
) -> WvSeries:
    """Robust wavelet variance from a biweight M-scale of each level's coefficients.

    ``efficiency`` in (0.5, 1] trades robustness (near 0.5) for Gaussian
    efficiency; at 1 the estimator is the classical one.  Confidence bounds
    use the equivalent degrees of freedom scaled by ``efficiency``.
    """
    c = tuning_constant(efficiency)
    dec, coefs = _decompose(signal, levels, transform)
    n = int(np.asarray(signal).size)
    est = [m_scale2(w, c) for w in coefs]
    return _build(est, dec.counts, n, np.arange(1, dec.levels + 1), alpha, transform.upper(), True, efficiency, freq)


def wvar_clustered(signal, levels: int | None = None) -> np.ndarray:
    """Haar wavelet variance from coefficients aligned with non-overlapping clusters.

    Level ``j`` keeps every ``2**(j-1)``-th MODWT coefficient, so each one
    compares two adjacent clusters of the traditional Allan variance with
    ``m = 2**(j-1)``; then ``avar(x, m).estimates == 2 * wvar_clustered(x)``.
    """
    dec = modwt_haar(signal, levels)
    return np.array([float(np.mean(w[:: 2 ** j] ** 2)) for j, w in enumerate(dec.coefficients)])


# -- Allan / Hadamard ----------------------------------------------------------


@dataclass(frozen=True)
class AvSeries:
    """Allan or Hadamard variance at cluster lengths ``m`` (samples)."""

    m: np.ndarray
    estimates: np.ndarray
    counts: np.ndarray
    kind: str = "allan"
    variant: str = "traditional"
    freq: float = 1.0

    @property
    def tau(self) -> np.ndarray:
        return self.m / self.freq

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scale", "estimate", "n"])
        for t, e, c in zip(self.tau, self.estimates, self.counts):
            w.writerow([repr(float(t)), repr(float(e)), int(c)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "variant": self.variant,
            "freq": self.freq,
            "m": [int(v) for v in self.m],
            "scale": [float(v) for v in self.tau],
            "estimate": [float(v) for v in self.estimates],
            "count": [int(v) for v in self.counts],
        }


def _window_sums(x: np.ndarray, m: int) -> np.ndarray:
    """``out[k] = x[k:k+m].sum()`` built from dyadic windows (no global cumsum)."""
    n = x.size - m + 1
    out = np.zeros(n)
    pos = 0
    window = x
    width = 1
    rest = m
    while rest:
        if rest & 1:
            out += window[pos : pos + n]
            pos += width
        rest >>= 1
        if rest:
            window = window[:-width] + window[width:]
            width *= 2
    return out


def _default_m(n: int, clusters: int) -> np.ndarray:
    top = int(np.floor(np.log2(n / clusters)))
    if top < 0:
        raise ValueError("signal too short")
    return 2 ** np.arange(0, top + 1)


def avar(signal, m: Sequence[int] | None = None, variant: str = "traditional", freq: float = 1.0) -> AvSeries:
    """Allan variance of rate samples at cluster lengths ``m``.

    ``traditional`` uses non-overlapping clusters, ``overlapping`` every
    start index, and ``modified`` the additional phase averaging of the
    modified Allan variance.  Default ``m`` are powers of two up to a quarter
    of the record.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise ValueError("signal must be a finite 1-D array")
    variant = variant.lower()
    if variant not in ("traditional", "overlapping", "modified"):
        raise ValueError(f"unknown Allan variant {variant!r}")
    ms = _default_m(x.size, 4) if m is None else np.asarray(m, dtype=int)
    est, counts = [], []
    for mm in ms:
        mm = int(mm)
        if mm < 1:
            raise ValueError("cluster length must be >= 1")
        need = 3 * mm - 1 if variant == "modified" else 2 * mm
        if x.size < need:
            raise ValueError(f"signal too short for m={mm} (need {need} samples)")
        sums = _window_sums(x, mm)
        if variant == "traditional":
            means = sums[::mm][: x.size // mm] / mm
            d = np.diff(means)
        elif variant == "overlapping":
            d = (sums[mm:] - sums[:-mm]) / mm
        else:
            diff = sums[mm:] - sums[:-mm]  # m * (ybar_next - ybar), all starts
            d = _window_sums(diff, mm) / (mm * mm)
        est.append(0.5 * float(np.mean(d * d)))
        counts.append(d.size)
    return AvSeries(np.asarray(ms), np.asarray(est), np.asarray(counts), "allan", variant, float(freq))


def hvar(signal, m: Sequence[int] | None = None, overlapping: bool = False, freq: float = 1.0) -> AvSeries:
    """Hadamard variance: second differences of cluster means, divided by 6."""
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise ValueError("signal must be a finite 1-D array")
    ms = _default_m(x.size, 4) if m is None else np.asarray(m, dtype=int)
    est, counts = [], []
    for mm in ms:
        mm = int(mm)
        if x.size < 3 * mm:
            raise ValueError(f"signal too short for m={mm} (need {3 * mm} samples)")
        sums = _window_sums(x, mm)
        if overlapping:
            y = sums / mm
            d = y[2 * mm :] - 2.0 * y[mm:-mm] + y[: -2 * mm]
        else:
            y = sums[::mm][: x.size // mm] / mm
            d = y[2:] - 2.0 * y[1:-1] + y[:-2]
        est.append(float(np.mean(d * d)) / 6.0)
        counts.append(d.size)
    variant = "overlapping" if overlapping else "standard"
    return AvSeries(np.asarray(ms), np.asarray(est), np.asarray(counts), "hadamard", variant, float(freq))


# -- comparison ------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonReport:
    scales: np.ndarray
    ratio: np.ndarray
    overlap: np.ndarray
    verdict: str
    labels: tuple[str, str] = ("a", "b")

    @property
    def n_disjoint(self) -> int:
        return int(np.sum(~self.overlap))

    def to_dict(self) -> dict:
        return {
            "kind": "compare",
            "labels": list(self.labels),
            "scale": [float(s) for s in self.scales],
            "ratio": [float(r) for r in self.ratio],
            "overlap": [bool(o) for o in self.overlap],
            "verdict": self.verdict,
        }


def compare_wvar(a: WvSeries, b: WvSeries, min_disjoint: int = 2, labels: tuple[str, str] = ("a", "b")) -> ComparisonReport:
    """Scale-by-scale ratio ``a / b`` and confidence-interval overlap.

    The verdict is ``"robust analysis preferable"`` when at least
    ``min_disjoint`` scales have disjoint intervals, otherwise ``"agree"``.
    """
    if a.scales.shape != b.scales.shape or not np.array_equal(a.scales, b.scales):
        raise ValueError("wavelet variances are on different scale grids")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(b.estimates > 0, a.estimates / b.estimates, np.where(a.estimates > 0, np.inf, 1.0))
    overlap = (a.ci_lo <= b.ci_hi) & (b.ci_lo <= a.ci_hi)
    verdict = "robust analysis preferable" if np.sum(~overlap) >= min_disjoint else "agree"
    return ComparisonReport(a.scales.copy(), ratio, overlap, verdict, labels)
