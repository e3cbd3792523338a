"""Model-implied Haar wavelet variance.

For a stationary block with autocovariance ``gamma`` the level-``j``
variance is ``c' Gamma c / tau**2`` where ``c`` holds ``tau/2`` ones followed
by ``tau/2`` minus ones.  Expanding the Toeplitz form gives an O(tau) sum
over lags (:func:`quadratic_form_wv`).  WN, QN, RW, DR and AR1 use exact
closed forms of that sum; ARMA blocks go through their autocovariances.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np

from .grammar import LatentModel, ProcessBlock

__all__ = [
    "ImpliedWv",
    "WvEvaluator",
    "ar1_wv",
    "arma_acvf",
    "block_wv",
    "implied_wv",
    "implied_wv_jacobian",
    "quadratic_form_wv",
]


def _taus(levels: int | Sequence[int]) -> np.ndarray:
    if np.isscalar(levels):
        n = int(levels)  # type: ignore[arg-type]
        if n < 1:
            raise ValueError("need at least one level")
        js = np.arange(1, n + 1)
    else:
        js = np.asarray(levels, dtype=int)
        if js.size == 0 or np.any(js < 1):
            raise ValueError("levels must be positive integers")
    return 2.0**js


def quadratic_form_wv(acvf: np.ndarray, tau: int) -> float:
    """``c' Gamma c / tau**2`` from autocovariances ``acvf[0 .. tau-1]``."""
    m = tau // 2
    if tau != 2 * m or m < 1:
        raise ValueError("tau must be an even positive integer")
    g = np.asarray(acvf, dtype=float)
    if g.size < tau:
        raise ValueError(f"need {tau} autocovariance lags, got {g.size}")
    h = np.arange(1, tau)
    r = np.where(h <= m, 2 * m - 3 * h, -(2 * m - h)).astype(float)
    return float((tau * g[0] + 2.0 * np.dot(r, g[1:tau])) / (tau * tau))


# -- AR1 closed form -------------------------------------------------------------

_SERIES_TERMS = 26


@lru_cache(maxsize=256)
def _series_coefs(m: int) -> np.ndarray:
    # K_n / (n! (2m+1)^n), K_n = 3 + m 2^n - 4 (m+1)^n + (2m+1)^n, n >= 3
    a = 2.0 * m + 1.0
    out = np.empty(_SERIES_TERMS)
    for i, n in enumerate(range(3, 3 + _SERIES_TERMS)):
        k = 3.0 / a**n + m * (2.0 / a) ** n - 4.0 * ((m + 1.0) / a) ** n + 1.0
        out[i] = (-1.0) ** (n + 1) * k / factorial(n)
    return out


def ar1_wv(phi: float, sigma2: float, taus: np.ndarray) -> np.ndarray:
    """Exact AR1 wavelet variance, stable as ``phi -> 1``.

    ``nu2 = sigma2 * N / (2 m^2 (1-phi)^2 (1-phi^2))`` with
    ``N = m - 3 phi - m phi^2 + 4 phi^(m+1) - phi^(2m+1)`` and ``m = tau/2``.
    For ``phi > 0`` the numerator is rewritten with ``expm1`` and, when the
    leading terms cancel (``m log(1/phi)`` small), summed as a power series.
    """
    taus = np.asarray(taus, dtype=float)
    out = np.empty(taus.size)
    if phi <= 0.0:
        for i, tau in enumerate(taus):
            m = tau / 2.0
            num = m - 3.0 * phi - m * phi**2 + 4.0 * phi ** (m + 1) - phi ** (2 * m + 1)
            out[i] = sigma2 * num / (2.0 * m * m * (1.0 - phi) ** 2 * (1.0 - phi * phi))
        return out
    u = -np.log(phi)
    e1 = -np.expm1(-u)
    e2 = -np.expm1(-2.0 * u)
    for i, tau in enumerate(taus):
        m = int(tau) // 2
        if m * u < 0.1:
            x = (2.0 * m + 1.0) * u
            c = _series_coefs(m)
            num = x**3 * np.polyval(c[::-1], x)
        else:
            num = 3.0 * e1 + m * e2 - 4.0 * -np.expm1(-(m + 1) * u) + -np.expm1(-(2 * m + 1) * u)
        out[i] = sigma2 * num / (2.0 * m * m * e1 * e1 * e2)
    return out


# -- ARMA autocovariance -----------------------------------------------------------


def arma_acvf(ar: Sequence[float], ma: Sequence[float], sigma2: float, nlags: int) -> np.ndarray:
    """Autocovariances ``gamma(0..nlags-1)`` of ``x_t = sum ar_i x_{t-i} + e_t + sum ma_k e_{t-k}``."""
    from statsmodels.tsa.arima_process import arma_acovf

    arp = np.r_[1.0, -np.asarray(ar, dtype=float)]
    map_ = np.r_[1.0, np.asarray(ma, dtype=float)]
    return np.asarray(arma_acovf(arp, map_, nobs=int(nlags), sigma2=float(sigma2)), dtype=float)


# -- per block ---------------------------------------------------------------------


def _block_from_canonical(block: ProcessBlock, vals: Sequence[float], taus: np.ndarray) -> np.ndarray:
    kind = block.kind
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"{block.label}: non-finite parameters")
    if kind == "WN":
        return vals[0] / taus
    if kind == "QN":
        return 6.0 * vals[0] / taus**2
    if kind == "RW":
        return vals[0] * (taus**2 + 2.0) / (12.0 * taus)
    if kind == "DR":
        return vals[0] ** 2 * taus**2 / 16.0
    if kind == "AR1":
        return ar1_wv(float(vals[0]), float(vals[1]), taus)
    if kind in ("AR", "MA", "ARMA"):
        p, q = block.order  # type: ignore[misc]
        g = arma_acvf(vals[:p], vals[p : p + q], vals[p + q], int(taus.max()))
        return np.array([quadratic_form_wv(g, int(t)) for t in taus])
    raise ValueError(f"unknown process kind {kind!r}")


def block_wv(block: ProcessBlock, levels, freq: float = 1.0) -> np.ndarray:
    """Implied WV of a single complete block at the given levels."""
    return _block_from_canonical(block, block.canonical(freq), _taus(levels))


@dataclass(frozen=True)
class ImpliedWv:
    """Implied WV with its per-block decomposition (rows are blocks)."""

    scales: np.ndarray
    values: np.ndarray
    decomposition: np.ndarray
    labels: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "scale": [float(s) for s in self.scales],
            "implied": [float(v) for v in self.values],
            "blocks": {lab: [float(v) for v in row] for lab, row in zip(self.labels, self.decomposition)},
        }


def _block_labels(model: LatentModel) -> tuple[str, ...]:
    counts: dict[str, int] = {}
    for b in model.blocks:
        counts[b.label] = counts.get(b.label, 0) + 1
    seen: dict[str, int] = {}
    out = []
    for b in model.blocks:
        seen[b.label] = seen.get(b.label, 0) + 1
        out.append(f"{b.label}{seen[b.label]}" if counts[b.label] > 1 else b.label)
    return tuple(out)


def implied_wv(model: LatentModel, levels) -> ImpliedWv:
    """Model-implied WV at dyadic scales ``2**j``.

    ``levels`` is either the number of levels ``J`` (scales ``2..2**J``) or an
    explicit sequence of level indices.  Scales are reported in seconds
    (``tau / freq``) while the computation runs in samples.
    """
    if not model.complete:
        raise ValueError("model has unset parameters")
    taus = _taus(levels)
    rows = np.vstack([_block_from_canonical(b, b.canonical(model.freq), taus) for b in model.blocks])
    return ImpliedWv(taus / model.freq, rows.sum(axis=0), rows, _block_labels(model))


class WvEvaluator:
    """Fast implied-WV evaluation from a flat vector of user-parametrized values.

    Avoids rebuilding model objects inside optimizer loops.  GM blocks are
    converted to AR1 on the fly.
    """

    def __init__(self, model: LatentModel, levels):
        self.model = model
        self.taus = _taus(levels)
        self.slices = model.slices
        self.blocks = model.blocks
        self.dt = 1.0 / model.freq

    def block_rows(self, values: np.ndarray) -> np.ndarray:
        rows = np.empty((len(self.blocks), self.taus.size))
        for i, (b, s) in enumerate(zip(self.blocks, self.slices)):
            v = values[s]
            if b.gm:
                beta, s2 = v
                phi = np.exp(-beta * self.dt)
                v = (phi, s2 * -np.expm1(-2.0 * beta * self.dt))
            rows[i] = _block_from_canonical(b, v, self.taus)
        return rows

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return self.block_rows(np.asarray(values, dtype=float)).sum(axis=0)


def implied_wv_jacobian(model: LatentModel, levels, rel_step: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference Jacobian of the implied WV with respect to the user parameters.

    Central differences with step ``rel_step * max(|theta_k|, 1e-8)``; when
    the central stencil would leave the parameter's bounds a one-sided
    difference is used instead.  Pinned parameters get a zero column.

    Returns
    -------
    jac : ndarray, shape (J, p)
    one_sided : ndarray of bool, shape (p,)
        Columns computed with a one-sided difference.
    """
    if not model.complete:
        raise ValueError("model has unset parameters")
    ev = WvEvaluator(model, levels)
    x0 = np.array(model.values, dtype=float)
    free = model.free_mask
    bounds = model.bounds
    jac = np.zeros((ev.taus.size, x0.size))
    one_sided = np.zeros(x0.size, dtype=bool)
    f0 = None
    for k in range(x0.size):
        if not free[k]:
            continue
        h = rel_step * max(abs(x0[k]), 1e-8)
        lo, hi = bounds[k]
        up, dn = x0.copy(), x0.copy()
        up[k] += h
        dn[k] -= h
        if up[k] < hi and dn[k] > lo:
            jac[:, k] = (ev(up) - ev(dn)) / (2.0 * h)
            continue
        one_sided[k] = True
        if f0 is None:
            f0 = ev(x0)
        if up[k] < hi:
            jac[:, k] = (ev(up) - f0) / h
        else:
            jac[:, k] = (f0 - ev(dn)) / h
    return jac, one_sided
