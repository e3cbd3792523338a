"""Starting values for the wavelet-moment fit.

Random draws per process, steered by which process dominates the first
scales, then the draw whose implied WV is flattest relative to the
empirical one is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .grammar import LatentModel, ProcessBlock, ar1_to_gm
from .implied import WvEvaluator
from .rng import stream
from .sumstats import WvSeries

__all__ = [
    "PHI_MAX",
    "DrawState",
    "SignalSummary",
    "dominating_process",
    "draw_process_start",
    "flattening",
    "initial_guess",
    "slope_bounds",
]

PHI_MAX = 0.999995


@dataclass(frozen=True)
class SignalSummary:
    """Length and range of the raw signal."""

    T: int
    min: float
    max: float

    @classmethod
    def of(cls, x: np.ndarray) -> SignalSummary:
        x = np.asarray(x, dtype=float)
        return cls(int(x.size), float(np.min(x)), float(np.max(x)))

    @property
    def range_rate(self) -> float:
        return (self.max - self.min) / self.T


@dataclass
class DrawState:
    """Mutable state carried across the blocks of one draw."""

    total_var: float
    T: int
    range_rate: float
    dominant: str = "WN"
    condition: int = 1
    prev_phi: float = 0.0
    freq: float = 1.0


def slope_bounds(wv: WvSeries) -> np.ndarray:
    """Slopes from the first WV to both chi-square bounds of the second, per octave pair."""
    if wv.levels < 2:
        raise ValueError("need at least two scales")
    nu1, nu2 = wv.estimates[0], wv.estimates[1]
    if not nu1 > 0:
        raise ValueError("first-scale wavelet variance is zero")
    eta = max((wv.n - 4 + 1) / 4.0, 1.0)
    a = np.array([eta * nu2 / stats.chi2.ppf(0.975, eta), eta * nu2 / stats.chi2.ppf(0.025, eta)])
    with np.errstate(divide="ignore"):
        return (np.log(a) - np.log(nu1)) / np.log(4.0)


def dominating_process(wv: WvSeries) -> str:
    """``"QN"``, ``"WN"`` or ``"AR1GM"``: the process that shapes the finest scales."""
    s = slope_bounds(wv)
    if np.max(s) < -0.5:
        return "QN"
    if np.min(s) > -0.5:
        return "AR1GM"
    return "WN"


def _u(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(rng.uniform(lo, hi))


def _positive(rng: np.random.Generator, lo: float, hi: float) -> float:
    # open-at-zero draws must stay strictly inside the parameter space
    v = _u(rng, lo, hi)
    while v <= 0.0:
        v = _u(rng, lo, hi)
    return v


def _pacf_to_coefs(pacf: np.ndarray) -> np.ndarray:
    """Durbin-Levinson map from partial autocorrelations in (-1, 1) to stationary AR coefficients."""
    a = np.zeros(0)
    for k, r in enumerate(pacf):
        a = np.r_[a - r * a[::-1], r] if k else np.array([r])
    return a


def draw_process_start(block: ProcessBlock, state: DrawState, rng: np.random.Generator) -> tuple[float, ...]:
    """One random draw of ``block``'s parameters in its user parametrization.

    AR1/GM draws follow ``state.condition`` (1, 2, or 3 and above) and
    advance it; ``state.prev_phi`` is the AR1 coefficient drawn for the
    previous AR1/GM block of the same draw.
    """
    s2t = state.total_var
    kind = block.kind
    if kind == "AR1":
        cond = state.condition
        prev = state.prev_phi
        if cond == 1:
            u = _u(rng, 0.0, 1.0 / 3.0)
            phi = (1.0 - math.sqrt(1.0 - 3.0 * u)) / 5.0
            sig2 = _positive(rng, s2t * (1 - phi) ** 2 / 2.0, s2t * (1 - phi) ** 2)
        elif cond == 2:
            phi = _u(rng, max(0.9, prev), PHI_MAX)
            sig2 = _positive(rng, 0.0, s2t * (1 - phi * phi) / 100.0)
        else:
            u = _u(rng, 0.0, 1.0 / 3.0)
            phi = (PHI_MAX - prev) * math.sqrt(1.0 - 3.0 * u) + prev
            sig2 = _positive(rng, s2t * (1 - phi) ** 2 / 2.0, s2t * (1 - phi) ** 2)
        state.condition += 1
        state.prev_phi = phi
        if block.gm:
            phi = min(max(phi, 1e-12), PHI_MAX)
            return ar1_to_gm(phi, sig2, state.freq)
        return (phi, sig2)
    if kind == "DR":
        r = state.range_rate
        return (_u(rng, r / 100.0, r / 2.0),)
    if kind == "RW":
        return (_positive(rng, s2t / (1e5 * state.T), s2t / state.T),)
    if kind == "WN":
        if state.dominant == "WN":
            return (_positive(rng, s2t / 2.0, s2t),)
        return (_positive(rng, s2t / 1e5, s2t / 10.0),)
    if kind == "QN":
        if state.dominant == "QN":
            return (_positive(rng, s2t / 8.0, s2t / 3.0),)
        return (_positive(rng, s2t / 2e5, s2t / 100.0),)
    if kind in ("AR", "MA", "ARMA"):
        p, q = block.order  # type: ignore[misc]
        ar = _pacf_to_coefs(rng.uniform(-0.9, 0.9, p)) if p else np.zeros(0)
        ma = -_pacf_to_coefs(rng.uniform(-0.9, 0.9, q)) if q else np.zeros(0)
        sig2 = _positive(rng, s2t / 1e3, s2t)
        return tuple(ar) + tuple(ma) + (sig2,)
    raise ValueError(f"unknown process kind {kind!r}")


def flattening(implied: np.ndarray, empirical: np.ndarray) -> np.ndarray:
    """``sum((1 - implied / empirical)**2)`` along the last axis."""
    r = 1.0 - implied / empirical
    return np.sum(r * r, axis=-1)


@dataclass(frozen=True)
class Guess:
    values: np.ndarray
    objective: float
    dominant: str
    total_var: float
    draws: int = field(default=0)


def initial_guess(model: LatentModel, wv: WvSeries, summary: SignalSummary, G: int = 1000, seed: int = 0) -> Guess:
    """Best of ``G`` random draws by the flattening criterion.

    The total variance is the sum of the empirical WV over scales.  Every
    parameter with a supplied value (pinned or not) keeps it; only the
    unset ones are drawn.
    """
    if G < 1:
        raise ValueError("G must be >= 1")
    est = wv.estimates
    if not np.any(est > 0):
        raise ValueError("degenerate wavelet variance (all zero)")
    empirical = np.where(est > 0, est, np.min(est[est > 0]))
    total = float(np.sum(est))
    dom = dominating_process(wv) if wv.levels >= 2 else "WN"
    rng = stream(seed, "guess", 0)
    ev = WvEvaluator(model, wv.levels)
    given = np.array([np.nan if v is None else v for v in model.values], dtype=float)
    best, best_obj = None, math.inf
    if model.complete:
        G = 1
    for _ in range(int(G)):
        cond = 1
        if dom == "QN":
            if rng.uniform() <= 0.75:
                cond = 2
        elif dom == "WN":
            cond = 2
        st = DrawState(total, summary.T, summary.range_rate, dom, cond, 0.0, model.freq)
        draw = np.concatenate([draw_process_start(b, st, rng) for b in model.blocks])
        draw = np.where(np.isnan(given), draw, given)
        with np.errstate(all="ignore"):
            try:
                obj = float(flattening(ev(draw), empirical))
            except (ValueError, FloatingPointError, np.linalg.LinAlgError):
                continue
        if math.isfinite(obj) and obj < best_obj:
            best, best_obj = draw, obj
    if best is None:
        raise ValueError("no valid starting draw")
    return Guess(best, best_obj, dom, total, int(G))
