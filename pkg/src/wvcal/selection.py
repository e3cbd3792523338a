"""Model ranking by the wavelet information criterion.

``WIC = A + B``: ``A`` is the weighted WV misfit of a candidate, ``B``
twice the trace of the covariance between bootstrap WV estimates and the
weighted implied WV refitted on them, an estimate of the optimism of ``A``.
All candidates share one weight matrix, taken from the bootstrap of the
largest candidate.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .estimator import (
    FitOptions,
    FitResult,
    bootstrap_wv,
    fit_weighted,
    gmwm_fit,
    precision_matrix,
)
from .estimator import refit as _refit
from .grammar import LatentModel, ModelError, model_from_blocks
from .implied import WvEvaluator, implied_wv_jacobian
from .rng import derive_seed
from .start import SignalSummary, initial_guess
from .sumstats import WvSeries
from .wavelets import default_levels

__all__ = ["RankingRow", "RankingTable", "WicResult", "auto_rank", "rank_models", "sub_models", "wic", "wic_fast"]

MAX_DROPPED = 0.2


@dataclass(frozen=True)
class WicResult:
    A: float
    B: float
    dropped: int = 0

    @property
    def wic(self) -> float:
        return self.A + self.B


@dataclass(frozen=True)
class RankingRow:
    model: str
    wic: float
    A: float
    B: float
    objective: float
    p: int
    gof_p: float | None
    estimate: tuple[float, ...] = ()
    flag: str = ""

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "wic": self.wic,
            "A": self.A,
            "B": self.B,
            "objective": self.objective,
            "p": self.p,
            "gof_p": self.gof_p,
            "estimate": list(self.estimate),
            "flag": self.flag,
        }


@dataclass
class RankingTable:
    """Candidates sorted by WIC (ties within 1e-12 go to the smaller model)."""

    rows: list[RankingRow]
    method: str
    omega: np.ndarray | None = None
    failed: list[tuple[str, str]] = field(default_factory=list)

    @property
    def best(self) -> RankingRow:
        return self.rows[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "model", "wic", "A", "B", "objective", "p", "gof_p", "flag"])
        for i, r in enumerate(self.rows, 1):
            gp = "" if r.gof_p is None else repr(r.gof_p)
            w.writerow([i, r.model, repr(r.wic), repr(r.A), repr(r.B), repr(r.objective), r.p, gp, r.flag])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "kind": "ranking",
            "method": self.method,
            "rows": [r.to_dict() for r in self.rows],
            "failed": [{"model": m, "error": e} for m, e in self.failed],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def pretty(self) -> str:
        head = f"{'rank':>4}  {'model':<34}{'WIC':>12}{'A':>12}{'B':>12}{'p':>4}"
        out = [head, "-" * len(head)]
        for i, r in enumerate(self.rows, 1):
            out.append(f"{i:>4}  {r.model:<34}{r.wic:12.5g}{r.A:12.5g}{r.B:12.5g}{r.p:>4}{'  ' + r.flag if r.flag else ''}")
        return "\n".join(out)


def _sort_rows(rows: list[RankingRow]) -> list[RankingRow]:
    rows = sorted(rows, key=lambda r: (r.wic, r.p))
    # within 1e-12 the smaller model wins regardless of float noise
    out: list[RankingRow] = []
    for r in rows:
        out.append(r)
        k = len(out) - 1
        while k > 0 and abs(out[k].wic - out[k - 1].wic) <= 1e-12 and out[k].p < out[k - 1].p:
            out[k], out[k - 1] = out[k - 1], out[k]
            k -= 1
    return out


def _linear_projector(model: LatentModel, values: np.ndarray, omega: np.ndarray, levels: int) -> np.ndarray:
    """``D (D' W D)^-1 D' W``: first-order map from a WV perturbation to the refitted implied WV."""
    D, _ = implied_wv_jacobian(model.with_values(values), levels)
    D = D[:, model.free_mask]
    A = D.T @ omega @ D
    return D @ np.linalg.solve(A, D.T @ omega)


def _b_term(
    model: LatentModel,
    values: np.ndarray,
    ensemble: np.ndarray,
    omega: np.ndarray,
    levels: int,
    refit: str,
    template: WvSeries | None = None,
    seed: int = 0,
    draws: int = 20,
) -> tuple[float, int]:
    """``2 tr cov(nu_h, W nu(theta_h))`` over an ensemble of WV rows.

    Full refits start from the candidate's estimate and, when ``template``
    is given, also from the best of ``draws`` random starting draws for
    that replicate, so components sitting on a boundary can re-enter.
    """
    if refit == "linear":
        P = _linear_projector(model, values, omega, levels)
        fitted = (ensemble - ensemble.mean(axis=0)) @ P.T
        ok = np.ones(ensemble.shape[0], dtype=bool)
    elif refit == "full":
        ev = WvEvaluator(model, levels)
        fitted = np.empty_like(ensemble)
        ok = np.zeros(ensemble.shape[0], dtype=bool)
        for h, nu_h in enumerate(ensemble):
            try:
                extra = ()
                if template is not None and draws > 0:
                    wv_h = replace(template, estimates=nu_h)
                    summ = SignalSummary(template.n, 0.0, 0.0)
                    extra = (initial_guess(model, wv_h, summ, draws, derive_seed(seed, "wic", h)).values,)
                est, f = _refit(model, nu_h, omega, values, levels, extra)
            except (ValueError, np.linalg.LinAlgError, FloatingPointError, RuntimeError):
                continue
            if math.isfinite(f):
                fitted[h] = ev(est)
                ok[h] = True
    else:
        raise ValueError(f"unknown refit mode {refit!r}")
    dropped = int(np.sum(~ok))
    if dropped > MAX_DROPPED * ensemble.shape[0]:
        raise RuntimeError(f"{dropped} of {ensemble.shape[0]} bootstrap refits failed")
    nu = ensemble[ok]
    fv = fitted[ok]
    nc = nu - nu.mean(axis=0)
    fc = fv - fv.mean(axis=0)
    B = 2.0 * float(np.sum((nc @ omega) * fc)) / (nu.shape[0] - 1)
    return B, dropped


def wic(
    model: LatentModel,
    signal,
    fit: FitResult,
    H: int = 100,
    seed: int = 0,
    method: str = "bootstrap",
    omega: np.ndarray | None = None,
    refit: str = "full",
    ensemble: np.ndarray | None = None,
) -> WicResult:
    """WIC terms of one fitted candidate.

    ``omega`` defaults to the fit's own weight.  With ``method="bootstrap"``
    the candidate's fitted model generates ``H`` new signals; a precomputed
    ``ensemble`` of WV rows (shared across candidates) can be passed
    instead, which is what the fast method does.
    """
    W = fit.omega if omega is None else omega
    J = fit.levels
    d = fit.wv.estimates - fit.implied
    A = float(d @ W @ d)
    if ensemble is None:
        if method != "bootstrap":
            raise ValueError("the fast method needs a shared ensemble")
        if H < 2:
            raise ValueError("H must be >= 2")
        ensemble, _ = bootstrap_wv(fit.model, fit.T, H, derive_seed(seed, "wic", 0), J, fit.options.robust, fit.options.efficiency, fit.options.transform)
    B, dropped = _b_term(model, fit.estimate, ensemble, W, J, refit, fit.wv, seed)
    return WicResult(A, B, dropped)


# -- ranking -------------------------------------------------------------------------


def _common(signal, candidates: Sequence[LatentModel], opts: FitOptions):
    if not candidates:
        raise ValueError("need at least one candidate")
    J = opts.levels if opts.levels is not None else default_levels(np.asarray(signal).size)
    fits = [i for i, m in enumerate(candidates) if m.n_free <= J]
    if not fits:
        raise ModelError(f"every candidate has more free parameters than the {J} scales")
    # the weight comes from the largest candidate that can be fitted at all
    largest = max(fits, key=lambda i: (candidates[i].n_free, -i))
    big = gmwm_fit(signal, candidates[largest], replace(opts, inference=False))
    if big.V is None:
        raise ValueError("ranking needs H >= 2 bootstrap replicates")
    omega, _ = precision_matrix(big.V, opts.eig_floor)
    return largest, big, omega


def _rank(signal, candidates: Sequence[LatentModel], opts: FitOptions, method: str, refit: str) -> RankingTable:
    x = np.asarray(signal, dtype=float)
    _largest, big, omega = _common(x, candidates, opts)
    J = big.levels
    Pgof = omega
    H = opts.H
    crn = derive_seed(opts.seed, "wic", 0)
    if H - J - 2 > 0:
        Pgof = omega * (H - J - 2) / (H - 1)
    rows, failed = [], []
    for i, m in enumerate(candidates):
        try:
            if m.n_free > J:
                raise ModelError(f"under-identified: {m.n_free} free parameters but only {J} scales")
            est, obj, wv = fit_weighted(x, m, omega, opts, wv=big.wv)
            fitted = m.with_values(est)
            ev = WvEvaluator(m, J)
            implied = ev(est)
            if method == "fast":
                ens = big.boot_wv
            else:
                # common random numbers across candidates, independent of the ensemble behind omega
                ens, _ = bootstrap_wv(fitted, x.size, opts.H, crn, J, opts.robust, opts.efficiency, opts.transform, threads=opts.threads)
            B, dropped = _b_term(m, est, ens, omega, J, refit, big.wv, opts.seed)
            d = wv.estimates - implied
            A = float(d @ omega @ d)
            dof = J - m.n_free
            gof_p = float(stats.chi2.sf(float(d @ Pgof @ d), dof)) if dof > 0 else None
            flag = "negative B" if B < 0 else ""
            if dropped:
                flag = (flag + f"; {dropped} refits dropped").strip("; ")
            rows.append(RankingRow(fitted.render(), A + B, A, B, obj, m.n_free, gof_p, tuple(float(v) for v in est), flag))
        except Exception as e:  # noqa: BLE001  a failing row must not sink the table
            failed.append((m.render(), f"{type(e).__name__}: {e}"))
    if not rows:
        raise RuntimeError("every candidate failed: " + "; ".join(f"{m}: {e}" for m, e in failed))
    return RankingTable(_sort_rows(rows), method, omega, failed)


def rank_models(signal, candidates: Sequence[LatentModel], options: FitOptions | None = None, method: str = "bootstrap", refit: str | None = None) -> RankingTable:
    """Fit every candidate under a common weight and sort by WIC.

    ``method="bootstrap"`` simulates a fresh ensemble from each fitted
    candidate; ``"fast"`` reuses the largest candidate's ensemble.  Bootstrap
    refits are full local least-squares fits (``refit="full"``, the
    default for the bootstrap method) or their first-order linearization
    (``"linear"``, default for the fast method).
    """
    if method not in ("bootstrap", "fast"):
        raise ValueError(f"unknown method {method!r}")
    if refit is None:
        refit = "full" if method == "bootstrap" else "linear"
    return _rank(signal, candidates, options or FitOptions(), method, refit)


def wic_fast(candidates: Sequence[LatentModel], signal, options: FitOptions | None = None, refit: str = "linear") -> RankingTable:
    """Ranking with a single bootstrap of the largest candidate shared by all."""
    return _rank(signal, candidates, options or FitOptions(), "fast", refit)


def sub_models(full: LatentModel, cap: int = 64) -> list[LatentModel]:
    """Every non-empty sub-model: each repeatable block group kept 0..k times, each singleton in or out."""
    groups: dict[tuple, list[int]] = {}
    for i, b in enumerate(full.blocks):
        key = (b.kind, b.gm) if b.kind == "AR1" else (b.kind, i)
        groups.setdefault(key, []).append(i)
    order = list(groups)
    choices = [range(len(groups[k]) + 1) for k in order]
    count = math.prod(len(c) for c in choices) - 1
    if count > cap:
        raise ValueError(f"{count} candidate models exceed the cap of {cap}; rank a manual candidate list instead")
    out = []
    for combo in itertools.product(*choices):
        if not any(combo):
            continue
        chosen = {i for key, k in zip(order, combo) for i in groups[key][:k]}
        out.append(model_from_blocks([b for i, b in enumerate(full.blocks) if i in chosen], full.freq))
    out.sort(key=lambda m: (m.n_params, m.render()))
    return out


def auto_rank(signal, full_model: LatentModel, options: FitOptions | None = None, method: str = "fast", cap: int = 64) -> RankingTable:
    """Rank all sub-models of ``full_model`` (fast method by default)."""
    return rank_models(signal, sub_models(full_model, cap), options, method)
