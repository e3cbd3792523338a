"""Generalized method of wavelet moments.

``theta_hat = argmin (nu_hat - nu(theta))' Omega (nu_hat - nu(theta))``

fitted in two steps: a diagonal weight from the confidence-interval widths,
then ``Omega = V^-1`` with ``V`` the parametric-bootstrap covariance of the
empirical WV at the first-step estimate.
"""

from __future__ import annotations

import json
import math
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .grammar import LatentModel, ModelError
from .implied import WvEvaluator, implied_wv, implied_wv_jacobian
from .rng import derive_seed, stream
from .simulate import SimSpec, simulate
from .start import SignalSummary, initial_guess
from .sumstats import WvSeries, wvar, wvar_robust
from .wavelets import default_levels

__all__ = [
    "FitOptions",
    "FitResult",
    "NumericalError",
    "ParamTransform",
    "bootstrap_V",
    "bootstrap_wv",
    "empirical_wv",
    "fit_weighted",
    "gmwm_fit",
    "gof_test",
    "param_ci",
    "precision_matrix",
    "refit",
]


class NumericalError(RuntimeError):
    """Optimizer or linear-algebra failure."""


@dataclass(frozen=True)
class FitOptions:
    """Fit settings.

    ``G`` random starting draws, ``H`` bootstrap replicates for ``V``
    (``H = 0`` stops after the diagonally weighted step and skips all
    inference), ``restarts`` perturbed simplex restarts.
    """

    robust: bool = False
    efficiency: float = 0.6
    G: int = 1000
    H: int = 100
    seed: int = 0
    levels: int | None = None
    transform: str = "MODWT"
    restarts: int = 3
    threads: int = 1
    alpha: float = 0.05
    eig_floor: float = 1e-12
    inference: bool = True

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def empirical_wv(signal, opts: FitOptions, freq: float = 1.0) -> WvSeries:
    if opts.robust:
        return wvar_robust(signal, opts.levels, opts.efficiency, opts.transform, opts.alpha, freq)
    return wvar(signal, opts.levels, opts.transform, opts.alpha, freq)


# -- parameter transform -------------------------------------------------------


def _pacf_to_coefs(r: np.ndarray) -> np.ndarray:
    a = np.zeros(0)
    for k, rk in enumerate(r):
        a = np.r_[a - rk * a[::-1], rk] if k else np.array([rk])
    return a


def _coefs_to_pacf(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    out = np.empty(a.size)
    for k in range(a.size - 1, -1, -1):
        r = a[-1]
        out[k] = r
        if k:
            a = (a[:-1] + r * a[:-1][::-1]) / (1.0 - r * r)
    return out


_ZMAX = 700.0


class ParamTransform:
    """Bijection between free user parameters and an unconstrained vector.

    Variances and GM ``beta`` use ``log``; an AR1 ``phi`` uses
    ``2 * atanh``; AR and MA coefficient groups go through partial
    autocorrelations so every point is stationary and invertible; DR
    ``omega`` is left as is.
    """

    def __init__(self, model: LatentModel):
        self.model = model
        self.free = model.free_mask
        self.n = model.n_params
        self.pinned = np.array([np.nan if v is None else v for v in model.values], dtype=float)
        kinds: list[tuple[str, int | slice]] = []
        for b, s in zip(model.blocks, model.slices):
            names = b.param_names
            if b.kind in ("AR", "MA", "ARMA"):
                p, q = b.order  # type: ignore[misc]
                if p:
                    kinds.append(("ar", slice(s.start, s.start + p)))
                if q:
                    kinds.append(("ma", slice(s.start + p, s.start + p + q)))
                kinds.append(("log", s.start + p + q))
                continue
            for k, name in enumerate(names):
                i = s.start + k
                if name == "phi":
                    kinds.append(("tanh", i))
                elif name == "omega":
                    kinds.append(("id", i))
                else:
                    kinds.append(("log", i))
        self.kinds = kinds

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    def to_z(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        z = np.empty(self.n)
        for kind, i in self.kinds:
            if kind == "log":
                z[i] = math.log(v[i])
            elif kind == "tanh":
                z[i] = 2.0 * math.atanh(v[i])
            elif kind == "id":
                z[i] = v[i]
            elif kind == "ar":
                z[i] = 2.0 * np.arctanh(_coefs_to_pacf(v[i]))
            else:
                z[i] = 2.0 * np.arctanh(_coefs_to_pacf(-v[i]))
        return z[self.free]

    def from_z(self, zfree: np.ndarray) -> np.ndarray:
        z = np.zeros(self.n)
        z[self.free] = zfree
        v = np.empty(self.n)
        for kind, i in self.kinds:
            if kind == "log":
                v[i] = math.exp(min(max(z[i], -_ZMAX), _ZMAX))
            elif kind == "tanh":
                v[i] = math.tanh(z[i] / 2.0)
            elif kind == "id":
                v[i] = z[i]
            elif kind == "ar":
                v[i] = _pacf_to_coefs(np.tanh(z[i] / 2.0))
            else:
                v[i] = -_pacf_to_coefs(np.tanh(z[i] / 2.0))
        return np.where(self.free, v, self.pinned)


# -- objective and minimization ---------------------------------------------------


def _objective_fn(ev: WvEvaluator, tr: ParamTransform, nu_hat: np.ndarray, omega: np.ndarray):
    def f(z):
        with np.errstate(all="ignore"):
            try:
                d = nu_hat - ev(tr.from_z(z))
            except (ValueError, OverflowError, np.linalg.LinAlgError):
                return np.inf
            val = float(d @ omega @ d)
        return val if math.isfinite(val) else np.inf

    return f


def _residual_fn(ev, tr, nu_hat, chol):
    def r(z):
        with np.errstate(all="ignore"):
            try:
                out = chol.T @ (nu_hat - ev(tr.from_z(z)))
            except (ValueError, OverflowError, np.linalg.LinAlgError):
                return np.full(nu_hat.size, 1e150)
        return np.where(np.isfinite(out), out, 1e150)

    return r


def _chol_upper(omega: np.ndarray) -> np.ndarray:
    # omega = L L'; returns L so that ||L' d||^2 = d' omega d
    w, U = np.linalg.eigh((omega + omega.T) / 2.0)
    w = np.clip(w, 0.0, None)
    return U * np.sqrt(w)


def _minimize(ev, tr, nu_hat, omega, z0, restarts: int, rng: np.random.Generator | None, polish: bool = True):
    f = _objective_fn(ev, tr, nu_hat, omega)
    n = z0.size
    opts = {"xatol": 1e-8, "fatol": 1e-12, "maxiter": 400 * max(n, 2), "maxfev": 800 * max(n, 2), "adaptive": n > 3}
    starts = [z0]
    if rng is not None:
        starts += [z0 + rng.normal(0.0, 0.5, n) for _ in range(restarts)]
    best_z, best_f, converged = z0, f(z0), False
    for s in starts:
        res = optimize.minimize(f, s, method="Nelder-Mead", options=opts)
        if res.fun < best_f:
            best_z, best_f = res.x, float(res.fun)
            converged = bool(res.success)
    # second pass from the incumbent to escape simplex stagnation
    res = optimize.minimize(f, best_z, method="Nelder-Mead", options=opts)
    if res.fun <= best_f:
        best_z, best_f = res.x, float(res.fun)
        converged = converged or bool(res.success)
    if polish:
        best_z, best_f = _polish(ev, tr, nu_hat, omega, best_z, best_f)
    return best_z, best_f, converged


def _polish(ev, tr, nu_hat, omega, z, fz):
    try:
        res = optimize.least_squares(_residual_fn(ev, tr, nu_hat, _chol_upper(omega)), z, method="trf", x_scale="jac", xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=200)
    except (ValueError, np.linalg.LinAlgError):
        return z, fz
    f2 = _objective_fn(ev, tr, nu_hat, omega)(res.x)
    if f2 < fz:
        return res.x, f2
    return z, fz


def refit(
    model: LatentModel,
    nu_hat: np.ndarray,
    omega: np.ndarray,
    start: np.ndarray,
    levels: int,
    extra_starts: Sequence[np.ndarray] = (),
) -> tuple[np.ndarray, float]:
    """Local least-squares refit from ``start`` and any ``extra_starts``; the best one wins.

    Used inside bootstrap loops where a full simplex search per replicate
    would be too slow.
    """
    ev = WvEvaluator(model, levels)
    tr = ParamTransform(model)
    f = _objective_fn(ev, tr, nu_hat, omega)
    resid = _residual_fn(ev, tr, nu_hat, _chol_upper(omega))
    best_z, best_f = None, np.inf
    for s0 in (start, *extra_starts):
        z0 = tr.to_z(s0)
        f0 = f(z0)
        if f0 < best_f:
            best_z, best_f = z0, f0
        try:
            with np.errstate(all="ignore"):
                res = optimize.least_squares(resid, z0, method="trf", x_scale="jac", xtol=1e-10, ftol=1e-10, max_nfev=100)
        except (ValueError, np.linalg.LinAlgError):
            continue
        fz = f(res.x)
        if fz < best_f:
            best_z, best_f = res.x, fz
    if best_z is None:
        raise NumericalError("refit failed from every start")
    return tr.from_z(best_z), float(best_f)


# -- bootstrap ----------------------------------------------------------------------


def _map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def bootstrap_wv(
    model: LatentModel,
    T: int,
    H: int,
    seed: int = 0,
    levels: int | None = None,
    robust: bool = False,
    efficiency: float = 0.6,
    transform: str = "MODWT",
    seeds: Sequence[int] | None = None,
    threads: int = 1,
) -> tuple[np.ndarray, list[int]]:
    """Empirical WV of ``H`` simulated realizations (rows).

    Replicate ``h`` uses the seed ``derive_seed(seed, "boot", h)`` unless
    ``seeds`` is given, so the ensemble does not depend on ``threads``.
    """
    if seeds is None:
        if H < 1:
            raise ValueError("H must be >= 1")
        seeds = [derive_seed(seed, "boot", h) for h in range(H)]
    seeds = [int(s) for s in seeds]
    J = default_levels(T) if levels is None else int(levels)

    def one(s):
        x = simulate(SimSpec(model, T, s))
        if robust:
            return wvar_robust(x, J, efficiency, transform).estimates
        return wvar(x, J, transform).estimates

    return np.vstack(_map(one, seeds, threads)), seeds


def bootstrap_V(model: LatentModel, T: int, H: int = 100, seed: int = 0, levels: int | None = None, robust: bool = False, efficiency: float = 0.6, transform: str = "MODWT", seeds: Sequence[int] | None = None, threads: int = 1) -> np.ndarray:
    """Parametric-bootstrap covariance of the empirical WV, ``Phi_c' Phi_c / (H - 1)``."""
    if seeds is None and H < 2:
        raise ValueError("H must be >= 2")
    phi, _ = bootstrap_wv(model, T, H, seed, levels, robust, efficiency, transform, seeds, threads)
    return _cov(phi)


def _cov(phi: np.ndarray) -> np.ndarray:
    c = phi - phi.mean(axis=0)
    V = c.T @ c / (phi.shape[0] - 1)
    return (V + V.T) / 2.0


def precision_matrix(V: np.ndarray, floor: float = 1e-12) -> tuple[np.ndarray, bool]:
    """Inverse of ``V`` by eigen-decomposition with eigenvalues floored at ``floor * max``.

    Returns the inverse and whether the floor was active.
    """
    w, U = np.linalg.eigh((V + V.T) / 2.0)
    top = float(np.max(w)) if w.size else 0.0
    if not top > 0:
        raise NumericalError("bootstrap covariance is zero")
    lo = floor * top
    floored = bool(np.any(w < lo))
    w = np.maximum(w, lo)
    return (U / w) @ U.T, floored


# -- results --------------------------------------------------------------------------


@dataclass
class FitResult:
    """Outcome of :func:`gmwm_fit`.  Parameter vectors are in the user parametrization."""

    model: LatentModel
    labels: list[str]
    estimate: np.ndarray
    free: np.ndarray
    objective: float
    omega: np.ndarray
    wv: WvSeries
    implied: np.ndarray
    start: np.ndarray
    start_objective: float
    V: np.ndarray | None = None
    se: np.ndarray | None = None
    ci_lo: np.ndarray | None = None
    ci_hi: np.ndarray | None = None
    ci_flags: list[str] = field(default_factory=list)
    gof: tuple[float, int, float] | None = None
    seed: int = 0
    options: FitOptions = field(default_factory=FitOptions)
    wall_time: float = 0.0
    converged: bool = True
    notes: list[str] = field(default_factory=list)
    boot_wv: np.ndarray | None = None
    V_meat: np.ndarray | None = None

    @property
    def T(self) -> int:
        return self.wv.n

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    @property
    def levels(self) -> int:
        return self.wv.levels

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a, dtype=float).tolist()

        params = []
        for k, lab in enumerate(self.labels):
            params.append(
                {
                    "name": lab,
                    "estimate": float(self.estimate[k]),
                    "fixed": bool(not self.free[k]),
                    "se": None if self.se is None else float(self.se[k]),
                    "ci_lo": None if self.ci_lo is None else float(self.ci_lo[k]),
                    "ci_hi": None if self.ci_hi is None else float(self.ci_hi[k]),
                    "flag": self.ci_flags[k] if self.ci_flags else "",
                }
            )
        gof = None
        if self.gof is not None:
            gof = {"statistic": self.gof[0], "dof": self.gof[1], "p_value": self.gof[2]}
        return {
            "kind": "fit",
            "model": self.model.render(),
            "freq": self.model.freq,
            "T": self.T,
            "parameters": params,
            "objective": self.objective,
            "start": arr(self.start),
            "start_objective": self.start_objective,
            "scale": [float(s) for s in self.wv.time_scales],
            "empirical": arr(self.wv.estimates),
            "implied": arr(self.implied),
            "omega": arr(self.omega),
            "V": arr(self.V),
            "V_meat": arr(self.V_meat),
            "gof": gof,
            "seed": self.seed,
            "options": self.options.to_dict(),
            "converged": self.converged,
            "notes": list(self.notes),
        }

    def to_json(self, include_time: bool = False) -> str:
        d = self.to_dict()
        if include_time:
            d["wall_time"] = self.wall_time
        return json.dumps(d, indent=2, sort_keys=True)

    def summary(self) -> str:
        """Plain-text parameter table."""
        lines = [f"Model: {self.model.render()}", f"T = {self.T}, freq = {self.model.freq:g} Hz, {'robust' if self.options.robust else 'classical'} WV"]
        head = f"{'parameter':<14}{'estimate':>14}{'se':>12}{'ci_lo':>14}{'ci_hi':>14}"
        lines += ["", head, "-" * len(head)]
        for k, lab in enumerate(self.labels):
            se = "" if self.se is None else f"{self.se[k]:12.4e}"
            lo = "" if self.ci_lo is None else f"{self.ci_lo[k]:14.4e}"
            hi = "" if self.ci_hi is None else f"{self.ci_hi[k]:14.4e}"
            fixed = "  (fixed)" if not self.free[k] else ""
            lines.append(f"{lab:<14}{self.estimate[k]:14.4e}{se:>12}{lo:>14}{hi:>14}{fixed}")
        lines += ["", f"objective: {self.objective:.6g}"]
        if self.gof is not None:
            s, d, p = self.gof
            lines.append(f"goodness of fit: statistic {s:.4g} on {d} dof, p-value {p:.4g}")
        for n in self.notes:
            lines.append(f"note: {n}")
        return "\n".join(lines)


# -- fitting ---------------------------------------------------------------------------


def _diag_omega(wv: WvSeries) -> np.ndarray:
    width = wv.ci_hi - wv.ci_lo
    pos = width[width > 0]
    if pos.size == 0:
        raise NumericalError("all confidence intervals have zero width")
    width = np.where(width > 0, width, np.min(pos))
    return np.diag(1.0 / width**2)


def _start_values(model: LatentModel, wv: WvSeries, summary: SignalSummary, opts: FitOptions, ev, tr, omega) -> tuple[np.ndarray, float]:
    nu = wv.estimates
    # supplied values are kept; the search only fills the unset parameters
    guess = initial_guess(model, wv, summary, opts.G, opts.seed).values
    return guess, _objective_fn(ev, tr, nu, omega)(tr.to_z(guess))


def fit_weighted(signal, model: LatentModel, omega: np.ndarray, options: FitOptions | None = None, wv: WvSeries | None = None) -> tuple[np.ndarray, float, WvSeries]:
    """One minimization under a given weight ``omega`` (no bootstrap).

    Returns the estimate (user parametrization), the objective and the
    empirical WV used.
    """
    opts = options or FitOptions()
    x = np.asarray(signal, dtype=float)
    if wv is None:
        wv = empirical_wv(x, opts, model.freq)
    J = wv.levels
    if J < model.n_free:
        raise ModelError(f"under-identified: {model.n_free} free parameters but only {J} scales")
    ev = WvEvaluator(model, J)
    tr = ParamTransform(model)
    start, _ = _start_values(model, wv, SignalSummary.of(x), opts, ev, tr, omega)
    z, f, _ = _minimize(ev, tr, wv.estimates, omega, tr.to_z(start), opts.restarts, stream(opts.seed, "restart", 2))
    return tr.from_z(z), f, wv


def gmwm_fit(signal, model: LatentModel, options: FitOptions | None = None, **kw) -> FitResult:
    """Fit ``model`` to ``signal`` by matching wavelet variances.

    Keyword arguments override fields of ``options``.

    Raises
    ------
    ModelError
        Fewer scales than free parameters.
    NumericalError
        Bootstrap covariance unusable and no fallback possible.
    """
    t0 = time.perf_counter()
    opts = options or FitOptions()
    if kw:
        opts = FitOptions(**{**opts.to_dict(), **kw})
    x = np.asarray(signal, dtype=float)
    wv = empirical_wv(x, opts, model.freq)
    J = wv.levels
    if J < model.n_free:
        raise ModelError(f"under-identified: {model.n_free} free parameters but only {J} scales")
    if not np.any(wv.estimates > 0):
        raise NumericalError("degenerate signal: wavelet variance is zero at every scale")
    nu = wv.estimates
    ev = WvEvaluator(model, J)
    tr = ParamTransform(model)
    notes: list[str] = []

    omega1 = _diag_omega(wv)
    start, start_f = _start_values(model, wv, SignalSummary.of(x), opts, ev, tr, omega1)
    rng = stream(opts.seed, "restart", 0)
    z1, f1, conv = _minimize(ev, tr, nu, omega1, tr.to_z(start), opts.restarts, rng)
    est = tr.from_z(z1)
    omega, obj = omega1, f1
    V = None
    boot = None
    if opts.H >= 2:
        step1 = model.with_values(est)
        boot, _ = bootstrap_wv(step1, x.size, opts.H, opts.seed, J, opts.robust, opts.efficiency, opts.transform, threads=opts.threads)
        V = _cov(boot)
        try:
            omega, floored = precision_matrix(V, opts.eig_floor)
            if floored:
                notes.append("eigenvalue floor applied to V")
            z2, obj, conv2 = _minimize(ev, tr, nu, omega, z1, opts.restarts, stream(opts.seed, "restart", 1))
            conv = conv and conv2
            est = tr.from_z(z2)
        except NumericalError:
            notes.append("singular bootstrap covariance: diagonal weighting kept")
            omega = omega1
    if not conv:
        notes.append("simplex did not meet its tolerance; best point reported")
    fitted = model.with_values(est)
    res = FitResult(
        model=fitted,
        labels=model.param_labels,
        estimate=np.array(fitted.values, dtype=float),
        free=model.free_mask,
        objective=float(obj),
        omega=omega,
        wv=wv,
        implied=implied_wv(fitted, J).values,
        start=start,
        start_objective=float(start_f),
        V=V,
        seed=opts.seed,
        options=opts,
        converged=conv,
        notes=notes,
        boot_wv=boot,
    )
    if V is not None and opts.inference:
        # an independent ensemble for the sandwich meat: reusing V (whose
        # inverse is the weight) understates the spread of the estimate
        meat_seeds = [derive_seed(opts.seed, "meat", h) for h in range(opts.H)]
        meat, _ = bootstrap_wv(fitted, x.size, opts.H, levels=J, robust=opts.robust, efficiency=opts.efficiency, transform=opts.transform, seeds=meat_seeds, threads=opts.threads)
        res.V_meat = _cov(meat)
        _attach_inference(res)
    res.wall_time = time.perf_counter() - t0
    return res


def _attach_inference(res: FitResult) -> None:
    try:
        lo, hi, se, flags = param_ci(res, 1.0 - res.options.alpha)
        res.se, res.ci_lo, res.ci_hi, res.ci_flags = se, lo, hi, flags
    except NumericalError as e:
        res.notes.append(str(e))
    if res.levels > res.n_free:
        try:
            res.gof = gof_test(res)
        except NumericalError as e:
            res.notes.append(str(e))


# -- inference ------------------------------------------------------------------------------


def gof_test(fit: FitResult, correct: bool = True) -> tuple[float, int, float]:
    """Over-identification test of the fitted WV.

    ``stat = d' V^-1 d`` with ``d`` the WV residual; ``V`` already describes
    the WV at the observed length, so no extra factor ``T`` enters.  With
    ``correct`` the inverse is shrunk by ``(H - J - 2) / (H - 1)``, which
    makes it unbiased for the true precision under Gaussian bootstrap draws.
    """
    J, p = fit.levels, fit.n_free
    dof = J - p
    if dof <= 0:
        raise ValueError("goodness-of-fit test needs more scales than free parameters")
    if fit.V is None:
        raise NumericalError("no bootstrap covariance available")
    P, _ = precision_matrix(fit.V, fit.options.eig_floor)
    H = fit.boot_wv.shape[0] if fit.boot_wv is not None else fit.options.H
    if correct and H - J - 2 > 0:
        P = P * (H - J - 2) / (H - 1)
    d = fit.wv.estimates - fit.implied
    stat = max(float(d @ P @ d), 0.0)
    return stat, dof, float(stats.chi2.sf(stat, dof))


def param_ci(fit: FitResult, level: float = 0.95, V: np.ndarray | None = None):
    """Sandwich standard errors and Wald intervals for every parameter.

    ``cov = (D' W D)^-1 D' W V W D (D' W D)^-1`` with ``W`` the fit's
    weight and ``V`` the WV covariance (default: the fit's independent
    bootstrap estimate, else the one behind ``W``).

    Returns ``(lo, hi, se, flags)``; pinned parameters get ``se = 0`` and
    flag ``"fixed"``, intervals cut at a bound get ``"truncated"``.
    """
    if fit.V is None:
        raise NumericalError("no bootstrap covariance available")
    D, one_sided = implied_wv_jacobian(fit.model, fit.levels)
    free = fit.free
    Df = D[:, free]
    W = fit.omega
    A = Df.T @ W @ Df
    try:
        Ainv = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        raise NumericalError("Jacobian is rank deficient at the estimate") from None
    if np.linalg.matrix_rank(Df) < Df.shape[1]:
        raise NumericalError("Jacobian is rank deficient at the estimate")
    if V is None:
        V = fit.V_meat if fit.V_meat is not None else fit.V
    B = Df.T @ W @ V @ W @ Df
    cov = Ainv @ B @ Ainv
    se = np.zeros(free.size)
    se[free] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    z = stats.norm.ppf(0.5 + level / 2.0)
    est = fit.estimate
    lo, hi = est - z * se, est + z * se
    flags = ["" for _ in est]
    for k, (blo, bhi) in enumerate(fit.model.bounds):
        if not free[k]:
            flags[k] = "fixed"
            continue
        if lo[k] <= blo or hi[k] >= bhi:
            lo[k], hi[k] = max(lo[k], blo), min(hi[k], bhi)
            flags[k] = "truncated"
        if one_sided[k]:
            flags[k] = (flags[k] + ",one-sided").strip(",")
    return lo, hi, se, flags
