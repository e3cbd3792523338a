"""Seeded realizations of latent models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .grammar import LatentModel, ProcessBlock
from .rng import derive_seed, stream

__all__ = ["SimSpec", "default_burn_in", "inject_spikes", "simulate", "simulate_block"]

MAX_BURN_IN = 10_000


@dataclass(frozen=True)
class SimSpec:
    """What to simulate: ``model`` (complete), length ``T`` and a master ``seed``.

    ``burn_in`` overrides the warm-up used for ARMA blocks; AR1 blocks start
    from their exact stationary distribution and need none.
    """

    model: LatentModel
    T: int
    seed: int = 0
    burn_in: int | None = None

    def __post_init__(self):
        if int(self.T) < 1:
            raise ValueError("T must be >= 1")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if not self.model.complete:
            raise ValueError("model has unset parameters")


def default_burn_in(ar: np.ndarray) -> int:
    """``10 / (1 - rho)`` capped at 10**4, ``rho`` the largest AR root modulus."""
    if len(ar) == 0:
        return 0
    rho = float(np.max(np.abs(np.roots(np.r_[1.0, -np.asarray(ar)]))))
    if rho >= 1.0:
        return MAX_BURN_IN
    return int(min(MAX_BURN_IN, np.ceil(10.0 / (1.0 - rho))))


def simulate_block(block: ProcessBlock, T: int, rng: np.random.Generator, freq: float = 1.0, burn_in: int | None = None) -> np.ndarray:
    """One realization of a single block."""
    vals = block.canonical(freq)
    kind = block.kind
    if kind == "WN":
        return rng.standard_normal(T) * np.sqrt(vals[0])
    if kind == "QN":
        return np.diff(rng.standard_normal(T + 1)) * np.sqrt(vals[0])
    if kind == "RW":
        return np.cumsum(rng.standard_normal(T) * np.sqrt(vals[0]))
    if kind == "DR":
        return vals[0] * np.arange(1, T + 1, dtype=float)
    if kind == "AR1":
        phi, s2 = vals
        e = rng.standard_normal(T + 1) * np.sqrt(s2)
        x_prev = e[0] / np.sqrt(1.0 - phi * phi)
        y, _ = lfilter([1.0], [1.0, -phi], e[1:], zi=[phi * x_prev])
        return y
    if kind in ("AR", "MA", "ARMA"):
        p, q = block.order  # type: ignore[misc]
        ar, ma, s2 = np.asarray(vals[:p]), np.asarray(vals[p : p + q]), vals[p + q]
        n0 = default_burn_in(ar) if burn_in is None else int(burn_in)
        n0 = max(n0, q)
        e = rng.standard_normal(T + n0) * np.sqrt(s2)
        y = lfilter(np.r_[1.0, ma], np.r_[1.0, -ar], e)
        return y[n0:]
    raise ValueError(f"unknown process kind {kind!r}")


def simulate(spec: SimSpec) -> np.ndarray:
    """Sum of independent block realizations.

    Block ``i`` draws from its own stream keyed by ``(seed, "block", i)``, so
    the composite equals the sum of blocks simulated separately.
    """
    T = int(spec.T)
    out = np.zeros(T)
    for i, b in enumerate(spec.model.blocks):
        out += simulate_block(b, T, stream(spec.seed, "block", i), spec.model.freq, spec.burn_in)
    return out


def inject_spikes(signal: np.ndarray, fraction: float, magnitude: float, seed: int = 0) -> np.ndarray:
    """Replace ``round(fraction * T)`` random samples by ``+-magnitude`` (test helper)."""
    x = np.array(signal, dtype=float, copy=True)
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    rng = stream(seed, "spike", 0)
    k = round(fraction * x.size)
    idx = rng.choice(x.size, size=k, replace=False)
    x[idx] = magnitude * rng.choice([-1.0, 1.0], size=k)
    return x


def replicate_seed(seed: int, purpose: str, index: int) -> int:
    return derive_seed(seed, purpose, index)
