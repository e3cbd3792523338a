"""Regenerate the biweight tuning-constant table in ``wvcal/robust.py``.

Efficiency is the Gaussian asymptotic efficiency of the biweight M-estimator
of scale (centre known, zero) relative to the mean of squares.
"""

import numpy as np
from scipy import integrate, optimize, stats


def rho(x, c):
    u2 = np.minimum((x / c) ** 2, 1.0)
    return c**2 / 6.0 * (1.0 - (1.0 - u2) ** 3)


def psi(x, c):
    return np.where(np.abs(x) <= c, x * (1.0 - (x / c) ** 2) ** 2, 0.0)


def gauss_mean(f, c):
    g = lambda z: 2.0 * f(z) * stats.norm.pdf(z)
    return integrate.quad(g, 0.0, c, limit=200)[0] + integrate.quad(g, c, np.inf, limit=200)[0]


def efficiency(c):
    delta = gauss_mean(lambda z: rho(z, c), c)
    var = gauss_mean(lambda z: (rho(z, c) - delta) ** 2, c)
    slope = gauss_mean(lambda z: z * psi(z, c), c)
    return 0.5 * slope**2 / var


def tuning_constant(eff):
    return optimize.brentq(lambda c: efficiency(c) - eff, 0.5, 60.0, xtol=1e-12)


if __name__ == "__main__":
    grid = [round(e, 3) for e in np.arange(0.50, 0.99, 0.01)] + [0.99, 0.995, 0.999]
    for e in grid:
        print(f"    ({e:.3f}, {tuning_constant(e):.10f}),")
