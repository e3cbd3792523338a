import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from wvcal.robust import (
    EFFICIENCY_TABLE,
    biweight_rho,
    consistency_constant,
    m_scale2,
    tuning_constant,
)


def _gauss_expect(f, c):
    return integrate.quad(lambda z: f(z) * stats.norm.pdf(z), -c, c, limit=200)[0]


def _efficiency(c):
    """Gaussian efficiency of the zero-centred biweight M-scale against the mean of squares."""
    rho = lambda z: biweight_rho(np.array(z * z), c)
    delta = consistency_constant(c)
    e_rho2 = _gauss_expect(lambda z: rho(z) ** 2, c) + 2 * stats.norm.sf(c) * (c * c / 6) ** 2
    var_rho = e_rho2 - delta**2
    slope = _gauss_expect(lambda z: z * z * (1 - z * z / c**2) ** 2, c)
    return slope**2 / (2 * var_rho)


def test_consistency_constant_matches_quadrature():
    for c in (1.0, 1.73, 3.0, 6.0):
        direct = _gauss_expect(lambda z, c=c: biweight_rho(np.array(z * z), c), c) + 2 * stats.norm.sf(c) * c * c / 6
        assert consistency_constant(c) == pytest.approx(direct, rel=1e-9)


@pytest.mark.parametrize("eff, c", EFFICIENCY_TABLE[::7])
def test_efficiency_table_against_quadrature(eff, c):
    assert _efficiency(c) == pytest.approx(eff, abs=1e-7)


def test_tuning_constant_interpolates_table():
    c = tuning_constant(0.605)
    root = optimize.brentq(lambda t: _efficiency(t) - 0.605, 1.6, 1.9)
    assert c == pytest.approx(root, rel=1e-3)
    assert tuning_constant(1.0) == math.inf


@pytest.mark.parametrize("eff", [0.5, 0.3, 1.1])
def test_tuning_constant_domain(eff):
    with pytest.raises(ValueError):
        tuning_constant(eff)


def test_rho_bounded():
    c = 2.0
    v = biweight_rho(np.array([0.0, 1.0, 4.0, 100.0]), c)
    assert v[0] == 0.0 and v[2] == pytest.approx(c * c / 6) and v[3] == pytest.approx(c * c / 6)


def test_m_scale_solves_its_equation(rng):
    c = tuning_constant(0.6)
    w = rng.standard_normal(5000) * 2.0
    s2 = m_scale2(w, c)
    lhs = float(np.mean(biweight_rho(w * w / s2, c)))
    assert lhs == pytest.approx(consistency_constant(c), rel=1e-10)


def test_m_scale_consistent_at_gaussian(rng):
    w = rng.standard_normal(200_000) * 3.0
    assert m_scale2(w, tuning_constant(0.6)) == pytest.approx(9.0, rel=0.02)


def test_m_scale_resists_outliers(rng):
    w = rng.standard_normal(10_000)
    w[:100] = 1e4
    assert m_scale2(w, tuning_constant(0.6)) == pytest.approx(1.0, rel=0.1)
    assert np.mean(w * w) > 1e4


def test_infinite_c_is_mean_of_squares():
    w = np.array([1.0, -2.0, 3.0])
    assert m_scale2(w, math.inf) == pytest.approx(14 / 3)


def test_degenerate_inputs():
    assert m_scale2(np.zeros(10), 1.7) == 0.0
    with pytest.raises(ValueError):
        m_scale2(np.array([]), 1.7)


@given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
@settings(max_examples=40)
def test_m_scale_equivariance(a, seed):
    w = np.random.default_rng(seed).standard_normal(500)
    c = tuning_constant(0.7)
    assert m_scale2(a * w, c) == pytest.approx(a * a * m_scale2(w, c), rel=1e-8)
