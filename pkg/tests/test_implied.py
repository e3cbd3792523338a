import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from wvcal.grammar import parse_model
from wvcal.implied import (
    WvEvaluator,
    ar1_wv,
    arma_acvf,
    block_wv,
    implied_wv,
    implied_wv_jacobian,
    quadratic_form_wv,
)
from wvcal.simulate import SimSpec, simulate
from wvcal.sumstats import wvar


def haar_gain(f, j):
    """Squared gain of the level-j Haar MODWT filter."""
    m = 2 ** (j - 1)
    return 4.0 ** (1 - j) * np.sin(np.pi * f * m) ** 4 / np.sin(np.pi * f) ** 2


SPECTRA = {
    "WN(sigma2=2.5)": lambda f: 2.5,
    "QN(q2=0.7)": lambda f: 0.7 * 4 * np.sin(np.pi * f) ** 2,
    "AR1(phi=0.5,sigma2=1.3)": lambda f: 1.3 / (1 - 2 * 0.5 * np.cos(2 * np.pi * f) + 0.25),
    "AR1(phi=0.95,sigma2=0.2)": lambda f: 0.2 / (1 - 2 * 0.95 * np.cos(2 * np.pi * f) + 0.95**2),
    "AR1(phi=-0.6,sigma2=1)": lambda f: 1.0 / (1 + 2 * 0.6 * np.cos(2 * np.pi * f) + 0.36),
    "RW(gamma2=0.3)": lambda f: 0.3 / (4 * np.sin(np.pi * f) ** 2),
}


def spectral_wv(S, j):
    m = 2 ** (j - 1)
    pts = [k / (2.0 * m) for k in range(1, m)] if m > 1 else None
    val, _ = integrate.quad(lambda f: haar_gain(f, j) * S(f), 0.0, 0.5, points=pts, limit=2000, epsabs=0, epsrel=1e-13)
    return 2.0 * val


@pytest.mark.parametrize("text", list(SPECTRA))
@pytest.mark.parametrize("j", range(1, 7))
def test_closed_forms_match_spectral_quadrature(text, j):
    got = implied_wv(parse_model(text), [j]).values[0]
    assert got == pytest.approx(spectral_wv(SPECTRA[text], j), rel=1e-6)


def test_arma_matches_spectral_quadrature():
    ar, ma, s2 = [0.5, -0.3], [0.4], 1.7

    def S(f):
        z = np.exp(-2j * np.pi * f)
        return s2 * abs(1 + 0.4 * z) ** 2 / abs(1 - 0.5 * z + 0.3 * z * z) ** 2

    m = parse_model("ARMA(2,1)")
    m = m.with_values([*ar, *ma, s2])
    for j in range(1, 7):
        assert implied_wv(m, [j]).values[0] == pytest.approx(spectral_wv(S, j), rel=1e-6)


def test_closed_form_worked_values():
    taus = np.array([2.0, 4.0, 8.0])
    np.testing.assert_allclose(implied_wv(parse_model("WN(sigma2=3)"), 3).values, 3 / taus)
    np.testing.assert_allclose(implied_wv(parse_model("QN(q2=2)"), 3).values, 12 / taus**2)
    np.testing.assert_allclose(implied_wv(parse_model("RW(gamma2=6)"), 3).values, (taus**2 + 2) / (2 * taus))
    np.testing.assert_allclose(implied_wv(parse_model("DR(omega=-4)"), 3).values, taus**2)


def test_drift_matches_its_wavelet_coefficients():
    x = -0.3 * np.arange(1, 2049)
    np.testing.assert_allclose(wvar(x, 8).estimates, implied_wv(parse_model("DR(omega=-0.3)"), 8).values, rtol=1e-10)


def _acvf_ar1(phi, s2, n):
    return s2 / (1 - phi * phi) * phi ** np.arange(n)


@pytest.mark.parametrize("phi", [-0.99, -0.3, 0.0, 0.3, 0.9, 0.999, 0.99999, 1 - 1e-9])
def test_ar1_closed_form_against_quadratic_form(phi):
    taus = 2.0 ** np.arange(1, 15)
    got = ar1_wv(phi, 1.0, taus)
    if phi > 0.9999:
        # direct sum cancels catastrophically; use the RW limit instead
        lim = (taus**2 + 2) / (12 * taus)
        np.testing.assert_allclose(got[:6], lim[:6], rtol=5e-3 if phi < 1 - 1e-6 else 1e-6)
        assert np.all(np.isfinite(got)) and np.all(got > 0)
        return
    ref = [quadratic_form_wv(_acvf_ar1(phi, 1.0, int(t)), int(t)) for t in taus]
    np.testing.assert_allclose(got, ref, rtol=1e-10)


@given(st.floats(1e-6, 0.9999), st.integers(1, 16))
@settings(max_examples=80)
def test_ar1_series_branch_is_continuous(phi, j):
    # both branches agree to high accuracy on either side of the switch
    tau = 2.0**j
    u = -math.log(phi)
    val = ar1_wv(phi, 1.0, np.array([tau]))[0]
    assert math.isfinite(val) and val > 0
    if u * tau / 2 < 0.5 and j <= 12:
        ref = quadratic_form_wv(_acvf_ar1(phi, 1.0, int(tau)), int(tau))
        assert val == pytest.approx(ref, rel=1e-6)


def test_quadratic_form_of_white_noise():
    assert quadratic_form_wv(np.r_[2.0, np.zeros(15)], 16) == pytest.approx(2 / 16)
    with pytest.raises(ValueError):
        quadratic_form_wv(np.ones(4), 3)
    with pytest.raises(ValueError):
        quadratic_form_wv(np.ones(4), 8)


def test_arma_acvf_reduces_to_ar1():
    np.testing.assert_allclose(arma_acvf([0.6], [], 2.0, 6), _acvf_ar1(0.6, 2.0, 6), rtol=1e-12)
    np.testing.assert_allclose(arma_acvf([], [0.5], 1.0, 3), [1.25, 0.5, 0.0], atol=1e-14)


def test_decomposition_sums_to_total():
    m = parse_model("AR1(phi=0.9,sigma2=0.1)+GM(beta=2,sigma2_gm=1)+WN(sigma2=1)+RW(gamma2=1e-4)", freq=100)
    imp = implied_wv(m, 10)
    np.testing.assert_allclose(imp.decomposition.sum(axis=0), imp.values, rtol=1e-15)
    assert imp.labels == ("AR1", "GM", "WN", "RW")
    np.testing.assert_allclose(imp.scales, 2.0 ** np.arange(1, 11) / 100)
    np.testing.assert_allclose(block_wv(m.blocks[2], 10, 100), imp.decomposition[2])


def test_repeated_labels_numbered():
    assert implied_wv(parse_model("2*GM(beta=1,sigma2_gm=1)"), 3).labels == ("GM1", "GM2")


def test_incomplete_model_rejected():
    with pytest.raises(ValueError):
        implied_wv(parse_model("WN()"), 3)


def test_explicit_levels():
    v = implied_wv(parse_model("WN(sigma2=1)"), [3, 5]).values
    np.testing.assert_allclose(v, [1 / 8, 1 / 32])
    with pytest.raises(ValueError):
        implied_wv(parse_model("WN(sigma2=1)"), [0])


def test_evaluator_matches_implied_wv():
    m = parse_model("GM(beta=0.5,sigma2_gm=2)+ARMA(1,1)+QN(q2=0.1)", freq=10)
    vals = [0.5, 2.0, 0.3, 0.2, 1.0, 0.1]
    ev = WvEvaluator(m, 9)
    np.testing.assert_allclose(ev(vals), implied_wv(m.with_values(vals), 9).values, rtol=1e-13)


def test_jacobian_against_analytic_derivatives():
    m = parse_model("WN(sigma2=2)+RW(gamma2=0.5)+DR(omega=0.1)")
    jac, one = implied_wv_jacobian(m, 6)
    taus = 2.0 ** np.arange(1, 7)
    np.testing.assert_allclose(jac[:, 0], 1 / taus, rtol=1e-7)
    np.testing.assert_allclose(jac[:, 1], (taus**2 + 2) / (12 * taus), rtol=1e-7)
    np.testing.assert_allclose(jac[:, 2], 2 * 0.1 * taus**2 / 16, rtol=1e-7)
    assert not one.any()


def test_jacobian_pinned_column_and_ar1_derivative():
    m = parse_model("AR1(phi=0.7!,sigma2=2)")
    jac, _ = implied_wv_jacobian(m, 5)
    assert np.all(jac[:, 0] == 0)
    np.testing.assert_allclose(jac[:, 1], ar1_wv(0.7, 1.0, 2.0 ** np.arange(1, 6)), rtol=1e-7)


def test_jacobian_one_sided_near_bound():
    m = parse_model("AR1(phi=0.99999999,sigma2=1)")
    jac, one = implied_wv_jacobian(m, 4, rel_step=1e-6)
    assert one[0]
    assert np.all(np.isfinite(jac))


@pytest.mark.parametrize(
    "text",
    ["WN(sigma2=1)", "QN(q2=0.5)", "RW(gamma2=0.01)", "AR1(phi=0.8,sigma2=1)", "GM(beta=0.2,sigma2_gm=1)", "MA(1)", "DR(omega=0.01)"],
)
def test_monte_carlo_agrees_with_implied(text):
    m = parse_model(text)
    if not m.complete:
        m = m.with_values([0.5, 1.0])
    J = 8
    est = np.mean([wvar(simulate(SimSpec(m, 2**14, s)), J).estimates for s in range(8)], axis=0)
    np.testing.assert_allclose(est, implied_wv(m, J).values, rtol=0.15)
