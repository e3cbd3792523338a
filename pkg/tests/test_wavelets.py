import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wvcal.wavelets import default_levels, dwt_haar, modwt_haar


def _modwt_direct(x, j):
    """Literal filter definition: 2**-j * (sum of later half - sum of earlier half)."""
    m = 2 ** (j - 1)
    L = 2 * m
    out = []
    for t in range(L - 1, x.size):
        win = x[t - L + 1 : t + 1]
        out.append((win[m:].sum() - win[:m].sum()) / 2.0**j)
    return np.array(out)


def test_modwt_matches_direct_filter(rng):
    x = rng.standard_normal(300)
    dec = modwt_haar(x, 6)
    for j in range(1, 7):
        np.testing.assert_allclose(dec.coefficients[j - 1], _modwt_direct(x, j), rtol=0, atol=1e-13)


def test_modwt_counts():
    dec = modwt_haar(np.zeros(100), 5)
    np.testing.assert_array_equal(dec.counts, [100 - 2**j + 1 for j in range(1, 6)])
    np.testing.assert_array_equal(dec.scales, [2, 4, 8, 16, 32])


def test_modwt_level_one_worked_example():
    dec = modwt_haar([1.0, 3.0, 2.0, 6.0], 2)
    np.testing.assert_array_equal(dec.coefficients[0], [1.0, -0.5, 2.0])
    np.testing.assert_array_equal(dec.coefficients[1], [(8 - 4) / 4.0])


def test_modwt_annihilates_constants_and_is_shift_invariant(rng):
    dec = modwt_haar(np.full(64, 7.5), 5)
    for w in dec.coefficients:
        assert np.all(w == 0.0)
    x = rng.standard_normal(256)
    a = modwt_haar(x, 4).coefficients
    b = modwt_haar(x + 1e3, 4).coefficients
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, atol=1e-9)


def test_modwt_exact_on_random_walk_scale():
    # window sums must not accumulate error on a long random walk
    x = np.cumsum(np.ones(2**16))
    w = modwt_haar(x, 12).coefficients[-1]
    m = 2**11
    np.testing.assert_allclose(w, m * m / 2.0**12, rtol=1e-14)


def test_default_levels():
    assert default_levels(1024) == 9
    assert default_levels(1000) == 8
    with pytest.raises(ValueError):
        default_levels(3)


@pytest.mark.parametrize("bad", [np.array([1.0, np.nan, 2.0, 3.0]), np.ones((4, 2)), np.ones(3)])
def test_rejects_bad_signals(bad):
    with pytest.raises(ValueError):
        modwt_haar(bad)


def test_too_many_levels():
    with pytest.raises(ValueError, match="too short"):
        modwt_haar(np.ones(16), 5)


def test_unimplemented_filters():
    with pytest.raises(NotImplementedError):
        modwt_haar(np.ones(16), 2, wavelet="la8")
    with pytest.raises(ValueError):
        dwt_haar(np.ones(16), 2, wavelet="nope")


def test_dwt_level_one_worked_example():
    dec = dwt_haar([1.0, 3.0, 2.0, 6.0], 1)
    np.testing.assert_allclose(dec.coefficients[0], [2 / np.sqrt(2), 4 / np.sqrt(2)])
    np.testing.assert_allclose(dec.scaling, [4 / np.sqrt(2), 8 / np.sqrt(2)])


def test_dwt_is_orthonormal():
    n = 32
    basis = np.eye(n)
    rows = []
    for e in basis:
        d = dwt_haar(e, 5)
        rows.append(np.concatenate(d.coefficients + (d.scaling,)))
    Wm = np.array(rows)
    np.testing.assert_allclose(Wm @ Wm.T, np.eye(n), atol=1e-14)


@given(arrays(np.float64, 2**8, elements=st.floats(-1e6, 1e6)))
@settings(max_examples=60)
def test_dwt_parseval_property(x):
    d = dwt_haar(x, 8)
    energy = sum(float(np.sum(c * c)) for c in d.coefficients) + float(np.sum(d.scaling**2))
    total = float(np.sum(x * x))
    assert energy == pytest.approx(total, rel=1e-10, abs=1e-300)


@given(arrays(np.float64, st.integers(8, 200), elements=st.floats(-1e3, 1e3)), st.floats(-1e3, 1e3))
@settings(max_examples=60)
def test_modwt_linearity(x, a):
    y = x[::-1].copy()
    lhs = modwt_haar(a * x + y, 3).coefficients
    wx, wy = modwt_haar(x, 3).coefficients, modwt_haar(y, 3).coefficients
    for l, u, v in zip(lhs, wx, wy):
        np.testing.assert_allclose(l, a * u + v, atol=1e-8 * (1 + abs(a)) * 1e3)
