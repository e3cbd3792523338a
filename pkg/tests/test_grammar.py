import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wvcal.grammar import (
    LatentModel,
    ModelError,
    ModelSyntaxError,
    ProcessBlock,
    ar1_to_gm,
    gm_to_ar1,
    parse_model,
    render_model,
)
from wvcal.implied import implied_wv


def test_single_wn():
    m = parse_model("WN()")
    assert len(m.blocks) == 1 and m.blocks[0].kind == "WN"
    assert m.n_params == 1
    assert m.values == [None]
    assert m.theta is None


def test_imu_composite_has_nine_parameters():
    m = parse_model("3*GM()+WN()+QN()+RW()")
    assert [b.label for b in m.blocks] == ["GM", "GM", "GM", "WN", "QN", "RW"]
    assert m.n_params == 9


def test_named_starting_values():
    m = parse_model("AR1(phi=0.9,sigma2=0.1)+WN(sigma2 = 1)")
    assert m.values == [0.9, 0.1, 1.0]
    np.testing.assert_array_equal(m.theta, [0.9, 0.1, 1.0])


def test_wn_alias_nu2():
    assert parse_model("WN(nu2=2.5)").values == [2.5]


@pytest.mark.parametrize("text", ["2*WN()", "WN()+WN()", "QN()+QN()", "2*RW()", "DR()+DR()", "AR(1)+MA(1)"])
def test_singletons_repeat_only_once(text):
    with pytest.raises(ModelError, match="only be included once"):
        parse_model(text)


@pytest.mark.parametrize(
    "text, where",
    [("WN(", 3), ("XX()", 0), ("WN()+", 5), ("WN(sigma2=)", 10), ("WN() WN()", 5), ("3*", 2)],
)
def test_syntax_errors_report_position(text, where):
    with pytest.raises(ModelSyntaxError) as e:
        parse_model(text)
    assert e.value.pos == where


@pytest.mark.parametrize("text", ["AR1(phi=1.5)", "WN(sigma2=-1)", "GM(beta=0)", "RW(gamma2=0)", "AR1(phi=-1)"])
def test_out_of_bounds_values(text):
    with pytest.raises(ModelError):
        parse_model(text)


def test_unknown_parameter_name():
    with pytest.raises(ModelSyntaxError, match="no parameter"):
        parse_model("WN(phi=0.3)")


def test_arma_orders_and_no_inline_coefficients():
    m = parse_model("ARMA(2,1)+WN()")
    assert m.blocks[0].order == (2, 1)
    assert m.blocks[0].param_names == ("ar1", "ar2", "ma1", "sigma2")
    assert parse_model("AR(2)").blocks[0].order == (2, 0)
    assert parse_model("MA(3)").blocks[0].order == (0, 3)
    with pytest.raises(ModelSyntaxError, match="inline"):
        parse_model("AR(1,ar1=0.5)")


def test_dr_allows_negative_drift():
    assert parse_model("DR(omega=-0.3)").values == [-0.3]


def test_pin_marker_fixes_value():
    m = parse_model("AR1(phi=0.9!)+WN()")
    assert m.blocks[0].fixed == (True, False)
    np.testing.assert_array_equal(m.free_mask, [False, True, True])
    with pytest.raises(ModelError):
        ProcessBlock("WN", values=(None,), fixed=(True,))


def test_whitespace_insensitive():
    assert parse_model(" 2 * GM ( beta = 1 , sigma2_gm=2 ) + WN( ) ") == parse_model("2*GM(beta=1,sigma2_gm=2)+WN()")


def test_multiplier_only_for_gm_and_ar1():
    assert len(parse_model("4*AR1()").blocks) == 4
    with pytest.raises(ModelSyntaxError, match="only be included once"):
        parse_model("2*QN()")


def test_freq_must_be_positive():
    with pytest.raises(ModelError):
        parse_model("WN()", freq=0.0)


def test_param_labels_unique():
    labs = parse_model("2*GM()+AR1()+WN()").param_labels
    assert len(set(labs)) == len(labs)
    assert labs[:4] == ["beta_1", "sigma2_gm_1", "beta_2", "sigma2_gm_2"]


def test_gm_stored_as_tagged_ar1():
    m = parse_model("GM(beta=0.25,sigma2_gm=2)")
    b = m.blocks[0]
    assert b.kind == "AR1" and b.gm
    phi, s2 = m.theta
    assert phi == pytest.approx(math.exp(-0.25), rel=1e-15)
    assert s2 == pytest.approx(2 * (1 - math.exp(-0.5)), rel=1e-15)
    assert m.values == [0.25, 2.0]


@pytest.mark.parametrize("k", range(1, 11))
def test_multiplier_expansion(k):
    assert len(parse_model(f"{k}*GM()").blocks) == k


# -- reparametrization ---------------------------------------------------------------


def test_gm_to_ar1_worked_value():
    phi, s2 = gm_to_ar1(0.25, 3.0, 1.0)
    assert phi == pytest.approx(0.7788007830714049, rel=1e-15)
    assert s2 == pytest.approx(3.0 * (1 - math.exp(-0.5)), rel=1e-15)


def test_ar1_to_gm_worked_value():
    beta, _ = ar1_to_gm(math.exp(-1.0), 1.0, 1.0)
    assert beta == pytest.approx(1.0, rel=1e-15)


def test_small_beta_limit():
    phi, s2 = gm_to_ar1(1e-12, 1.0, 1.0)
    assert phi == pytest.approx(1.0) and s2 == pytest.approx(2e-12, rel=1e-6)


@pytest.mark.parametrize("phi", [0.0, 1.0, -0.5, 1.2])
def test_ar1_to_gm_rejects_phi_outside_unit_interval(phi):
    with pytest.raises(ValueError):
        ar1_to_gm(phi, 1.0)


@pytest.mark.parametrize("args", [(math.nan, 1.0, 1.0), (1.0, math.inf, 1.0), (-1.0, 1.0, 1.0), (1.0, 1.0, 0.0)])
def test_gm_to_ar1_rejects_bad_inputs(args):
    with pytest.raises(ValueError):
        gm_to_ar1(*args)


@given(
    beta=st.floats(1e-6, 50.0),
    s2=st.floats(1e-8, 1e8),
    freq=st.floats(0.1, 2000.0),
)
def test_gm_ar1_round_trip(beta, s2, freq):
    phi, sig2 = gm_to_ar1(beta, s2, freq)
    if not 0.0 < phi < 1.0:  # beta*dt beyond double precision range
        return
    b2, s22 = ar1_to_gm(phi, sig2, freq)
    # phi near 1 carries only eps / (beta * dt) relative information about beta
    tol = 1e-12 + 4 * np.finfo(float).eps / (beta / freq)
    assert b2 == pytest.approx(beta, rel=tol)
    assert s22 == pytest.approx(s2, rel=tol)


@given(phi=st.floats(1e-3, 0.999), s2=st.floats(1e-6, 1e6))
def test_ar1_gm_round_trip(phi, s2):
    b, g = ar1_to_gm(phi, s2, 1.0)
    p2, s22 = gm_to_ar1(b, g, 1.0)
    assert p2 == pytest.approx(phi, rel=1e-12)
    assert s22 == pytest.approx(s2, rel=1e-12)


@given(beta=st.floats(1e-3, 5.0), s2=st.floats(1e-4, 1e4))
@settings(max_examples=50)
def test_gm_and_ar1_blocks_have_equal_implied_wv(beta, s2):
    phi, sig2 = gm_to_ar1(beta, s2, 1.0)
    a = implied_wv(parse_model(f"GM(beta={beta!r},sigma2_gm={s2!r})"), 12).values
    b = implied_wv(parse_model(f"AR1(phi={phi!r},sigma2={sig2!r})"), 12).values
    np.testing.assert_allclose(a, b, rtol=1e-10)


# -- render round trip -----------------------------------------------------------------

_pos = st.floats(1e-6, 1e6, allow_nan=False)


@st.composite
def models(draw):
    blocks = []
    for _ in range(draw(st.integers(0, 3))):
        gm = draw(st.booleans())
        vals = draw(st.one_of(st.none(), st.tuples(_pos if gm else st.floats(-0.99, 0.99), _pos)))
        if vals is None:
            blocks.append(ProcessBlock("AR1", gm=gm))
        else:
            pin = draw(st.tuples(st.booleans(), st.booleans()))
            blocks.append(ProcessBlock("AR1", gm=gm, values=vals, fixed=pin))
    for kind in ("WN", "QN", "RW", "DR"):
        if draw(st.booleans()):
            v = draw(st.one_of(st.none(), st.floats(-10, 10) if kind == "DR" else _pos))
            blocks.append(ProcessBlock(kind, values=(v,)))
    if draw(st.booleans()):
        p, q = draw(st.integers(0, 2)), draw(st.integers(0, 2))
        if p + q:
            kind = "ARMA" if p and q else ("AR" if p else "MA")
            s2 = draw(st.one_of(st.none(), _pos))
            blocks.append(ProcessBlock(kind, order=(p, q), values=(None,) * (p + q) + (s2,)))
    if not blocks:
        blocks.append(ProcessBlock("WN"))
    return LatentModel(tuple(blocks), draw(st.sampled_from([1.0, 100.0, 250.0])))


@given(models())
def test_render_parse_round_trip(m):
    assert parse_model(render_model(m), m.freq) == m


def test_render_compresses_repeats():
    assert render_model(parse_model("3*GM()+WN()")) == "3*GM()+WN()"
    assert render_model(parse_model("AR1(phi=0.5,sigma2=1)+AR1(phi=0.5,sigma2=1)")) == "2*AR1(phi=0.5,sigma2=1.0)"


def test_with_values_keeps_pins():
    m = parse_model("AR1(phi=0.5!,sigma2=1)+WN()")
    m2 = m.with_values([0.1, 2.0, 3.0])
    assert m2.values == [0.5, 2.0, 3.0]
    assert m.cleared().values == [0.5, None, None]


def test_plus_before_multiplier_is_an_operator():
    m = parse_model("GM()+2*AR1()")
    assert [b.gm for b in m.blocks] == [True, False, False]


def test_signed_values():
    assert parse_model("DR(omega=-1e-3)").values == [-1e-3]
    assert parse_model("DR(omega=+2)").values == [2.0]
    with pytest.raises(ModelSyntaxError):
        parse_model("-WN()")
