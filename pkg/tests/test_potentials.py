import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gammalab.potentials import (
    DoubleWell,
    PExponent,
    TruncationLevel,
    antiderivative_W,
    constant_c_p,
    constant_sigma_p,
    default_truncation,
    eval_potential,
    has_linear_growth,
    is_convex_near_wells,
    primitive,
    truncation_is_valid,
)
from oracles import C_P, PRIMITIVE_25_AT_03, PRIMITIVE_25_SHIFTED, PRIMITIVE_AT_WELL, SIGMA_P

W = DoubleWell(-1.0, 1.0)


def test_eval_examples():
    assert eval_potential(W, 1.0) == 0.0
    assert eval_potential(W, -1.0) == 0.0
    assert eval_potential(W, 0.0) == 1.0
    assert eval_potential(DoubleWell(0.0, 2.0, 0.5), 1.0) == 0.5


@pytest.mark.parametrize("form", ["quartic", "double_parabola"])
def test_potential_hypotheses(form):
    P = DoubleWell(-0.5, 1.5, 2.0, form)
    t = np.linspace(-5, 5, 2001)
    vals = P(t)
    off = (t != -0.5) & (t != 1.5)
    assert np.all(vals[off] > 0)
    assert has_linear_growth(P, 1.5)
    assert is_convex_near_wells(P, 0.2)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        DoubleWell(1.0, -1.0)
    with pytest.raises(ValueError):
        DoubleWell(-1.0, 1.0, form="cosine")
    with pytest.raises(ValueError):
        PExponent(2.0)
    with pytest.raises(ValueError):
        PExponent(3.0)
    assert PExponent(2.0, cross_check=True).p == 2.0


def test_primitive_oracles():
    assert antiderivative_W(W, 2.0, -1.0) == 0.0
    assert antiderivative_W(W, 2.0, 1.0) == pytest.approx(4 / 3, abs=1e-12)
    assert antiderivative_W(W, 2.5, 0.3) == pytest.approx(PRIMITIVE_25_AT_03, abs=1e-11)
    shifted = DoubleWell(0.0, 2.0, 0.5)
    assert antiderivative_W(shifted, 2.5, 2.0) == pytest.approx(PRIMITIVE_25_SHIFTED, abs=1e-11)
    for p, ref in PRIMITIVE_AT_WELL.items():
        assert antiderivative_W(W, p, 1.0) == pytest.approx(ref, abs=1e-11)


def test_vector_primitive_matches_scalar():
    t = np.concatenate([np.linspace(-9, 9, 501), [-1.0, 1.0, 1 - 1e-9]])
    for p in (2.0, 2.5, 2.9):
        vec = antiderivative_W(W, p, t)
        ref = np.array([antiderivative_W(W, p, float(x)) for x in t])
        assert np.max(np.abs(vec - ref)) < 1e-11


def test_constants():
    for p, ref in C_P.items():
        assert constant_c_p(p) == pytest.approx(ref, rel=1e-14)
    assert constant_c_p(2.0) == 2.0
    for p, ref in SIGMA_P.items():
        assert constant_sigma_p(p, W) == pytest.approx(ref, abs=1e-10)
    assert constant_sigma_p(2.5, DoubleWell(0.3, 0.3)) == 0.0


def test_c_p_decreasing():
    ps = np.linspace(2, 3, 100)
    c = np.array([constant_c_p(p) for p in ps])
    assert np.all(np.diff(c) < 0)


@settings(max_examples=30, deadline=None)
@given(k=st.floats(0.1, 10.0), p=st.floats(2.01, 2.99))
def test_sigma_amplitude_scaling(k, p):
    base = constant_sigma_p(p, W)
    assert constant_sigma_p(p, W.scaled(k)) == pytest.approx(base * k ** ((p - 1) / p), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-3, 3), gap=st.floats(0.2, 3), p=st.floats(2.01, 2.99))
def test_primitive_monotone(a, gap, p):
    P = DoubleWell(a, a + gap)
    t = np.linspace(a - 2, a + gap + 2, 300)
    vals = primitive(P, p)(t)
    assert np.all(np.diff(vals) >= -1e-13)
    assert vals[-1] > vals[0]


def test_truncation_level():
    V = DoubleWell(-0.5, 2.0)
    m = default_truncation(W, V)
    assert m.m == 2.0
    assert truncation_is_valid(m, W, V)
    assert not truncation_is_valid(TruncationLevel(1.0), W, V)
