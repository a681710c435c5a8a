import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gammalab.functionals import gradient_energy, halfplane_energy_H
from gammalab.geometry import Field, HalfPlaneGrid
from gammalab.potentials import DoubleWell, PExponent
from gammalab.profiles import (
    GammaOptions,
    ProfileError,
    annulus_energy,
    build_lb_competitor,
    estimate_gamma_p,
    monotone_rearrange_x1,
    polar_extension,
    profile_energy_1d,
    refine_nested,
    select_annulus,
    solve_profile_ode,
)
from oracles import SIGMA_P

W = DoubleWell(-1.0, 1.0)
FAST = GammaOptions(starts=("polar",))


class ZeroPotential:
    """V ≡ 0 with nominal wells; only meaningful for the dilation check."""

    wells = (-1.0, 1.0)
    well_low, well_high = -1.0, 1.0

    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def derivative(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


def test_profile_matches_tanh_at_p2():
    sol = solve_profile_ode(W, PExponent(2.0, cross_check=True))
    core = np.abs(sol.s) < 15
    assert np.max(np.abs(sol.theta[core] - np.tanh(sol.s[core]))) < 1e-6
    assert sol(0.0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("p", [2.0, 2.25, 2.5, 2.75])
def test_profile_energy_is_sigma(p):
    sol = solve_profile_ode(W, PExponent(p, cross_check=True))
    assert profile_energy_1d(sol, W, p) == pytest.approx(SIGMA_P[p], abs=1e-6)
    assert sol.energy == profile_energy_1d(sol, W, p)


@pytest.mark.parametrize("p", [2.25, 2.5, 2.75])
def test_profile_shape_and_young_residual(p):
    sol = solve_profile_ode(W, p, tol=1e-14)
    assert np.all(np.diff(sol.theta) > 0)
    assert W(sol.theta[0]) < 1e-14 and W(sol.theta[-1]) < 1e-14
    assert sol.residual < 1e-6


def test_printed_constant_excess():
    p = PExponent(2.0, cross_check=True)
    sol = solve_profile_ode(W, p, constant="printed")
    assert sol.energy / SIGMA_P[2.0] == pytest.approx(3 * np.sqrt(2) / 4, rel=1e-6)


def test_profile_rejects_single_well():
    with pytest.raises(ProfileError):
        solve_profile_ode(DoubleWell(0.5, 0.5), 2.5)


def test_rearrangement_examples():
    g = HalfPlaneGrid(1.0, 0.5, 0.25)
    X, Y = g.mesh()
    u = Field(g, X + Y)
    assert np.array_equal(monotone_rearrange_x1(u).values, u.values)
    assert np.array_equal(monotone_rearrange_x1(Field(g, -X)).values, np.sort(-X, axis=1))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.floats(2.05, 2.95))
def test_rearrangement_never_raises_gradient_energy(seed, p):
    rng = np.random.default_rng(seed)
    g = HalfPlaneGrid(1.0, 1.0, 0.25)
    u = Field(g, rng.normal(size=g.shape) * rng.uniform(0.1, 3))
    r = monotone_rearrange_x1(u)
    assert np.array_equal(np.sort(r.values, axis=1), np.sort(u.values, axis=1))
    assert gradient_energy(r, p) <= gradient_energy(u, p) * (1 + 1e-12)


def test_polar_extension_rays():
    g = HalfPlaneGrid(2.0, 2.0, 0.5)
    u = polar_extension(-1.0, 3.0, g).values
    X, Y = g.mesh()
    assert np.all(u[(Y == 0) & (X > 0)] == 3.0)
    assert np.all(u[(Y == 0) & (X < 0)] == -1.0)
    assert np.allclose(u[(X == 0) & (Y > 0)], 1.0)


def test_competitor_of_polar_field_is_polar():
    g = HalfPlaneGrid(2.0, 2.0, 1 / 16)
    ubar = polar_extension(-1.0, 1.0, g)
    w = build_lb_competitor(ubar, 0.6, 0.01, 2.5, W, cutoff_width=0.3)
    assert np.allclose(w.values, ubar.values, atol=1e-15)


def test_competitor_blend_by_hand():
    g = HalfPlaneGrid(2.0, 2.0, 1 / 8)
    u = Field(g, np.zeros(g.shape))
    w = build_lb_competitor(u, 0.5, 0.01, 2.5, W, cutoff_width=0.25)
    X, Y = g.mesh()
    # three nodes on the ray θ = π/2 (ū = 0 there would hide the blend, so use θ = 0)
    j = np.flatnonzero(g.y == 0)[0]
    for x, phi in ((0.5, 1.0), (0.625, 0.5), (0.75, 0.0)):
        i = np.flatnonzero(np.isclose(g.x, x))[0]
        assert w.values[j, i] == pytest.approx((1 - phi) * 1.0)
    with pytest.raises(ValueError):
        build_lb_competitor(u, 0.9, 0.01, 2.5, W, cutoff_width=0.25)


def test_competitor_energy_dominates_inner_energy():
    g = HalfPlaneGrid(2.0, 2.0, 1 / 16)
    rng = np.random.default_rng(3)
    u = Field(g, np.clip(rng.normal(scale=0.3, size=g.shape), -1, 1))
    s, width = 0.6, 0.2
    w = build_lb_competitor(u, s, 0.05, 2.5, W, cutoff_width=width)
    cx, cy = g.cell_centers()
    corners_inside = np.hypot(cx, cy) + g.spacing < s
    tmask = np.abs(g.x) < s
    inner = halfplane_energy_H(u, 2.5, 0.05, W, cell_mask=corners_inside, boundary_mask=tmask).total
    assert halfplane_energy_H(w, 2.5, 0.05, W).total >= inner


def test_annulus_constant_field():
    g = HalfPlaneGrid(1.0, 1.0, 1 / 32)
    u = Field(g, np.ones(g.shape))
    ch = select_annulus(u, 2.5, 0.01, W)
    assert ch.energy == 0.0 and ch.bound == 0.0


def test_annulus_avoids_concentration():
    g = HalfPlaneGrid(1.0, 1.0, 1 / 64)
    X, Y = g.mesh()
    r = np.hypot(X, Y)
    u = Field(g, np.tanh((r - 0.75) / 0.02))
    ch = select_annulus(u, 2.5, 0.01, W, cutoff_width=0.1)
    assert ch.s + 0.1 <= 0.72 or ch.s >= 0.78
    assert ch.energy <= ch.bound
    scan = [annulus_energy(u, s, 0.1, 2.5, 0.01, W) for s in ch.candidates]
    assert ch.energy == min(scan)


def test_annulus_uniform_density_share():
    g = HalfPlaneGrid(1.0, 1.0, 1 / 128)
    X, Y = g.mesh()
    # |∂₂u|^p x₂^{2-p} is constant and the trace sits in a well
    u = Field(g, -1.0 + 0.5 * Y ** (2 * (2.5 - 1) / 2.5))
    width = 0.125
    ch = select_annulus(u, 2.5, 1.0, W, cutoff_width=width)
    total = annulus_energy(u, 0.5, 0.5, 2.5, 1.0, W)
    share = total * (((ch.s + width) ** 2 - ch.s**2) / (1 - 0.25))
    assert ch.energy == pytest.approx(share, rel=0.05)


def test_gamma_estimate_re_evaluates_exactly():
    g = HalfPlaneGrid(2.0, 2.0, 0.25)
    est = estimate_gamma_p(W, 2.5, g, FAST)
    again = halfplane_energy_H(est.minimizer, 2.5, 1.0, W, scheme=est.scheme).total
    assert again == est.estimate
    tr = est.minimizer.values[0]
    assert tr[0] == -1.0 and tr[-1] == 1.0
    assert np.all(np.diff(tr) >= 0)


def test_gamma_gauge_invariance():
    g = HalfPlaneGrid(2.0, 2.0, 0.25)
    a = estimate_gamma_p(W, 2.5, g, FAST).estimate
    b = estimate_gamma_p(W.shifted(3.0), 2.5, g, FAST).estimate
    assert b == pytest.approx(a, rel=1e-8)


def test_gamma_nested_refinement_non_increasing():
    opts = GammaOptions(starts=("polar", "random"))
    coarse = estimate_gamma_p(W, 2.5, HalfPlaneGrid(2.0, 2.0, 0.25), opts).estimate
    fine = estimate_gamma_p(W, 2.5, HalfPlaneGrid(2.0, 2.0, 0.125), opts).estimate
    assert fine <= coarse + 1e-8


def test_refine_nested_preserves_p1_energy():
    g = HalfPlaneGrid(1.0, 1.0, 0.25)
    u = Field(g, np.random.default_rng(0).uniform(-1, 1, g.shape))
    e0 = halfplane_energy_H(u, 2.5, 1.0, W, scheme="p1").total
    e1 = halfplane_energy_H(refine_nested(u), 2.5, 1.0, W, scheme="p1").total
    assert e1 == pytest.approx(e0, rel=1e-12)


def test_dilation_scaling_without_potential():
    p, lam = 2.5, 2.0
    g = HalfPlaneGrid(2.0, 2.0, 0.25)
    u = polar_extension(-1.0, 1.0, g).values
    V = ZeroPotential()
    e = halfplane_energy_H(Field(g, u), p, 1.0, V, scheme="p1").total
    e_lam = halfplane_energy_H(Field(g.dilated(lam), u), p, 1.0, V, scheme="p1").total
    assert e_lam == pytest.approx(lam ** (4 - 2 * p) * e, rel=1e-12)
    small = estimate_gamma_p(V, p, HalfPlaneGrid(1.0, 1.0, 0.25), FAST).estimate
    large = estimate_gamma_p(V, p, HalfPlaneGrid(4.0, 4.0, 0.25), FAST).estimate
    assert large < small


def test_gamma_coarse_regression():
    est = estimate_gamma_p(W, 2.5, HalfPlaneGrid(8.0, 8.0, 0.25), FAST)
    assert est.estimate == pytest.approx(3.88698244466, rel=1e-9)
