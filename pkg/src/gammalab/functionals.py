"""Discrete energies G_ε, H_ε, F_ε and the inequalities they satisfy by construction.

Every energy uses one cell stencil. A cell with corners a0=(i,j), a1=(i+1,j),
b0=(i,j+1), b1=(i+1,j+1) sees six edges: two horizontal and two vertical (weight 1/2)
and two diagonals (weight 2^{-p/2}). The cell density is

    N(u)^p = Σ_e c_e |Δ_e u|^p / (Z Δ^p),    Z = 1 + 2^{1-p/2},

which is exact for axis-aligned linear fields. The bulk density is ρ^{p/(p-1)} with ρ the
largest edge mean of W^{(p-1)/p}, so Young's inequality holds cell by cell against
c_p N(𝒲(u)) once both weights are exact cell integrals.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .geometry import BoundaryField, Field, HalfBoxGrid3D, HalfPlaneGrid, RectDomainGrid, trace
from .potentials import DoubleWell, TruncationLevel, as_p, constant_c_p, default_truncation, primitive

_TINY = 1e-9


@dataclass(frozen=True)
class EnergyBreakdown:
    grad: float
    bulk: float
    boundary: float
    eps: float
    p: float

    @property
    def total(self) -> float:
        return (self.grad + self.bulk) + self.boundary

    def to_json(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return {k: d[k] for k in ("grad", "bulk", "boundary", "total", "eps", "p")}


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not eps > 0:
        raise ValueError(f"ε must be positive, got {eps}")
    return eps


def stencil_norm_const(p: float) -> float:
    return 1.0 + 2.0 ** (1.0 - p / 2.0)


def _edges(U):
    a0, a1, b0, b1 = U[:-1, :-1], U[:-1, 1:], U[1:, :-1], U[1:, 1:]
    return (a1 - a0, b1 - b0, b0 - a0, b1 - a1, b1 - a0, b0 - a1)


def _edge_coefs(p):
    c = 2.0 ** (-p / 2.0)
    return (0.5, 0.5, 0.5, 0.5, c, c)


def _edge_ends(U):
    a0, a1, b0, b1 = U[:-1, :-1], U[:-1, 1:], U[1:, :-1], U[1:, 1:]
    return ((a0, a1), (b0, b1), (a0, b0), (a1, b1), (a0, b1), (a1, b0))


def _scatter(shape, pieces):
    """Accumulate per-cell corner contributions (ga0, ga1, gb0, gb1) into a node array."""
    ga0, ga1, gb0, gb1 = pieces
    G = np.zeros(shape)
    G[:-1, :-1] += ga0
    G[:-1, 1:] += ga1
    G[1:, :-1] += gb0
    G[1:, 1:] += gb1
    return G


def stencil_density(U, p: float, spacing: float) -> np.ndarray:
    """Per-cell N(u)^p."""
    S = sum(c * np.abs(e) ** p for c, e in zip(_edge_coefs(p), _edges(U)))
    return S / (stencil_norm_const(p) * spacing**p)


def stencil_energy(U, weights, p: float, spacing: float, want_grad: bool = False):
    """Σ_cells weights · N(u)^p and optionally its gradient with respect to U."""
    edges = _edges(U)
    coefs = _edge_coefs(p)
    scale = 1.0 / (stencil_norm_const(p) * spacing**p)
    S = sum(c * np.abs(e) ** p for c, e in zip(coefs, edges))
    E = float(np.sum(weights * S) * scale)
    if not want_grad:
        return E
    d = [c * p * np.abs(e) ** (p - 2) * e * weights * scale for c, e in zip(coefs, edges)]
    ga0 = -d[0] - d[2] - d[4]
    ga1 = d[0] - d[3] - d[5]
    gb0 = -d[1] + d[2] + d[5]
    gb1 = d[1] + d[3] + d[4]
    return E, _scatter(U.shape, (ga0, ga1, gb0, gb1))


def _pad(U):
    return np.concatenate([U[:, :1], U, U[:, -1:]], axis=1)


def _unpad_grad(G):
    out = G[:, 1:-1].copy()
    out[:, 0] += G[:, 0]
    out[:, -1] += G[:, -1]
    return out


def _halfplane_weights(grid: HalfPlaneGrid, p: float, cell_mask=None):
    rows = grid.row_weights(p)
    ncols = grid.shape[1] - 1
    W = np.repeat(rows[:, None], ncols, axis=1)
    if cell_mask is not None:
        W = W * cell_mask
    if grid.lateral_pad:
        W = np.concatenate([W[:, :1] / 2, W, W[:, -1:] / 2], axis=1)
    return W


def gradient_energy(u: Field, p: float, cell_mask=None, want_grad: bool = False):
    """Σ_cells (∫_cell h^{2-p}) N(u)^p, without the ε factor."""
    g = u.grid
    p = as_p(p)
    if isinstance(g, HalfPlaneGrid):
        W = _halfplane_weights(g, p, cell_mask)
        U = _pad(u.values) if g.lateral_pad else u.values
        res = stencil_energy(U, W, p, g.spacing, want_grad)
        if want_grad and g.lateral_pad:
            return res[0], _unpad_grad(res[1])
        return res
    if isinstance(g, RectDomainGrid):
        W = g.grad_weights(p)
        if cell_mask is not None:
            W = W * cell_mask
        return stencil_energy(u.values, W, p, g.spacing, want_grad)
    raise TypeError(f"unsupported grid {type(g).__name__}")


class BulkDensity:
    """Edge means of W^{(p-1)/p} and the cell maximum ρ, with derivatives."""

    def __init__(self, W: DoubleWell, p: float, m: float | None):
        self.W, self.p = W, float(p)
        self.prim = primitive(W, self.p)
        self.m = None if m is None else float(m)
        if self.m is not None:
            self.prim_m = (float(self.prim(-self.m)), float(self.prim(self.m)))

    def _prim_clamped(self, U, P):
        lo, hi = self.prim_m
        return np.where(U < -self.m, lo, np.where(U > self.m, hi, P))

    def _dd(self, x0, x1, P0, P1, w0, w1):
        """Divided difference of 𝒲 with derivatives in x0 and x1 (w = W^{(p-1)/p} at the ends)."""
        dx = x1 - x0
        small = np.abs(dx) <= _TINY * (1.0 + np.abs(x0))
        safe = np.where(small, 1.0, dx)
        dd = (P1 - P0) / safe
        d0 = (dd - w0) / safe
        d1 = (w1 - dd) / safe
        if np.any(small):
            mid = (x0[small] + x1[small]) / 2
            half = self.prim.density_derivative(mid) / 2
            dd[small] = self.prim.density(mid)
            d0[small] = half
            d1[small] = half
        return dd, d0, d1

    @staticmethod
    def _edge_args(U, P, w):
        for (x0, x1), (P0, P1), (w0, w1) in zip(_edge_ends(U), _edge_ends(P), _edge_ends(w)):
            yield x0, x1, P0, P1, w0, w1

    def cell_rho(self, U, want_grad: bool = False):
        P = self.prim(U)
        w = self.prim.density(U)
        raw = [self._dd(*args) for args in self._edge_args(U, P, w)]
        means = [r[0] for r in raw]
        clamps = self.m is not None and bool(np.any(np.abs(U) > self.m))
        if clamps:
            C = np.clip(U, -self.m, self.m)
            PC = self._prim_clamped(U, P)
            wc = self.prim.density(C)
            clamped = [self._dd(*args) for args in self._edge_args(C, PC, wc)]
            means = [np.maximum(r[0], c[0]) for r, c in zip(raw, clamped)]
        stack = np.stack(means)
        rho = np.maximum(stack.max(axis=0), 0.0)  # cancellation can dip below zero near the wells
        if not want_grad:
            return rho
        k = stack.argmax(axis=0)
        inside = (np.abs(U) <= self.m) if self.m is not None else np.ones(U.shape, bool)
        ends_inside = _edge_ends(inside)
        corner_of = ((0, 1), (2, 3), (0, 2), (1, 3), (0, 3), (1, 2))
        pieces = [np.zeros_like(rho) for _ in range(4)]
        for e in range(6):
            sel = k == e
            if not np.any(sel):
                continue
            _, d0, d1 = raw[e]
            if clamps:
                c = clamped[e]
                use_c = c[0] > raw[e][0]
                i0, i1 = ends_inside[e]
                d0 = np.where(use_c, c[1] * i0, d0)
                d1 = np.where(use_c, c[2] * i1, d1)
            c0, c1 = corner_of[e]
            pieces[c0] += np.where(sel, d0, 0.0)
            pieces[c1] += np.where(sel, d1, 0.0)
        return rho, pieces

    def energy(self, U, weights, want_grad: bool = False):
        """Σ_cells weights · ρ^{p/(p-1)}."""
        q = self.p / (self.p - 1.0)
        if not want_grad:
            return float(np.sum(weights * self.cell_rho(U) ** q))
        rho, pieces = self.cell_rho(U, True)
        E = float(np.sum(weights * rho**q))
        coef = weights * q * rho ** (q - 1.0)
        return E, _scatter(U.shape, [coef * pc for pc in pieces])


def _level(m, *potentials):
    if m is None:
        return default_truncation(*potentials).m
    return m.m if isinstance(m, TruncationLevel) else float(m)


def _bulk_term(u: Field, p, W, m, cell_mask):
    g = u.grid
    if not isinstance(g, RectDomainGrid):
        raise TypeError("the bulk term lives on RectDomainGrid")
    B = g.bulk_weights(p)
    if cell_mask is not None:
        B = B * cell_mask
    return BulkDensity(W, p, m).energy(u.values, B)


def bulk_energy_G(u: Field, p, eps: float, W: DoubleWell, cell_mask=None, m=None) -> EnergyBreakdown:
    p, eps = as_p(p), _check_eps(eps)
    grad = eps ** (p - 2) * gradient_energy(u, p, cell_mask)
    bulk = eps ** (-(p - 2) / (p - 1)) * _bulk_term(u, p, W, _level(m, W), cell_mask)
    return EnergyBreakdown(grad, bulk, 0.0, eps, p)


def boundary_integral(u: Field, V: DoubleWell, boundary_mask=None) -> float:
    tr = trace(u)
    w = tr.weights if boundary_mask is None else tr.weights * boundary_mask
    return float(np.sum(w * V(tr.values)))


def halfplane_energy_H(u: Field, p, eps: float, V: DoubleWell, cell_mask=None, boundary_mask=None,
                       scheme: str = "stencil") -> EnergyBreakdown:
    """H_ε on the truncated half-plane; scheme "p1" is the conforming energy used for γ_p."""
    p, eps = as_p(p), _check_eps(eps)
    if not isinstance(u.grid, HalfPlaneGrid):
        raise TypeError("H_ε lives on HalfPlaneGrid")
    if scheme == "p1":
        if cell_mask is not None or boundary_mask is not None:
            raise ValueError("the p1 scheme evaluates the whole truncated half-plane")
        grad, _ = _p1_gradient_term(u.values, u.grid, p, False)
        bnd, _ = _p1_trace_term(u.values[0], u.grid.spacing, V, False)
        return EnergyBreakdown(eps ** (p - 2) * grad, 0.0, eps**-0.5 * bnd, eps, p)
    if scheme != "stencil":
        raise ValueError(f"unknown scheme {scheme!r}")
    grad = eps ** (p - 2) * gradient_energy(u, p, cell_mask)
    bnd = eps**-0.5 * boundary_integral(u, V, boundary_mask)
    return EnergyBreakdown(grad, 0.0, bnd, eps, p)


def full_energy_F(u: Field, p, eps: float, W: DoubleWell, V: DoubleWell, cell_mask=None, boundary_mask=None, m=None) -> EnergyBreakdown:
    """F_ε(u, A, A′): `cell_mask` selects A, `boundary_mask` selects A′ on the boundary loop."""
    p, eps = as_p(p), _check_eps(eps)
    lvl = _level(m, W, V)
    grad = eps ** (p - 2) * gradient_energy(u, p, cell_mask)
    bulk = eps ** (-(p - 2) / (p - 1)) * _bulk_term(u, p, W, lvl, cell_mask)
    bnd = eps**-0.5 * boundary_integral(u, V, boundary_mask)
    return EnergyBreakdown(grad, bulk, bnd, eps, p)


def full_energy_and_grad(values, grid: RectDomainGrid, p, eps, W, V, m=None):
    """F_ε total and its gradient in the nodal values (used by the minimizers)."""
    p = as_p(p)
    u = Field(grid, values)
    Eg, Gg = gradient_energy(u, p, want_grad=True)
    Eb, Gb = BulkDensity(W, p, _level(m, W, V)).energy(values, grid.bulk_weights(p), True)
    r, c = grid.boundary_loop
    tw = grid.trace_weights()
    tv = values[r, c]
    Gs = np.zeros_like(values)
    np.add.at(Gs, (r, c), tw * V.derivative(tv))
    Es = float(np.sum(tw * V(tv)))
    a, b, s = eps ** (p - 2), eps ** (-(p - 2) / (p - 1)), eps**-0.5
    return a * Eg + b * Eb + s * Es, a * Gg + b * Gb + s * Gs


def halfplane_energy_and_grad(values, grid: HalfPlaneGrid, p, eps, V):
    p = as_p(p)
    Eg, Gg = gradient_energy(Field(grid, values), p, want_grad=True)
    tw = grid.trace_weights()
    Gs = np.zeros_like(values)
    Gs[0] = tw * V.derivative(values[0])
    Es = float(np.sum(tw * V(values[0])))
    a, s = eps ** (p - 2), eps**-0.5
    return a * Eg + s * Es, a * Gg + s * Gs


_GL12 = np.polynomial.legendre.leggauss(12)
_GL3 = np.polynomial.legendre.leggauss(3)


@lru_cache(maxsize=64)
def p1_triangle_weights(grid: HalfPlaneGrid, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact ∫ x₂^{2-p} over the lower {a0,a1,b0} and upper {a1,b1,b0} triangle of each cell row."""
    s, d = 2.0 - p, grid.spacing
    y0 = grid.y[:-1]
    x, w = _GL12
    t = d * (x + 1) / 2
    upper = (d / 2) * ((y0[:, None] + t) ** s * t) @ w
    upper[y0 == 0] = d ** (s + 2) / (s + 2)
    lower = grid.row_weights(p) - upper
    lower.flags.writeable = upper.flags.writeable = False
    return lower, upper


@numba.njit(cache=True)
def _p1_kernel(U, lo, up, d, p, want_grad, G):
    ny, nx = U.shape
    h = p / 2 - 1
    E = 0.0
    for j in range(ny - 1):
        k1c = p * lo[j] / d
        k2c = p * up[j] / d
        e1 = 0.0
        e2 = 0.0
        for i in range(nx - 1):
            a0 = U[j, i]
            a1 = U[j, i + 1]
            b0 = U[j + 1, i]
            b1 = U[j + 1, i + 1]
            g1x = (a1 - a0) / d
            g1y = (b0 - a0) / d
            g2x = (b1 - b0) / d
            g2y = (b1 - a1) / d
            n1 = g1x * g1x + g1y * g1y
            n2 = g2x * g2x + g2y * g2y
            q1 = n1**h if n1 > 0 else 0.0
            q2 = n2**h if n2 > 0 else 0.0
            e1 += q1 * n1
            e2 += q2 * n2
            if want_grad:
                A1 = k1c * q1 * g1x
                B1 = k1c * q1 * g1y
                A2 = k2c * q2 * g2x
                B2 = k2c * q2 * g2y
                G[j, i] -= A1 + B1
                G[j, i + 1] += A1 - B2
                G[j + 1, i] += B1 - A2
                G[j + 1, i + 1] += A2 + B2
        E += lo[j] * e1 + up[j] * e2
    return E


def _p1_gradient_term(U, grid: HalfPlaneGrid, p: float, want_grad: bool):
    lo, up = p1_triangle_weights(grid, p)
    G = np.zeros_like(U)
    E = _p1_kernel(np.ascontiguousarray(U, dtype=float), lo, up, float(grid.spacing), float(p), want_grad, G)
    return E, (G if want_grad else None)


def _p1_trace_term(t, d: float, V: DoubleWell, want_grad: bool):
    gx, gw = _GL3
    lam = (gx + 1) / 2
    pts = t[:-1, None] + (t[1:] - t[:-1])[:, None] * lam
    E = float((d / 2) * np.sum(V(pts) @ gw))
    if not want_grad:
        return E, None
    dV = (d / 2) * (V.derivative(pts) * gw)
    G = np.zeros_like(t)
    G[:-1] += dV @ (1 - lam)
    G[1:] += dV @ lam
    return E, G


def p1_halfplane_energy_and_grad(values, grid: HalfPlaneGrid, p, eps, V: DoubleWell, want_grad: bool = True):
    """H_ε of the continuous piecewise-linear interpolant on the anti-diagonal triangulation.

    Weights and the trace integral are exact (the trace term exactly for polynomial V
    of degree ≤ 5), so this is the true continuum energy of a conforming field on
    [-R, R] × [0, H]: node-nested refinement can only lower its minimum.
    """
    p = as_p(p)
    U = np.asarray(values, dtype=float)
    Eg, Gg = _p1_gradient_term(U, grid, p, want_grad)
    Es, Gs = _p1_trace_term(U[0], grid.spacing, V, want_grad)
    a, c = eps ** (p - 2), eps**-0.5
    if not want_grad:
        return a * Eg + c * Es
    Gg *= a
    Gg[0] += c * Gs
    return a * Eg + c * Es, Gg


def modica_lower_bound(u: Field, p, W: DoubleWell) -> float:
    """c_p Σ_cells |cell| N(𝒲(u)), the stencil applied to 𝒲 differences."""
    p = as_p(p)
    g = u.grid
    if not isinstance(g, RectDomainGrid):
        raise TypeError("the Modica bound is evaluated on RectDomainGrid")
    U = u.values
    P = primitive(W, p)(U)
    dens = BulkDensity(W, p, None)
    diffs = []
    for x0, x1, P0, P1, w0, w1 in dens._edge_args(U, P, W.density(U, p)):
        dd, _, _ = dens._dd(x0, x1, P0, P1, w0, w1)
        diffs.append(dd * (x1 - x0))
    S = sum(c * np.abs(e) ** p for c, e in zip(_edge_coefs(p), diffs))
    N = (S / stencil_norm_const(p)) ** (1.0 / p) / g.spacing
    return constant_c_p(p) * float(np.sum(N * g.spacing**2))


def fractional_seminorm(g: BoundaryField, p, mask=None) -> float:
    """Σ over unordered node pairs of |g_i − g_j|^p / |t_i − t_j|^{2(p−1)} · Δ²."""
    p = as_p(p)
    idx = np.arange(len(g.values)) if mask is None else np.flatnonzero(mask)
    if len(idx) < 2:
        raise ValueError("the interval needs at least two nodes")
    t, v = g.s[idx], g.values[idx]
    d = float(np.min(np.diff(g.s)))
    total = 0.0
    for i in range(len(t) - 1):
        dt = t[i + 1:] - t[i]
        total += float(np.sum(np.abs(v[i + 1:] - v[i]) ** p / dt ** (2 * (p - 1))))
    return total * d * d


def truncate_field(u: Field, m) -> Field:
    m = m.m if isinstance(m, TruncationLevel) else float(m)
    return u.with_values(np.clip(u.values, -m, m))


def rescale_field(u: Field, eps: float, target: HalfPlaneGrid | None = None, resample: bool = False) -> Field:
    """u^{(ε)}(x) = u(x/√ε), on the dilated grid or on `target`."""
    eps = _check_eps(eps)
    g = u.grid
    if not isinstance(g, HalfPlaneGrid):
        raise TypeError("rescaling acts on HalfPlaneGrid fields")
    k = np.sqrt(eps)
    if target is None:
        return Field(g.dilated(k), u.values.copy())
    xs = (target.x / k + g.R) / g.spacing
    ys = (target.y / k) / g.spacing
    ix, iy = np.round(xs), np.round(ys)
    mapped = np.allclose(xs, ix, atol=1e-9) and np.allclose(ys, iy, atol=1e-9)
    ix, iy = ix.astype(int), iy.astype(int)
    if mapped and ix.min() >= 0 and ix.max() < g.shape[1] and iy.max() < g.shape[0]:
        return Field(target, u.values[np.ix_(iy, ix)])
    if not resample:
        raise ValueError("target lattice does not map onto source nodes; enable resampling")
    if target.R / k > g.R + 1e-12 or target.H / k > g.H + 1e-12:
        raise ValueError("target grid reaches outside the source domain")
    interp = RegularGridInterpolator((g.y, g.x), u.values, method="cubic")
    X, Y = target.mesh()
    pts = np.column_stack([(Y / k).ravel(), (X / k).ravel()])
    pts[:, 0] = np.clip(pts[:, 0], 0, g.H)
    pts[:, 1] = np.clip(pts[:, 1], -g.R, g.R)
    return Field(target, interp(pts).reshape(target.shape))


def slice_lower_bound(u: Field, p, eps: float, V: DoubleWell) -> tuple[float, float]:
    """(lhs, rhs) of the slicing inequality along the x₂ direction.

    3D cell density (N_face² + g₂²)^{p/2}, with N_face the planar stencil on the cell's
    lower x₂-face and g₂ the rms of its four x₂-edges; the bottom face uses the trapezoid
    rule in x₁ and the left-endpoint rule in x₂, matching the sum over slices.
    """
    p, eps = as_p(p), _check_eps(eps)
    g = u.grid
    if not isinstance(g, HalfBoxGrid3D):
        raise TypeError("slicing acts on HalfBoxGrid3D fields")
    U = u.values
    d = g.spacing
    sg = g.slice_grid()
    rows = sg.row_weights(p)
    n2 = U.shape[1]
    lhs_grad = 0.0
    lhs_bnd = 0.0
    rhs = 0.0
    tw = sg.trace_weights()
    for j in range(n2 - 1):
        face = U[:, j, :]
        Nf = stencil_density(face, p, d)
        ey = U[:, j + 1, :] - face
        gy2 = (ey[:-1, :-1] ** 2 + ey[:-1, 1:] ** 2 + ey[1:, :-1] ** 2 + ey[1:, 1:] ** 2) / (4 * d * d)
        dens = (Nf ** (2.0 / p) + gy2) ** (p / 2.0)
        lhs_grad += float(np.sum(rows[:, None] * dens)) * d
        lhs_bnd += float(np.sum(tw * V(face[0]))) * d
        rhs += halfplane_energy_H(Field(sg, face), p, eps, V).total * d
    lhs = eps ** (p - 2) * lhs_grad + eps**-0.5 * lhs_bnd
    return lhs, rhs
