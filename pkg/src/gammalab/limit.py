"""The limit functional Φ, its minimization over boundary phases, and recovery fields.

Two-dimensional reading: Ω is a rectangle, the bulk interface Su a polyline, the
boundary phase v a label per boundary-loop segment and Sv the set of label switches.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .functionals import bulk_energy_G, full_energy_F, halfplane_energy_H
from .geometry import Field, HalfPlaneGrid, InterfaceSpec, RectDomainGrid
from .potentials import DoubleWell, antiderivative_W, as_p, constant_c_p, constant_sigma_p
from .profiles import ProfileSolution1D, polar_extension, solve_profile_ode


# ----------------------------------------------------------------------------- pairs


@dataclass
class LimitPair:
    """A limit configuration (u, v): bulk labels from `interface`, boundary labels per loop segment."""

    grid: RectDomainGrid
    W: DoubleWell
    V: DoubleWell
    interface: InterfaceSpec | None
    boundary_labels: np.ndarray
    bulk_value: float | None = None

    def __post_init__(self):
        self.boundary_labels = np.asarray(self.boundary_labels, dtype=float)
        n = len(self.grid.boundary_loop[0])
        if self.boundary_labels.shape != (n,):
            raise ValueError(f"need one boundary label per loop segment ({n})")
        if not np.all(np.isin(self.boundary_labels, self.V.wells)):
            raise ValueError("boundary labels must be wells of V")
        if self.interface is None:
            if self.bulk_value not in self.W.wells:
                raise ValueError("without an interface the bulk label must be a well of W")

    def label_at(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        a, b = self.W.wells
        if self.interface is None:
            return np.full(pts.shape[:-1], float(self.bulk_value))
        return np.where(self.interface.signed_distance(pts) > 0, b, a)

    def bulk_labels(self) -> np.ndarray:
        X, Y = self.grid.cell_centers()
        return self.label_at(np.stack([X, Y], axis=-1))

    @property
    def segment_lengths(self) -> np.ndarray:
        return self.grid.trace_weights()

    def segment_midpoints(self) -> np.ndarray:
        s = (np.arange(len(self.boundary_labels)) + 0.5) * self.grid.spacing
        return self.grid.arclength_point(s)

    def trace_labels(self) -> np.ndarray:
        """Tu per boundary segment: the bulk label of the adjacent cell."""
        mid = self.segment_midpoints()
        s = (np.arange(len(self.boundary_labels)) + 0.5) * self.grid.spacing
        inward = np.array([self.grid.side_frame(si)[1] for si in s])
        return self.label_at(mid + 0.5 * self.grid.spacing * inward)

    def jump_indices(self) -> np.ndarray:
        """Loop nodes k where segment k−1 and segment k carry different labels."""
        v = self.boundary_labels
        return np.flatnonzero(v != np.roll(v, 1))

    def jump_points(self) -> np.ndarray:
        return self.grid.arclength_point(self.jump_indices() * self.grid.spacing)

    def interface_length(self) -> float:
        if self.interface is None:
            return 0.0
        a, b = self.interface.segments
        return float(sum(_clipped_length(p, q, self.grid.Lx, self.grid.Ly) for p, q in zip(a, b)))

    def with_boundary_labels(self, labels) -> "LimitPair":
        return LimitPair(self.grid, self.W, self.V, self.interface, np.asarray(labels, float), self.bulk_value)

    @classmethod
    def standard(cls, grid: RectDomainGrid, W: DoubleWell, V: DoubleWell, x0: float | None = None) -> "LimitPair":
        """Vertical interface (α left, β right) with boundary labels matching the trace.

        On a closed boundary loop this gives two boundary jumps, where Su meets ∂Ω.
        """
        x0 = grid.Lx / 2 if x0 is None else x0
        iface = InterfaceSpec(((x0, 0.0), (x0, grid.Ly)), beta_side="right")
        n = len(grid.boundary_loop[0])
        pair = cls(grid, W, V, iface, np.full(n, V.well_low))
        return pair.with_boundary_labels(match_trace_labels(pair))

    @classmethod
    def from_config(cls, grid: RectDomainGrid, W: DoubleWell, V: DoubleWell, cfg: dict) -> "LimitPair":
        """Config keys: `interface` (vertex list or null), `beta_side`, `closed`, `bulk_value`,
        `boundary` ("trace" or a list of [s_start, s_end, "low"|"high"] runs over arclength;
        uncovered segments default to the low well)."""
        verts = cfg.get("interface")
        iface = None
        if verts:
            iface = InterfaceSpec(tuple(map(tuple, verts)), closed=bool(cfg.get("closed", False)),
                                  beta_side=cfg.get("beta_side", "right"))
        n = len(grid.boundary_loop[0])
        pair = cls(grid, W, V, iface, np.full(n, V.well_low), cfg.get("bulk_value"))
        spec = cfg.get("boundary", "trace")
        if spec == "trace":
            return pair.with_boundary_labels(match_trace_labels(pair))
        labels = np.full(n, V.well_low)
        mids = (np.arange(n) + 0.5) * grid.spacing
        for s0, s1, which in spec:
            if which not in ("low", "high"):
                raise ValueError(f"boundary run label must be 'low' or 'high', got {which!r}")
            labels[(mids >= s0) & (mids < s1)] = V.well_low if which == "low" else V.well_high
        return pair.with_boundary_labels(labels)


def _clipped_length(p, q, Lx, Ly) -> float:
    """Length of segment pq inside [0, Lx] × [0, Ly] (Liang–Barsky)."""
    d = q - p
    t0, t1 = 0.0, 1.0
    for num, den in ((p[0], -d[0]), (Lx - p[0], d[0]), (p[1], -d[1]), (Ly - p[1], d[1])):
        if den == 0:
            if num < 0:
                return 0.0
            continue
        t = num / den
        if den < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
    return float(max(t1 - t0, 0.0) * np.hypot(*d))


def match_trace_labels(pair: LimitPair) -> np.ndarray:
    """Boundary labels mirroring Tu: α ↦ α′, β ↦ β′."""
    tu = pair.trace_labels()
    a, b = pair.W.wells
    return np.where(tu == b, pair.V.well_high, pair.V.well_low)


# ----------------------------------------------------------------------------- Φ


@dataclass
class PhiValue:
    surface_term: float
    wall_term: float
    line_term: float

    @property
    def total(self) -> float:
        return self.surface_term + self.wall_term + self.line_term

    def to_json(self) -> dict:
        return {
            "surface_term": self.surface_term,
            "wall_term": self.wall_term,
            "line_term": self.line_term,
            "total": self.total,
        }


@dataclass(frozen=True)
class LimitConstants:
    p: float
    sigma_p: float
    c_p: float
    gamma_p: float

    @classmethod
    def compute(cls, W: DoubleWell, p, gamma_p: float) -> "LimitConstants":
        p = as_p(p)
        return cls(p, constant_sigma_p(p, W), constant_c_p(p), float(gamma_p))


def wall_costs(pair: LimitPair, consts: LimitConstants) -> np.ndarray:
    """Per-segment cost of labeling with α′ (column 0) or β′ (column 1)."""
    P = lambda t: antiderivative_W(pair.W, consts.p, np.asarray(t, dtype=float))
    tu = P(pair.trace_labels())
    L = pair.segment_lengths
    return np.column_stack([
        consts.c_p * np.abs(tu - P(np.full_like(tu, pair.V.well_low))) * L,
        consts.c_p * np.abs(tu - P(np.full_like(tu, pair.V.well_high))) * L,
    ])


def phi_energy(pair: LimitPair, consts: LimitConstants) -> PhiValue:
    """σ_p |Su| + c_p Σ |𝒲(Tu) − 𝒲(v)| |segment| + γ_p #Sv."""
    costs = wall_costs(pair, consts)
    idx = (pair.boundary_labels == pair.V.well_high).astype(int)
    wall = float(np.sum(costs[np.arange(len(idx)), idx]))
    return PhiValue(consts.sigma_p * pair.interface_length(), wall, consts.gamma_p * len(pair.jump_indices()))


def cycle_dp(costs: np.ndarray, jump_cost: float) -> tuple[np.ndarray, float]:
    """Exact two-label minimization on a cycle.

    costs[k, l] is the cost of label l on segment k; each label switch between
    consecutive segments (including last → first) costs `jump_cost`. Ties go to fewer
    switches, then to more label-0 segments. Returns (labels in {0, 1}, value).
    """
    costs = np.asarray(costs, dtype=float)
    n = len(costs)
    if n == 0:
        return np.zeros(0, int), 0.0
    best = None
    for first in (0, 1):
        # key per state: (energy, switches, label-1 count)
        keys = [None, None]
        keys[first] = (costs[0, first], 0, first)
        back = np.zeros((n, 2), int)
        for k in range(1, n):
            new = [None, None]
            for l in (0, 1):
                cands = []
                for prev in (0, 1):
                    if keys[prev] is None:
                        continue
                    e, j, c = keys[prev]
                    sw = int(prev != l)
                    cands.append(((e + costs[k, l] + sw * jump_cost, j + sw, c + l), prev))
                key, prev = min(cands)
                new[l] = key
                back[k, l] = prev
            keys = new
        for last in (0, 1):
            if keys[last] is None:
                continue
            e, j, c = keys[last]
            sw = int(last != first)
            key = (e + sw * jump_cost, j + sw, c)
            if best is None or key < best[0]:
                labels = np.empty(n, int)
                labels[-1] = last
                for k in range(n - 1, 0, -1):
                    labels[k - 1] = back[k, labels[k]]
                best = (key, labels)
    (value, _, _), labels = best
    return labels, float(value)


def brute_force_cycle(costs: np.ndarray, jump_cost: float) -> tuple[np.ndarray, float]:
    """Exhaustive 2ⁿ reference for `cycle_dp` with the same tie rules."""
    costs = np.asarray(costs, dtype=float)
    n = len(costs)
    if n > 20:
        raise ValueError("brute force limited to n ≤ 20")
    L = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    E = costs[np.arange(n), L].sum(axis=1)
    switches = (L != np.roll(L, 1, axis=1)).sum(axis=1)
    E = E + switches * jump_cost
    order = np.lexsort((L.sum(axis=1), switches, E))
    k = order[0]
    return L[k].copy(), float(E[k])


def minimize_phi_over_v(pair: LimitPair, consts: LimitConstants) -> tuple[LimitPair, PhiValue]:
    """The boundary labeling minimizing Φ(u, ·) for fixed u, and its Φ value."""
    labels, _ = cycle_dp(wall_costs(pair, consts), consts.gamma_p)
    best = pair.with_boundary_labels(np.where(labels == 1, pair.V.well_high, pair.V.well_low))
    return best, phi_energy(best, consts)


# ----------------------------------------------------------------------------- recovery fields


def layer_scale(p: float, eps: float) -> float:
    """ℓ = ε^{(p-2)/(p-1)}, the bulk transition length."""
    return eps ** ((p - 2) / (p - 1))


def _profile_values(prof: ProfileSolution1D, s, a: float, b: float):
    lo, hi = prof.support
    return np.where(s >= hi, b, np.where(s <= lo, a, prof(s)))


def _rect_distance(grid: RectDomainGrid, pts) -> np.ndarray:
    x, y = pts[..., 0], pts[..., 1]
    return np.maximum(np.minimum(np.minimum(x, grid.Lx - x), np.minimum(y, grid.Ly - y)), 0.0)


def _nodes(grid) -> np.ndarray:
    X, Y = grid.mesh()
    return np.stack([X, Y], axis=-1)


def bulk_recovery_values(pair: LimitPair, pts, eps: float, p: float, prof: ProfileSolution1D,
                         floor: float | None = None):
    """θ(d′ / (ℓ h(π_Su)^{(2-p)/(p-1)})), with h(π_Su) floored (at ℓ by default) so layers stay finite at ∂Ω."""
    a, b = pair.W.wells
    if pair.interface is None:
        return np.full(pts.shape[:-1], float(pair.bulk_value)), np.zeros(pts.shape[:-1])
    d = pair.interface.signed_distance(pts)
    q = pair.interface.project(pts)[0]
    ell = layer_scale(p, eps)
    hq = np.maximum(_rect_distance(pair.grid, q), ell if floor is None else floor)
    width = ell * hq ** ((2 - p) / (p - 1))
    return _profile_values(prof, d / width, a, b), width


def build_bulk_recovery(pair: LimitPair, eps: float, p, profile: ProfileSolution1D | None = None) -> Field:
    p = as_p(p)
    prof = profile or solve_profile_ode(pair.W, p)
    u, width = bulk_recovery_values(pair, _nodes(pair.grid), eps, p, prof)
    reach = float(np.max(width)) * max(abs(prof.support[0]), prof.support[1]) if width.size else 0.0
    too_wide = reach > min(pair.grid.Lx, pair.grid.Ly) / 2
    if too_wide:
        warnings.warn(f"bulk transition layer ({reach:.3g}) exceeds half the domain", RuntimeWarning)
    return Field(pair.grid, u, {"builder": "bulk", "eps": eps, "layer_reach": reach, "layer_warning": too_wide})


def wall_coordinate(h, eps: float, p: float):
    """τ(h) = ε^{-(p-2)/(p-1)} (p-1)/(2p-3) h^{(2p-3)/(p-1)}.

    In τ the one-dimensional wall energy becomes ∫ |u_τ|^p + W(u) dτ, so the 1D profile
    composed with τ is optimal.
    """
    q = (p - 2) / (p - 1)
    return eps ** (-q) * (p - 1) / (2 * p - 3) * np.asarray(h, dtype=float) ** ((2 * p - 3) / (p - 1))


def wall_thickness(eps: float, p: float, prof: ProfileSolution1D) -> float:
    """Distance from ∂Ω at which the wall profile has crossed the whole profile support."""
    lo, hi = prof.support
    q = (p - 2) / (p - 1)
    return float(((hi - lo) * (2 * p - 3) / (p - 1) * eps**q) ** ((p - 1) / (2 * p - 3)))


def wall_profile(h, boundary_value, bulk_value, eps: float, p: float, W: DoubleWell, prof: ProfileSolution1D):
    """1D wall profile from `boundary_value` at h = 0 to the well `bulk_value`."""
    a, b = W.wells
    bv = np.asarray(boundary_value, dtype=float)
    if np.any((bv < a) | (bv > b)):
        raise ValueError("wall profiles start inside [α, β]")
    s0 = prof.inverse(bv)
    sign = np.where(np.asarray(bulk_value) > bv, 1.0, -1.0)
    u = _profile_values(prof, s0 + sign * wall_coordinate(h, eps, p), a, b)
    u = np.where(np.asarray(bulk_value) == bv, bv, u)
    return np.where(np.asarray(h) == 0, bv, u)


def lipschitz_estimate(u: Field, mask=None) -> float:
    """Largest difference quotient over horizontal, vertical and diagonal grid edges."""
    U, d = u.values, u.grid.spacing
    quotients = [
        (np.abs(np.diff(U, axis=1)) / d, (slice(None), slice(1, None))),
        (np.abs(np.diff(U, axis=0)) / d, (slice(1, None), slice(None))),
        (np.abs(U[1:, 1:] - U[:-1, :-1]) / (d * np.sqrt(2)), (slice(1, None), slice(1, None))),
        (np.abs(U[1:, :-1] - U[:-1, 1:]) / (d * np.sqrt(2)), (slice(1, None), slice(None, -1))),
    ]
    best = 0.0
    for q, sl in quotients:
        if mask is not None:
            q = q[mask[sl]]
        if q.size:
            best = max(best, float(q.max()))
    return best


def build_wall_recovery(bulk_value: float, boundary_value: float, eps: float, p, grid: RectDomainGrid,
                        W: DoubleWell, profile: ProfileSolution1D | None = None, r: float | None = None) -> Field:
    """Constant bulk well with boundary value `boundary_value`, joined by the wall profile in h."""
    p = as_p(p)
    if bulk_value not in W.wells:
        raise ValueError("bulk value must be a well of W")
    prof = profile or solve_profile_ode(W, p)
    h = grid.distance
    u = wall_profile(h, boundary_value, bulk_value, eps, p, W, prof)
    thick = wall_thickness(eps, p, prof)
    r = thick if r is None else r
    f = Field(grid, u, {"builder": "wall", "eps": eps, "thickness": thick})
    f.meta["lipschitz"] = lipschitz_estimate(f, h <= r)
    return f


def build_lipschitz_extension(grid: RectDomainGrid, v_loop, eps: float, p, W: DoubleWell) -> Field:
    """Extension of boundary data into Ω that reaches a well within a layer of width ω ℓ.

    `v_loop` holds one value per boundary-loop node; NaN marks nodes outside the data set A′.
    The data are extended by McShane's formula (clamped to their range), then blended to the
    well w closest in sup norm, ω = ‖v − w‖_∞, with weight min(dist(x, A′)/(ω ℓ), 1).
    Lip(u) ≤ Lip(v) + 1/ℓ.
    """
    p = as_p(p)
    v = np.asarray(v_loop, dtype=float)
    r, c = grid.boundary_loop
    have = ~np.isnan(v)
    if not have.any():
        raise ValueError("no boundary data")
    P = grid.loop_points()
    d = grid.spacing
    # Lipschitz constant of v along the loop, counting only consecutive data nodes
    nxt = np.roll(np.arange(len(v)), -1)
    both = have & have[nxt]
    lip_v = float(np.max(np.abs(v[nxt][both] - v[both])) / d) if both.any() else 0.0
    a, b = W.wells
    vals = v[have]
    dist_a, dist_b = np.max(np.abs(vals - a)), np.max(np.abs(vals - b))
    well, omega = (float(a), float(dist_a)) if dist_a <= dist_b else (float(b), float(dist_b))
    ell = layer_scale(p, eps)
    u = np.full(grid.shape, float(well))
    layer = omega * ell
    near = grid.distance <= layer + d
    if omega > 0 and near.any():
        X = _nodes(grid)[near]
        Pa, va = P[have], vals
        ext = np.empty(len(X))
        dA = np.empty(len(X))
        for k0 in range(0, len(X), 4096):
            D = np.hypot(*(X[k0:k0 + 4096, None, :] - Pa[None]).transpose(2, 0, 1))
            ext[k0:k0 + 4096] = np.min(va[None] + lip_v * D, axis=1)
            dA[k0:k0 + 4096] = D.min(axis=1)
        ext = np.clip(ext, va.min(), va.max())
        lam = np.minimum(dA / layer, 1.0)
        u[near] = (1 - lam) * ext + lam * well
    u[r[have], c[have]] = vals
    f = Field(grid, u, {"builder": "lipschitz", "eps": eps, "omega": omega, "well": well, "lip_v": lip_v,
                        "layer": layer})
    f.meta["lipschitz"] = lipschitz_estimate(f)
    f.meta["lipschitz_bound"] = lip_v + 1.0 / ell
    return f


def lipschitz_energy_bound(f: Field, p, data_length: float, W: DoubleWell, m: float) -> float:
    """((ℓ Lip v + 1)^p + C_m) · |A′| · ω, the right-hand side with the o(1) dropped."""
    p = as_p(p)
    ell = layer_scale(p, f.meta["eps"])
    ts = np.linspace(-m, m, 4001)
    C_m = float(np.max(W(ts)))
    return ((ell * f.meta["lip_v"] + 1) ** p + C_m) * data_length * f.meta["omega"]


# ----------------------------------------------------------------------------- boundary patch


def recovery_radii(eps: float, p, b: float | None = None) -> tuple[float, float]:
    """(ρ_ε, σ_ε) = (ε^b, ε^b / 2) with b strictly between (p-2)/(2(p-1)) and 1/2 (midpoint by default)."""
    p = as_p(p)
    lo, hi = (p - 2) / (2 * (p - 1)), 0.5
    b = (lo + hi) / 2 if b is None else float(b)
    if not lo < b < hi:
        raise ValueError(f"exponent b = {b} must lie in ({lo:.4g}, 1/2)")
    rho = eps**b
    return rho, rho / 2


def printed_radii(eps: float, p) -> tuple[float, float]:
    """The 'for instance' choice ρ = ε^{(p-2)/(p-1)}, σ = ε^{(p-2)/(2(p-1))}; note ρ < σ for ε < 1."""
    p = as_p(p)
    return eps ** ((p - 2) / (p - 1)), eps ** ((p - 2) / (2 * (p - 1)))


def predicted_slopes(p, b: float | None = None) -> dict:
    p = as_p(p)
    if b is None:
        b = ((p - 2) / (2 * (p - 1)) + 0.5) / 2
    q = (p - 2) / (p - 1)
    s = (p - 2) + b * (4 - 2 * p)
    return {"ubar_annulus": s, "cutoff_bound": s, "bulk_bound": 2 * b - q}


def extend_with_polar(psi: Field, R: float, V: DoubleWell) -> Field:
    """ψ on a larger node-nested box, filled with ū outside its original box."""
    g = psi.grid
    if R <= g.R and R <= g.H:
        return psi
    R = np.ceil(R / g.spacing) * g.spacing
    big = HalfPlaneGrid(max(R, g.R), max(R, g.H), g.spacing, g.lateral_pad)
    u = polar_extension(V.well_low, V.well_high, big).values
    i0 = int(round((big.R - g.R) / g.spacing))
    ny, nx = g.shape
    u[:ny, i0:i0 + nx] = psi.values
    return Field(big, u, dict(psi.meta, extended_from=(g.R, g.H)))


@dataclass
class BoundaryRecovery:
    field: Field
    eps: float
    rho: float
    sigma: float
    energy: float
    terms: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"eps": self.eps, "rho": self.rho, "sigma": self.sigma, "energy": self.energy, **self.terms}


def _row_weight(grid: HalfPlaneGrid, s: float) -> np.ndarray:
    from .geometry import band_integral

    return band_integral(grid.y[:-1], grid.spacing, s)


def build_boundary_recovery(psi: Field, eps: float, p, V: DoubleWell, rho: float | None = None,
                            sigma: float | None = None, W: DoubleWell | None = None, m: float | None = None) -> BoundaryRecovery:
    """w_ε = ψ(x/√ε) on D_σ, ū outside D_ρ, linear radial cutoff between.

    Built on ψ's own lattice in the blown-up variable y = x/√ε, where H_ε(w_ε, D_ρ, E_ρ)
    equals H_1 of the rescaled field exactly; the returned field lives on the dilated
    (physical) lattice.
    """
    p = as_p(p)
    if rho is None or sigma is None:
        rho, sigma = recovery_radii(eps, p)
    if not sigma < rho:
        raise ValueError(
            "σ_ε must be smaller than ρ_ε (ξ ≡ 0 on D_σ, ξ ≡ 1 off D_ρ); the exponents "
            "ρ = ε^{(p-2)/(p-1)}, σ = ε^{(p-2)/(2(p-1))} invert this order for ε < 1, use recovery_radii")
    se = np.sqrt(eps)
    Rs, Rr = sigma / se, rho / se
    g = psi.grid
    if Rr > min(g.R, g.H):
        raise ValueError(f"ψ box ({g.R} × {g.H}) must contain the blown-up disk of radius ρ/√ε = {Rr:.3g}")
    X, Y = g.mesh()
    r = np.hypot(X, Y)
    xi = np.clip((r - Rs) / (Rr - Rs), 0.0, 1.0)
    ubar = polar_extension(V.well_low, V.well_high, g).values
    w = xi * ubar + (1 - xi) * psi.values
    cx, cy = g.cell_centers()
    rc = np.hypot(cx, cy)
    disk = rc < Rr
    ann = (rc >= Rs) & (rc < Rr)
    edge = np.abs(g.x) < Rr
    wf = Field(g, w)
    energy = halfplane_energy_H(wf, p, 1.0, V, cell_mask=disk, boundary_mask=edge).total
    ubar_ann = halfplane_energy_H(Field(g, ubar), p, 1.0, V, cell_mask=ann, boundary_mask=np.zeros_like(edge)).grad
    psi_ann = halfplane_energy_H(psi, p, 1.0, V, cell_mask=ann, boundary_mask=np.zeros_like(edge)).grad
    # ∫_annulus y^{2-p} on cells, in the blown-up variable, then back to x
    wrow = _row_weight(g, 2 - p)[:, None]
    ann_weight = float(np.sum(wrow * ann))
    a, b = V.wells
    mm = max(abs(a), abs(b)) if m is None else m
    scale_grad = eps ** ((4 - p) / 2)  # ∫ x₂^{2-p} dx = ε^{(4-p)/2} ∫ y₂^{2-p} dy
    cutoff_bound = 3 ** (p - 1) * eps ** (p - 2) * (2 * mm) ** p / (rho - sigma) ** p * scale_grad * ann_weight
    diff = np.abs(psi.values - ubar) ** p
    cell_diff = (diff[:-1, :-1] + diff[:-1, 1:] + diff[1:, :-1] + diff[1:, 1:]) / 4
    cutoff_measured = float(np.sum(wrow * ann * cell_diff)) / (Rr - Rs) ** p
    q = (p - 2) / (p - 1)
    Wpot = W or V
    ts = np.linspace(-mm, mm, 4001)
    C_m = float(np.max(Wpot(ts)))
    bulk_bound = C_m * (np.pi * rho**2 / 2) / eps**q
    Wc = Wpot(w)
    cell_W = (Wc[:-1, :-1] + Wc[:-1, 1:] + Wc[1:, :-1] + Wc[1:, 1:]) / 4
    bulk_measured = eps ** (-q) * eps ** ((2 + q) / 2) * float(np.sum(_row_weight(g, q)[:, None] * disk * cell_W))
    terms = {
        "ubar_annulus": ubar_ann,
        "psi_annulus": psi_ann,
        "cutoff_bound": cutoff_bound,
        "cutoff_measured": cutoff_measured,
        "bulk_bound": bulk_bound,
        "bulk_measured": bulk_measured,
        "psi_energy": halfplane_energy_H(psi, p, 1.0, V).total,
    }
    out = Field(g.dilated(se), w, {"builder": "boundary", "eps": eps})
    return BoundaryRecovery(out, eps, rho, sigma, energy, terms)


# ----------------------------------------------------------------------------- global assembly


class InfeasibleRecovery(ValueError):
    """The scale separation needed by the assembly fails at this ε."""


def partition_radius(eps: float, exponent: float = 0.3) -> float:
    """r = ε^{0.3}: √ε ≪ r ≪ ε^{1/7}, so patches shrink while containing the boundary layer."""
    return eps**exponent


@dataclass
class GlobalRecovery:
    field: Field
    eps: float
    r: float
    rho: float
    regions: dict
    energy: dict
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.energy["total"]["total"]

    def to_json(self) -> dict:
        return {"eps": self.eps, "r": self.r, "rho": self.rho, "energy": self.energy, **self.meta}


def _patch_sampler(psi: Field, V: DoubleWell, Rr: float, Rs: float):
    """y ↦ w̃(y) on the half-plane: ψ/ū blend inside radius Rr (bilinear in ψ), ū outside."""
    from scipy.interpolate import RegularGridInterpolator

    g = psi.grid
    X, Y = g.mesh()
    rr = np.hypot(X, Y)
    xi = np.clip((rr - Rs) / (Rr - Rs), 0.0, 1.0)
    ubar = polar_extension(V.well_low, V.well_high, g).values
    w = xi * ubar + (1 - xi) * psi.values
    interp = RegularGridInterpolator((g.y, g.x), w, bounds_error=False, fill_value=None)
    a, b = V.wells

    def sample(y1, y2):
        y2 = np.maximum(y2, 0.0)
        theta = np.arctan2(y2, y1)
        far = a + (b - a) * (1 - theta / np.pi)
        inside = np.hypot(y1, y2) < Rr
        out = far.copy()
        if inside.any():
            out[inside] = interp(np.column_stack([y2[inside], y1[inside]]))
        return out

    return sample


def assemble_global_recovery(pair: LimitPair, eps: float, p, psi: Field, r: float | None = None,
                             b: float | None = None, m: float | None = None) -> GlobalRecovery:
    """Recovery field for (u, v) on the pair's grid.

    A1 (h < r, away from jumps): bulk profile plus a wall layer from v to the bulk label.
    A2 (h > 2r): bulk profile. B2: linear glue in h. B1 (within 3r of a jump of v): the
    boundary patch in the local frame of the jump, blended to the outside field on [r, 3r].
    """
    p = as_p(p)
    grid, W, V = pair.grid, pair.W, pair.V
    r = partition_radius(eps) if r is None else r
    rho, sigma = recovery_radii(eps, p, b)
    se = np.sqrt(eps)
    if rho > r:
        raise InfeasibleRecovery(f"patch radius ρ = {rho:.3g} exceeds the partition radius r = {r:.3g}")
    prof = solve_profile_ode(W, p)
    pts = _nodes(grid)
    h = grid.distance
    ubulk, _ = bulk_recovery_values(pair, pts, eps, p, prof, floor=r)
    L = pair.label_at(pts)
    # label of the nearest boundary segment
    s = grid.project_to_boundary(pts)
    n = len(pair.boundary_labels)
    seg = np.clip(np.floor(s / grid.spacing).astype(int), 0, n - 1)
    vnear = pair.boundary_labels[seg]
    mismatch = vnear != L
    thick = wall_thickness(eps, p, prof)
    jumps = pair.jump_indices()
    zs = pair.jump_points()
    far_from_jumps = np.ones(grid.shape, bool)
    for z in zs:
        far_from_jumps &= np.hypot(pts[..., 0] - z[0], pts[..., 1] - z[1]) >= r
    if np.any(mismatch & (h < r) & far_from_jumps) and thick > r:
        raise InfeasibleRecovery(f"wall thickness {thick:.3g} exceeds r = {r:.3g}")
    wall = np.where(mismatch, wall_profile(h, vnear, L, eps, p, W, prof) - L, 0.0)
    uA1 = ubulk + wall
    xi = np.clip((h - r) / r, 0.0, 1.0)
    u = (1 - xi) * uA1 + xi * ubulk

    corners = np.array([[0, 0], [grid.Lx, 0], [grid.Lx, grid.Ly], [0, grid.Ly]], float)
    for z in zs:
        if np.min(np.hypot(*(corners - z).T)) < 3 * r:
            raise InfeasibleRecovery(f"jump point {tuple(z)} lies within 3r = {3 * r:.3g} of a corner")
    for i in range(len(zs)):
        for j in range(i + 1, len(zs)):
            if np.hypot(*(zs[i] - zs[j])) < 6 * r:
                raise InfeasibleRecovery("patches around two jump points overlap")
    sample = _patch_sampler(psi, V, rho / se, sigma / se) if len(zs) else None
    if len(zs) and rho / se > min(psi.grid.R, psi.grid.H):
        raise InfeasibleRecovery(f"ψ box too small for ρ/√ε = {rho / se:.3g}")
    B1 = np.zeros(grid.shape, bool)
    for k, z in zip(jumps, zs):
        t, nrm = grid.side_frame(k * grid.spacing)
        dx = pts - z
        y1, y2 = dx @ t / se, dx @ nrm / se
        if pair.boundary_labels[k - 1] == V.well_high:
            y1 = -y1
        dist = np.hypot(*(dx.transpose(2, 0, 1)))
        near = dist < 3 * r
        zeta = np.clip((3 * r - dist[near]) / (2 * r), 0.0, 1.0)
        u[near] = zeta * sample(y1[near], y2[near]) + (1 - zeta) * u[near]
        B1 |= near
    f = Field(grid, u, {"builder": "global", "eps": eps})

    cx, cy = grid.cell_centers()
    cpts = np.stack([cx, cy], axis=-1)
    ch = _rect_distance(grid, cpts)
    cB1 = np.zeros(ch.shape, bool)
    for z in zs:
        cB1 |= np.hypot(cx - z[0], cy - z[1]) < 3 * r
    cells = {
        "A1": (ch < r) & ~cB1,
        "B2": (ch >= r) & (ch < 2 * r) & ~cB1,
        "A2": (ch >= 2 * r) & ~cB1,
        "B1": cB1,
    }
    lp = grid.loop_points()
    lB1 = np.zeros(len(lp), bool)
    for z in zs:
        lB1 |= np.hypot(*(lp - z).T) < 3 * r
    loops = {"A1": ~lB1, "B2": np.zeros_like(lB1), "A2": np.zeros_like(lB1), "B1": lB1}
    energy = {k: full_energy_F(f, p, eps, W, V, cells[k], loops[k], m).to_json() for k in cells}
    energy["total"] = full_energy_F(f, p, eps, W, V, m=m).to_json()
    meta = {"wall_thickness": thick, "jumps": len(zs), "sigma": sigma}
    return GlobalRecovery(f, eps, r, rho, cells, energy, meta)
