"""Model domains, exact singular-weight cell integrals, interfaces and traces.

Node arrays are indexed ``values[j, i]`` with row j at height y_j and column i at x_i.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)


def _lattice_count(length: float, spacing: float, what: str) -> int:
    n = length / spacing
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise ValueError(f"{what} = {length} is not an integer multiple of spacing {spacing}")
    return k


def band_integral(t0, width: float, s: float):
    """width · ∫_{t0}^{t0+width} t^s dt, exact and free of cancellation for large t0."""
    t0 = np.asarray(t0, dtype=float)
    k = s + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        far = t0 ** k * np.expm1(k * np.log1p(width / t0)) / k
    near = width**k / k
    out = width * np.where(t0 > 0, far, near)
    return out[()] if out.ndim == 0 else out


def corner_band_integral(t0, width: float, s: float):
    """∫∫ min(a, b)^s over the square [t0, t0+width]², split along its diagonal."""
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    t1 = t0 + width
    out = np.empty_like(t0)
    small = t0 < 2 * width
    a, b = t0[small], t1[small]
    with np.errstate(divide="ignore"):
        i1 = (b ** (s + 1) - a ** (s + 1)) / (s + 1)
        i2 = (b ** (s + 2) - a ** (s + 2)) / (s + 2)
    out[small] = 2 * (b * i1 - i2)
    a = t0[~small]
    if a.size:
        tau = width / 2 * (1 + _GL16_X)
        pts = a[:, None] + tau
        out[~small] = 2 * width / 2 * ((pts**s * (width - tau)) @ _GL16_W)
    return out


def weight_cell_integral(y0, spacing: float, p: float):
    """Exact ∫ x₂^{2-p} over a cell of side `spacing` whose lower edge sits at height y0."""
    s = 2.0 - float(p)
    if not -1.0 < s < 0.0:
        raise ValueError(f"weight exponent 2-p = {s} must lie in (-1, 0)")
    if np.any(np.asarray(y0) < 0):
        raise ValueError("cell must lie in the closed upper half-plane")
    return band_integral(y0, spacing, s)


@dataclass(frozen=True)
class HalfPlaneGrid:
    """Truncated half-plane [-R, R] × [0, H]; the flat boundary is the row x₂ = 0.

    With ``lateral_pad`` the gradient energy carries a half-cell Neumann margin on
    both lateral sides (duplicated end columns at half weight).
    """

    R: float
    H: float
    spacing: float
    lateral_pad: bool = True

    def __post_init__(self):
        _lattice_count(2 * self.R, self.spacing, "2R")
        _lattice_count(self.H, self.spacing, "H")

    @property
    def shape(self) -> tuple[int, int]:
        return (
            _lattice_count(self.H, self.spacing, "H") + 1,
            _lattice_count(2 * self.R, self.spacing, "2R") + 1,
        )

    @property
    def x(self) -> np.ndarray:
        return -self.R + self.spacing * np.arange(self.shape[1])

    @property
    def y(self) -> np.ndarray:
        return self.spacing * np.arange(self.shape[0])

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    @property
    def boundary_row(self) -> np.ndarray:
        return np.arange(self.shape[1])

    def row_weights(self, p: float) -> np.ndarray:
        """Exact ∫ x₂^{2-p} per cell, one value per row of cells."""
        return weight_cell_integral(self.y[:-1], self.spacing, p)

    def cell_centers(self):
        d = self.spacing
        return np.meshgrid(self.x[:-1] + d / 2, self.y[:-1] + d / 2)

    def trace_weights(self) -> np.ndarray:
        w = np.full(self.shape[1], self.spacing)
        w[0] = w[-1] = self.spacing / 2
        return w

    def dilated(self, factor: float) -> "HalfPlaneGrid":
        return HalfPlaneGrid(self.R * factor, self.H * factor, self.spacing * factor, self.lateral_pad)


@dataclass(frozen=True)
class RectDomainGrid:
    """Rectangle [0, Lx] × [0, Ly] with h = distance to the nearest side.

    Both side counts must be even so the medial lines are lattice lines; every cell is
    then either governed by one side or split exactly along a corner diagonal.
    """

    Lx: float
    Ly: float
    spacing: float

    def __post_init__(self):
        for name, L in (("Lx", self.Lx), ("Ly", self.Ly)):
            if _lattice_count(L, self.spacing, name) % 2:
                raise ValueError(f"{name}/spacing must be even")

    @property
    def shape(self) -> tuple[int, int]:
        return (
            _lattice_count(self.Ly, self.spacing, "Ly") + 1,
            _lattice_count(self.Lx, self.spacing, "Lx") + 1,
        )

    @property
    def x(self) -> np.ndarray:
        return self.spacing * np.arange(self.shape[1])

    @property
    def y(self) -> np.ndarray:
        return self.spacing * np.arange(self.shape[0])

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    def cell_centers(self):
        d = self.spacing
        return np.meshgrid(self.x[:-1] + d / 2, self.y[:-1] + d / 2)

    @cached_property
    def distance(self) -> np.ndarray:
        X, Y = self.mesh()
        return np.minimum(np.minimum(X, self.Lx - X), np.minimum(Y, self.Ly - Y))

    def cell_weights(self, s: float) -> np.ndarray:
        """Exact ∫ h^s per cell, shape (ny-1, nx-1), for s > -1 (cached, read-only)."""
        if not s > -1:
            raise ValueError("weight exponent must exceed -1")
        return _rect_cell_weights(self, float(s))

    def _cell_weights(self, s: float) -> np.ndarray:
        d = self.spacing
        x0, y0 = self.x[:-1], self.y[:-1]
        tx = np.minimum(x0, self.Lx - x0 - d)
        ty = np.minimum(y0, self.Ly - y0 - d)
        TX, TY = np.meshgrid(np.maximum(tx, 0.0), np.maximum(ty, 0.0))
        TX = np.round(TX / d) * d
        TY = np.round(TY / d) * d
        out = np.where(TX < TY, band_integral(TX, d, s), band_integral(TY, d, s))
        tie = TX == TY
        out[tie] = corner_band_integral(TX[tie], d, s)
        return out

    def grad_weights(self, p: float) -> np.ndarray:
        return self.cell_weights(2.0 - p)

    def bulk_weights(self, p: float) -> np.ndarray:
        return self.cell_weights((p - 2.0) / (p - 1.0))

    @cached_property
    def boundary_loop(self) -> tuple[np.ndarray, np.ndarray]:
        """(row, column) indices of boundary nodes, counterclockwise from the origin."""
        ny, nx = self.shape
        rows = np.concatenate([
            np.zeros(nx - 1, int),
            np.arange(ny - 1),
            np.full(nx - 1, ny - 1),
            np.arange(ny - 1, 0, -1),
        ])
        cols = np.concatenate([
            np.arange(nx - 1),
            np.full(ny - 1, nx - 1),
            np.arange(nx - 1, 0, -1),
            np.zeros(ny - 1, int),
        ])
        return rows, cols

    @property
    def perimeter(self) -> float:
        return 2 * (self.Lx + self.Ly)

    def trace_weights(self) -> np.ndarray:
        return np.full(len(self.boundary_loop[0]), self.spacing)

    def loop_points(self) -> np.ndarray:
        r, c = self.boundary_loop
        return np.column_stack([self.x[c], self.y[r]])

    def arclength_point(self, s) -> np.ndarray:
        """Point on the boundary at arclength s (counterclockwise from the origin)."""
        s = np.mod(np.asarray(s, dtype=float), self.perimeter)
        Lx, Ly = self.Lx, self.Ly
        pts = np.empty(s.shape + (2,))
        b = s < Lx
        r = (s >= Lx) & (s < Lx + Ly)
        t = (s >= Lx + Ly) & (s < 2 * Lx + Ly)
        lft = s >= 2 * Lx + Ly
        pts[b] = np.column_stack([s[b], 0 * s[b]])
        pts[r] = np.column_stack([np.full(r.sum(), Lx), s[r] - Lx])
        pts[t] = np.column_stack([2 * Lx + Ly - s[t], np.full(t.sum(), Ly)])
        pts[lft] = np.column_stack([0 * s[lft], self.perimeter - s[lft]])
        return pts

    def side_frame(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        """Unit tangent (counterclockwise) and inward normal at arclength s."""
        s = float(np.mod(s, self.perimeter))
        Lx, Ly = self.Lx, self.Ly
        if s < Lx:
            t = np.array([1.0, 0.0])
        elif s < Lx + Ly:
            t = np.array([0.0, 1.0])
        elif s < 2 * Lx + Ly:
            t = np.array([-1.0, 0.0])
        else:
            t = np.array([0.0, -1.0])
        return t, np.array([-t[1], t[0]])

    def project_to_boundary(self, pts: np.ndarray) -> np.ndarray:
        """Arclength of the nearest boundary point (lowest side index on ties)."""
        x, y = pts[..., 0], pts[..., 1]
        Lx, Ly = self.Lx, self.Ly
        d = np.stack([y, Lx - x, Ly - y, x])
        side = np.argmin(d, axis=0)
        s = np.choose(side, [x, Lx + y, 2 * Lx + Ly - x, 2 * Lx + 2 * Ly - y])
        return np.mod(s, self.perimeter)


@lru_cache(maxsize=32)
def _rect_cell_weights(grid: RectDomainGrid, s: float) -> np.ndarray:
    out = grid._cell_weights(s)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class HalfBoxGrid3D:
    """Box [-a, a] × [-b, b] × [0, c] with the flat boundary at x₃ = 0.

    Values are stored as ``values[k, j, i]`` for (x₃, x₂, x₁).
    """

    nodes: tuple[int, int, int]
    spacing: float

    def __post_init__(self):
        if any(n < 2 for n in self.nodes) or np.prod(self.nodes) > 48**3:
            raise ValueError("3D half-box needs 2..48³ nodes")

    @property
    def shape(self) -> tuple[int, int, int]:
        n1, n2, n3 = self.nodes
        return (n3, n2, n1)

    def slice_grid(self) -> HalfPlaneGrid:
        n1, _, n3 = self.nodes
        d = self.spacing
        return HalfPlaneGrid((n1 - 1) * d / 2, (n3 - 1) * d, d, lateral_pad=False)

    def row_weights(self, p: float) -> np.ndarray:
        return self.slice_grid().row_weights(p) * self.spacing


@dataclass
class Field:
    grid: object
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(self.grid.shape):
            raise ValueError(
                f"value array shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy(), dict(self.meta))

    def with_values(self, values) -> "Field":
        return Field(self.grid, values, dict(self.meta))


@dataclass
class BoundaryField:
    """Values on the boundary lattice ordered by arclength, with quadrature weights."""

    s: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    closed: bool


def trace(f: Field) -> BoundaryField:
    g = f.grid
    if isinstance(g, HalfPlaneGrid):
        return BoundaryField(g.x.copy(), f.values[0].copy(), g.trace_weights(), False)
    if isinstance(g, RectDomainGrid):
        r, c = g.boundary_loop
        s = g.spacing * np.arange(len(r))
        return BoundaryField(s, f.values[r, c].copy(), g.trace_weights(), True)
    raise TypeError(f"no boundary row on {type(g).__name__}")


def distance_to_boundary(grid: RectDomainGrid, x) -> float:
    x1, x2 = float(x[0]), float(x[1])
    tol = 1e-12 * max(grid.Lx, grid.Ly)
    if not (-tol <= x1 <= grid.Lx + tol and -tol <= x2 <= grid.Ly + tol):
        raise ValueError(f"point {tuple(x)} lies outside the rectangle")
    return max(0.0, min(x1, grid.Lx - x1, x2, grid.Ly - x2))


@dataclass(frozen=True)
class InterfaceSpec:
    """Simple polyline; the β phase lies on `beta_side` of its direction of travel.

    For a closed counterclockwise polyline, ``beta_side="left"`` means β inside.
    """

    vertices: tuple
    closed: bool = False
    beta_side: str = "left"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 2:
            raise ValueError("interface needs at least two 2D vertices")
        if self.beta_side not in ("left", "right"):
            raise ValueError("beta_side must be 'left' or 'right'")
        object.__setattr__(self, "vertices", tuple(map(tuple, v)))
        if not self._is_simple():
            raise ValueError("interface polyline self-intersects")

    @property
    def points(self) -> np.ndarray:
        v = np.asarray(self.vertices)
        return np.vstack([v, v[:1]]) if self.closed else v

    @property
    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        P = self.points
        return P[:-1], P[1:]

    @property
    def length(self) -> float:
        a, b = self.segments
        return float(np.linalg.norm(b - a, axis=1).sum())

    def _is_simple(self) -> bool:
        a, b = self.segments
        n = len(a)

        def cross(o, p, q):
            return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])

        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (self.closed and i == 0 and j == n - 1):
                    continue
                d1, d2 = cross(a[j], b[j], a[i]), cross(a[j], b[j], b[i])
                d3, d4 = cross(a[i], b[i], a[j]), cross(a[i], b[i], b[j])
                if d1 * d2 < 0 and d3 * d4 < 0:
                    return False
        return True

    def project(self, pts) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Nearest points, segment index, segment parameter and distance (lowest index on ties)."""
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        a, b = self.segments
        ab = b - a
        L2 = np.einsum("ij,ij->i", ab, ab)
        best_d = np.full(len(flat), np.inf)
        best_k = np.zeros(len(flat), int)
        best_t = np.zeros(len(flat))
        for k in range(len(a)):
            t = np.clip(((flat - a[k]) @ ab[k]) / L2[k], 0.0, 1.0)
            q = a[k] + t[:, None] * ab[k]
            d = np.hypot(*(flat - q).T)
            better = d < best_d
            best_d[better], best_k[better], best_t[better] = d[better], k, t[better]
        q = a[best_k] + best_t[:, None] * ab[best_k]
        shp = pts.shape[:-1]
        return q.reshape(pts.shape), best_k.reshape(shp), best_t.reshape(shp), best_d.reshape(shp)

    def _pseudo_normals(self) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.segments
        t = (b - a) / np.linalg.norm(b - a, axis=1)[:, None]
        seg_n = np.column_stack([-t[:, 1], t[:, 0]])
        prev = np.roll(seg_n, 1, axis=0) if self.closed else np.vstack([seg_n[:1], seg_n[:-1]])
        vert_n = seg_n + prev
        vert_n /= np.maximum(np.linalg.norm(vert_n, axis=1), 1e-300)[:, None]
        return seg_n, vert_n

    def signed_distance(self, pts) -> np.ndarray:
        """+distance on the β side, −distance on the α side."""
        pts = np.asarray(pts, dtype=float)
        q, k, t, d = self.project(pts)
        seg_n, vert_n = self._pseudo_normals()
        n = seg_n[k].copy()
        at_start = t == 0.0
        n[at_start] = vert_n[k[at_start]]
        if self.closed:
            at_end = t == 1.0
            n[at_end] = vert_n[(k[at_end] + 1) % len(seg_n)]
        else:
            at_end = (t == 1.0) & (k < len(seg_n) - 1)
            n[at_end] = vert_n[k[at_end] + 1]
        side = np.sign(np.einsum("...i,...i->...", pts - q, n))
        if self.beta_side == "right":
            side = -side
        return side * d


def signed_distance_to_interface(iface: InterfaceSpec, x) -> np.ndarray:
    return iface.signed_distance(np.asarray(x, dtype=float))


def write_field_csv(f: Field, path) -> Path:
    """Node coordinates and values, one node per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g = f.grid
    if isinstance(g, HalfBoxGrid3D):
        raise TypeError("3D fields are not exported")
    X, Y = g.mesh()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "u"])
        for x1, x2, u in zip(X.ravel(), Y.ravel(), f.values.ravel()):
            w.writerow([repr(float(x1)), repr(float(x2)), repr(float(u))])
    return path


def read_field_csv(path, grid) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return Field(grid, data[:, 2].reshape(grid.shape))
