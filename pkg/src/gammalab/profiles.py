"""Optimal transition profiles: the 1D profile behind σ_p and the half-plane problem behind γ_p."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .functionals import (
    gradient_energy,
    halfplane_energy_and_grad,
    halfplane_energy_H,
    p1_halfplane_energy_and_grad,
)
from .geometry import Field, HalfPlaneGrid
from .potentials import DoubleWell, as_p

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


class ProfileError(RuntimeError):
    pass


@dataclass
class ProfileSolution1D:
    s: np.ndarray
    theta: np.ndarray
    energy: float
    residual: float
    p: float
    constant: str = "corrected"

    def __call__(self, s):
        """θ(s), extended by the wells outside the sampled range."""
        return np.interp(s, self.s, self.theta)

    def inverse(self, theta):
        return np.interp(theta, self.theta, self.s)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.s[0]), float(self.s[-1])

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "energy": self.energy,
            "residual": self.residual,
            "constant": self.constant,
            "s_range": list(self.support),
            "samples": int(len(self.s)),
        }


def ode_speed_constant(p: float, constant: str = "corrected") -> float:
    """c in θ' = c · W^{1/p}; 'printed' is the (p(p-1))^{-1/p} variant kept for comparison."""
    if constant == "corrected":
        return (p - 1.0) ** (-1.0 / p)
    if constant == "printed":
        return (p * (p - 1.0)) ** (-1.0 / p)
    raise ValueError(f"unknown ODE constant {constant!r}")


def _theta_mesh(a: float, b: float, W: DoubleWell, n: int, tol: float, ratio: float) -> np.ndarray:
    core = np.linspace(a, b, n + 1)[1:-1]
    h = (b - a) / n
    pieces = [core]
    for well, sign in ((a, 1.0), (b, -1.0)):
        d = h
        tail = []
        while True:
            d /= ratio
            t = well + sign * d
            tail.append(t)
            if W(t) < tol:
                break
            if d < 1e-300:
                raise ProfileError("wells too degenerate to reach W < tol")
        pieces.append(np.array(tail))
    return np.unique(np.concatenate(pieces))


def solve_profile_ode(W: DoubleWell, p, tol: float = 1e-14, n: int = 20000, ratio: float = 1.05,
                      constant: str = "corrected") -> ProfileSolution1D:
    """Invert s(θ) = ∫_{θ0}^{θ} c^{-1} W^{-1/p} on a θ-uniform mesh refined geometrically at the wells."""
    p = as_p(p)
    a, b = W.wells
    if not b > a:
        raise ProfileError("profile needs two distinct wells")
    c = ode_speed_constant(p, constant)
    theta = _theta_mesh(a, b, W, n, tol, ratio)
    t0, t1 = theta[:-1], theta[1:]
    mid, half = (t0 + t1) / 2, (t1 - t0) / 2
    pts = mid[:, None] + half[:, None] * _GL_X
    ds = half * ((W(pts) ** (-1.0 / p)) @ _GL_W) / c
    if not np.all(np.isfinite(ds)):
        raise ProfileError("non-integrable inversion near the wells")
    s = np.concatenate([[0.0], np.cumsum(ds)])
    centre = (a + b) / 2
    s -= np.interp(centre, theta, s)
    sol = ProfileSolution1D(s, theta, 0.0, 0.0, p, constant)
    sol.energy = profile_energy_1d(sol, W, p)
    slope = np.diff(theta) / np.diff(s)
    thm = (theta[:-1] + theta[1:]) / 2
    sol.residual = float(np.max(np.abs(slope**p * (p - 1) - W(thm))))
    return sol


def profile_energy_1d(sol: ProfileSolution1D, W: DoubleWell, p) -> float:
    """∫ |θ'|^p + W(θ) ds for the piecewise-linear interpolant of the samples."""
    p = as_p(p)
    ds = np.diff(sol.s)
    dth = np.diff(sol.theta)
    grad = np.sum(np.abs(dth) ** p * ds ** (1 - p))
    Wv = W(sol.theta)
    pot = np.sum((Wv[:-1] + Wv[1:]) / 2 * ds)
    return float(grad + pot)


def polar_extension(alpha: float, beta: float, grid: HalfPlaneGrid, center: tuple[float, float] = (0.0, 0.0)) -> Field:
    """ū = (θ/π) α′ + (1 − θ/π) β′ around `center`; β′ on the positive x₁ axis."""
    X, Y = grid.mesh()
    th = np.arctan2(Y - center[1], X - center[0])
    th = np.clip(th, 0.0, np.pi)
    return Field(grid, (th / np.pi) * alpha + (1 - th / np.pi) * beta)


def monotone_rearrange_x1(u: Field) -> Field:
    return u.with_values(np.sort(u.values, axis=1))


@dataclass
class GammaOptions:
    maxiter: int = 400
    rounds: int = 30
    rtol: float = 1e-9
    maxcor: int = 5
    seed: int = 0
    starts: tuple = ("polar", "step", "random", "random", "random")
    coarsest: float = 0.25
    scheme: str = "p1"


@dataclass
class GammaEstimate:
    estimate: float
    R: float
    H: float
    spacing: float
    minimizer: Field
    iterations: int
    grad_norm: float
    converged: bool
    starts: list = field(default_factory=list)
    scheme: str = "p1"

    def to_json(self) -> dict:
        return {
            "scheme": self.scheme,
            "estimate": self.estimate,
            "R": self.R,
            "H": self.H,
            "spacing": self.spacing,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
            "starts": self.starts,
        }


def _start_field(kind: str, V: DoubleWell, grid: HalfPlaneGrid, rng) -> np.ndarray:
    a, b = V.wells
    if kind == "polar":
        return polar_extension(a, b, grid).values
    if kind == "step":
        X, _ = grid.mesh()
        return np.where(X < 0, a, b).astype(float)
    if kind == "random":
        u = rng.uniform(a, b, grid.shape)
        return np.sort(u, axis=1)
    raise ValueError(f"unknown start {kind!r}")


def descend_halfplane(u0: np.ndarray, V: DoubleWell, p: float, grid: HalfPlaneGrid, opts: GammaOptions):
    """Clamped L-BFGS-B on H_1 with lateral Dirichlet data, rearranging rows between rounds.

    Under the p1 scheme a rearrangement is kept only when it does not raise the energy.
    """
    a, b = V.wells
    energy_and_grad = {"p1": p1_halfplane_energy_and_grad, "stencil": halfplane_energy_and_grad}[opts.scheme]
    u = np.clip(np.array(u0, dtype=float), a, b)
    u[:, 0], u[:, -1] = a, b
    free = np.s_[:, 1:-1]
    shape = u[free].shape

    def fun(x):
        u[free] = x.reshape(shape)
        E, G = energy_and_grad(u, grid, p, 1.0, V)
        return E, G[free].ravel()

    E = fun(u[free].ravel())[0]
    iterations = 0
    converged = False
    gnorm = np.inf
    for _ in range(opts.rounds):
        res = minimize(fun, u[free].ravel(), jac=True, method="L-BFGS-B",
                       bounds=[(a, b)] * int(np.prod(shape)),
                       options={"maxiter": opts.maxiter, "ftol": 1e-15, "gtol": 1e-12, "maxcor": opts.maxcor})
        iterations += int(res.nit)
        u[free] = np.sort(res.x.reshape(shape), axis=1)
        E_new, g = fun(u[free].ravel())
        if E_new > res.fun:
            E_new, g = fun(res.x)
        pg = np.where(((u[free].ravel() <= a) & (g > 0)) | ((u[free].ravel() >= b) & (g < 0)), 0.0, g)
        gnorm = float(np.linalg.norm(pg))
        done = E - E_new <= opts.rtol * max(abs(E_new), 1.0)
        E = min(E, E_new)
        if done:
            converged = True
            break
    return u, iterations, gnorm, converged


def estimate_gamma_p(V: DoubleWell, p, grid: HalfPlaneGrid, opts: GammaOptions | None = None,
                     warm_start: np.ndarray | None = None) -> GammaEstimate:
    """Upper bound on γ_p: the best H_1 energy over the multi-start descents."""
    p = as_p(p)
    opts = opts or GammaOptions()
    rng = np.random.default_rng(opts.seed)
    levels = _coarse_levels(grid, opts.coarsest)
    starts = [(k, _start_field(k, V, levels[0], rng)) for k in opts.starts]
    best = None
    log = []
    if warm_start is not None:
        starts.insert(0, ("warm", warm_start))
    for kind, u0 in starts:
        chain = [grid] if kind == "warm" else levels
        it = 0
        for i, lvl in enumerate(chain):
            if i:
                u0 = refine_nested(Field(chain[i - 1], u), opts.scheme).values
            u, k, gn, conv = descend_halfplane(u0, V, p, lvl, opts)
            it += k
        E = halfplane_energy_H(Field(grid, u), p, 1.0, V, scheme=opts.scheme).total
        log.append({"start": kind, "energy": E, "iterations": it, "converged": conv})
        if best is None or E < best[0]:
            best = (E, u, it, gn, conv)
    E, u, it, gn, conv = best
    if not conv:
        warnings.warn("γ_p descent hit its iteration budget; estimate is still an upper bound", RuntimeWarning)
    return GammaEstimate(E, grid.R, grid.H, grid.spacing, Field(grid, u), it, gn, conv, log, opts.scheme)


def _coarse_levels(grid: HalfPlaneGrid, coarsest: float) -> list[HalfPlaneGrid]:
    """Node-nested lattices from the coarsest admissible spacing ≤ `coarsest` down to `grid`."""
    levels = [grid]
    d = grid.spacing
    while 2 * d <= coarsest + 1e-12:
        d *= 2
        try:
            levels.append(HalfPlaneGrid(grid.R, grid.H, d, grid.lateral_pad))
        except ValueError:
            break
    return levels[::-1]


def refine_nested(u: Field, scheme: str = "p1") -> Field:
    """Exact injection onto the node-nested lattice with half the spacing.

    "p1" keeps the piecewise-linear interpolant (cell centres on the anti-diagonal a1–b0);
    "bilinear" averages the four corners.
    """
    g = u.grid
    fine = HalfPlaneGrid(g.R, g.H, g.spacing / 2, g.lateral_pad)
    U = u.values
    F = np.empty(fine.shape)
    F[::2, ::2] = U
    F[1::2, ::2] = (U[:-1] + U[1:]) / 2
    F[::2, 1::2] = (U[:, :-1] + U[:, 1:]) / 2
    if scheme == "p1":
        F[1::2, 1::2] = (U[:-1, 1:] + U[1:, :-1]) / 2
    elif scheme in ("bilinear", "stencil"):
        F[1::2, 1::2] = (U[:-1, :-1] + U[:-1, 1:] + U[1:, :-1] + U[1:, 1:]) / 4
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return Field(fine, F)


def _radius(grid: HalfPlaneGrid, where: str = "nodes"):
    X, Y = grid.mesh() if where == "nodes" else grid.cell_centers()
    return np.hypot(X, Y)


def default_cutoff_width(p: float, eps: float) -> float:
    return eps ** ((p - 2) / (2 * (p - 1)))


def build_lb_competitor(u: Field, s: float, eps: float, p, V: DoubleWell, cutoff_width: float | None = None) -> Field:
    """w = u inside radius s, ū outside s + width, linear radial blend between (|Dφ| = 1/width)."""
    p = as_p(p)
    g = u.grid
    width = default_cutoff_width(p, eps) if cutoff_width is None else float(cutoff_width)
    if not (0.5 <= s and s + width <= 1.0 + 1e-12):
        raise ValueError(f"annulus [{s}, {s + width}] does not fit in (1/2, 1)")
    if min(g.R, g.H) < 1.0:
        raise ValueError("grid must contain the unit half-disk")
    r = _radius(g)
    phi = np.clip((s + width - r) / width, 0.0, 1.0)
    ubar = polar_extension(V.well_low, V.well_high, g).values
    return Field(g, phi * u.values + (1 - phi) * ubar)


@dataclass
class AnnulusChoice:
    s: float
    energy: float
    bound: float
    candidates: np.ndarray
    energies: np.ndarray


def annulus_energy(u: Field, s: float, width: float, p, eps: float, V: DoubleWell) -> float:
    g = u.grid
    rc = _radius(g, "cells")
    cells = (rc >= s) & (rc < s + width)
    xt = np.abs(g.x)
    bmask = (xt >= s) & (xt < s + width)
    return halfplane_energy_H(u, p, eps, V, cell_mask=cells, boundary_mask=bmask).total


def select_annulus(u: Field, p, eps: float, V: DoubleWell, cutoff_width: float | None = None,
                   oversample: int = 4) -> AnnulusChoice:
    """Radius s in (1/2, 1 − width) with the least annulus energy.

    Candidates include a tiling of (1/2, 1) by disjoint annuli, so the minimum is at most
    the energy in {1/2 ≤ r < 1} divided by the number K of tiles.
    """
    p = as_p(p)
    width = default_cutoff_width(p, eps) if cutoff_width is None else float(cutoff_width)
    K = int(np.floor(0.5 / width))
    if K < 1:
        raise ValueError("cutoff width exceeds the admissible radius range")
    tiles = 0.5 + width * np.arange(K)
    extra = np.linspace(0.5, 1.0 - width, oversample * K + 1)
    cands = np.unique(np.concatenate([tiles, extra]))
    cands = cands[cands + width <= 1.0 + 1e-12]
    energies = np.array([annulus_energy(u, s, width, p, eps, V) for s in cands])
    total = annulus_energy(u, 0.5, 0.5, p, eps, V)
    k = int(np.argmin(energies))
    return AnnulusChoice(float(cands[k]), float(energies[k]), total / K, cands, energies)
