"""Orchestrated studies: σ_p table, γ_p refinement/truncation study, ε-sweeps against Φ,
randomized invariant suite, and persisted run records."""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml
from scipy.optimize import minimize

from .functionals import (
    EnergyBreakdown,
    bulk_energy_G,
    full_energy_and_grad,
    full_energy_F,
    gradient_energy,
    halfplane_energy_H,
    modica_lower_bound,
    rescale_field,
    slice_lower_bound,
    truncate_field,
)
from .geometry import Field, HalfBoxGrid3D, HalfPlaneGrid, RectDomainGrid, read_field_csv, write_field_csv
from .limit import (
    InfeasibleRecovery,
    LimitConstants,
    LimitPair,
    assemble_global_recovery,
    build_boundary_recovery,
    build_bulk_recovery,
    build_wall_recovery,
    minimize_phi_over_v,
    phi_energy,
    predicted_slopes,
)
from .potentials import (
    DoubleWell,
    PExponent,
    antiderivative_W,
    as_p,
    constant_c_p,
    constant_sigma_p,
    default_truncation,
)
from .profiles import GammaOptions, estimate_gamma_p, monotone_rearrange_x1, profile_energy_1d, solve_profile_ode

SCHEMA = "gamma-limit-lab/v1"


class ConfigError(ValueError):
    """Invalid configuration (CLI exit code 2)."""


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("GAMMA_LAB_THREADS", "1")))
    except ValueError:
        return 1


# ----------------------------------------------------------------------------- configs


@dataclass
class PotentialSpec:
    wells: tuple = (-1.0, 1.0)
    amplitude: float = 1.0
    form: str = "quartic"

    def build(self) -> DoubleWell:
        return DoubleWell(float(self.wells[0]), float(self.wells[1]), float(self.amplitude), self.form)


@dataclass
class MinimizerOptions:
    maxiter: int = 3000
    tol: float = 1e-12
    maxcor: int = 10
    restarts: int = 0


@dataclass
class GammaSpec:
    """Where and how γ_p(V) is estimated for Φ and for the boundary patch ψ."""

    R: float = 8.0
    spacing: float = 0.25
    tail_R: tuple = (8.0, 16.0, 32.0, 64.0)
    tail_spacing: float = 0.5
    value: float | None = None  # skip estimation and use this γ_p


def default_eps_list(n: int = 8, hi: float = 2e-3, lo: float = 1e-4) -> list[float]:
    return [float(e) for e in np.geomspace(hi, lo, n)]


@dataclass
class SweepConfig:
    p: float = 2.5
    W: PotentialSpec = field(default_factory=PotentialSpec)
    V: PotentialSpec = field(default_factory=lambda: PotentialSpec(amplitude=0.25))
    domain: tuple = (1.0, 1.0)
    eps: list = field(default_factory=default_eps_list)
    nodes_per_sqrt_eps: float = 2.5
    max_cells: int = 256
    min_cells: int = 32
    pair: dict = field(default_factory=lambda: {"kind": "standard"})
    r_exponent: float = 0.3
    b: float | None = None
    gamma: GammaSpec = field(default_factory=GammaSpec)
    minimizer: MinimizerOptions = field(default_factory=MinimizerOptions)
    seed: int = 0
    cross_check: bool = False
    out: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        p = float(self.p)
        if not (2 < p < 3) and not self.cross_check:
            raise ConfigError(f"p = {p} outside (2, 3); enable cross_check for p = 2 or 3")
        if not (2 <= p <= 3):
            raise ConfigError(f"p = {p} outside [2, 3]")
        eps = [float(e) for e in self.eps]
        if any(not e > 0 for e in eps):
            raise ConfigError("ε values must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("ε list must be strictly decreasing")
        self.eps = eps

    @property
    def exponent(self):
        return PExponent(self.p, cross_check=True) if self.cross_check else float(self.p)

    def spacing_for(self, eps: float) -> float:
        """Largest power-of-two cell with Δ ≤ √ε / nodes_per_sqrt_eps, clamped to [1/max, 1/min] cells."""
        target = math.sqrt(eps) / self.nodes_per_sqrt_eps
        cells = 2 ** math.ceil(math.log2(1.0 / target))
        return 1.0 / min(max(cells, self.min_cells), self.max_cells)

    def grid_for(self, eps: float) -> RectDomainGrid:
        return RectDomainGrid(float(self.domain[0]), float(self.domain[1]), self.spacing_for(eps))

    def to_json(self) -> dict:
        d = asdict(self)
        d["W"]["wells"] = list(d["W"]["wells"])
        d["V"]["wells"] = list(d["V"]["wells"])
        d["domain"] = list(d["domain"])
        d["gamma"]["tail_R"] = list(d["gamma"]["tail_R"])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        data = dict(data or {})
        nested = {"W": PotentialSpec, "V": PotentialSpec, "gamma": GammaSpec, "minimizer": MinimizerOptions}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        for key, typ in nested.items():
            if key in data:
                sub = data[key] or {}
                if not isinstance(sub, dict):
                    raise ConfigError(f"{key} must be a mapping")
                bad = set(sub) - {f.name for f in fields(typ)}
                if bad:
                    raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
                try:
                    data[key] = typ(**sub)
                except (TypeError, ValueError) as e:
                    raise ConfigError(f"invalid {key}: {e}") from e
        for key in ("domain",):
            if key in data:
                data[key] = tuple(data[key])
        if "gamma" in data and isinstance(data["gamma"], GammaSpec):
            data["gamma"].tail_R = tuple(data["gamma"].tail_R)
        try:
            return cls(**data)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e


# ----------------------------------------------------------------------------- records


@dataclass
class EpsEntry:
    eps: float
    spacing: float
    r: float
    rho: float
    status: str
    message: str
    iterations: int
    recovery: dict
    minimized: dict
    regions: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    config: dict
    phi: dict
    entries: list = field(default_factory=list)
    timestamps: dict = field(default_factory=dict)
    schema: str = SCHEMA
    fields: dict = field(default_factory=dict, repr=False, compare=False)

    def to_json(self) -> dict:
        return {
            "schema": self.schema,
            "config": self.config,
            "phi": self.phi,
            "entries": [asdict(e) for e in self.entries],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RunRecord":
        if data.get("schema") != SCHEMA:
            raise ValueError(f"unsupported record schema {data.get('schema')!r}")
        return cls(data["config"], data["phi"], [EpsEntry(**e) for e in data["entries"]])


# ----------------------------------------------------------------------------- σ table


def run_sigma_table(p_list, W: DoubleWell, tol: float = 1e-6) -> tuple[list[dict], bool]:
    """Rows (p, c_p, σ_p, profile energy, |difference|); ok iff every row agrees within tol."""
    rows, ok = [], True
    for p in p_list:
        pe = PExponent(float(p), cross_check=True) if float(p) in (2.0, 3.0) else float(p)
        sigma = constant_sigma_p(pe, W)
        sol = solve_profile_ode(W, pe)
        prof = profile_energy_1d(sol, W, pe)
        diff = abs(prof - sigma)
        rows.append({"p": float(p), "c_p": constant_c_p(pe), "sigma_p": sigma, "profile_energy": prof, "difference": diff})
        ok &= diff <= tol
    return rows, bool(ok)


# ----------------------------------------------------------------------------- γ study


@dataclass
class GammaStudy:
    cells: list
    columns_monotone: dict
    tail: dict
    gamma_inf: float | None

    def to_json(self) -> dict:
        return asdict(self)


def _fit_tail(Rs, values) -> dict:
    Rs, values = np.asarray(Rs, float), np.asarray(values, float)
    diffs = np.abs(np.diff(values))
    if len(diffs) < 2 or np.any(diffs <= 0):
        return {"R": Rs.tolist(), "gamma": values.tolist(), "differences": diffs.tolist(), "slope": None}
    slope, _ = np.polyfit(np.log(Rs[:-1]), np.log(diffs), 1)
    ratio = float(np.mean(np.log2(Rs[1:] / Rs[:-1])))
    q = 2.0 ** (slope * ratio)
    extrapolated = float(values[-1] + np.sign(values[-1] - values[-2]) * diffs[-1] * q / (1 - q)) if q < 1 else None
    return {
        "R": Rs.tolist(),
        "gamma": values.tolist(),
        "differences": diffs.tolist(),
        "slope": float(slope),
        "extrapolated": extrapolated,
    }


def run_gamma_study(V: DoubleWell, p, R_list, spacing_list, tail_spacing: float | None = None,
                    tail_R=None, opts: GammaOptions | None = None, slack: float = 1e-8) -> GammaStudy:
    """Nested refinement column per R over `spacing_list`, and a truncation-tail fit over
    `tail_R` at `tail_spacing` (the difference |γ(2R) − γ(R)| against R, predicted slope −2(p−2))."""
    p = as_p(p)
    opts = opts or GammaOptions()
    cells, monotone = [], {}
    spacings = sorted(spacing_list, reverse=True)
    for R in R_list:
        col = []
        for d in spacings:
            est = estimate_gamma_p(V, p, HalfPlaneGrid(R, R, d), opts)
            cells.append(est.to_json())
            col.append(est.estimate)
        monotone[str(float(R))] = bool(all(b <= a + slack for a, b in zip(col, col[1:])))
    tail, gamma_inf = {}, None
    if tail_R:
        d = tail_spacing or spacings[0]
        vals = []
        for R in tail_R:
            est = estimate_gamma_p(V, p, HalfPlaneGrid(R, R, d), GammaOptions(starts=("polar",)))
            vals.append(est.estimate)
            cells.append(dict(est.to_json(), role="tail"))
        tail = _fit_tail(tail_R, vals)
        tail["spacing"] = d
        tail["predicted_slope"] = -2 * (p - 2)
        gamma_inf = tail.get("extrapolated")
    return GammaStudy(cells, monotone, tail, gamma_inf)


def tail_corrected_gamma(V: DoubleWell, p, spec: GammaSpec, box=None) -> tuple[float, dict]:
    """γ_p(V) from the box estimate at (spec.R, spec.spacing) plus the geometric tail beyond spec.R."""
    if spec.value is not None:
        return float(spec.value), {"source": "config"}
    if box is None:
        box = estimate_gamma_p(V, p, HalfPlaneGrid(spec.R, spec.R, spec.spacing), GammaOptions(starts=("polar",)))
    info = {"box": box.estimate, "R": spec.R, "spacing": spec.spacing}
    if not spec.tail_R:
        return box.estimate, info
    study = run_gamma_study(V, p, [], [], spec.tail_spacing, spec.tail_R)
    tail = study.tail
    k = list(map(float, spec.tail_R)).index(float(spec.R)) if float(spec.R) in map(float, spec.tail_R) else 0
    correction = (tail["extrapolated"] - tail["gamma"][k]) if tail.get("extrapolated") is not None else 0.0
    info.update(tail=tail, correction=correction)
    return box.estimate + correction, info


# ----------------------------------------------------------------------------- ε-sweep


def build_pair(cfg: SweepConfig, grid: RectDomainGrid, W: DoubleWell, V: DoubleWell) -> LimitPair:
    spec = dict(cfg.pair)
    kind = spec.pop("kind", "config")
    if kind == "standard":
        return LimitPair.standard(grid, W, V, spec.get("x0"))
    return LimitPair.from_config(grid, W, V, spec)


def minimize_F(u0: Field, p, eps: float, W: DoubleWell, V: DoubleWell, opts: MinimizerOptions, m: float):
    """L-BFGS-B on F_ε with box constraints [−m, m]: projected quasi-Newton, truncation at every step."""
    g = u0.grid

    def fun(x):
        e, gr = full_energy_and_grad(x.reshape(g.shape), g, p, eps, W, V, m=m)
        return e, gr.ravel()

    x = np.clip(u0.values.ravel(), -m, m)
    iters, res = 0, None
    for _ in range(opts.restarts + 1):
        res = minimize(fun, x, jac=True, method="L-BFGS-B", bounds=[(-m, m)] * x.size,
                       options={"maxiter": opts.maxiter, "maxcor": opts.maxcor, "ftol": opts.tol, "gtol": 1e-10})
        iters += int(res.nit)
        x = res.x
    return Field(g, x.reshape(g.shape)), iters, str(res.message)


def _sweep_one(cfg: SweepConfig, eps: float, labels_fn, psi: Field, W, V):
    p = cfg.exponent
    grid = cfg.grid_for(eps)
    pair = labels_fn(grid)
    r = eps**cfg.r_exponent
    m = default_truncation(W, V).m
    rec = assemble_global_recovery(pair, eps, p, psi, r=r, b=cfg.b, m=m)
    start = full_energy_F(rec.field, p, eps, W, V, m=m)
    status, message = "ok", ""
    try:
        best, iters, message = minimize_F(rec.field, p, eps, W, V, cfg.minimizer, m)
        mini = full_energy_F(best, p, eps, W, V, m=m)
        if not np.isfinite(mini.total):
            status, message = "failed", "non-finite energy"
        elif mini.total > start.total * (1 + 1e-12):
            status, message = "failed", "descent raised the energy above the warm start"
    except (FloatingPointError, ValueError, np.linalg.LinAlgError) as e:
        best, iters, mini = rec.field, 0, start
        status, message = "failed", f"minimizer error: {e}"
    entry = EpsEntry(
        eps=eps, spacing=grid.spacing, r=r, rho=rec.rho, status=status, message=message, iterations=iters,
        recovery=start.to_json(), minimized=mini.to_json(),
        regions={k: v["total"] for k, v in rec.energy.items() if k != "total"},
    )
    return entry, {"recovery": rec.field, "minimized": best}


class _Labeler:
    """Rebuilds the Φ-optimal pair on each ε's grid (picklable for worker processes)."""

    def __init__(self, cfg, W, V, consts):
        self.cfg, self.W, self.V, self.consts = cfg, W, V, consts

    def __call__(self, grid):
        pair = build_pair(self.cfg, grid, self.W, self.V)
        return minimize_phi_over_v(pair, self.consts)[0]


def _sweep_task(args):
    return _sweep_one(*args)


def run_eps_sweep(cfg: SweepConfig, pair_factory=None, psi: Field | None = None) -> RunRecord:
    """For each ε: assemble the recovery field for (u, v*), then minimize F_ε from it."""
    t0 = time.time()
    p = cfg.exponent
    W, V = cfg.W.build(), cfg.V.build()
    spec = cfg.gamma
    if psi is None:
        box = estimate_gamma_p(V, p, HalfPlaneGrid(spec.R, spec.R, spec.spacing), GammaOptions(starts=("polar",)))
        psi = box.minimizer
    else:
        box = None
    if spec.value is None and box is None:
        raise ConfigError("a supplied ψ needs gamma.value")
    gamma, ginfo = tail_corrected_gamma(V, p, spec, box)
    consts = LimitConstants.compute(W, p, gamma)
    labeler = pair_factory or _Labeler(cfg, W, V, consts)
    ref_grid = cfg.grid_for(cfg.eps[-1])
    ref_pair = labeler(ref_grid)
    phi = phi_energy(ref_pair, consts)
    phi_info = dict(phi.to_json(), gamma_p=gamma, sigma_p=consts.sigma_p, c_p=consts.c_p,
                    jumps=int(len(ref_pair.jump_indices())), gamma_info=ginfo)
    tasks = [(cfg, e, labeler, psi, W, V) for e in cfg.eps]
    workers = min(worker_count(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]
    config = cfg.to_json()
    config.pop("out", None)  # where results land is not part of the run
    rec = RunRecord(config, phi_info, [r[0] for r in results])
    rec.fields = {e.eps: f for e, (_, f) in zip(rec.entries, results)}
    rec.timestamps = {"started": t0, "finished": time.time()}
    return rec


# ----------------------------------------------------------------------------- recovery studies


def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def run_bulk_study(cfg: SweepConfig) -> list[dict]:
    """G_ε of the bulk recovery field for the configured pair, against σ_p·|Su|, per ε on the sweep grids."""
    p = cfg.exponent
    W, V = cfg.W.build(), cfg.V.build()
    sigma = constant_sigma_p(p, W)
    rows = []
    for eps in cfg.eps:
        grid = cfg.grid_for(eps)
        pair = build_pair(cfg, grid, W, V)
        length = pair.interface_length()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # thick layers at large ε are expected here
            u = build_bulk_recovery(pair, eps, p)
        G = bulk_energy_G(u, p, eps, W).total
        ref = sigma * length
        rows.append({"eps": eps, "spacing": grid.spacing, "G": G, "reference": ref,
                     "ratio": G / ref if ref else float("nan")})
    return rows


def run_wall_study(p, W: DoubleWell, eps_list, cells: int = 512, bulk_value: float | None = None,
                   boundary_value: float | None = None) -> list[dict]:
    """G_ε of the boundary-wall recovery on the unit square against c_p|𝒲(α) − 𝒲(β′)|·perimeter."""
    p = as_p(p)
    a, b = W.wells
    alpha = a if bulk_value is None else bulk_value
    beta = b if boundary_value is None else boundary_value
    grid = RectDomainGrid(1.0, 1.0, 1.0 / cells)
    ref = constant_c_p(p) * abs(float(antiderivative_W(W, p, alpha)) - float(antiderivative_W(W, p, beta))) * grid.perimeter
    rows = []
    for eps in eps_list:
        u = build_wall_recovery(alpha, beta, eps, p, grid, W)
        G = bulk_energy_G(u, p, eps, W).total
        rows.append({"eps": eps, "cells": cells, "thickness": u.meta["thickness"], "G": G,
                     "reference": ref, "ratio": G / ref if ref else float("nan")})
    return rows


BOUNDARY_TERMS = ("ubar_annulus", "cutoff_bound", "bulk_bound")


def run_boundary_terms_study(V: DoubleWell, p, eps_list, W: DoubleWell | None = None, R: float = 32.0,
                             spacing: float = 0.5, psi: Field | None = None) -> dict:
    """Error terms of the boundary patch per ε and their log-log slopes against the predictions.

    ψ must cover the blown-up disk ρ/√ε at the smallest ε.
    """
    p = as_p(p)
    if psi is None:
        psi = estimate_gamma_p(V, p, HalfPlaneGrid(R, R, spacing),
                               GammaOptions(starts=("polar",), coarsest=max(spacing, 0.25))).minimizer
    m = default_truncation(W or V, V).m
    rows = []
    for eps in eps_list:
        rec = build_boundary_recovery(psi, eps, p, V, W=W, m=m)
        rows.append({"eps": eps, "rho": rec.rho, "sigma": rec.sigma, "energy": rec.energy,
                     **{k: float(v) for k, v in rec.terms.items()}})
    eps = np.array([r["eps"] for r in rows])
    slopes = {k: _loglog_slope(eps, [r[k] for r in rows]) for k in BOUNDARY_TERMS} if len(rows) > 1 else {}
    return {"rows": rows, "slopes": slopes, "predicted": predicted_slopes(p), "psi_box": [psi.grid.R, psi.grid.spacing]}


# ----------------------------------------------------------------------------- invariant suite


@dataclass
class CheckResult:
    name: str
    trials: int
    violations: int
    worst: float
    reproducer: dict | None = None

    @property
    def passed(self) -> bool:
        return self.violations == 0


@dataclass
class SuiteReport:
    seed: int
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def first_counterexample(self):
        for c in self.checks:
            if not c.passed:
                return c
        return None

    def to_json(self) -> dict:
        return {"seed": self.seed, "passed": self.passed,
                "checks": [dict(asdict(c), passed=c.passed) for c in self.checks]}


def random_field(grid, rng) -> np.ndarray:
    """Noise plus smooth bumps, sometimes overshooting the wells so truncation has work to do."""
    shape = grid.shape
    u = rng.normal(scale=rng.uniform(0.1, 1.5), size=shape)
    if len(shape) == 2:
        X, Y = grid.mesh()
        for _ in range(3):
            kx, ky = rng.uniform(1, 8, 2)
            u += rng.normal() * np.sin(kx * X + rng.uniform(0, 6)) * np.cos(ky * Y + rng.uniform(0, 6))
    return u


def _record(name, margins, fields_):
    """margins[i] < 0 is a violation of size −margins[i]."""
    margins = np.asarray(margins, float)
    bad = np.flatnonzero(margins < 0)
    repro = None
    if bad.size:
        k = int(bad[np.argmin(margins[bad])])
        repro = {"index": k, "values": np.asarray(fields_[k]).tolist()}
    worst = float(-margins.min()) if margins.size and margins.min() < 0 else 0.0
    return CheckResult(name, int(margins.size), int(bad.size), worst, repro)


def check_young(rng, n_fields: int = 100, eps_list=None, cells: int = 16, p: float = 2.5, W=None) -> CheckResult:
    W = W or DoubleWell(-1.0, 1.0)
    eps_list = eps_list if eps_list is not None else list(np.geomspace(1e-4, 1.0, 8))
    grid = RectDomainGrid(1.0, 1.0, 1.0 / cells)
    margins, fs = [], []
    for _ in range(n_fields):
        u = Field(grid, random_field(grid, rng))
        lb = modica_lower_bound(u, p, W)
        for eps in eps_list:
            G = bulk_energy_G(u, p, eps, W).total
            margins.append(G - lb * (1 - 1e-12))
            fs.append(u.values)
    return _record("young_bound", margins, fs)


def check_truncation(rng, n_fields: int = 100, cells: int = 16, p: float = 2.5, W=None, V=None) -> CheckResult:
    W = W or DoubleWell(-1.0, 1.0)
    V = V or DoubleWell(-1.0, 1.0, 0.25)
    grid = RectDomainGrid(1.0, 1.0, 1.0 / cells)
    m = default_truncation(W, V)
    margins, fs = [], []
    for _ in range(n_fields):
        u = Field(grid, random_field(grid, rng))
        eps = float(10 ** rng.uniform(-4, 0))
        before = full_energy_F(u, p, eps, W, V)
        after = full_energy_F(truncate_field(u, m), p, eps, W, V)
        margins.append(min(before.grad - after.grad, before.bulk - after.bulk, before.boundary - after.boundary))
        fs.append(u.values)
    return _record("truncation", margins, fs)


def check_rearrangement(rng, n_fields: int = 100, cells: int = 16, p: float = 2.5) -> CheckResult:
    grid = HalfPlaneGrid(1.0, 1.0, 1.0 / cells)
    margins, fs = [], []
    for _ in range(n_fields):
        u = Field(grid, random_field(grid, rng))
        margins.append(gradient_energy(u, p) * (1 + 1e-12) - gradient_energy(monotone_rearrange_x1(u), p))
        fs.append(u.values)
    return _record("rearrangement", margins, fs)


def check_scaling(rng, n_fields: int = 20, p: float = 2.5, rtol: float = 0.01) -> CheckResult:
    """H_ε(u(·/√ε)) = H_1(u): the rescaled field is resampled onto an unrelated lattice."""
    V = DoubleWell(-1.0, 1.0, 0.25)
    src = HalfPlaneGrid(2.0, 2.0, 1 / 32, lateral_pad=False)
    sub = HalfPlaneGrid(1.0, 1.0, 1 / 32, lateral_pad=False)
    X, Y = src.mesh()
    margins, fs = [], []
    for i in range(n_fields):
        eps = (0.25, 1 / 9, 1 / 16)[i % 3]
        k = math.sqrt(eps)
        u = np.zeros(src.shape)
        for _ in range(3):
            kx, ky = rng.uniform(0.3, 1.5, 2)
            u += rng.normal() * np.cos(kx * X + rng.uniform(0, 6)) * np.cos(ky * Y + rng.uniform(0, 6))
        tgt = HalfPlaneGrid(k, k, k / 48, lateral_pad=False)
        v = rescale_field(Field(src, u), eps, tgt, resample=True)
        lhs = halfplane_energy_H(v, p, eps, V).total
        rhs = halfplane_energy_H(Field(sub, u[:33, 32:97]), p, 1.0, V).total
        margins.append(rtol - abs(lhs - rhs) / abs(rhs))
        fs.append(u)
    return _record("scaling", margins, fs)


def check_slicing(rng, n_fields: int = 20, nodes: int = 32, p: float = 2.5) -> CheckResult:
    V = DoubleWell(-1.0, 1.0, 0.25)
    g = HalfBoxGrid3D((nodes, nodes, nodes), 1.0 / (nodes - 1))
    margins, fs = [], []
    for _ in range(n_fields):
        u = Field(g, random_field(g, rng))
        eps = float(10 ** rng.uniform(-3, 0))
        lhs, rhs = slice_lower_bound(u, p, eps, V)
        margins.append(lhs - rhs * (1 - 1e-13))
        fs.append(u.values)
    return _record("slicing", margins, fs)


def run_property_suite(seed: int = 42, sizes=(16,), n_fields: int = 100, n_scaling: int = 20,
                       n_slicing: int = 20, slicing_nodes: int = 32) -> SuiteReport:
    """Randomized invariant checks per grid size; an empty size list passes vacuously."""
    rng = np.random.default_rng(seed)
    checks = []
    for cells in sizes:
        checks += [
            check_truncation(rng, n_fields, cells),
            check_young(rng, n_fields, cells=cells),
            check_rearrangement(rng, n_fields, cells),
        ]
    if sizes:
        checks += [check_scaling(rng, n_scaling), check_slicing(rng, n_slicing, slicing_nodes)]
    return SuiteReport(seed, checks)


# ----------------------------------------------------------------------------- reports


CSV_COLUMNS = ("eps", "grad", "bulk", "boundary", "total", "phi_ref", "ratio", "status")


def _csv_rows(record: RunRecord, which: str):
    phi = record.phi.get("total")
    for e in record.entries:
        b = getattr(e, which)
        ratio = b["total"] / phi if phi else float("nan")
        yield [repr(e.eps), repr(b["grad"]), repr(b["bulk"]), repr(b["boundary"]), repr(b["total"]),
               repr(phi), repr(ratio), e.status]


def emit_report(record: RunRecord, out_dir, formats=("csv", "json"), write_fields: bool = True) -> list[Path]:
    """minimized.csv / recovery.csv (one row per ε), summary.json, fields/*.csv and timing.json.

    All files except timing.json are byte-deterministic for a fixed record.
    """
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            for which in ("minimized", "recovery"):
                path = out / f"{which}.csv"
                with path.open("w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(CSV_COLUMNS)
                    w.writerows(_csv_rows(record, which))
                written.append(path)
        if "json" in formats:
            path = out / "summary.json"
            path.write_text(json.dumps(record.to_json(), indent=1, sort_keys=True) + "\n")
            written.append(path)
        if write_fields and record.fields:
            for k, e in enumerate(record.entries):
                for which, f in record.fields.get(e.eps, {}).items():
                    written.append(write_field_csv(f, out / "fields" / f"eps{k}_{which}.csv"))
            _spot_check(record, out)
        if record.timestamps:
            path = out / "timing.json"
            path.write_text(json.dumps(record.timestamps, indent=1, sort_keys=True) + "\n")
            written.append(path)
    except OSError as e:
        raise OSError(f"could not write report under {out}: {e}") from e
    return written


def _spot_check(record: RunRecord, out: Path):
    """Re-evaluate the first stored minimizer from its CSV against the recorded total."""
    e = record.entries[0]
    f = record.fields[e.eps]["minimized"]
    back = read_field_csv(out / "fields" / "eps0_minimized.csv", f.grid)
    cfg = record.config
    W = PotentialSpec(**cfg["W"]).build()
    V = PotentialSpec(**cfg["V"]).build()
    p = PExponent(cfg["p"], cross_check=True) if cfg.get("cross_check") else cfg["p"]
    total = full_energy_F(back, p, e.eps, W, V, m=default_truncation(W, V).m).total
    if not math.isclose(total, e.minimized["total"], rel_tol=1e-12, abs_tol=1e-14):
        raise RuntimeError(f"stored field re-evaluates to {total!r}, record says {e.minimized['total']!r}")


def write_config_echo(cfg: SweepConfig, out_dir) -> Path:
    path = Path(out_dir) / "config_echo.yaml"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.to_json(), sort_keys=True))
    return path
