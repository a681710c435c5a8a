"""Command-line entry point: `gammalab {profile,gamma,sweep,recovery,suite,report}`.

Exit codes: 0 success, 1 failed check / counterexample / infeasible run, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .experiments import (
    ConfigError,
    PotentialSpec,
    RunRecord,
    SweepConfig,
    build_pair,
    emit_report,
    run_eps_sweep,
    run_gamma_study,
    run_property_suite,
    run_sigma_table,
    tail_corrected_gamma,
    write_config_echo,
)
from .geometry import HalfPlaneGrid, write_field_csv
from .limit import InfeasibleRecovery, LimitConstants, assemble_global_recovery, build_boundary_recovery, minimize_phi_over_v
from .potentials import PExponent, default_truncation
from .profiles import GammaOptions, estimate_gamma_p

log = logging.getLogger("gammalab")

SUBCOMMANDS = ("profile", "gamma", "sweep", "recovery", "suite", "report")


@dataclass
class ProfileConfig:
    p_list: list = field(default_factory=lambda: [2.25, 2.5, 2.75])
    W: PotentialSpec = field(default_factory=PotentialSpec)
    cross_check: bool = False
    tol: float = 1e-6


@dataclass
class GammaStudyConfig:
    p: float = 2.5
    V: PotentialSpec = field(default_factory=PotentialSpec)
    R_list: list = field(default_factory=lambda: [8.0])
    spacings: list = field(default_factory=lambda: [0.25, 0.125])
    tail_R: list = field(default_factory=lambda: [8.0, 16.0, 32.0, 64.0])
    tail_spacing: float = 0.5
    starts: list = field(default_factory=lambda: ["polar", "step", "random", "random", "random"])
    seed: int = 0
    cross_check: bool = False


@dataclass
class SuiteConfig:
    seed: int = 42
    sizes: list = field(default_factory=lambda: [16])
    n_fields: int = 100
    n_scaling: int = 20
    n_slicing: int = 20
    slicing_nodes: int = 32


@dataclass
class CliConfig:
    subcommand: str
    config: Path | None
    overrides: dict
    verbosity: int = 0


def _build(cls, data: dict):
    """Dataclass from a mapping, rejecting unknown keys and nesting PotentialSpec."""
    data = dict(data or {})
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    for key in ("W", "V"):
        if key in data and isinstance(data[key], dict):
            bad = set(data[key]) - {f.name for f in fields(PotentialSpec)}
            if bad:
                raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
            data[key] = PotentialSpec(**data[key])
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def _check_p(p: float, cross_check: bool):
    if not (2 < p < 3) and not (cross_check and 2 <= p <= 3):
        raise ConfigError(f"p = {p} outside (2, 3); use --cross-check for the endpoints")


def _exponent(p: float, cross_check: bool):
    return PExponent(p, cross_check=True) if cross_check else p


def parse_config(sub: str, path: Path | None, overrides: dict):
    """Validated config object for `sub` from the file plus CLI overrides."""
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except FileNotFoundError as e:
            raise ConfigError(f"configuration file not found: {path}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a key-value mapping")
    ov = {k: v for k, v in overrides.items() if v is not None}
    if sub == "profile":
        if "p" in ov:
            data["p_list"] = [ov["p"]]
        if ov.get("cross_check"):
            data["cross_check"] = True
        cfg = _build(ProfileConfig, data)
        for p in cfg.p_list:
            _check_p(float(p), cfg.cross_check)
        return cfg
    if sub == "gamma":
        for k in ("p", "seed"):
            if k in ov:
                data[k] = ov[k]
        if "grid" in ov:
            data["spacings"] = [1.0 / ov["grid"]]
        if ov.get("cross_check"):
            data["cross_check"] = True
        cfg = _build(GammaStudyConfig, data)
        _check_p(float(cfg.p), cfg.cross_check)
        return cfg
    if sub == "suite":
        if "seed" in ov:
            data["seed"] = ov["seed"]
        if "grid" in ov:
            data["sizes"] = [ov["grid"]]
        return _build(SuiteConfig, data)
    if sub in ("sweep", "recovery"):
        for k in ("p", "seed"):
            if k in ov:
                data[k] = ov[k]
        if "eps" in ov:
            data["eps"] = list(ov["eps"])
        if "grid" in ov:
            data["max_cells"] = data["min_cells"] = int(ov["grid"])
        if ov.get("cross_check"):
            data["cross_check"] = True
        if "out" in ov:
            data["out"] = str(ov["out"])
        return SweepConfig.from_dict(data)
    if sub == "report":
        if path is None:
            raise ConfigError("report needs --config pointing at a summary.json")
        return data
    raise ConfigError(f"unknown subcommand {sub!r}")


def write_rows(path: Path, rows: list[dict]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if not rows:
            fh.write("")
            return
        names = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(fh, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=float) + "\n")


def _echo(out: Path, cfg):
    out.mkdir(parents=True, exist_ok=True)
    d = cfg.to_json() if hasattr(cfg, "to_json") else asdict(cfg)
    (out / "config_echo.yaml").write_text(yaml.safe_dump(json.loads(json.dumps(d)), sort_keys=True))


def cmd_profile(cfg: ProfileConfig, out: Path) -> int:
    W = cfg.W.build()
    rows, ok = run_sigma_table([float(p) for p in cfg.p_list], W, cfg.tol)
    _echo(out, cfg)
    write_rows(out / "sigma_table.csv", rows)
    write_json(out / "summary.json", {"rows": rows, "ok": ok})
    for r in rows:
        print(f"p={r['p']:.4g}  c_p={r['c_p']:.12g}  sigma_p={r['sigma_p']:.12g}  profile={r['profile_energy']:.12g}")
    return 0 if ok else 1


def cmd_gamma(cfg: GammaStudyConfig, out: Path) -> int:
    V = cfg.V.build()
    opts = GammaOptions(seed=cfg.seed, starts=tuple(cfg.starts))
    study = run_gamma_study(V, _exponent(cfg.p, cfg.cross_check), cfg.R_list, cfg.spacings,
                            cfg.tail_spacing, cfg.tail_R, opts)
    _echo(out, cfg)
    write_rows(out / "gamma_cells.csv", [{k: v for k, v in c.items() if k != "starts"} for c in study.cells])
    write_json(out / "summary.json", study.to_json())
    for c in study.cells:
        print(f"R={c['R']:g} spacing={c['spacing']:g} gamma={c['estimate']:.10g} converged={c['converged']}")
    if study.tail.get("slope") is not None:
        print(f"tail slope {study.tail['slope']:.4f} (predicted {study.tail['predicted_slope']:.4f})")
    return 0 if all(study.columns_monotone.values()) else 1


def cmd_sweep(cfg: SweepConfig, out: Path) -> int:
    try:
        rec = run_eps_sweep(cfg)
    except InfeasibleRecovery as e:
        print(f"infeasible partition: {e}", file=sys.stderr)
        return 1
    write_config_echo(cfg, out)
    emit_report(rec, out)
    phi = rec.phi["total"]
    for e in rec.entries:
        ratio = e.minimized["total"] / phi if phi else float("nan")
        print(f"eps={e.eps:.4g}  recovery={e.recovery['total']:.6g}  minimized={e.minimized['total']:.6g}  "
              f"ratio={ratio:.4f}  {e.status}")
    return 0 if all(e.status == "ok" for e in rec.entries) else 1


def cmd_recovery(cfg: SweepConfig, out: Path) -> int:
    """Global recovery per ε (regions) and the boundary-patch error terms."""
    p = cfg.exponent
    W, V = cfg.W.build(), cfg.V.build()
    spec = cfg.gamma
    box = estimate_gamma_p(V, p, HalfPlaneGrid(spec.R, spec.R, spec.spacing), GammaOptions(starts=("polar",)))
    gamma, _ = tail_corrected_gamma(V, p, spec, box)
    consts = LimitConstants.compute(W, p, gamma)
    rows, terms = [], []
    for k, eps in enumerate(cfg.eps):
        grid = cfg.grid_for(eps)
        pair, _ = minimize_phi_over_v(build_pair(cfg, grid, W, V), consts)
        try:
            rec = assemble_global_recovery(pair, eps, p, box.minimizer, r=eps**cfg.r_exponent, b=cfg.b)
        except InfeasibleRecovery as e:
            print(f"infeasible partition at eps={eps:g}: {e}", file=sys.stderr)
            return 1
        row = {"eps": eps, "spacing": grid.spacing, "r": rec.r, "rho": rec.rho}
        row.update({f"{reg}_total": v["total"] for reg, v in rec.energy.items()})
        rows.append(row)
        write_field_csv(rec.field, out / "fields" / f"eps{k}_recovery.csv")
        br = build_boundary_recovery(box.minimizer, eps, p, V, W=W, m=default_truncation(W, V).m)
        terms.append({"eps": eps, **{k2: float(v) for k2, v in br.to_json().items() if k2 != "eps"}})
    _echo(out, cfg)
    write_rows(out / "recovery.csv", rows)
    write_rows(out / "boundary_terms.csv", terms)
    write_json(out / "summary.json", {"recovery": rows, "boundary_terms": terms, "gamma_p": gamma})
    for r in rows:
        print(f"eps={r['eps']:.4g}  total={r['total_total']:.6g}")
    return 0


def cmd_suite(cfg: SuiteConfig, out: Path) -> int:
    rep = run_property_suite(cfg.seed, tuple(cfg.sizes), cfg.n_fields, cfg.n_scaling, cfg.n_slicing, cfg.slicing_nodes)
    _echo(out, cfg)
    write_json(out / "summary.json", rep.to_json())
    for c in rep.checks:
        print(f"{c.name:14s} trials={c.trials:5d} violations={c.violations}")
    bad = rep.first_counterexample()
    if bad is not None:
        write_json(out / "counterexample.json", asdict(bad))
        print(f"counterexample in {bad.name}; reproducer written to {out / 'counterexample.json'}", file=sys.stderr)
        return 1
    return 0


def cmd_report(data: dict, out: Path) -> int:
    try:
        rec = RunRecord.from_json(data)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"not a run record: {e}") from e
    emit_report(rec, out, write_fields=False)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gammalab", description="Phase-field boundary line-tension experiments.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", type=Path, help="YAML configuration file")
    ap.add_argument("--p", type=float)
    ap.add_argument("--eps", type=float, nargs="+")
    ap.add_argument("--grid", type=int, help="cells per unit length")
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--cross-check", action="store_true", help="allow p = 2 or 3 for oracle comparisons")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:  # argparse reports usage errors with code 2
        return int(e.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    cli = CliConfig(args.subcommand, args.config, {
        "p": args.p, "eps": args.eps, "grid": args.grid, "seed": args.seed,
        "cross_check": args.cross_check or None, "out": args.out,
    }, args.verbose)
    try:
        if cli.overrides["grid"] is not None and cli.overrides["grid"] < 2:
            raise ConfigError("--grid needs at least 2 cells")
        cfg = parse_config(cli.subcommand, cli.config, cli.overrides)
        handler = {"profile": cmd_profile, "gamma": cmd_gamma, "sweep": cmd_sweep, "recovery": cmd_recovery,
                   "suite": cmd_suite, "report": cmd_report}[cli.subcommand]
        return handler(cfg, args.out)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
