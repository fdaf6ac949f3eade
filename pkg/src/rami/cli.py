"""``rami`` command line.

Exit codes: 0 ok, 1 check failure, 2 input error, 3 precondition error.
Reports are JSON with sorted keys and no timestamps, so a fixed config and
seed give byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, apply_overrides, read_config
from .harvest import HalfSpaceGrid, Logistic, ball_harvest_bound, harvest_balance, harvest_value, solve_state
from .irrigation import StructuralError, emit_tree_csv, irrigation_cost
from .measures import MeasureParseError, emit_measure, read_measure, support_radius, total_mass
from .optimize import (
    BranchProblem,
    RootProblem,
    branch_rescale,
    half_space_lattice,
    optimize_branches,
    optimize_roots,
    root_rescale,
)
from .sunlight import (
    ProjectionGrid,
    project_density,
    sunlight_bounds,
    sunlight_per_direction,
    thread_count,
    uniform_quadrature,
)

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_PRECONDITION = 0, 1, 2, 3


class InputError(ValueError):
    pass


def _clean(obj):
    """Plain Python types for json.dumps (numpy scalars and arrays included)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _dump(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _emit(report: dict, out: Path | None, files: dict[str, str]) -> None:
    text = _dump(report)
    sys.stdout.write(text)
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(text, encoding="utf-8")
    for name, content in files.items():
        (out / name).write_text(content, encoding="utf-8")


def _load_config(args) -> RunConfig:
    cfg = read_config(args.config) if getattr(args, "config", None) else RunConfig()
    apply_overrides(cfg, getattr(args, "set", None) or [])
    for dotted, value in getattr(args, "_flag_overrides", lambda: [])():
        cfg.set(dotted, str(value))
    return cfg


def _measure_file(args):
    if not args.measure:
        raise InputError("--measure is required")
    return read_measure(args.measure)


# --- commands -----------------------------------------------------------------------------


def cmd_irrigate(args) -> int:
    cfg = _load_config(args)
    mu = _measure_file(args)
    p = cfg.section("irrigation")
    bracket = irrigation_cost(mu, p["alpha"], budget=p["budget"], seed=cfg.seed(), restarts=p["restarts"])
    report = {"command": "irrigate", "seed": cfg.seed(), "atoms": len(mu), **bracket.summary()}
    _emit(report, args.out, {"tree.csv": emit_tree_csv(bracket.tree)})
    return EXIT_OK


def cmd_sunlight(args) -> int:
    cfg = _load_config(args)
    mu = _measure_file(args)
    p = cfg.section("sunlight")
    eta = p["eta"]
    quad = uniform_quadrature(mu.dim, p["nodes"], lambda n: eta)
    grid = ProjectionGrid.for_measure(mu, p["h"])
    per = sunlight_per_direction(mu, quad, grid)
    total = math.fsum(quad.weights * quad.eta * per)
    rows = [",".join([f"n{i + 1}" for i in range(mu.dim)] + ["weight", "eta", "sunlight"])]
    for n, w, e, s in zip(quad.nodes, quad.weights, quad.eta, per):
        rows.append(",".join(repr(float(v)) for v in (*n, w, e, s)))
    density = project_density(mu, quad.nodes[0], grid)
    report = {
        "command": "sunlight", "total": total, "per_direction": per, "bounds": sunlight_bounds(mu, quad, grid),
        "params": p, "total_mass": total_mass(mu), "support_radius": support_radius(mu),
    }
    _emit(report, args.out, {"directions.csv": "\n".join(rows) + "\n", "density.csv": density.to_csv()})
    return EXIT_OK


def cmd_harvest(args) -> int:
    cfg = _load_config(args)
    mu = _measure_file(args)
    p = cfg.section("harvest")
    f = Logistic(kappa=p["kappa"], M=p["M"])
    if p["L"] is None:
        grid = HalfSpaceGrid.for_measure(mu, p["h"])
    else:
        grid = HalfSpaceGrid(mu.dim, p["L"], p["h"])
    u = solve_state(mu, f, grid, sigma=p["sigma"], a=p["a"], b=p["b"], tol=p["tol"], max_iter=p["max_iter"])
    bal = harvest_balance(u, mu, f, sigma=p["sigma"], a=p["a"], b=p["b"])
    R = support_radius(mu)
    report = {
        "command": "harvest", "params": {**p, "L": grid.L}, "harvest": harvest_value(u, mu),
        "balance": {
            "growth_sum": bal.growth_sum, "growth_volume": bal.growth_volume,
            "boundary_flux": bal.boundary_flux, "residual": bal.residual,
        },
        "support_radius": R, "total_mass": total_mass(mu),
        "diagnostics": u.diagnostics,
    }
    if p["a"] == p["b"] == p["sigma"] == 1.0 and R > 0:
        report["ball_bound"] = ball_harvest_bound(R, f, mu.dim)
    _emit(report, args.out, {"state.csv": u.to_csv()})
    return EXIT_OK


def _branch_problem(cfg: RunConfig) -> BranchProblem:
    p = cfg.section("branches")
    eta = p["eta"]
    quad = uniform_quadrature(p["d"], p["nodes"], lambda n: eta)
    spacing = p["spacing"] if p["spacing"] is not None else p["h"]
    return BranchProblem(
        alpha=p["alpha"], c=p["c"], quad=quad, h=p["h"],
        lattice=half_space_lattice(p["d"], spacing, p["radius"], side=1), spacing=spacing,
        mass_quantum=p["mass_quantum"], budget=p["budget"], seed=cfg.seed(),
        tree_budget=p["tree_budget"], tree_restarts=p["tree_restarts"],
        require_halfcircle_regime=p["require_halfcircle"], halfcircle_beta=p["halfcircle_beta"],
        n_arcs=p["n_arcs"], structural_interval=p["structural_interval"], mode=p["mode"],
        temperature=p["temperature"], cooling=p["cooling"],
    )


def _root_problem(cfg: RunConfig) -> RootProblem:
    p = cfg.section("roots")
    spacing = p["spacing"] if p["spacing"] is not None else p["h"]
    return RootProblem(
        alpha=p["alpha"], c=p["c"], f=Logistic(kappa=p["kappa"], M=p["M"]),
        grid=HalfSpaceGrid(p["d"], p["L"], p["h"]),
        lattice=half_space_lattice(p["d"], spacing, p["radius"], side=-1),
        a=p["a"], b=p["b"], sigma=p["sigma"], spacing=spacing,
        mass_quantum=p["mass_quantum"], budget=p["budget"], seed=cfg.seed(),
        tree_budget=p["tree_budget"], tree_restarts=p["tree_restarts"],
        structural_interval=p["structural_interval"], mode=p["mode"],
        temperature=p["temperature"], cooling=p["cooling"],
    )


def cmd_optimize(args) -> int:
    cfg = _load_config(args)
    if args.problem == "branches":
        prob = _branch_problem(cfg)
        mu, report, trace = optimize_branches(prob)
        files = {}
    else:
        prob = _root_problem(cfg)
        mu, u, report, trace = optimize_roots(prob)
        files = {"state.csv": u.to_csv()}
    files["measure.csv"] = emit_measure(mu)
    tree = report.bracket.tree if report.bracket is not None else None
    if tree is not None:
        files["tree.csv"] = emit_tree_csv(tree)
    out = {
        "command": f"optimize {args.problem}", "params": prob.describe(),
        "atoms": len(mu), "trace": trace, **report.to_dict(),
    }
    _emit(out, args.out, files)
    return EXIT_OK


def cmd_rescale(args) -> int:
    if args.problem == "roots":
        lam, c_tilde, factor = root_rescale(args.a, args.b, args.sigma, args.c, args.alpha, args.d)
        report = {"lambda": lam, "c_tilde": c_tilde, "payoff_factor": factor}
    else:
        lam, factor = branch_rescale(args.b, args.c, args.alpha, args.d)
        report = {"lambda": lam, "c_tilde": 1.0, "payoff_factor": factor}
    report.update(command=f"rescale {args.problem}", alpha=args.alpha, d=args.d)
    _emit(report, None, {})
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import SUITES, format_table, run_suite

    if args.suite != "all" and args.suite not in SUITES:
        raise InputError(f"unknown suite {args.suite!r}; choose from all, {', '.join(sorted(SUITES))}")
    results = run_suite(args.suite)
    sys.stdout.write(format_table(results) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


# --- argument parsing --------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, *, measure: bool) -> None:
    p.add_argument("--config", type=Path, help="key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
    p.add_argument("--out", type=Path, help="directory for report.json and CSV artifacts")
    if measure:
        p.add_argument("--measure", type=Path, help="measure CSV (x1..xd,m)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rami", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("irrigate", help="bracket the irrigation cost of a measure")
    _common(p, measure=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--budget", type=int)
    p.set_defaults(func=cmd_irrigate, section="irrigation", flags=["alpha", "budget"])

    p = sub.add_parser("sunlight", help="sunlight functional of a measure")
    _common(p, measure=True)
    p.add_argument("--h", type=float)
    p.add_argument("--nodes", type=int)
    p.add_argument("--eta", type=float)
    p.set_defaults(func=cmd_sunlight, section="sunlight", flags=["h", "nodes", "eta"])

    p = sub.add_parser("harvest", help="solve the state equation and report the harvest")
    _common(p, measure=True)
    for name in ("L", "h", "kappa", "M", "sigma", "a", "b"):
        p.add_argument(f"--{name}", type=float)
    p.set_defaults(func=cmd_harvest, section="harvest", flags=["L", "h", "kappa", "M", "sigma", "a", "b"])

    p = sub.add_parser("optimize", help="search for a payoff-maximizing measure")
    p.add_argument("problem", choices=["branches", "roots"])
    _common(p, measure=False)
    p.add_argument("--budget", type=int)
    p.set_defaults(func=cmd_optimize, section=None, flags=[])

    p = sub.add_parser("rescale", help="print the normalizing rescale")
    p.add_argument("problem", choices=["branches", "roots"])
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--d", type=int, default=2)
    p.set_defaults(func=cmd_rescale, section=None, flags=[])

    p = sub.add_parser("verify", help="run invariant checks")
    p.add_argument("--suite", default="all")
    p.set_defaults(func=cmd_verify, section=None, flags=[])
    return parser


def _prepare(args) -> None:
    overrides = []
    if args.section is not None:
        overrides += [(f"{args.section}.{n}", getattr(args, n)) for n in args.flags if getattr(args, n) is not None]
    if args.command == "optimize" and args.budget is not None:
        overrides.append((f"{args.problem}.budget", args.budget))
    if getattr(args, "seed", None) is not None:
        overrides.append(("run.seed", args.seed))
    args._flag_overrides = lambda: overrides


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _prepare(args)
    try:
        thread_count()
    except ValueError as exc:
        print(f"rami: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (ConfigError, InputError, MeasureParseError, StructuralError, OSError) as exc:
        print(f"rami: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, RuntimeError) as exc:
        print(f"rami: precondition error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
