"""Deterministic invariant checks, grouped into suites for ``rami verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import harvest as hv
from . import irrigation as ir
from . import measures as ms
from . import optimize as op
from . import sunlight as sl


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str


def _random_tree(rng, d: int, n: int) -> ir.FlowTree:
    pos = np.vstack([np.zeros(d), rng.normal(size=(n, d))])
    parent = np.array([-1] + [int(rng.integers(0, k)) for k in range(1, n + 1)])
    return ir.FlowTree(pos, parent, np.r_[0.0, rng.uniform(0.05, 2.0, n)])


def _random_measure(rng, d: int, n: int, radius: float = 1.0, side: int = 0) -> ms.DiscreteMeasure:
    pos = rng.uniform(-radius, radius, (n, d))
    if side:
        pos[:, -1] = side * np.abs(pos[:, -1])
    return ms.DiscreteMeasure(pos, rng.uniform(0.05, 1.0, n))


def _root_measure(rng, n: int, step: float = 0.1) -> ms.DiscreteMeasure:
    pos = np.round(rng.uniform(-1, 1, (n, 2)) / step) * step
    pos[:, -1] = -np.maximum(np.abs(pos[:, -1]), step)
    return ms.DiscreteMeasure(pos, rng.uniform(0.1, 1.0, n))


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


# --- measures -------------------------------------------------------------------------


def check_partition():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        mu = _random_measure(rng, 3, 20)
        inside, outside = ms.split(mu, ms.RegionSpec.ball(float(rng.uniform(0.2, 1.5))))
        worst = max(worst, abs(ms.total_mass(inside) + ms.total_mass(outside) - ms.total_mass(mu)))
    return worst <= 1e-13, f"max mass defect {worst:.2e}"


def check_tail_monotone():
    rng = np.random.default_rng(2)
    mu = _random_measure(rng, 2, 30)
    r = np.sort(np.r_[mu.radii, np.linspace(0.01, 2, 50)])
    tails = [ms.tail_mass(mu, x) for x in r]
    ok = all(b <= a for a, b in zip(tails, tails[1:]))
    return ok, f"{len(r)} radii"


def check_dilate_scale_commute():
    rng = np.random.default_rng(3)
    mu = _random_measure(rng, 3, 10)
    a = ms.dilate(ms.scale_mass(mu, 2.5), 0.3)
    b = ms.scale_mass(ms.dilate(mu, 0.3), 2.5)
    return a == b, "dilate(scale) == scale(dilate)"


def check_measure_roundtrip():
    rng = np.random.default_rng(4)
    mu = _random_measure(rng, 3, 12)
    back = ms.parse_measure(ms.emit_measure(mu))
    return back == mu, "parse(emit(mu)) == mu"


# --- irrigation -------------------------------------------------------------------------


def check_mass_scaling():
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in range(40):
        tree = _random_tree(rng, 2 + k % 2, int(rng.integers(2, 12)))
        alpha, lam = float(rng.uniform(0.3, 1.0)), float(rng.uniform(0.2, 5.0))
        worst = max(worst, _rel(ir.gilbert_energy(tree.scaled(lam, 1.0), alpha),
                                lam**alpha * ir.gilbert_energy(tree, alpha)))
    return worst <= 1e-12, f"max rel error {worst:.2e}"


def check_dilation_scaling():
    rng = np.random.default_rng(6)
    worst = 0.0
    for k in range(40):
        tree = _random_tree(rng, 2 + k % 2, int(rng.integers(2, 12)))
        alpha, lam = float(rng.uniform(0.3, 1.0)), float(rng.uniform(0.2, 5.0))
        worst = max(worst, _rel(ir.gilbert_energy(tree.scaled(1.0, lam), alpha),
                                lam * ir.gilbert_energy(tree, alpha)))
    return worst <= 1e-12, f"max rel error {worst:.2e}"


def check_bracket():
    rng = np.random.default_rng(7)
    worst = -math.inf
    for k in range(20):
        mu = _random_measure(rng, 2 + k % 2, int(rng.integers(3, 10)))
        alpha = float(rng.choice([0.6, 0.75, 0.9, 1.0]))
        b = ir.irrigation_cost(mu, alpha, budget=100)
        worst = max(worst, b.lower - b.upper)
    return worst <= 1e-12, f"max lower - upper {worst:.2e}"


def check_heuristic_improves_star():
    rng = np.random.default_rng(8)
    worst = -math.inf
    for _ in range(15):
        mu = _random_measure(rng, 2, 8)
        star = ir.gilbert_energy(ir.star_plan(mu), 0.7)
        worst = max(worst, ir.gilbert_energy(ir.optimize_tree(mu, 0.7, budget=100), 0.7) - star)
    return worst <= 1e-12, f"max energy increase over star {worst:.2e}"


def check_alpha_monotone():
    rng = np.random.default_rng(9)
    ok = True
    for big in (True, False):
        tree = _random_tree(rng, 2, 8)
        masses = tree.node_mass * (10.0 if big else 0.01)
        masses[0] = 0.0
        tree = ir.FlowTree(tree.positions, tree.parent, masses)
        energies = [ir.gilbert_energy(tree, a) for a in np.linspace(0.1, 1.0, 10)]
        steps = np.diff(energies)
        ok &= bool(np.all(steps >= -1e-12) if big else np.all(steps <= 1e-12))
    return ok, "fluxes >= 1 nondecreasing, <= 1 nonincreasing"


def check_subadditivity():
    rng = np.random.default_rng(10)
    worst = -math.inf
    for _ in range(10):
        a, b = _random_measure(rng, 2, 4), _random_measure(rng, 2, 4)
        ta, tb = ir.optimize_tree(a, 0.7, budget=60), ir.optimize_tree(b, 0.7, budget=60)
        union = ir.union_at_root(ta, tb)
        if union.measure() != a + b:
            return False, "union does not carry a + b"
        parts = ir.gilbert_energy(ta, 0.7) + ir.gilbert_energy(tb, 0.7)
        joint = ir.gilbert_energy(ir.optimize_tree(a + b, 0.7, budget=60, init=union), 0.7)
        worst = max(worst, ir.gilbert_energy(union, 0.7) - parts, joint - parts)
    return worst <= 1e-12, f"max excess over upper(a) + upper(b) {worst:.2e}"


# --- sunlight ----------------------------------------------------------------------------


def _sun_setup(d: int):
    return sl.uniform_quadrature(d, 12 if d == 2 else 24)


def check_sunlight_mass_bound():
    rng = np.random.default_rng(11)
    worst = -math.inf
    for k in range(20):
        d = 2 + k % 2
        mu = _random_measure(rng, d, int(rng.integers(1, 15)))
        quad = _sun_setup(d)
        grid = sl.ProjectionGrid.for_measure(mu, 0.05)
        bounds = sl.sunlight_bounds(mu, quad, grid)
        worst = max(worst, sl.sunlight_total(mu, quad, grid) - bounds["mass"])
    return worst <= 1e-12, f"max excess {worst:.2e}"


def check_sunlight_radius_bound():
    rng = np.random.default_rng(12)
    worst = -math.inf
    for k in range(20):
        d = 2 + k % 2
        mu = _random_measure(rng, d, 40)
        quad = _sun_setup(d)
        grid = sl.ProjectionGrid.for_measure(mu, 0.05)
        bounds = sl.sunlight_bounds(mu, quad, grid)
        S = sl.sunlight_total(mu, quad, grid)
        worst = max(worst, S - bounds["sphere_radius"], S - bounds["grid_radius"])
    return worst <= 1e-12, f"max excess {worst:.2e}"


def check_sunlight_monotone_concave():
    rng = np.random.default_rng(13)
    ok = True
    for k in range(20):
        d = 2 + k % 2
        mu = _random_measure(rng, d, 8)
        n = rng.normal(size=d)
        n /= np.linalg.norm(n)
        grid = sl.ProjectionGrid(0.1, 10.0, d - 1)
        base = sl.sunlight_direction(mu, n, grid)
        more = sl.sunlight_direction(mu + _random_measure(rng, d, 1), n, grid)
        double = sl.sunlight_direction(ms.scale_mass(mu, 2.0), n, grid)
        ok &= more >= base and double < 2 * base
    return ok, "adding mass increases, doubling less than doubles"


def check_sunlight_rescale():
    rng = np.random.default_rng(14)
    worst = 0.0
    for k in range(20):
        d = 2 + k % 2
        mu = _random_measure(rng, d, 10)
        quad = _sun_setup(d)
        grid = sl.ProjectionGrid(0.1, 3.0, d - 1)
        for lam in (0.5, 2.0):
            scaled = ms.scale_mass(ms.dilate(mu, lam), lam ** (d - 1))
            worst = max(worst, _rel(sl.sunlight_total(scaled, quad, grid.scaled(lam)),
                                    lam ** (d - 1) * sl.sunlight_total(mu, quad, grid)))
    return worst <= 1e-12, f"max rel error {worst:.2e}"


# --- harvest ----------------------------------------------------------------------------------

_F = hv.Logistic()
_GRID = hv.HalfSpaceGrid(2, 3.0, 0.1)


def check_state_range():
    rng = np.random.default_rng(15)
    ok = True
    for b in (0.5, 1.0, 2.0):
        u = hv.solve_state(_root_measure(rng, 6), _F, _GRID, b=b)
        ok &= bool(np.all(u.values >= 0) and np.all(u.values <= _F.M / b))
    return ok, "0 <= u <= M/b"


def check_state_comparison():
    rng = np.random.default_rng(16)
    worst = -math.inf
    for _ in range(4):
        mu = _root_measure(rng, 5)
        u = hv.solve_state(mu, _F, _GRID)
        v = hv.solve_state(mu + _root_measure(rng, 3), _F, _GRID)
        worst = max(worst, float(np.max(v.values - u.values)))
    return worst <= 1e-10, f"max increase {worst:.2e}"


def check_harvest_restriction():
    rng = np.random.default_rng(17)
    worst = -math.inf
    for _ in range(4):
        mu = _root_measure(rng, 8)
        kept, removed = ms.split(mu, ms.RegionSpec.ball(0.6))
        H = hv.harvest_value(hv.solve_state(mu, _F, _GRID), mu)
        H_kept = hv.harvest_value(hv.solve_state(kept, _F, _GRID), kept) if len(kept) else 0.0
        worst = max(worst, H - _F.M * ms.total_mass(removed) - H_kept)
    return worst <= 1e-10, f"max violation {worst:.2e}"


def check_profile_energy():
    profile = hv.psi_profile(_F)
    err = float(np.max(np.abs(profile.energy() - _F.F(_F.M))))
    return err <= 1e-8 * _F.F(_F.M), f"max energy drift {err:.2e}"


def check_balance_first_order():
    f = hv.Logistic(kappa=16.0)
    pts = np.array([[x, y] for x in np.arange(-0.6, 0.61, 0.2) for y in np.arange(-0.8, -0.19, 0.2)])
    mu = ms.DiscreteMeasure(pts, np.full(len(pts), 0.05))
    res = [abs(hv.harvest_balance(hv.solve_state(mu, f, hv.HalfSpaceGrid(2, 4.0, h)), mu, f).residual)
           for h in (0.2, 0.1, 0.05)]
    ratios = [res[0] / res[1], res[1] / res[2]]
    return all(1.6 <= q <= 2.4 for q in ratios), "ratios " + ", ".join(f"{q:.3f}" for q in ratios)


def check_harvest_ball_bound():
    rng = np.random.default_rng(18)
    worst = 0.0
    for _ in range(6):
        mu = _root_measure(rng, int(rng.integers(1, 10)))
        H = hv.harvest_value(hv.solve_state(mu, _F, _GRID), mu)
        worst = max(worst, H / hv.ball_harvest_bound(ms.support_radius(mu) + _GRID.h, _F, 2))
    return worst <= 1.0, f"max H / bound {worst:.3f}"


def check_small_ball_decreasing():
    values = [hv.small_ball_bound(r, _F, 3) for r in (1e-1, 1e-2, 1e-3)]
    return values[0] > values[1] > values[2], ", ".join(f"{v:.3f}" for v in values)


# --- optimizer and rescaling ------------------------------------------------------------------


def check_branch_rescale():
    rng = np.random.default_rng(19)
    worst = 0.0
    for alpha, d in ((1.0, 2), (0.75, 2), (0.8, 3)):
        quad = sl.uniform_quadrature(d, 12)
        lam, factor = op.branch_rescale(1.7, 0.6, alpha, d)
        lattice = op.half_space_lattice(d, 0.5, 1.0)
        unit = op.BranchProblem(alpha=alpha, c=1.0, quad=quad, h=0.1, lattice=lattice)
        scaled = op.BranchProblem(alpha=alpha, c=0.6, quad=quad.scaled_intensity(1.7), h=0.1 * lam,
                                  lattice=lattice)
        for _ in range(3):
            mu = _random_measure(rng, d, 6, side=1)
            lhs = op.payoff_branches(op.branch_measure_map(mu, lam), scaled).payoff
            base = op.payoff_branches(mu, unit)
            # the payoff is a difference, so measure the error against its terms
            scale = factor * (abs(base.functional) + abs(base.upper))
            worst = max(worst, abs(lhs - factor * base.payoff) / scale)
    return worst <= 1e-6, f"max error / term size {worst:.2e}"


def check_root_irrigation_rescale():
    rng = np.random.default_rng(20)
    worst = 0.0
    for d in (2, 3):
        lam, _, _ = op.root_rescale(0.7, 1.3, 2.5, 1.0, 0.8, d)
        for _ in range(20):
            tree = _random_tree(rng, d, int(rng.integers(2, 8)))
            scaled = tree.scaled(2.5 * lam ** (d - 2), lam)
            worst = max(worst, _rel(ir.gilbert_energy(scaled, 0.8),
                                    op.irrigation_scale(2.5, lam, 0.8, d) * ir.gilbert_energy(tree, 0.8)))
    return worst <= 1e-12, f"max rel error {worst:.2e}"


def check_root_payoff_rescale():
    sigma, a, b, c, alpha = 2.0, 1.0, 0.5, 0.4, 0.9
    lam, c_tilde, factor = op.root_rescale(a, b, sigma, c, alpha, 2)
    nu = _root_measure(np.random.default_rng(21), 5)
    lattice = op.half_space_lattice(2, 0.2, 1.0, side=-1)
    unit = op.RootProblem(alpha=alpha, c=c_tilde, f=_F, grid=_GRID, lattice=lattice)
    scaled = op.RootProblem(alpha=alpha, c=c, f=_F, grid=_GRID.scaled(lam), lattice=lattice * lam,
                            a=a, b=b, sigma=sigma)
    lhs = op.payoff_roots(op.root_measure_map(nu, lam, sigma), scaled).payoff
    rhs = factor * op.payoff_roots(nu, unit).payoff
    err = _rel(lhs, rhs)
    return err <= 0.05, f"rel error {err:.2e} (matched grids)"


def check_radius_sigma_independence():
    values = [op.radius_bound_roots(0.8, 2, _F, a=0.8, b=1.5, c=0.5, sigma=s) for s in (0.5, 1.0, 2.0)]
    spread = (max(values) - min(values)) / values[1]
    return spread <= 1e-12, f"relative spread {spread:.2e}"


def _monotone(trace) -> bool:
    values = [t["payoff"] for t in trace]
    return all(b >= a for a, b in zip(values, values[1:]))


def check_branch_search():
    quad = sl.uniform_quadrature(2, 16)
    prob = op.BranchProblem(alpha=1.0, c=quad.quadrature_norm / 0.8, quad=quad, h=0.2,
                            lattice=op.half_space_lattice(2, 0.2, 1.4), budget=150, seed=1)
    mu, report, trace = op.optimize_branches(prob)
    bound = op.radius_bound_branches(1.0, 2, quad.quadrature_norm, prob.c) + prob.spacing
    ok = _monotone(trace) and ms.support_radius(mu) <= bound
    return ok, f"R = {ms.support_radius(mu):.3f} <= {bound:.3f}, {len(trace)} accepted"


def check_root_search():
    prob = op.RootProblem(alpha=1.0, c=1.5, f=_F, grid=_GRID, lattice=op.half_space_lattice(2, 0.2, 1.0, side=-1),
                          budget=80, seed=1)
    mu, _, report, trace = op.optimize_roots(prob)
    bound = _F.M / prob.c + prob.spacing
    ok = _monotone(trace) and ms.support_radius(mu) <= bound
    return ok, f"R = {ms.support_radius(mu):.3f} <= {bound:.3f}, {len(trace)} accepted"


def check_pruning_soundness():
    quad = sl.uniform_quadrature(2, 16)
    prob = op.BranchProblem(alpha=1.0, c=quad.quadrature_norm, quad=quad, h=0.2,
                            lattice=op.half_space_lattice(2, 0.2, 1.6), budget=0)

    def evaluate(mu):
        r = op.payoff_branches(mu, prob)
        return r.payoff, r

    engine = op._Engine(prob, evaluate)
    engine.current = op._Atoms.from_measure(ms.DiscreteMeasure([[0.4, 0.4], [1.4, 0.4], [0.1, 0.05]],
                                                               [0.3, 0.3, 2.0]))
    engine.current_value, engine.current_info = engine.evaluate(engine.current)
    start = engine.current_value
    op._branch_structural(prob)(engine)
    return engine.current_value >= start and _monotone(engine.trace[1:]), \
        f"payoff {start:.4f} -> {engine.current_value:.4f}"


# --- io -----------------------------------------------------------------------------------------


def check_tree_roundtrip():
    tree = _random_tree(np.random.default_rng(22), 3, 9)
    back = ir.parse_tree_csv(ir.emit_tree_csv(tree))
    a, b = back.measure(), tree.measure()
    ok = a.positions.shape == b.positions.shape and np.array_equal(a.positions, b.positions) \
        and np.allclose(a.masses, b.masses, rtol=1e-12, atol=0) \
        and _rel(ir.gilbert_energy(back, 0.6), ir.gilbert_energy(tree, 0.6)) <= 1e-12
    return ok, "same measure and energy after parse_tree_csv(emit_tree_csv(T))"


def check_field_roundtrip():
    g = hv.HalfSpaceGrid(2, 1.0, 0.25)
    u = hv.solve_state(ms.DiscreteMeasure([[0.25, -0.5]], [1.0]), _F, g)
    coords, values = hv.parse_field_csv(u.to_csv())
    return np.array_equal(values, u.values.reshape(-1)) and np.array_equal(coords, g.node_coordinates()), \
        "state CSV"


def check_density_roundtrip():
    mu = _random_measure(np.random.default_rng(23), 3, 10)
    dens = sl.project_density(mu, np.array([0.0, 0.6, 0.8]), sl.ProjectionGrid(0.1, 3.0, 2))
    centers, phi = sl.parse_density_csv(dens.to_csv())
    ok = np.array_equal(phi, dens.phi) and np.allclose(centers, (dens.cells + 0.5) * dens.h, rtol=0, atol=1e-15)
    return ok, "density CSV"


SUITES: dict[str, list[tuple[str, Callable]]] = {
    "measures": [
        ("partition", check_partition),
        ("tail_monotone", check_tail_monotone),
        ("dilate_scale_commute", check_dilate_scale_commute),
    ],
    "scaling": [
        ("irrigation_mass_scaling", check_mass_scaling),
        ("irrigation_dilation", check_dilation_scaling),
        ("sunlight_rescale", check_sunlight_rescale),
        ("branch_payoff_rescale", check_branch_rescale),
        ("root_irrigation_rescale", check_root_irrigation_rescale),
        ("root_payoff_rescale", check_root_payoff_rescale),
        ("radius_sigma_independence", check_radius_sigma_independence),
    ],
    "bounds": [
        ("irrigation_bracket", check_bracket),
        ("sunlight_mass_bound", check_sunlight_mass_bound),
        ("sunlight_radius_bound", check_sunlight_radius_bound),
        ("harvest_ball_bound", check_harvest_ball_bound),
        ("small_ball_decreasing", check_small_ball_decreasing),
    ],
    "irrigation": [
        ("heuristic_improves_star", check_heuristic_improves_star),
        ("alpha_monotone", check_alpha_monotone),
        ("subadditivity", check_subadditivity),
    ],
    "sunlight": [
        ("monotone_concave", check_sunlight_monotone_concave),
    ],
    "harvest": [
        ("state_range", check_state_range),
        ("state_comparison", check_state_comparison),
        ("restriction", check_harvest_restriction),
        ("profile_energy", check_profile_energy),
        ("balance_first_order", check_balance_first_order),
    ],
    "optimizer": [
        ("branch_search", check_branch_search),
        ("root_search", check_root_search),
        ("pruning_soundness", check_pruning_soundness),
    ],
    "io": [
        ("measure_roundtrip", check_measure_roundtrip),
        ("tree_roundtrip", check_tree_roundtrip),
        ("field_roundtrip", check_field_roundtrip),
        ("density_roundtrip", check_density_roundtrip),
    ],
}


def run_suite(name: str) -> list[CheckResult]:
    if name == "all":
        names = list(SUITES)
    elif name in SUITES:
        names = [name]
    else:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(['all', *SUITES])}")
    results = []
    for suite in names:
        for check, fn in SUITES[suite]:
            try:
                passed, detail = fn()
            except Exception as exc:  # a crashing check is a failing check
                passed, detail = False, f"{type(exc).__name__}: {exc}"
            results.append(CheckResult(suite, check, bool(passed), detail))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max([len(f"{r.suite}.{r.name}") for r in results] + [5])
    lines = [f"{'check':<{width}}  status  detail"]
    for r in results:
        lines.append(f"{r.suite + '.' + r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    return "\n".join(lines)
