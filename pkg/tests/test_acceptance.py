"""Acceptance criteria 1-12; the terminal summary prints one PASS/FAIL line each."""

import math
import time

import numpy as np
import pytest

import oracles
from rami.harvest import (
    HalfSpaceGrid,
    Logistic,
    ball_harvest_bound,
    harvest_balance,
    harvest_value,
    psi_profile,
    small_ball_bound,
    solve_state,
)
from rami.irrigation import (
    FlowTree,
    gilbert_energy,
    halfcircle_plan,
    irrigation_cost,
    optimize_tree,
    star_plan,
)
from rami.measures import DiscreteMeasure, dilate, scale_mass, support_radius
from rami.optimize import (
    BranchProblem,
    RootProblem,
    half_space_lattice,
    irrigation_scale,
    optimize_branches,
    optimize_roots,
    payoff_roots,
    radius_bound_roots,
    root_measure_map,
    root_rescale,
)
from rami.sunlight import (
    ProjectionGrid,
    sunlight_bounds,
    sunlight_direction,
    sunlight_total,
    uniform_quadrature,
)

F1 = Logistic(kappa=1.0, M=1.0)


def criterion(n):
    return pytest.mark.criterion(n)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def random_tree(rng, d, n):
    pos = np.vstack([np.zeros(d), rng.normal(size=(n, d))])
    parent = np.array([-1] + [int(rng.integers(0, k)) for k in range(1, n + 1)])
    return FlowTree(pos, parent, np.r_[0.0, rng.uniform(0.05, 2.0, n)])


def bracket_instances():
    """The 200 instances shared by criteria 2 and 3."""
    rng = np.random.default_rng(2024)
    out = []
    for k in range(200):
        d = (2, 3)[k % 2]
        alpha = (0.6, 0.75, 0.9, 1.0)[(k // 2) % 4]
        n = int(rng.integers(3, 16))
        out.append((DiscreteMeasure(rng.uniform(-1, 1, (n, d)), rng.uniform(0.1, 1.0, n)), alpha))
    return out


def first_moment(mu):
    return math.fsum(mu.masses * np.linalg.norm(mu.positions, axis=1))


def monotone(trace):
    values = [t["payoff"] for t in trace]
    return all(b >= a for a, b in zip(values, values[1:]))


# --- 1: scaling laws ----------------------------------------------------------------------


@criterion(1)
def test_criterion_01_irrigation_scaling_laws():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 4))
        tree = random_tree(rng, d, int(rng.integers(1, 12)))
        alpha = float(rng.uniform(0.05, 1.0))
        lam = float(rng.choice([0.3, 0.5, 2.0, 7.0]))
        base = gilbert_energy(tree, alpha)
        worst = max(worst,
                    rel(gilbert_energy(tree.scaled(lam, 1.0), alpha), lam**alpha * base),
                    rel(gilbert_energy(tree.scaled(1.0, lam), alpha), lam * base))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-12
    assert elapsed < 1.0


# --- 2 and 3: lower-bound bracket, alpha = 1 ------------------------------------------------


@criterion(2)
def test_criterion_02_lower_bound_below_heuristic():
    start = time.perf_counter()
    for mu, alpha in bracket_instances():
        b = irrigation_cost(mu, alpha)
        assert b.lower <= b.upper * (1 + 1e-12), (alpha, b.lower, b.upper)
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0


@criterion(2)
def test_criterion_02_single_atom_equality():
    rng = np.random.default_rng(22)
    for _ in range(40):
        d = int(rng.integers(2, 4))
        mu = DiscreteMeasure(rng.uniform(-2, 2, (1, d)), [rng.uniform(0.1, 3.0)])
        for alpha in (0.6, 0.75, 0.9, 1.0):
            b = irrigation_cost(mu, alpha)
            assert abs(b.upper - b.lower) <= 1e-12 * b.upper


@criterion(3)
def test_criterion_03_alpha_one_is_first_moment():
    for mu, _ in bracket_instances():
        energy = gilbert_energy(optimize_tree(mu, 1.0), 1.0)
        assert abs(energy - first_moment(mu)) <= 1e-9


# --- 4: Y-branch -----------------------------------------------------------------------------

Y_ATOMS = DiscreteMeasure([[1.0, 1.0], [-1.0, 1.0]], [1.0, 1.0])


@criterion(4)
def test_criterion_04_y_branch_matches_oracle():
    start = time.perf_counter()
    best, _ = oracles.y_branch_grid(0.5, 1e-4)
    energy = gilbert_energy(optimize_tree(Y_ATOMS, 0.5), 0.5)
    assert abs(energy - best) <= 1e-3
    assert time.perf_counter() - start < 5.0


@criterion(4)
@pytest.mark.xfail(strict=True, reason="the grid optimum over (0, y) is the star itself, so nothing lies strictly below it")
def test_criterion_04_y_branch_below_star():
    energy = gilbert_energy(optimize_tree(Y_ATOMS, 0.5), 0.5)
    star = gilbert_energy(star_plan(Y_ATOMS), 0.5)
    assert star == pytest.approx(2 * math.sqrt(2), rel=1e-15)
    assert energy < star


# --- 5: half circle ---------------------------------------------------------------------------


@criterion(5)
@pytest.mark.parametrize("alpha", [0.7, 0.8])
@pytest.mark.parametrize("beta", [0.7, 0.8])
@pytest.mark.parametrize("r", [0.25, 0.5])
def test_criterion_05_halfcircle_energy(alpha, beta, r):
    start = time.perf_counter()
    tree, mu = halfcircle_plan(r, beta, 64)
    assert mu.masses.sum() == pytest.approx(math.pi * r**beta, rel=1e-12)
    assert gilbert_energy(tree, alpha) <= 2 * math.pi ** (alpha + 1) * r ** (alpha * beta + 1)
    assert time.perf_counter() - start < 5.0


# --- 6 and 7: sunlight --------------------------------------------------------------------------


def random_measure(rng, d, n=None):
    n = int(rng.integers(1, 20)) if n is None else n
    return DiscreteMeasure(rng.uniform(-1, 1, (n, d)), rng.uniform(0.01, 2.0, n))


@criterion(6)
def test_criterion_06_sunlight_bounds():
    rng = np.random.default_rng(6)
    start = time.perf_counter()
    for k in range(100):
        d = (2, 3)[k % 2]
        mu = random_measure(rng, d)
        grid = ProjectionGrid.for_measure(mu, 0.05)
        quad = uniform_quadrature(d, 16 if d == 2 else 40)
        value = sunlight_total(mu, quad, grid)
        b = sunlight_bounds(mu, quad, grid)
        assert value <= b["mass"] * (1 + 1e-12)
        assert value <= b["sphere_radius"] * (1 + 1e-12)
    assert time.perf_counter() - start < 30.0


@criterion(6)
def test_criterion_06_monotone_and_concave_spot_checks():
    rng = np.random.default_rng(66)
    for k in range(20):
        d = (2, 3)[k % 2]
        mu = random_measure(rng, d)
        extra = random_measure(rng, d, 1)
        n = rng.standard_normal(d)
        n /= np.linalg.norm(n)
        grid = ProjectionGrid(0.07, 2.0, d - 1)
        s1 = sunlight_direction(mu, n, grid)
        assert sunlight_direction(mu + extra, n, grid) >= s1
        s2 = sunlight_direction(scale_mass(mu, 2.0), n, grid)
        s3 = sunlight_direction(scale_mass(mu, 3.0), n, grid)
        assert s2 <= 2 * s1
        assert s1 + s3 <= 2 * s2 * (1 + 1e-12)


@criterion(7)
def test_criterion_07_coupled_rescale():
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in range(50):
        d = (2, 3)[k % 2]
        lam = (0.5, 2.0)[(k // 2) % 2]
        mu = random_measure(rng, d)
        grid = ProjectionGrid.for_measure(mu, 0.05)
        quad = uniform_quadrature(d, 12)
        moved = scale_mass(dilate(mu, lam), lam ** (d - 1))
        worst = max(worst, rel(sunlight_total(moved, quad, grid.scaled(lam)),
                               lam ** (d - 1) * sunlight_total(mu, quad, grid)))
    assert worst <= 1e-12


# --- 8: psi profile --------------------------------------------------------------------------------


@criterion(8)
def test_criterion_08_psi_profile():
    start = time.perf_counter()
    prof = psi_profile(F1)
    elapsed = time.perf_counter() - start
    assert np.max(np.abs(prof.energy() - 1 / 6)) <= 1e-8
    assert abs(prof.gamma - 1 / 6) <= 1e-6
    assert np.all(prof.psi >= 1 - np.exp(-prof.r / math.sqrt(3)))
    assert elapsed < 1.0


# --- 9: harvest bounds --------------------------------------------------------------------------------


@criterion(9)
def test_criterion_09_solver_below_ball_bound():
    rng = np.random.default_rng(9)
    grid = HalfSpaceGrid(2, 4.0, 0.05)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 12))
        pos = rng.uniform(-1.5, 1.5, (n, 2))
        pos[:, 1] = -np.abs(pos[:, 1]) - 0.05
        mu = DiscreteMeasure(pos, rng.uniform(0.05, 2.0, n))
        H = harvest_value(solve_state(mu, F1, grid), mu)
        bound = ball_harvest_bound(support_radius(mu) + grid.h, F1, 2)
        assert H <= bound
        worst = max(worst, H / bound)
    print(f"worst harvest / ball bound {worst:.3f}")
    assert time.perf_counter() - start < 300.0


@criterion(9)
def test_criterion_09_small_ball_strictly_decreasing():
    for d in (2, 3):
        values = [small_ball_bound(rho, F1, d) for rho in (1e-1, 1e-2, 1e-3)]
        assert values[0] > values[1] > values[2]


@criterion(9)
def test_criterion_09_balance_residual_halves():
    f = Logistic(kappa=16.0)
    pts = np.array([[x, y] for x in np.arange(-0.6, 0.61, 0.2) for y in np.arange(-0.8, -0.19, 0.2)])
    mu = DiscreteMeasure(pts, np.full(len(pts), 0.05))
    res = [abs(harvest_balance(solve_state(mu, f, HalfSpaceGrid(2, 4.0, h)), mu, f).residual)
           for h in (0.1, 0.05)]
    assert 0.8 <= (res[0] / res[1]) / 2 <= 1.2


# --- 10: root rescale ------------------------------------------------------------------------------------


@criterion(10)
def test_criterion_10_irrigation_rescale_on_trees():
    rng = np.random.default_rng(10)
    worst = 0.0
    for d in (2, 3):
        for sigma, a, b, c, alpha in ((2.0, 1.0, 0.5, 0.4, 0.9), (0.7, 1.3, 2.0, 1.0, 0.8)):
            lam, _, _ = root_rescale(a, b, sigma, c, alpha, d)
            for _ in range(20):
                tree = random_tree(rng, d, int(rng.integers(1, 9)))
                moved = tree.scaled(sigma * lam ** (d - 2), lam)
                worst = max(worst, rel(gilbert_energy(moved, alpha),
                                       irrigation_scale(sigma, lam, alpha, d) * gilbert_energy(tree, alpha)))
    assert worst <= 1e-12


def _payoff_rescale_error(h):
    sigma, a, b, c, alpha = 2.0, 1.0, 0.5, 0.4, 0.9
    lam, c_tilde, factor = root_rescale(a, b, sigma, c, alpha, 2)
    rng = np.random.default_rng(1010)
    pos = np.round(rng.uniform(-1, 1, (6, 2)) / 0.1) * 0.1
    pos[:, 1] = -np.maximum(np.abs(pos[:, 1]), 0.1)
    nu = DiscreteMeasure(pos, rng.uniform(0.1, 1.0, 6))
    grid = HalfSpaceGrid(2, 3.0, h)
    lattice = half_space_lattice(2, 0.2, 1.0, side=-1)
    unit = RootProblem(alpha=alpha, c=c_tilde, f=F1, grid=grid, lattice=lattice)
    scaled = RootProblem(alpha=alpha, c=c, f=F1, grid=grid.scaled(lam), lattice=lattice * lam,
                         a=a, b=b, sigma=sigma)
    lhs = payoff_roots(root_measure_map(nu, lam, sigma), scaled).payoff
    return rel(lhs, factor * payoff_roots(nu, unit).payoff)


@criterion(10)
def test_criterion_10_payoff_rescale():
    coarse, fine = _payoff_rescale_error(0.05), _payoff_rescale_error(0.025)
    print(f"payoff rescale error h=0.05: {coarse:.2e}, h=0.025: {fine:.2e}")
    assert coarse <= 0.05
    assert fine <= 0.05
    # both sides are discretized on grids related by the same dilation, so the
    # identity holds to rounding and cannot grow under refinement
    assert fine <= coarse + 1e-12


# --- 11: radius certificates ---------------------------------------------------------------------------------


@criterion(11)
def test_criterion_11_branch_radius():
    quad = uniform_quadrature(2, 16)
    c = quad.quadrature_norm / 1.5
    spacing = 0.2
    prob = BranchProblem(alpha=1.0, c=c, quad=quad, h=0.1, lattice=half_space_lattice(2, spacing, 2.0),
                         spacing=spacing, budget=1000, seed=11)
    assert np.max(np.linalg.norm(prob.lattice, axis=1)) > quad.quadrature_norm / c + spacing
    start = time.perf_counter()
    mu, report, trace = optimize_branches(prob)
    assert time.perf_counter() - start < 600.0
    assert monotone(trace)
    assert support_radius(mu) <= quad.quadrature_norm / c + spacing
    assert report.certificates["radius_bound"].satisfied


@criterion(11)
def test_criterion_11_root_radius():
    c, b, spacing = 1.5, 1.0, 0.2
    prob = RootProblem(alpha=1.0, c=c, f=F1, grid=HalfSpaceGrid(2, 3.0, 0.1),
                       lattice=half_space_lattice(2, spacing, 1.4, side=-1), b=b, spacing=spacing,
                       budget=1000, seed=11)
    assert np.max(np.linalg.norm(prob.lattice, axis=1)) > F1.M / (b * c) + spacing
    start = time.perf_counter()
    mu, _, report, trace = optimize_roots(prob)
    assert time.perf_counter() - start < 600.0
    assert monotone(trace)
    assert support_radius(mu) <= F1.M / (b * c) + spacing
    assert report.certificates["radius_bound"].satisfied


@criterion(11)
def test_criterion_11_radius_bound_sigma_independent():
    for alpha in (1.0, 0.9, 0.75):
        values = [radius_bound_roots(alpha, 2, F1, a=0.8, b=1.5, c=0.5, sigma=s) for s in (0.5, 1.0, 2.0)]
        assert max(values) - min(values) <= 1e-12 * values[1]


# --- 12: optimizer sanity --------------------------------------------------------------------------------------


@criterion(12)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_criterion_12_traces_nondecreasing(seed):
    quad = uniform_quadrature(2, 12)
    for alpha in (1.0, 0.7):
        prob = BranchProblem(alpha=alpha, c=2.0, quad=quad, h=0.1, lattice=half_space_lattice(2, 0.25, 1.0),
                             budget=120, tree_budget=40, seed=seed)
        _, _, trace = optimize_branches(prob)
        assert monotone(trace)
    for alpha in (1.0, 0.8):
        prob = RootProblem(alpha=alpha, c=0.5, f=F1, grid=HalfSpaceGrid(2, 2.0, 0.1),
                           lattice=half_space_lattice(2, 0.25, 0.8, side=-1), budget=60, tree_budget=40,
                           seed=seed)
        _, _, _, trace = optimize_roots(prob)
        assert monotone(trace)


@criterion(12)
def test_criterion_12_huge_cost_gives_zero_measure():
    quad = uniform_quadrature(2, 12)
    prob = BranchProblem(alpha=0.8, c=1e9, quad=quad, h=0.1, lattice=[[0.0, 0.5]], budget=100)
    mu, report, _ = optimize_branches(prob)
    assert len(mu) == 0 and report.payoff == 0.0
    prob = RootProblem(alpha=0.8, c=1e9, f=F1, grid=HalfSpaceGrid(2, 2.0, 0.1), lattice=[[0.0, -0.5]],
                       budget=100)
    mu, _, report, _ = optimize_roots(prob)
    assert len(mu) == 0 and report.payoff == 0.0
