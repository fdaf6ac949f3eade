import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rami.measures import DiscreteMeasure, dilate, scale_mass, support_radius, split, RegionSpec
from rami.harvest import (
    CustomGrowth,
    ExtentError,
    HalfSpaceGrid,
    Logistic,
    PsiStepError,
    SolverError,
    ball_harvest_bound,
    deposit_density,
    harvest_balance,
    harvest_in_ball,
    harvest_value,
    parse_field_csv,
    psi_profile,
    small_ball_bound,
    small_ball_detail,
    solve_state,
)

F1 = Logistic(kappa=1.0, M=1.0)
GRID = HalfSpaceGrid(2, 3.0, 0.1)


def random_root_measure(rng, n, radius=1.0, d=2, lattice=None):
    r = radius * np.sqrt(rng.uniform(0.05, 1, n))
    th = rng.uniform(np.pi + 0.1, 2 * np.pi - 0.1, n)
    pos = np.column_stack([r * np.cos(th), r * np.sin(th)])
    if d == 3:
        pos = np.column_stack([pos[:, 0], rng.uniform(-0.5, 0.5, n) * radius, pos[:, 1]])
    if lattice:
        pos = np.round(pos / lattice) * lattice
        pos[:, -1] = np.minimum(pos[:, -1], -lattice)
    return DiscreteMeasure(pos, rng.uniform(0.1, 2.0, n))


# --- growth functions ----------------------------------------------------------


def test_logistic_constants():
    f = Logistic(kappa=2.0, M=3.0)
    assert f.K == pytest.approx(2 * 9 / 4)
    assert f.u_max == 1.5
    assert f.f(3.0) == 0
    s = np.linspace(0, 3, 7)
    assert np.allclose(f.energy_gap(s), f.F(3.0) - f.F(s), atol=1e-12)
    assert np.all(f.fhat(np.array([0.0, 1.0, 1.5])) == f.K)


def test_logistic_antiderivative_matches_quadrature():
    from scipy.integrate import quad

    assert F1.F(1.0) == pytest.approx(quad(F1.f, 0, 1)[0], rel=1e-12)
    assert F1.F(1.0) == pytest.approx(1 / 6, rel=1e-15)


def test_custom_growth_validation():
    g = CustomGrowth(lambda u: u * (2 - u), lambda s: s**2 - s**3 / 3, 2.0)
    assert g.f(2.0) == 0 and g.K == pytest.approx(1.0, rel=1e-8)
    with pytest.raises(ValueError, match="concave"):
        CustomGrowth(lambda u: u * (2 - u) ** 2, lambda s: s, 2.0)
    with pytest.raises(ValueError):
        CustomGrowth(lambda u: u * (1 - u) + 0.5, lambda s: s, 1.0)


def test_custom_logistic_matches_builtin():
    g = CustomGrowth(lambda u: u * (1 - u), lambda s: s**2 / 2 - s**3 / 3, 1.0)
    assert g.u_max == pytest.approx(0.5, abs=1e-8)
    assert g.K == pytest.approx(0.25, rel=1e-10)
    assert g.lipschitz == pytest.approx(1.0, rel=1e-3)


def test_custom_rejects_convex():
    with pytest.raises(ValueError, match="concave"):
        CustomGrowth(lambda u: u * (1 - u) * (1 + 4 * u * u), lambda s: 0.0 * s, 1.0)


# --- grid ----------------------------------------------------------------------


def test_grid_requires_integer_ratio():
    with pytest.raises(ValueError):
        HalfSpaceGrid(2, 1.0, 0.3)
    g = HalfSpaceGrid(3, 1.0, 0.25)
    assert g.shape == (9, 9, 5) and g.unknown_shape == (7, 7, 4)


def test_deposit_single_and_shared_cells():
    g = HalfSpaceGrid(2, 1.0, 0.1)
    rho = deposit_density(DiscreteMeasure([[0.2, -0.3]], [2.0]), g)
    assert np.count_nonzero(rho) == 1 and rho.max() == pytest.approx(2.0 / 0.01)
    assert float((rho * g.control_volume()).sum()) == pytest.approx(2.0)
    assert not deposit_density(DiscreteMeasure.empty(2), g).any()
    two = deposit_density(DiscreteMeasure([[0.2, -0.3], [0.21, -0.31]], [1.0, 0.5]), g)
    assert np.count_nonzero(two) == 1 and two.max() == pytest.approx(1.5 / 0.01)


def test_deposit_extent_errors():
    g = HalfSpaceGrid(2, 1.0, 0.1)
    with pytest.raises(ExtentError, match="above the surface"):
        deposit_density(DiscreteMeasure([[0, 0.2]], [1]), g)
    with pytest.raises(ExtentError, match="outside"):
        deposit_density(DiscreteMeasure([[0.99, -0.2]], [1]), g)
    with pytest.raises(ExtentError, match="origin"):
        deposit_density(DiscreteMeasure([[0.01, -0.02]], [1]), g, exclude_origin=True)


# --- solver ----------------------------------------------------------------------


def test_zero_measure_is_equilibrium():
    u = solve_state(DiscreteMeasure.empty(2), F1, GRID, b=2.0)
    assert np.all(u.values == 0.5)
    assert u.diagnostics["iterations"] == 0


def test_single_massive_cell_profile():
    mu = DiscreteMeasure([[0.0, -1.0]], [5.0])
    u = solve_state(mu, F1, GRID)
    assert u.diagnostics["residual"] < 1e-9
    center = u.at([[0.0, -1.0]])[0]
    assert center < 1.0
    # increases monotonically along a ray towards the far boundary
    xs = np.arange(0.0, 3.0 + 1e-9, 0.1)
    ray = u.at(np.column_stack([xs, np.full_like(xs, -1.0)]))
    assert np.all(np.diff(ray) >= -1e-12)
    assert ray[-1] == 1.0


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 10_000))
def test_range_and_comparison(seed):
    rng = np.random.default_rng(seed)
    mu = random_root_measure(rng, 5)
    extra = random_root_measure(rng, 3)
    u = solve_state(mu, F1, GRID)
    assert np.all(u.values >= 0) and np.all(u.values <= 1.0)
    bigger = solve_state(mu + extra, F1, GRID)
    assert np.all(bigger.values <= u.values + 1e-10)


def test_range_scales_with_b():
    rng = np.random.default_rng(1)
    u = solve_state(random_root_measure(rng, 6), F1, GRID, sigma=0.7, a=1.3, b=2.5)
    assert np.all(u.values >= 0) and np.all(u.values <= 1 / 2.5 + 1e-15)


def test_picard_only_matches_newton():
    rng = np.random.default_rng(2)
    mu = random_root_measure(rng, 4)
    newton = solve_state(mu, F1, GRID, tol=1e-11)
    picard = solve_state(mu, F1, GRID, tol=1e-11, newton=False, max_iter=5000)
    assert np.max(np.abs(newton.values - picard.values)) < 1e-9


def test_nonconvergence_carries_history():
    mu = random_root_measure(np.random.default_rng(3), 4)
    with pytest.raises(SolverError) as err:
        solve_state(mu, F1, GRID, newton=False, max_iter=3, tol=1e-14)
    assert len(err.value.history) == 4
    assert err.value.history[-1] > 1e-14


def test_harvest_restriction_bound():
    rng = np.random.default_rng(4)
    mu = random_root_measure(rng, 8)
    kept, removed = split(mu, RegionSpec.ball(0.6))
    H = harvest_value(solve_state(mu, F1, GRID), mu)
    H_kept = harvest_value(solve_state(kept, F1, GRID), kept)
    assert H_kept >= H - F1.M * float(removed.masses.sum())


def test_harvest_value_trivial_cases():
    u = solve_state(DiscreteMeasure.empty(2), F1, GRID)
    assert harvest_value(u, DiscreteMeasure.empty(2)) == 0
    mu = DiscreteMeasure([[0.5, -0.5]], [0.3])
    v = solve_state(mu, F1, GRID)
    assert harvest_value(v, mu) == pytest.approx(0.3 * v.at([[0.5, -0.5]])[0])


def test_discrete_balance_is_exact_with_control_volumes():
    rng = np.random.default_rng(5)
    mu = random_root_measure(rng, 6, lattice=0.1)
    u = solve_state(mu, F1, GRID, tol=1e-12)
    b = harvest_balance(u, mu, F1)
    assert b.harvest == pytest.approx(b.growth_volume + b.boundary_flux, rel=1e-9)


def test_hf4_residual_first_order():
    f = Logistic(kappa=16.0)
    pts = np.array([[x, y] for x in np.arange(-0.6, 0.61, 0.2) for y in np.arange(-0.8, -0.19, 0.2)])
    mu = DiscreteMeasure(pts, np.full(len(pts), 0.05))
    res = [abs(harvest_balance(solve_state(mu, f, HalfSpaceGrid(2, 4.0, h)), mu, f).residual)
           for h in (0.2, 0.1, 0.05)]
    assert 1.6 <= res[0] / res[1] <= 2.4
    assert 1.6 <= res[1] / res[2] <= 2.4


def test_rescaled_problem_matches_on_matched_grid():
    sigma, a, b = 2.0, 1.5, 0.5
    lam = math.sqrt(sigma / (a * b))
    nu = random_root_measure(np.random.default_rng(6), 5)
    tilde = solve_state(nu, F1, HalfSpaceGrid(2, 3.0, 0.1))
    mu = scale_mass(dilate(nu, lam), sigma * lam ** (2 - 2))
    u = solve_state(mu, F1, tilde.grid.scaled(lam), sigma=sigma, a=a, b=b)
    assert np.allclose(u.values, tilde.values / b, rtol=0, atol=1e-9)
    assert harvest_value(u, mu) == pytest.approx(a * lam**2 * harvest_value(tilde, nu), rel=1e-9)


def test_three_dimensional_solve():
    g = HalfSpaceGrid(3, 2.0, 0.2)
    mu = DiscreteMeasure([[0.2, 0.0, -0.4], [-0.4, 0.2, -0.2]], [1.0, 0.5])
    u = solve_state(mu, F1, g)
    assert u.diagnostics["residual"] < 1e-9
    assert harvest_value(u, mu) <= ball_harvest_bound(support_radius(mu) + 0.2, F1, 3)


def test_field_csv_roundtrip():
    g = HalfSpaceGrid(2, 1.0, 0.25)
    u = solve_state(DiscreteMeasure([[0.25, -0.5]], [1.0]), F1, g)
    coords, values = parse_field_csv(u.to_csv())
    assert np.array_equal(values, u.values.reshape(-1))
    assert np.array_equal(coords, g.node_coordinates())
    assert '"iterations"' in u.diagnostics_json()


# --- profile and bounds ------------------------------------------------------------


@pytest.fixture(scope="module")
def profile():
    return psi_profile(F1)


def test_profile_initial_slope_and_gamma(profile):
    assert profile.dpsi[0] == pytest.approx(math.sqrt(1 / 3), rel=1e-14)
    assert profile.gamma == pytest.approx(1 / 6, abs=1e-12)
    s = np.linspace(0, 0.99, 100)
    assert np.allclose(F1.energy_gap(s) / (1 - s) ** 2, s / 3 + 1 / 6, atol=1e-13)


def test_profile_energy_and_shape(profile):
    assert np.max(np.abs(profile.energy() - 1 / 6)) <= 1e-8 / 6
    assert profile.psi[0] == 0 and np.all(np.diff(profile.psi) > 0) and profile.psi[-1] < 1
    assert np.all(profile.psi >= 1 - np.exp(-np.sqrt(2 * profile.gamma) * profile.r))


def test_profile_rejects_coarse_step():
    with pytest.raises(PsiStepError):
        psi_profile(F1, r_max=20.0, dr=0.5, rtol=1e-12)


def test_ball_bound_monotone_and_growth():
    values = [ball_harvest_bound(r, F1, 2) for r in (0.5, 1, 2, 4, 8, 16, 32)]
    assert values[0] == values[1]
    assert np.all(np.diff(values[1:]) > 0)
    ratios = [ball_harvest_bound(2 * r, F1, 2) / ball_harvest_bound(r, F1, 2) for r in (4, 8, 16, 32)]
    gaps = [abs(q - 4) for q in ratios]
    assert np.all(np.diff(gaps) < 0) and gaps[-1] < 0.3


def test_ball_bound_dominates_solver():
    rng = np.random.default_rng(7)
    g = HalfSpaceGrid(2, 3.0, 0.1)
    for _ in range(8):
        mu = random_root_measure(rng, int(rng.integers(1, 10)))
        H = harvest_value(solve_state(mu, F1, g), mu)
        assert H <= ball_harvest_bound(support_radius(mu) + g.h, F1, 2)


def test_small_ball_decreases_to_zero():
    vals = [small_ball_bound(r, F1, 3) for r in (1e-1, 1e-2, 1e-3)]
    assert vals[0] > vals[1] > vals[2]
    vals2 = [small_ball_bound(r, F1, 2) for r in (1e-1, 1e-2, 1e-3)]
    assert vals2[0] > vals2[1] > vals2[2]


@pytest.mark.parametrize("rho", [0.05, 0.5, 1.0, 3.0])
def test_small_ball_below_ball_bound(rho):
    for d in (2, 3):
        assert small_ball_bound(rho, F1, d) <= ball_harvest_bound(max(rho, 1.0), F1, d)


def test_small_ball_fallback_flag():
    detail = small_ball_detail(0.5, F1, 2, R_grid=[0.6])
    assert detail.fallback and detail.value == ball_harvest_bound(1.0, F1, 2)


def test_harvest_in_small_ball_bounded():
    rng = np.random.default_rng(8)
    g = HalfSpaceGrid(2, 3.0, 0.05)
    for _ in range(4):
        mu = random_root_measure(rng, 10)
        u = solve_state(mu, F1, g)
        for rho in (0.2, 0.5):
            assert harvest_in_ball(u, mu, rho) <= small_ball_bound(rho, F1, 2) + g.h
