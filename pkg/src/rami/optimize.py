"""Payoff maximization over discrete measures.

Two problems are handled:

* branches: ``S^eta(mu) - c I^alpha(mu)`` with ``mu`` in the closed upper
  half-space ``x_d >= 0``;
* roots: ``H(u, mu) - c I^alpha(mu)`` with ``mu`` in ``x_d <= 0`` and ``u`` the
  maximal solution of ``sigma Lap u + a f(b u) - u mu = 0``.

The search is a seeded local search over lattice moves (add, remove, transfer,
relocate) interleaved with structural pruning proposals (far truncation,
shell removal, half-circle replacement, low-state pruning).  Every proposal is
accepted only after re-evaluating the payoff, so pruning rules derived from
sufficient conditions can never make the incumbent worse.

Payoffs are always computed with the heuristic (upper) irrigation cost, so a
reported payoff is a lower bound for the true payoff of that measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .harvest import (
    ExtentError as GridExtentError,
    GrowthFunction,
    HalfSpaceGrid,
    ScalarField,
    ball_harvest_bound,
    harvest_value,
    solve_state,
)
from .irrigation import CostBracket, halfcircle_plan, irrigation_cost
from .measures import DiscreteMeasure, RegionSpec, dilate, scale_mass, shell_radius, support_radius
from .sunlight import DirectionQuadrature, ProjectionGrid, ball_volume, sphere_area, sunlight_total

HALFCIRCLE_ALPHA = (math.sqrt(5.0) - 1.0) / 2.0


class ProblemError(ValueError):
    """Problem parameters violate a precondition."""


class DomainError(ValueError):
    """A measure is supported outside the admissible region."""


def branch_alpha_star(d: int) -> float:
    return 1.0 - 1.0 / (d - 1)


def root_alpha_star(d: int) -> float:
    return 1.0 - 1.0 / d


def half_space_lattice(d: int, spacing: float, radius: float, side: int = 1) -> np.ndarray:
    """Points of ``spacing * Z^d`` with ``|x| <= radius`` and ``side * x_d >= 0``,
    origin excluded."""
    if not spacing > 0 or not radius > 0:
        raise ProblemError("lattice spacing and radius must be positive")
    if side not in (1, -1):
        raise ProblemError("side must be +1 or -1")
    n = int(math.floor(radius / spacing + 1e-9))
    axes = [np.arange(-n, n + 1)] * (d - 1) + [side * np.arange(0, n + 1)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    pts = mesh * spacing
    r = np.linalg.norm(pts, axis=1)
    keep = (r <= radius * (1 + 1e-12)) & (r > 0)
    return pts[keep]


def _freeze(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_search(budget, mass_quantum, mode, temperature, cooling, structural_interval):
    if budget < 0:
        raise ProblemError("budget must be nonnegative")
    if not mass_quantum > 0:
        raise ProblemError("mass quantum must be positive")
    if mode not in ("ascent", "anneal"):
        raise ProblemError(f"unknown search mode {mode!r}")
    if mode == "anneal" and not (temperature > 0 and 0 < cooling <= 1):
        raise ProblemError("annealing needs temperature > 0 and cooling in (0, 1]")
    if structural_interval < 1:
        raise ProblemError("structural_interval must be at least 1")


@dataclass(frozen=True)
class BranchProblem:
    """Maximize ``S^eta(mu) - c I^alpha(mu)`` over measures on the lattice."""

    alpha: float
    c: float
    quad: DirectionQuadrature
    h: float
    lattice: np.ndarray
    spacing: float | None = None
    mass_quantum: float = 0.05
    budget: int = 500
    seed: int = 0
    tree_budget: int = 100
    tree_restarts: int = 0
    require_halfcircle_regime: bool = False
    halfcircle_beta: float = 0.9
    n_arcs: int = 32
    structural_interval: int = 25
    mode: str = "ascent"
    temperature: float = 0.05
    cooling: float = 0.995

    def __post_init__(self):
        d = self.quad.dim
        if d < 2:
            raise ProblemError("dimension must be at least 2")
        if not (branch_alpha_star(d) < self.alpha <= 1.0):
            raise ProblemError(f"alpha must lie in ({branch_alpha_star(d):g}, 1] for d = {d}")
        if self.require_halfcircle_regime and d == 2 and not self.alpha > HALFCIRCLE_ALPHA:
            raise ProblemError("the half-circle regime needs alpha > (sqrt(5) - 1) / 2")
        if not self.c > 0:
            raise ProblemError("c must be positive")
        if not self.h > 0:
            raise ProblemError("cell size h must be positive")
        lattice = _freeze(np.atleast_2d(self.lattice))
        if lattice.shape[1] != d or len(lattice) == 0:
            raise ProblemError("lattice must be a nonempty (k, d) array")
        if np.any(lattice[:, -1] < 0):
            raise ProblemError("lattice points must satisfy x_d >= 0")
        if np.any(np.linalg.norm(lattice, axis=1) == 0):
            raise ProblemError("the origin is not an admissible lattice point")
        object.__setattr__(self, "lattice", lattice)
        if self.spacing is None:
            object.__setattr__(self, "spacing", float(self.h))
        if not 0 < self.halfcircle_beta < 1:
            raise ProblemError("halfcircle_beta must lie in (0, 1)")
        _check_search(self.budget, self.mass_quantum, self.mode, self.temperature, self.cooling,
                      self.structural_interval)

    @property
    def d(self) -> int:
        return self.quad.dim

    @property
    def norm(self) -> float:
        return self.quad.quadrature_norm

    @property
    def halfcircle_enabled(self) -> bool:
        return self.d == 2 and self.alpha > HALFCIRCLE_ALPHA

    def grid_for(self, mu: DiscreteMeasure) -> ProjectionGrid:
        reach = max(float(np.max(np.linalg.norm(self.lattice, axis=1))), support_radius(mu), 1.0)
        return ProjectionGrid(self.h, reach + self.h, self.d - 1)

    def describe(self) -> dict:
        return {
            "problem": "branches", "d": self.d, "alpha": self.alpha, "c": self.c,
            "quadrature_nodes": len(self.quad.weights), "quadrature_norm": self.norm, "h": self.h,
            "lattice_points": len(self.lattice), "spacing": self.spacing,
            "mass_quantum": self.mass_quantum, "budget": self.budget, "seed": self.seed,
            "tree_budget": self.tree_budget, "mode": self.mode,
        }


@dataclass(frozen=True)
class RootProblem:
    """Maximize ``H(u, mu) - c I^alpha(mu)`` over measures on the lattice."""

    alpha: float
    c: float
    f: GrowthFunction
    grid: HalfSpaceGrid
    lattice: np.ndarray
    a: float = 1.0
    b: float = 1.0
    sigma: float = 1.0
    spacing: float | None = None
    mass_quantum: float = 0.05
    budget: int = 500
    seed: int = 0
    tree_budget: int = 100
    tree_restarts: int = 0
    structural_interval: int = 25
    mode: str = "ascent"
    temperature: float = 0.05
    cooling: float = 0.995

    def __post_init__(self):
        d = self.grid.d
        if not (root_alpha_star(d) < self.alpha <= 1.0):
            raise ProblemError(f"alpha must lie in ({root_alpha_star(d):g}, 1] for d = {d}")
        for name in ("c", "a", "b", "sigma"):
            if not getattr(self, name) > 0:
                raise ProblemError(f"{name} must be positive")
        lattice = _freeze(np.atleast_2d(self.lattice))
        if lattice.shape[1] != d or len(lattice) == 0:
            raise ProblemError("lattice must be a nonempty (k, d) array")
        if np.any(lattice[:, -1] > 0):
            raise ProblemError("lattice points must satisfy x_d <= 0")
        try:
            self.grid.locate(DiscreteMeasure(lattice, np.ones(len(lattice))), exclude_origin=True)
        except GridExtentError as exc:
            raise ProblemError(f"lattice does not fit the grid: {exc}") from None
        object.__setattr__(self, "lattice", lattice)
        if self.spacing is None:
            object.__setattr__(self, "spacing", float(self.grid.h))
        _check_search(self.budget, self.mass_quantum, self.mode, self.temperature, self.cooling,
                      self.structural_interval)

    @property
    def d(self) -> int:
        return self.grid.d

    def describe(self) -> dict:
        return {
            "problem": "roots", "d": self.d, "alpha": self.alpha, "c": self.c,
            "a": self.a, "b": self.b, "sigma": self.sigma, "growth": self.f.describe(),
            "grid": {"L": self.grid.L, "h": self.grid.h}, "lattice_points": len(self.lattice),
            "spacing": self.spacing, "mass_quantum": self.mass_quantum, "budget": self.budget,
            "seed": self.seed, "tree_budget": self.tree_budget, "mode": self.mode,
        }


@dataclass(frozen=True)
class Certificate:
    value: float
    bound: float
    satisfied: bool

    def to_dict(self) -> dict:
        return {"value": float(self.value), "bound": float(self.bound), "satisfied": bool(self.satisfied)}


@dataclass(frozen=True)
class PayoffReport:
    payoff: float
    functional: float
    upper: float
    lower: float
    support_radius: float
    total_mass: float
    certificates: dict = field(default_factory=dict)
    bracket: CostBracket | None = field(default=None, repr=False, compare=False)

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {
            "payoff": float(self.payoff),
            "functional": float(self.functional),
            "irrigation": {"upper": float(self.upper), "lower": float(self.lower), "gap": float(self.gap)},
            "support_radius": float(self.support_radius),
            "total_mass": float(self.total_mass),
            "certificates": {k: v.to_dict() for k, v in self.certificates.items()},
        }


# --- constants and radius bounds -------------------------------------------------------


def _omega(d: int) -> float:
    """Larger of the two readings of the (d-1)-dimensional area constant."""
    return max(ball_volume(d - 1), sphere_area(d))


def sunlight_constant(alpha: float, d: int, norm: float) -> float:
    """``C0`` with ``S^eta(mu) <= C0 I^alpha(mu)^((d-1)/(1+alpha(d-1)))``."""
    return 2.0 * norm * _omega(d) ** (1.0 / (1.0 + alpha * (d - 1)))


def branch_kappa(alpha: float, d: int, norm: float, c: float) -> float:
    """Irrigation level beyond which the branch payoff cannot be positive."""
    e = (1.0 + alpha * (d - 1)) / (1.0 + (alpha - 1.0) * (d - 1))
    return (sunlight_constant(alpha, d, norm) / c) ** e


def branch_sunlight_bound(irrigation: float, alpha: float, d: int, norm: float, h: float) -> float:
    """Bound on the binned sunlight of any measure with irrigation cost at most
    ``irrigation``: split at the balancing radius, inflate the inner disc by one
    cell diagonal."""
    omega = _omega(d)
    delta = h * math.sqrt(d - 1)
    if irrigation <= 0:
        return norm * omega * delta ** (d - 1)
    r = (irrigation / omega**alpha) ** (1.0 / (1.0 + alpha * (d - 1)))
    return norm * (omega * (r + delta) ** (d - 1) + (irrigation / r) ** (1.0 / alpha))


def radius_bound_branches(alpha: float, d: int, norm: float, c: float) -> float:
    if not (branch_alpha_star(d) < alpha <= 1.0):
        raise ProblemError(f"alpha must lie in ({branch_alpha_star(d):g}, 1] for d = {d}")
    if not (norm > 0 and c > 0):
        raise ProblemError("quadrature norm and c must be positive")
    if alpha == 1.0:
        return norm / c
    D = 1.0 + (alpha - 1.0) * (d - 1)
    kappa = sunlight_constant(alpha, d, 1.0) ** ((1.0 + alpha * (d - 1)) / D)
    r1 = alpha ** (alpha / (alpha - 1.0)) * kappa
    return (norm / c) ** (1.0 / D) * (r1 + 1.0)


def harvest_constant(f: GrowthFunction, d: int) -> float:
    """``C_f`` with ``H <= C_f rho^d`` for every ``rho >= 1``.  The ball bound
    divided by ``rho^d`` is nonincreasing, so its value at 1 is the supremum."""
    return ball_harvest_bound(1.0, f, d)


def _root_kappa_unit(alpha: float, d: int, f: GrowthFunction, c: float) -> float:
    Cf, M = harvest_constant(f, d), f.M
    C0 = 2.0 * Cf ** (1.0 / (1.0 + alpha * d)) * M ** (alpha * d / (1.0 + alpha * d))
    pure = (C0 / c) ** ((1.0 + alpha * d) / (1.0 + (alpha - 1.0) * d))
    # the balancing radius must be at least 1
    return max(pure, (Cf / M) ** alpha)


def _root_radius_unit(alpha: float, d: int, f: GrowthFunction, c: float) -> float:
    if alpha == 1.0:
        return f.M / c
    A = alpha ** (alpha / (alpha - 1.0)) * _root_kappa_unit(alpha, d, f, c)
    B = f.M / c
    s = alpha / (1.0 - alpha)
    gamma = (B / (s * A)) ** (1.0 - alpha)
    return A * gamma**s + B / gamma


def root_rescale(a: float, b: float, sigma: float, c: float, alpha: float, d: int) -> tuple[float, float, float]:
    """``(lambda, c_tilde, factor)`` mapping the (sigma, a, b, c) root problem to
    the unit one: payoff = factor * unit payoff."""
    for name, v in (("a", a), ("b", b), ("sigma", sigma), ("c", c)):
        if not v > 0:
            raise ProblemError(f"{name} must be positive")
    if not 0 < alpha <= 1:
        raise ProblemError("alpha must lie in (0, 1]")
    lam = math.sqrt(sigma / (a * b))
    c_tilde = c * sigma**alpha / a * lam ** (1.0 - (1.0 - alpha) * d - 2.0 * alpha)
    return lam, c_tilde, a * lam**d


def root_measure_map(nu_tilde: DiscreteMeasure, lam: float, sigma: float) -> DiscreteMeasure:
    """Unit-problem measure to the scaled problem: ``sigma lam^(d-2) nu^lam``."""
    d = nu_tilde.dim
    return scale_mass(dilate(nu_tilde, lam), sigma * lam ** (d - 2))


def root_state_map(u_tilde: ScalarField, lam: float, b: float) -> ScalarField:
    """Unit-problem state to the scaled problem: ``u(x) = u_tilde(x / lam) / b``."""
    return ScalarField(u_tilde.grid.scaled(lam), u_tilde.values / b, dict(u_tilde.diagnostics))


def irrigation_scale(sigma: float, lam: float, alpha: float, d: int) -> float:
    """``I(root_measure_map(nu)) / I(nu)``."""
    return sigma**alpha * lam ** (alpha * (d - 2) + 1.0)


def radius_bound_roots(alpha: float, d: int, f: GrowthFunction, a: float = 1.0, b: float = 1.0,
                       c: float = 1.0, sigma: float = 1.0) -> float:
    if not (root_alpha_star(d) < alpha <= 1.0):
        raise ProblemError(f"alpha must lie in ({root_alpha_star(d):g}, 1] for d = {d}")
    if alpha == 1.0:
        for name, v in (("a", a), ("b", b), ("sigma", sigma), ("c", c)):
            if not v > 0:
                raise ProblemError(f"{name} must be positive")
        return f.M / (b * c)
    lam, c_tilde, _ = root_rescale(a, b, sigma, c, alpha, d)
    return lam * _root_radius_unit(alpha, d, f, c_tilde)


def root_kappa(prob: RootProblem) -> float:
    lam, c_tilde, _ = root_rescale(prob.a, prob.b, prob.sigma, prob.c, prob.alpha, prob.d)
    return irrigation_scale(prob.sigma, lam, prob.alpha, prob.d) * _root_kappa_unit(
        prob.alpha, prob.d, prob.f, c_tilde)


def root_harvest_bound(irrigation: float, prob: RootProblem) -> float:
    """Bound on the grid harvest of any measure with irrigation cost at most
    ``irrigation``, evaluated in unit variables and mapped back."""
    d, alpha, f = prob.d, prob.alpha, prob.f
    lam, _, factor = root_rescale(prob.a, prob.b, prob.sigma, prob.c, alpha, d)
    I = irrigation / irrigation_scale(prob.sigma, lam, alpha, d)
    Cf = harvest_constant(f, d)
    r = 1.0
    if I > 0:
        r = max(((f.M / Cf) * I ** (1.0 / alpha)) ** (alpha / (1.0 + alpha * d)), 1.0)
    unit = ball_harvest_bound(r + prob.grid.h / lam, f, d) + f.M * (I / r) ** (1.0 / alpha)
    return factor * unit


def low_state_threshold(prob: RootProblem) -> tuple[float, float]:
    """``(C0, r0)``: atoms with ``u(x) < C0 |x|^(1/alpha)`` are pruning
    candidates and ``C0 r0^(1/alpha) = M / b``."""
    kappa = root_kappa(prob)
    C0 = prob.c * 2.0 ** (-1.0 / prob.alpha) * kappa ** (1.0 - 1.0 / prob.alpha)
    r0 = (prob.f.M / (prob.b * C0)) ** prob.alpha
    return C0, r0


def branch_rescale(b_intensity: float, c: float, alpha: float, d: int) -> tuple[float, float]:
    """``(lambda, factor)``: ``lam^(d-1) mu^lam`` under ``(b eta, c)`` has payoff
    ``factor`` times that of ``mu`` under ``(eta, 1)``."""
    if not (b_intensity > 0 and c > 0):
        raise ProblemError("intensity factor and c must be positive")
    if not alpha > branch_alpha_star(d):
        raise ProblemError(f"alpha must exceed {branch_alpha_star(d):g}: the scaling exponent is singular")
    D = 1.0 + (alpha - 1.0) * (d - 1)
    lam = (b_intensity / c) ** (1.0 / D)
    factor = b_intensity ** ((1.0 + alpha * (d - 1)) / D) * c ** ((1.0 - d) / D)
    return lam, factor


def branch_measure_map(mu: DiscreteMeasure, lam: float) -> DiscreteMeasure:
    return scale_mass(dilate(mu, lam), lam ** (mu.dim - 1))


# --- payoffs ---------------------------------------------------------------------------


def _bracket(mu, alpha, prob) -> CostBracket:
    return irrigation_cost(mu, alpha, budget=prob.tree_budget, seed=prob.seed, restarts=prob.tree_restarts)


def payoff_branches(mu: DiscreteMeasure, prob: BranchProblem) -> PayoffReport:
    if mu.dim != prob.d:
        raise DomainError("measure dimension does not match the problem")
    if len(mu) and np.any(mu.positions[:, -1] < 0):
        raise DomainError("branch measures must be supported in x_d >= 0")
    bracket = _bracket(mu, prob.alpha, prob)
    S = sunlight_total(mu, prob.quad, prob.grid_for(mu)) if len(mu) else 0.0
    payoff = S - prob.c * bracket.upper
    R = support_radius(mu)
    kappa = branch_kappa(prob.alpha, prob.d, prob.norm, prob.c)
    s_bound = branch_sunlight_bound(bracket.upper, prob.alpha, prob.d, prob.norm, prob.h)
    r_bound = radius_bound_branches(prob.alpha, prob.d, prob.norm, prob.c) + prob.spacing
    certs = {
        "sunlight_bound": Certificate(S, s_bound, S <= s_bound),
        "kappa_threshold": Certificate(bracket.upper, kappa, bracket.upper <= kappa or payoff <= 0),
        "radius_bound": Certificate(R, r_bound, R <= r_bound),
    }
    return PayoffReport(payoff, S, bracket.upper, bracket.lower, R, math.fsum(mu.masses), certs, bracket)


def _roots_with_state(mu: DiscreteMeasure, prob: RootProblem) -> tuple[PayoffReport, ScalarField]:
    if mu.dim != prob.d:
        raise DomainError("measure dimension does not match the problem")
    if len(mu) and np.any(mu.positions[:, -1] > 0):
        raise DomainError("root measures must be supported in x_d <= 0")
    u = solve_state(mu, prob.f, prob.grid, sigma=prob.sigma, a=prob.a, b=prob.b, exclude_origin=True)
    bracket = _bracket(mu, prob.alpha, prob)
    H = harvest_value(u, mu)
    payoff = H - prob.c * bracket.upper
    R = support_radius(mu)
    kappa = root_kappa(prob)
    h_bound = root_harvest_bound(bracket.upper, prob)
    r_bound = radius_bound_roots(prob.alpha, prob.d, prob.f, prob.a, prob.b, prob.c, prob.sigma) + prob.spacing
    certs = {
        "harvest_bound": Certificate(H, h_bound, H <= h_bound),
        "kappa_threshold": Certificate(bracket.upper, kappa, bracket.upper <= kappa or payoff <= 0),
        "radius_bound": Certificate(R, r_bound, R <= r_bound),
    }
    report = PayoffReport(payoff, H, bracket.upper, bracket.lower, R, math.fsum(mu.masses), certs, bracket)
    return report, u


def payoff_roots(mu: DiscreteMeasure, prob: RootProblem) -> PayoffReport:
    return _roots_with_state(mu, prob)[0]


# --- search ----------------------------------------------------------------------------


class _Atoms:
    """Mutable atom set keyed by exact position tuples."""

    def __init__(self, d: int, items=None):
        self.d = d
        self.mass: dict[tuple, float] = dict(items or {})

    def copy(self) -> _Atoms:
        return _Atoms(self.d, self.mass)

    def keys(self) -> list[tuple]:
        return sorted(self.mass)

    def add(self, p: tuple, m: float) -> None:
        self.mass[p] = self.mass.get(p, 0.0) + m

    def take(self, p: tuple, m: float) -> None:
        left = self.mass[p] - m
        if left <= 1e-15 * max(m, 1.0):
            del self.mass[p]
        else:
            self.mass[p] = left

    def measure(self) -> DiscreteMeasure:
        keys = self.keys()
        if not keys:
            return DiscreteMeasure.empty(self.d)
        return DiscreteMeasure(np.array(keys), np.array([self.mass[k] for k in keys]))

    def key(self) -> tuple:
        return tuple((k, self.mass[k]) for k in self.keys())

    @classmethod
    def from_measure(cls, mu: DiscreteMeasure) -> _Atoms:
        atoms = cls(mu.dim)
        for x, m in zip(mu.positions, mu.masses):
            atoms.add(tuple(float(v) for v in x), float(m))
        return atoms


class _Engine:
    def __init__(self, prob, evaluate):
        self.prob = prob
        self.evaluate_raw = evaluate
        self.cache: dict = {}
        self.rng = np.random.default_rng(prob.seed)
        self.lattice = prob.lattice
        self.points = [tuple(float(v) for v in p) for p in prob.lattice]
        self.kd = cKDTree(prob.lattice)
        self.steps = 0
        self.temperature = prob.temperature
        self.current = _Atoms(prob.d)
        self.current_value, self.current_info = self.evaluate(self.current)
        self.best = self.current.copy()
        self.best_value = self.current_value
        self.trace = [{"step": 0, "move": "init", "payoff": self.current_value}]

    def evaluate(self, atoms: _Atoms):
        key = atoms.key()
        if key not in self.cache:
            self.cache[key] = self.evaluate_raw(atoms.measure())
        return self.cache[key]

    def _record(self, move: str, atoms: _Atoms, value: float, info) -> None:
        self.current, self.current_value, self.current_info = atoms, value, info
        self.trace.append({"step": self.steps, "move": move, "payoff": value})
        if value > self.best_value:
            self.best, self.best_value = atoms.copy(), value

    def try_random(self, move: str, cand: _Atoms) -> None:
        self.steps += 1
        value, info = self.evaluate(cand)
        delta = value - self.current_value
        if self.prob.mode == "ascent":
            accept = delta > 0
        else:
            accept = delta >= 0 or self.rng.random() < math.exp(delta / self.temperature)
            self.temperature *= self.prob.cooling
        if accept:
            self._record(move, cand, value, info)

    def try_structural(self, move: str, cand: _Atoms, strict: bool) -> bool:
        self.steps += 1
        value, info = self.evaluate(cand)
        base = self.current_value
        if (value > base) if strict else (value >= base):
            if cand.key() == self.current.key():
                return False
            self._record(move, cand, value, info)
            return True
        return False

    # lattice moves

    def propose(self) -> tuple[str, _Atoms]:
        prob, rng = self.prob, self.rng
        keys = self.current.keys()
        kinds = ["add", "remove", "transfer", "relocate"]
        if not keys:
            kind = "add"
        else:
            kind = kinds[int(rng.choice(4, p=[0.35, 0.2, 0.15, 0.3]))]
            if kind == "transfer" and len(keys) < 2:
                kind = "add"
        cand = self.current.copy()
        dm = prob.mass_quantum
        if kind == "add":
            cand.add(self.points[int(rng.integers(len(self.points)))], dm)
        elif kind == "remove":
            p = keys[int(rng.integers(len(keys)))]
            whole = rng.random() < 0.5 or cand.mass[p] <= dm
            cand.take(p, cand.mass[p] if whole else dm)
        elif kind == "transfer":
            i, j = rng.choice(len(keys), size=2, replace=False)
            p, q = keys[int(i)], keys[int(j)]
            m = min(dm, cand.mass[p])
            cand.take(p, m)
            cand.add(q, m)
        else:
            p = keys[int(rng.integers(len(keys)))]
            near = [k for k in self.kd.query_ball_point(np.array(p), 1.5 * prob.spacing)
                    if self.points[k] != p]
            if not near:
                near = [int(self.kd.query(np.array(p))[1])]
            q = self.points[int(near[int(rng.integers(len(near)))])]
            if q != p:
                m = cand.mass[p]
                cand.take(p, m)
                cand.add(q, m)
        return kind, cand

    def restricted(self, keep) -> _Atoms:
        atoms = _Atoms(self.prob.d)
        for p in self.current.keys():
            if keep(p):
                atoms.add(p, self.current.mass[p])
        return atoms

    def truncate(self, radius: float) -> None:
        far = [p for p in self.current.keys() if math.hypot(*p) > radius]
        if far:
            self.try_structural("truncate", self.restricted(lambda p: math.hypot(*p) <= radius), strict=False)

    def shells(self) -> list[int]:
        radii = [math.hypot(*p) for p in self.current.keys()]
        if not radii:
            return []
        pts = np.array(self.current.keys())
        out = []
        j = 0
        while shell_radius(j) >= min(radii):
            if np.any(RegionSpec.shell(j).contains(pts)):
                out.append(j)
            j += 1
        return out

    def run(self, structural) -> None:
        prob = self.prob
        for k in range(prob.budget):
            self.try_random(*self.propose())
            if (k + 1) % prob.structural_interval == 0:
                structural(self)
        if prob.mode == "anneal" and self.best_value > self.current_value:
            self.current, self.current_value = self.best.copy(), self.best_value
            self.current_info = self.evaluate(self.current)[1]
        structural(self)


def _branch_structural(prob: BranchProblem):
    r2 = radius_bound_branches(prob.alpha, prob.d, prob.norm, prob.c)

    def run(engine: _Engine) -> None:
        engine.truncate(r2)
        for j in engine.shells():
            inside = RegionSpec.shell(j)
            outside = engine.restricted(lambda p: not inside.contains(np.array([p]))[0])
            engine.try_structural("shell", outside, strict=True)
            if prob.halfcircle_enabled:
                _, arc = halfcircle_plan(shell_radius(j), prob.halfcircle_beta, prob.n_arcs)
                cand = engine.restricted(lambda p: not inside.contains(np.array([p]))[0])
                if any(inside.contains(np.array([p]))[0] for p in engine.current.keys()):
                    for x, m in zip(arc.positions, arc.masses):
                        cand.add(tuple(float(v) for v in x), float(m))
                    engine.try_structural("halfcircle", cand, strict=True)

    return run


def optimize_branches(prob: BranchProblem) -> tuple[DiscreteMeasure, PayoffReport, list[dict]]:
    def evaluate(mu):
        report = payoff_branches(mu, prob)
        return report.payoff, report

    engine = _Engine(prob, evaluate)
    engine.run(_branch_structural(prob))
    best = engine.current if prob.mode == "ascent" else engine.best
    return best.measure(), engine.evaluate(best)[1], engine.trace


def _root_structural(prob: RootProblem):
    r2 = radius_bound_roots(prob.alpha, prob.d, prob.f, prob.a, prob.b, prob.c, prob.sigma)
    C0, _ = low_state_threshold(prob)

    def run(engine: _Engine) -> None:
        engine.truncate(r2)
        keys = engine.current.keys()
        if keys:
            _, u = engine.current_info
            pts = np.array(keys)
            low = u.at(pts) < C0 * np.linalg.norm(pts, axis=1) ** (1.0 / prob.alpha)
            if np.any(low):
                dropped = {k for k, flag in zip(keys, low) if flag}
                engine.try_structural("low_state", engine.restricted(lambda p: p not in dropped), strict=False)

    return run


def optimize_roots(prob: RootProblem) -> tuple[DiscreteMeasure, ScalarField, PayoffReport, list[dict]]:
    def evaluate(mu):
        report, u = _roots_with_state(mu, prob)
        return report.payoff, (report, u)

    engine = _Engine(prob, evaluate)
    engine.run(_root_structural(prob))
    best = engine.current if prob.mode == "ascent" else engine.best
    report, u = engine.evaluate(best)[1]
    return best.measure(), u, report, engine.trace
