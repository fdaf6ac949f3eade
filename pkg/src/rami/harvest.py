"""Harvest functional: the semilinear state equation on a truncated half-space
and analytic upper bounds built from the radial profile ``psi``.

State equation, for a measure ``mu`` supported in ``{x_d <= 0}``::

    sigma * Lap(u) + a * f(b u) - u * mu = 0     in x_d < 0
    du/dx_d = 0                                    on x_d = 0

The box ``[-L, L]^(d-1) x [-L, 0]`` is discretized with a vertex-centred grid
of spacing ``h``.  The surface row uses a reflected ghost node, the other five
faces carry the far-field value ``u = M/b``.  The maximal solution is reached
by monotone iteration from ``u = M/b``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import splu

from .measures import DiscreteMeasure, support_radius
from .sunlight import sphere_area


class ExtentError(ValueError):
    """An atom lies outside the solvable part of the grid."""


class SolverError(RuntimeError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(f"{message} (last residual {history[-1] if history else float('nan'):.3e})")
        self.history = history


class PsiStepError(ValueError):
    """The profile step is too coarse for the requested accuracy."""


# ---------------------------------------------------------------------------
# growth functions
# ---------------------------------------------------------------------------


class GrowthFunction:
    """Concave growth rate ``f`` on ``[0, M]`` with ``f(M) = 0``."""

    M: float
    K: float
    u_max: float
    lipschitz: float

    def f(self, u):
        raise NotImplementedError

    def fprime(self, u):
        raise NotImplementedError

    def F(self, s):
        """Antiderivative with ``F(0) = 0``."""
        raise NotImplementedError

    def energy_gap(self, s):
        """``F(M) - F(s)``."""
        return self.F(self.M) - self.F(s)

    def fhat(self, s):
        """``max f`` over ``[s, M]``: ``K`` below ``u_max``, ``f(s)`` above."""
        s = np.asarray(s, dtype=float)
        return np.where(s <= self.u_max, self.K, self.f(np.minimum(s, self.M)))

    def describe(self) -> dict:
        return {"family": type(self).__name__.lower(), "M": self.M, "K": self.K, "u_max": self.u_max}


@dataclass(frozen=True)
class Logistic(GrowthFunction):
    """``f(u) = kappa u (M - u)``."""

    kappa: float = 1.0
    M: float = 1.0

    def __post_init__(self):
        if not (self.kappa > 0 and self.M > 0):
            raise ValueError("logistic growth needs kappa > 0 and M > 0")

    @property
    def K(self) -> float:
        return self.kappa * self.M**2 / 4

    @property
    def u_max(self) -> float:
        return self.M / 2

    @property
    def lipschitz(self) -> float:
        return self.kappa * self.M

    def f(self, u):
        return self.kappa * u * (self.M - u)

    def fprime(self, u):
        return self.kappa * (self.M - 2 * u)

    def F(self, s):
        return self.kappa * (self.M * s * s / 2 - s**3 / 3)

    def energy_gap(self, s):
        # exact factorization avoids cancellation near s = M
        return self.kappa * (self.M - s) ** 2 * (self.M + 2 * s) / 6

    def describe(self) -> dict:
        return {"family": "logistic", "kappa": self.kappa, "M": self.M}


class CustomGrowth(GrowthFunction):
    """User-supplied ``f`` with its antiderivative ``F``.

    The concavity assumptions are checked on a sample grid: ``f(M) ~ 0``,
    ``f >= 0`` and ``f'' < 0`` on ``[0, M]``.
    """

    def __init__(self, f: Callable, F: Callable, M: float, fprime: Callable | None = None, samples: int = 401):
        if not M > 0:
            raise ValueError("M must be positive")
        self._f, self._F, self._fp = f, F, fprime
        self.M = float(M)
        s = np.linspace(0.0, self.M, samples)
        values = np.array([float(f(x)) for x in s])
        scale = max(float(np.max(np.abs(values))), 1e-300)
        if abs(values[-1]) > 1e-9 * scale:
            raise ValueError("growth function must vanish at M")
        if np.any(values < -1e-12 * scale):
            raise ValueError("growth function must be nonnegative on [0, M]")
        second = np.diff(values, 2)
        if np.any(second >= 0):
            raise ValueError("growth function must be strictly concave on [0, M]")
        res = minimize_scalar(lambda x: -float(f(x)), bounds=(0.0, self.M), method="bounded",
                              options={"xatol": 1e-12 * self.M})
        self.u_max = float(res.x)
        self.K = float(f(self.u_max))
        slopes = np.abs(np.diff(values)) / (s[1] - s[0])
        # concave: the steepest slopes sit at the two ends
        self.lipschitz = float(max(slopes.max(), abs(self.fprime(0.0)), abs(self.fprime(self.M))))

    def f(self, u):
        return np.vectorize(self._f, otypes=[float])(u) if np.ndim(u) else float(self._f(u))

    def fprime(self, u):
        if self._fp is not None:
            return np.vectorize(self._fp, otypes=[float])(u) if np.ndim(u) else float(self._fp(u))
        eps = 1e-6 * self.M
        return (self.f(np.asarray(u) + eps) - self.f(np.asarray(u) - eps)) / (2 * eps)

    def F(self, s):
        return np.vectorize(self._F, otypes=[float])(s) if np.ndim(s) else float(self._F(s))


# ---------------------------------------------------------------------------
# grid and field
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HalfSpaceGrid:
    """Nodes ``h * (i_1, ..., i_{d-1}, k)`` with ``|i_j| <= N``, ``-N <= k <= 0``."""

    d: int
    L: float
    h: float

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("dimension must be at least 2")
        if not (self.h > 0 and self.L > 0):
            raise ValueError("grid needs h > 0 and L > 0")
        ratio = self.L / self.h
        if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0) or round(ratio) < 2:
            raise ValueError(f"L/h must be an integer >= 2, got {ratio}")

    @classmethod
    def for_measure(cls, mu: DiscreteMeasure, h: float, factor: float = 4.0, minimum: float = 1.0) -> HalfSpaceGrid:
        L = max(factor * support_radius(mu), minimum)
        return cls(mu.dim, math.ceil(L / h - 1e-9) * h, h)

    @property
    def N(self) -> int:
        return int(round(self.L / self.h))

    @property
    def shape(self) -> tuple[int, ...]:
        """Shape of the full node array, boundary included."""
        return (2 * self.N + 1,) * (self.d - 1) + (self.N + 1,)

    @property
    def unknown_shape(self) -> tuple[int, ...]:
        return (2 * self.N - 1,) * (self.d - 1) + (self.N,)

    def scaled(self, lam: float) -> HalfSpaceGrid:
        return HalfSpaceGrid(self.d, self.L * lam, self.h * lam)

    def node_coordinates(self) -> np.ndarray:
        """(n_nodes, d) coordinates in C order of :attr:`shape`."""
        axes = [np.arange(-self.N, self.N + 1) * self.h] * (self.d - 1) + [np.arange(-self.N, 1) * self.h]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def control_volume(self) -> np.ndarray:
        """Dual-cell volume of each unknown node (halved on the surface)."""
        vol = np.full(self.unknown_shape, self.h**self.d)
        vol[..., -1] *= 0.5
        return vol

    def locate(self, mu: DiscreteMeasure, exclude_origin: bool = False) -> np.ndarray:
        """Unknown-array multi-indices (n_atoms, d) of the node nearest to each atom."""
        if mu.dim != self.d:
            raise ValueError("measure and grid dimensions differ")
        if len(mu) == 0:
            return np.zeros((0, self.d), dtype=np.int64)
        x = mu.positions
        above = x[:, -1] > 0
        if np.any(above):
            k = int(np.argmax(above))
            raise ExtentError(f"atom {k} at {x[k].tolist()} lies above the surface x_d = 0")
        idx = np.rint(x / self.h).astype(np.int64)
        N = self.N
        bad = np.any(np.abs(idx[:, :-1]) > N - 1, axis=1) | (idx[:, -1] < -N + 1)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise ExtentError(f"atom {k} at {x[k].tolist()} lies outside the solvable box (L = {self.L})")
        if exclude_origin:
            at0 = np.all(idx == 0, axis=1)
            if np.any(at0):
                k = int(np.argmax(at0))
                raise ExtentError(f"atom {k} at {x[k].tolist()} falls in the origin cell")
        out = idx.copy()
        out[:, :-1] += N - 1
        out[:, -1] += N - 1
        return out


@dataclass(frozen=True)
class ScalarField:
    grid: HalfSpaceGrid
    values: np.ndarray  # full node array of shape grid.shape
    diagnostics: dict = field(default_factory=dict)

    def unknowns(self) -> np.ndarray:
        inner = tuple(slice(1, -1) for _ in range(self.grid.d - 1)) + (slice(1, None),)
        return self.values[inner]

    def at(self, points) -> np.ndarray:
        """Values at the nodes nearest to ``points``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.rint(pts / self.grid.h).astype(np.int64)
        idx[:, :-1] += self.grid.N
        idx[:, -1] += self.grid.N
        return self.values[tuple(idx.T)]

    def to_csv(self) -> str:
        coords = self.grid.node_coordinates()
        out = io.StringIO()
        out.write(",".join([f"x{i + 1}" for i in range(self.grid.d)] + ["u"]) + "\n")
        for c, v in zip(coords, self.values.reshape(-1)):
            out.write(",".join(repr(float(t)) for t in (*c, v)) + "\n")
        return out.getvalue()

    def diagnostics_json(self) -> str:
        return json.dumps(self.diagnostics, sort_keys=True, indent=2)


def parse_field_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
    return data[:, :-1], data[:, -1]


def deposit_density(mu: DiscreteMeasure, grid: HalfSpaceGrid, exclude_origin: bool = False) -> np.ndarray:
    """Atom masses divided by the control volume of their nearest node."""
    rho = np.zeros(grid.unknown_shape)
    idx = grid.locate(mu, exclude_origin=exclude_origin)
    if len(mu):
        np.add.at(rho, tuple(idx.T), mu.masses)
        rho /= grid.control_volume()
    return rho


@lru_cache(maxsize=16)
def _laplacian(d: int, N: int, h: float) -> sp.csc_matrix:
    """Discrete Laplacian on the unknown nodes (Dirichlet neighbours dropped)."""
    n_lat = 2 * N - 1
    lat = sp.diags([np.ones(n_lat - 1), -2 * np.ones(n_lat), np.ones(n_lat - 1)], [-1, 0, 1])
    vert = sp.diags([np.ones(N - 1), -2 * np.ones(N), np.ones(N - 1)], [-1, 0, 1]).tolil()
    vert[N - 1, N - 2] = 2.0  # reflected ghost above the surface
    vert = vert.tocsr()
    factors = [sp.identity(n_lat)] * (d - 1) + [sp.identity(N)]
    A = sp.csr_matrix((n_lat ** (d - 1) * N,) * 2)
    for axis in range(d):
        mats = list(factors)
        mats[axis] = lat if axis < d - 1 else vert
        term = mats[0]
        for m in mats[1:]:
            term = sp.kron(term, m, format="csr")
        A = A + term
    return (A / h**2).tocsc()


def _residual(A, g, u, rho, f: GrowthFunction, sigma, a, b):
    return sigma * (A @ u + g) + a * f.f(b * u) - rho * u


def solve_state(
    mu: DiscreteMeasure,
    f: GrowthFunction,
    grid: HalfSpaceGrid,
    sigma: float = 1.0,
    a: float = 1.0,
    b: float = 1.0,
    tol: float = 1e-9,
    max_iter: int = 500,
    newton: bool = True,
    exclude_origin: bool = False,
) -> ScalarField:
    """Maximal solution of the discrete state equation.

    Newton steps are taken while they keep the iterates nonincreasing and
    nonnegative; otherwise a monotone Picard step (one sparse factorization,
    reused) is used.  Raises SolverError with the residual history if the
    sup-norm residual is still above ``tol`` after ``max_iter`` steps.
    """
    if not (sigma > 0 and a > 0 and b > 0):
        raise ValueError("sigma, a and b must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    top = f.M / b
    rho = deposit_density(mu, grid, exclude_origin=exclude_origin).reshape(-1)
    A = _laplacian(grid.d, grid.N, grid.h)
    ones = np.ones(A.shape[0])
    g = -top * (A @ ones)
    u = top * ones
    history: list[float] = []
    res = _residual(A, g, u, rho, f, sigma, a, b)
    history.append(float(np.max(np.abs(res))))
    picard = None
    lam = a * b * f.lipschitz
    steps = 0
    while history[-1] >= tol:
        if steps >= max_iter:
            raise SolverError(f"state solve did not converge in {max_iter} iterations", history)
        steps += 1
        candidate = None
        if newton:
            J = (sigma * A + sp.diags(a * b * f.fprime(b * u) - rho)).tocsc()
            try:
                step = splu(J).solve(-res)
                trial = u + step
                slack = 1e-12 * top
                if np.all(np.isfinite(trial)) and np.all(trial <= u + slack) and np.all(trial >= -slack):
                    candidate = np.clip(trial, 0.0, u)
            except RuntimeError:
                candidate = None
            if candidate is None:
                newton = False
        if candidate is None:
            if picard is None:
                picard = splu((-sigma * A + sp.diags(lam + rho)).tocsc())
            candidate = picard.solve(sigma * g + a * f.f(b * u) + lam * u)
        u = candidate
        res = _residual(A, g, u, rho, f, sigma, a, b)
        history.append(float(np.max(np.abs(res))))

    full = np.full(grid.shape, top)
    inner = tuple(slice(1, -1) for _ in range(grid.d - 1)) + (slice(1, None),)
    full[inner] = u.reshape(grid.unknown_shape)
    diag = {"iterations": steps, "residual": history[-1], "h": grid.h, "L": grid.L}
    return ScalarField(grid, full, diag)


def harvest_value(u: ScalarField, mu: DiscreteMeasure) -> float:
    """``sum_atoms m * u(node of atom)``."""
    if len(mu) == 0:
        return 0.0
    return math.fsum(mu.masses * u.at(mu.positions))


def harvest_in_ball(u: ScalarField, mu: DiscreteMeasure, rho: float) -> float:
    keep = mu.radii <= rho
    if not np.any(keep):
        return 0.0
    return math.fsum(mu.masses[keep] * u.at(mu.positions[keep]))


@dataclass(frozen=True)
class HarvestBalance:
    harvest: float
    growth_sum: float  # sum a f(bu) h^d over unknown nodes
    growth_volume: float  # same with control-volume weights
    boundary_flux: float  # inflow through the Dirichlet faces

    @property
    def residual(self) -> float:
        return self.harvest - self.growth_sum


def harvest_balance(u: ScalarField, mu: DiscreteMeasure, f: GrowthFunction,
                    sigma: float = 1.0, a: float = 1.0, b: float = 1.0) -> HarvestBalance:
    """Both sides of ``int u dmu = int a f(bu) dx`` on the grid.

    On the grid ``harvest = growth_volume + boundary_flux`` holds up to the
    solver residual; the plain ``h^d`` sum differs from it by half the surface
    row, which is first order in ``h``.
    """
    grid = u.grid
    vals = u.unknowns().reshape(-1)
    growth = a * f.f(b * vals)
    vol = grid.control_volume().reshape(-1)
    A = _laplacian(grid.d, grid.N, grid.h)
    top = f.M / b
    g = -top * (A @ np.ones(A.shape[0]))
    flux = sigma * float(np.dot(vol, A @ vals + g))
    return HarvestBalance(
        harvest=harvest_value(u, mu),
        growth_sum=math.fsum(growth * grid.h**grid.d),
        growth_volume=math.fsum(growth * vol),
        boundary_flux=flux,
    )


# ---------------------------------------------------------------------------
# radial profile and analytic bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PsiProfile:
    """Tabulated solution of ``psi'' + f(psi) = 0``, ``psi(0) = 0``, ``psi -> M``."""

    f: GrowthFunction
    dr: float
    r: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray  # derivative carried as an independent channel
    F_M: float
    gamma: float

    def energy(self) -> np.ndarray:
        return 0.5 * self.dpsi**2 + self.f.F(self.psi)

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    @property
    def decay(self) -> float:
        return math.sqrt(2 * self.gamma)

    def __call__(self, s):
        return np.interp(s, self.r, self.psi, left=0.0)

    def lower(self, s) -> np.ndarray:
        """A lower bound for psi valid on all of R: the table value at the grid
        point below ``s``, continued past ``r_max`` by the exponential bound."""
        s = np.asarray(s, dtype=float)
        j = np.clip(np.floor(s / self.dr).astype(np.int64), 0, len(self.r) - 1)
        out = np.where(s <= 0, 0.0, self.psi[j])
        beyond = s > self.r_max
        if np.any(beyond):
            gap = self.f.M - self.psi[-1]
            out = np.where(beyond, self.f.M - gap * np.exp(-self.decay * (s - self.r_max)), out)
        return out


def _rk4(rhs, y0: np.ndarray, dr: float, n: int) -> np.ndarray:
    ys = np.empty((n + 1, y0.shape[0]))
    ys[0] = y = y0
    for i in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dr * k1)
        k3 = rhs(y + 0.5 * dr * k2)
        k4 = rhs(y + dr * k3)
        y = y + dr / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[i + 1] = y
    return ys


def psi_profile(f: GrowthFunction, r_max: float = 20.0, dr: float = 1e-3, rtol: float = 1e-9) -> PsiProfile:
    """Integrate ``psi' = sqrt(2 (F(M) - F(psi)))`` with classical RK4.

    ``psi'`` is carried separately through ``p' = -f(psi)`` so the energy
    ``p^2/2 + F(psi)`` is an honest check.  The same run at step ``2 dr``
    gives a Richardson error estimate; PsiStepError if it exceeds ``rtol * M``.
    """
    if not (r_max > 0 and dr > 0):
        raise ValueError("r_max and dr must be positive")
    n = int(math.ceil(r_max / dr - 1e-9))
    if n < 4:
        raise PsiStepError("dr is too large relative to r_max")
    n += n % 2
    M = f.M

    def rhs(y):
        gap = max(float(f.energy_gap(min(y[0], M))), 0.0)
        return np.array([math.sqrt(2.0 * gap), -float(f.f(y[0]))])

    y0 = np.array([0.0, math.sqrt(2.0 * float(f.energy_gap(0.0)))])
    fine = _rk4(rhs, y0, dr, n)
    coarse = _rk4(rhs, y0, 2 * dr, n // 2)
    err = float(np.max(np.abs(fine[::2, 0] - coarse[:, 0]))) / 15.0
    if err > rtol * M:
        raise PsiStepError(f"profile step dr = {dr} gives estimated error {err:.2e} > {rtol * M:.2e}")
    r = np.arange(n + 1) * dr
    psi, dpsi = fine[:, 0], fine[:, 1]
    mask = (M - psi) > 1e-6 * M
    ratio = f.energy_gap(psi[mask]) / (M - psi[mask]) ** 2
    gamma = float(np.min(ratio))
    return PsiProfile(f=f, dr=dr, r=r, psi=psi, dpsi=dpsi, F_M=float(f.F(M)), gamma=gamma)


def _poly_integral(lo, hi, shift: float, k: int):
    """``int_lo^hi (shift + s)^k ds``."""
    return ((shift + hi) ** (k + 1) - (shift + lo) ** (k + 1)) / (k + 1)


def _exp_tail(start: float, shift: float, rate: float, k: int) -> float:
    """``int_start^inf (shift + s)^k exp(-rate (s - start)) ds``."""
    base = shift + start
    return sum(math.factorial(k) / math.factorial(k - j) * base ** (k - j) / rate ** (j + 1) for j in range(k + 1))


def _profile_upper_sum(profile: PsiProfile, shift: float, d: int, start_index: int = 0) -> float:
    """Upper bound of ``int_{r_j}^inf (shift + s)^(d-1) fhat(psi(s)) ds``
    from table index ``start_index`` on."""
    f = profile.f
    r = profile.r[start_index:]
    fh = f.fhat(profile.psi[start_index:-1])
    body = float(np.sum(fh * _poly_integral(r[:-1], r[1:], shift, d - 1)))
    # past the table: fhat(psi) <= L_f (M - psi) <= L_f (M - psi(r_max)) e^{-k (s - r_max)}
    gap = f.M - profile.psi[-1]
    if profile.psi[-1] >= f.u_max:
        tail = f.lipschitz * gap * _exp_tail(profile.r_max, shift, profile.decay, d - 1)
    else:
        tail = math.inf
    return body + tail


_PROFILE_CACHE: dict = {}


def default_profile(f: GrowthFunction) -> PsiProfile:
    key = repr(f.describe()) if isinstance(f, Logistic) else id(f)
    if key not in _PROFILE_CACHE:
        _PROFILE_CACHE[key] = psi_profile(f)
    return _PROFILE_CACHE[key]


def ball_harvest_bound(rho: float, f: GrowthFunction, d: int, profile: PsiProfile | None = None) -> float:
    """Upper bound on the harvest of any measure supported in the closed ball
    of radius ``rho`` (values below 1 are raised to 1)::

        |S^(d-1)|/2 * int_0^inf r^(d-1) fhat(psi(r - rho)) dr
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    profile = default_profile(f) if profile is None else profile
    rho = max(float(rho), 1.0)
    inner = f.K * rho**d / d
    outer = _profile_upper_sum(profile, rho, d)
    return 0.5 * sphere_area(d) * (inner + outer)


@dataclass(frozen=True)
class SmallBallBound:
    value: float
    R: float | None
    fallback: bool


def small_ball_detail(rho: float, f: GrowthFunction, d: int, R_grid=None,
                      profile: PsiProfile | None = None, n_inner: int = 4000) -> SmallBallBound:
    """Harvest bound for measures in a small ball of radius ``rho``.

    For each matching radius ``R`` the subsolution is 0 on the ball, the
    harmonic profile through ``(rho, 0)`` and ``(R, psi(R))`` in between and
    ``psi`` beyond ``R``.  ``R`` is admissible when the harmonic slope at ``R``
    does not exceed ``psi'(R)``.  The smallest bound over admissible ``R`` is
    returned, never above the ball bound of radius ``max(rho, 1)``.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    profile = default_profile(f) if profile is None else profile
    cap = ball_harvest_bound(max(rho, 1.0), f, d, profile)
    if R_grid is None:
        lo = max(2 * rho, 2 * profile.dr)
        R_grid = np.geomspace(lo, profile.r_max / 2, 120) if lo < profile.r_max / 2 else np.array([])
    idx = np.unique(np.ceil(np.asarray(R_grid, dtype=float) / profile.dr - 1e-9).astype(np.int64))
    idx = idx[(idx > 0) & (idx < len(profile.r) - 1) & (profile.r[np.clip(idx, 0, len(profile.r) - 1)] > rho)]
    best, best_R = math.inf, None
    # suffix sums of the table part of the psi tail, weights r^(d-1)
    fh = f.fhat(profile.psi[:-1])
    seg = fh * _poly_integral(profile.r[:-1], profile.r[1:], 0.0, d - 1)
    suffix = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    tail_end = _profile_upper_sum(profile, 0.0, d, len(profile.r) - 1)
    for j in idx:
        R = float(profile.r[j])
        psiR = float(profile.psi[j])
        if d == 2:
            slope = psiR / (R * math.log(R / rho))
        else:
            slope = psiR * (d - 2) * R ** (1 - d) / (rho ** (2 - d) - R ** (2 - d))
        if slope > profile.dpsi[j]:
            continue
        t = np.geomspace(rho, R, n_inner)
        if d == 2:
            U = psiR * np.log(t / rho) / math.log(R / rho)
        else:
            U = psiR * (rho ** (2 - d) - t ** (2 - d)) / (rho ** (2 - d) - R ** (2 - d))
        middle = float(np.sum(f.fhat(U[:-1]) * _poly_integral(t[:-1], t[1:], 0.0, d - 1)))
        value = 0.5 * sphere_area(d) * (f.K * rho**d / d + middle + suffix[j] + tail_end)
        if value < best:
            best, best_R = value, R
    if best_R is None:
        return SmallBallBound(cap, None, True)
    if best > cap:
        return SmallBallBound(cap, best_R, False)
    return SmallBallBound(best, best_R, False)


def small_ball_bound(rho: float, f: GrowthFunction, d: int, R_grid=None) -> float:
    return small_ball_detail(rho, f, d, R_grid).value
