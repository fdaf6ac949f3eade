"""Captured sunlight of a discrete measure.

For a light direction ``n`` the atoms are projected onto the hyperplane
orthogonal to ``n`` and binned into square cells of side ``h``.  A cell with
density ``Phi`` (mass per unit (d-1)-volume) absorbs ``1 - exp(-Phi)`` per unit
area, so the sunlight from direction ``n`` is ``sum_cells (1 - exp(-Phi)) h^(d-1)``.
The direction-integrated value weights each direction with a quadrature
weight times the light intensity ``eta(n)``.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .measures import DiscreteMeasure, support_radius

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class ExtentError(ValueError):
    """An atom falls outside the evaluation grid."""


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def ball_volume(k: int) -> float:
    """Volume of the unit ball in R^k."""
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1)


@dataclass(frozen=True)
class ProjectionGrid:
    """Cells ``[i h, (i+1) h)`` per transverse axis, covering ``[-extent, extent]``."""

    h: float
    extent: float
    dim: int  # transverse dimension d - 1

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("cell size h must be positive")
        if not self.extent > 0:
            raise ValueError("grid extent must be positive")
        if self.dim < 1:
            raise ValueError("transverse dimension must be at least 1")

    @classmethod
    def for_measure(cls, mu: DiscreteMeasure, h: float) -> ProjectionGrid:
        return cls(h=h, extent=support_radius(mu) + h, dim=mu.dim - 1)

    def scaled(self, lam: float) -> ProjectionGrid:
        return ProjectionGrid(self.h * lam, self.extent * lam, self.dim)


@dataclass(frozen=True)
class DirectionQuadrature:
    nodes: np.ndarray
    weights: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        eta = np.asarray(self.eta, dtype=float).reshape(-1)
        if not (nodes.shape[0] == weights.shape[0] == eta.shape[0]):
            raise ValueError("nodes, weights and eta differ in length")
        if np.any(np.abs(np.linalg.norm(nodes, axis=1) - 1.0) > 1e-12):
            raise ValueError("quadrature nodes must be unit vectors")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if np.any(eta < 0) or not np.all(np.isfinite(eta)):
            raise ValueError("light intensity must be finite and nonnegative")
        for name, arr in (("nodes", nodes), ("weights", weights), ("eta", eta)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def quadrature_norm(self) -> float:
        """Discrete stand-in for the L1 norm of eta."""
        return math.fsum(self.weights * self.eta)

    def scaled_intensity(self, factor: float) -> DirectionQuadrature:
        return DirectionQuadrature(self.nodes, self.weights, self.eta * factor)


def uniform_quadrature(d: int, K: int, eta_fn: Callable[[np.ndarray], float] | None = None) -> DirectionQuadrature:
    """Equal-weight directions: K equally spaced angles (d=2) or a Fibonacci
    sphere (d=3).  ``eta_fn`` defaults to constant intensity 1."""
    if K < 1:
        raise ValueError("need at least one quadrature node")
    if d == 2:
        theta = 2.0 * math.pi * np.arange(K) / K
        nodes = np.column_stack([np.cos(theta), np.sin(theta)])
        weight = 2.0 * math.pi / K
    elif d == 3:
        k = np.arange(K)
        z = 1.0 - (2.0 * k + 1.0) / K
        rho = np.sqrt(1.0 - z * z)
        phi = k * GOLDEN_ANGLE
        nodes = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
        weight = 4.0 * math.pi / K
    else:
        raise ValueError(f"uniform quadrature is available for d = 2, 3, not {d}")
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    eta = np.ones(K) if eta_fn is None else np.array([float(eta_fn(n)) for n in nodes])
    return DirectionQuadrature(nodes, np.full(K, weight), eta)


def transverse_basis(n) -> np.ndarray:
    """Orthonormal basis (rows) of the hyperplane orthogonal to ``n``.

    Coordinate axes are taken in order of increasing ``|n . e_i|`` (ties by
    index); the axis most aligned with ``n`` is dropped and the rest are
    Gram-Schmidt orthonormalized against ``n``.
    """
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    d = n.shape[0]
    axes = np.argsort(np.abs(n), kind="stable")[: d - 1]
    basis: list[np.ndarray] = []
    for i in axes:
        v = np.zeros(d)
        v[i] = 1.0
        v -= np.dot(v, n) * n
        for b in basis:
            v -= np.dot(v, b) * b
        basis.append(v / np.linalg.norm(v))
    return np.array(basis)


@dataclass(frozen=True)
class DensityMap:
    """Occupied cells of a projection: integer cell indices and densities."""

    cells: np.ndarray  # (k, d-1) integer
    phi: np.ndarray  # (k,)
    h: float
    direction: np.ndarray

    def total_mass(self) -> float:
        return math.fsum(self.phi * self.h ** self.cells.shape[1])

    def to_csv(self) -> str:
        k = self.cells.shape[1]
        out = io.StringIO()
        out.write(",".join([f"y{i + 1}" for i in range(k)] + ["phi"]) + "\n")
        centers = (self.cells + 0.5) * self.h
        for c, p in zip(centers, self.phi):
            out.write(",".join(repr(float(v)) for v in (*c, p)) + "\n")
        return out.getvalue()


def parse_density_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Cell centers and densities from :meth:`DensityMap.to_csv` output."""
    data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
    return data[:, :-1], data[:, -1]


def project_density(mu: DiscreteMeasure, n, grid: ProjectionGrid) -> DensityMap:
    n = np.asarray(n, dtype=float)
    if n.shape != (mu.dim,):
        raise ValueError("direction dimension does not match the measure")
    if grid.dim != mu.dim - 1:
        raise ValueError("grid dimension must be d - 1")
    basis = transverse_basis(n)
    if len(mu) == 0:
        return DensityMap(np.zeros((0, grid.dim), dtype=np.int64), np.zeros(0), grid.h, n)
    y = mu.positions @ basis.T
    outside = np.any(np.abs(y) > grid.extent, axis=1)
    if np.any(outside):
        k = int(np.argmax(outside))
        raise ExtentError(
            f"atom {k} at {mu.positions[k].tolist()} projects outside the grid extent {grid.extent}"
        )
    idx = np.floor(y / grid.h).astype(np.int64)
    cells, inverse = np.unique(idx, axis=0, return_inverse=True)
    mass = np.zeros(cells.shape[0])
    np.add.at(mass, inverse.reshape(-1), mu.masses)
    return DensityMap(cells, mass / grid.h**grid.dim, grid.h, n)


def sunlight_from_density(density: DensityMap) -> float:
    area = density.h ** density.cells.shape[1]
    return math.fsum(-np.expm1(-density.phi) * area)


def sunlight_direction(mu: DiscreteMeasure, n, grid: ProjectionGrid) -> float:
    return sunlight_from_density(project_density(mu, n, grid))


def thread_count() -> int:
    env = os.environ.get("RAMI_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"RAMI_THREADS must be an integer, got {env!r}") from None
    return 1


def sunlight_per_direction(mu: DiscreteMeasure, quad: DirectionQuadrature, grid: ProjectionGrid) -> np.ndarray:
    if quad.dim != mu.dim:
        raise ValueError("quadrature dimension does not match the measure")
    active = [k for k in range(len(quad.eta)) if quad.eta[k] > 0]
    values = np.zeros(len(quad.eta))
    if len(mu) == 0 or not active:
        return values
    threads = min(thread_count(), len(active))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda k: sunlight_direction(mu, quad.nodes[k], grid), active))
    else:
        results = [sunlight_direction(mu, quad.nodes[k], grid) for k in active]
    values[active] = results
    return values


def sunlight_total(mu: DiscreteMeasure, quad: DirectionQuadrature, grid: ProjectionGrid) -> float:
    """``sum_k w_k eta_k S(mu, n_k)``, summed in node order."""
    per = sunlight_per_direction(mu, quad, grid)
    return math.fsum(quad.weights * quad.eta * per)


def sunlight_bounds(mu: DiscreteMeasure, quad: DirectionQuadrature, grid: ProjectionGrid) -> dict:
    """A priori upper bounds for :func:`sunlight_total`.

    ``mass``: norm * total mass.  ``sphere_radius``: norm * |S^(d-1)| R^(d-1).
    ``ball_radius``: norm * |B^(d-1)| R^(d-1).  ``grid_radius``: the
    ``ball_radius`` bound with R enlarged by one cell diagonal, which is what
    binning can actually guarantee.
    """
    norm = quad.quadrature_norm
    d = mu.dim
    R = support_radius(mu)
    return {
        "mass": norm * math.fsum(mu.masses),
        "sphere_radius": norm * sphere_area(d) * R ** (d - 1),
        "ball_radius": norm * ball_volume(d - 1) * R ** (d - 1),
        "grid_radius": norm * ball_volume(d - 1) * (R + grid.h * math.sqrt(d - 1)) ** (d - 1),
    }
