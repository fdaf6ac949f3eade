"""Finite positive atomic measures on R^d.

A :class:`DiscreteMeasure` is an immutable list of point masses.  Atoms that
share a position are merged on construction and stored in lexicographic order
of position, so two measures with the same atoms compare equal regardless of
how they were built.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np


class MeasureError(ValueError):
    """Invalid measure data (dimension mismatch, nonpositive mass, ...)."""


class MeasureParseError(MeasureError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message if row is None else f"{message} at row {row}")


class DiscreteMeasure:
    """Sum of Dirac masses ``sum_i m_i * delta_{x_i}`` in R^d, d >= 2."""

    __slots__ = ("_positions", "_masses")

    def __init__(self, positions, masses, dim: int | None = None):
        pos = np.asarray(positions, dtype=float)
        m = np.asarray(masses, dtype=float).reshape(-1)
        if pos.size == 0:
            if dim is None:
                if pos.ndim == 2 and pos.shape[1] > 0:
                    dim = pos.shape[1]
                else:
                    raise MeasureError("empty measure needs an explicit dim")
            pos = np.zeros((0, dim))
        if pos.ndim == 1:
            pos = pos.reshape(1, -1)
        if pos.ndim != 2:
            raise MeasureError("positions must be an (n, d) array")
        if dim is not None and pos.shape[1] != dim:
            raise MeasureError(f"positions have dimension {pos.shape[1]}, expected {dim}")
        if pos.shape[1] < 2:
            raise MeasureError("dimension must be at least 2")
        if pos.shape[0] != m.shape[0]:
            raise MeasureError("positions and masses differ in length")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(m))):
            raise MeasureError("non-finite position or mass")
        if np.any(m <= 0):
            raise MeasureError("every atom mass must be strictly positive")

        if pos.shape[0] > 0:
            # +0.0 folds -0.0 into 0.0 so the two never form separate atoms
            pos = pos + 0.0
            uniq, inverse = np.unique(pos, axis=0, return_inverse=True)
            merged = np.zeros(uniq.shape[0])
            np.add.at(merged, inverse.reshape(-1), m)
            pos, m = uniq, merged
        pos.setflags(write=False)
        m.setflags(write=False)
        self._positions = pos
        self._masses = m

    @classmethod
    def empty(cls, dim: int) -> DiscreteMeasure:
        return cls(np.zeros((0, dim)), np.zeros(0), dim=dim)

    @classmethod
    def _trusted(cls, positions: np.ndarray, masses: np.ndarray) -> DiscreteMeasure:
        # caller guarantees canonical (sorted, merged, positive) data
        obj = cls.__new__(cls)
        positions = np.array(positions, dtype=float)
        masses = np.array(masses, dtype=float)
        positions.setflags(write=False)
        masses.setflags(write=False)
        obj._positions = positions
        obj._masses = masses
        return obj

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    @property
    def masses(self) -> np.ndarray:
        return self._masses

    @property
    def dim(self) -> int:
        return self._positions.shape[1]

    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self._positions, axis=1)

    def __len__(self) -> int:
        return self._masses.shape[0]

    def __iter__(self):
        for x, m in zip(self._positions, self._masses):
            yield x, float(m)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self._positions, other._positions)
            and np.array_equal(self._masses, other._masses)
        )

    def __hash__(self):
        return hash((self.dim, self._positions.tobytes(), self._masses.tobytes()))

    def __add__(self, other: DiscreteMeasure) -> DiscreteMeasure:
        if self.dim != other.dim:
            raise MeasureError("cannot add measures of different dimension")
        return DiscreteMeasure(
            np.vstack([self._positions, other._positions]),
            np.concatenate([self._masses, other._masses]),
            dim=self.dim,
        )

    def __repr__(self) -> str:
        return f"DiscreteMeasure(dim={self.dim}, atoms={len(self)}, mass={total_mass(self):.6g})"

    def select(self, keep) -> DiscreteMeasure:
        """Sub-measure on the atoms flagged by the boolean array ``keep``."""
        keep = np.asarray(keep, dtype=bool)
        return DiscreteMeasure._trusted(self._positions[keep], self._masses[keep])


@dataclass(frozen=True)
class RegionSpec:
    """A region used to split a measure.

    kinds:
      ``ball``      closed ball ``|x| <= r``
      ``tail``      open exterior ``|x| > r`` (complement of ``ball``)
      ``shell``     ``2**-(j+1) < |x| <= 2**-j``
      ``halfspace`` ``sign * x[axis] >= 0``
    """

    kind: str
    r: float | None = None
    j: int | None = None
    sign: int = 1
    axis: int = -1

    def __post_init__(self):
        if self.kind in ("ball", "tail"):
            if self.r is None or not self.r > 0:
                raise MeasureError(f"{self.kind} region needs r > 0")
        elif self.kind == "shell":
            if self.j is None or int(self.j) != self.j:
                raise MeasureError("shell region needs an integer index j")
        elif self.kind == "halfspace":
            if self.sign not in (1, -1):
                raise MeasureError("halfspace sign must be +1 or -1")
        else:
            raise MeasureError(f"unknown region kind {self.kind!r}")

    @classmethod
    def ball(cls, r: float) -> RegionSpec:
        return cls("ball", r=float(r))

    @classmethod
    def tail(cls, r: float) -> RegionSpec:
        return cls("tail", r=float(r))

    @classmethod
    def shell(cls, j: int) -> RegionSpec:
        return cls("shell", j=int(j))

    @classmethod
    def halfspace(cls, sign: int = 1, axis: int = -1) -> RegionSpec:
        return cls("halfspace", sign=int(sign), axis=int(axis))

    def contains(self, positions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions, dtype=float)
        if self.kind == "halfspace":
            return self.sign * positions[:, self.axis] >= 0
        radii = np.linalg.norm(positions, axis=1)
        if self.kind == "ball":
            return radii <= self.r
        if self.kind == "tail":
            return radii > self.r
        outer = shell_radius(self.j)
        return (radii > shell_radius(self.j + 1)) & (radii <= outer)


def shell_radius(j: int) -> float:
    return math.ldexp(1.0, -int(j))


def total_mass(mu: DiscreteMeasure) -> float:
    return math.fsum(mu.masses)


def tail_mass(mu: DiscreteMeasure, r: float) -> float:
    """Mass of ``{|x| >= r}``."""
    if not r > 0:
        raise MeasureError("tail_mass needs r > 0")
    return math.fsum(mu.masses[mu.radii >= r])


def split(mu: DiscreteMeasure, region: RegionSpec) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    inside = region.contains(mu.positions)
    return mu.select(inside), mu.select(~inside)


def scale_mass(mu: DiscreteMeasure, lam: float) -> DiscreteMeasure:
    if not lam > 0:
        raise MeasureError("mass scale must be positive")
    return DiscreteMeasure._trusted(mu.positions, mu.masses * lam)


def dilate(mu: DiscreteMeasure, lam: float) -> DiscreteMeasure:
    """Push-forward under ``x -> lam * x``."""
    if not lam > 0:
        raise MeasureError("dilation factor must be positive")
    # lexicographic order is preserved by a positive scaling
    return DiscreteMeasure._trusted(mu.positions * lam, mu.masses)


def support_radius(mu: DiscreteMeasure) -> float:
    if len(mu) == 0:
        return 0.0
    return float(mu.radii.max())


def _parse_float(field: str, row: int) -> float:
    try:
        value = float(field)
    except ValueError:
        raise MeasureParseError(f"non-numeric field {field.strip()!r}", row) from None
    if not math.isfinite(value):
        raise MeasureParseError(f"non-finite field {field.strip()!r}", row)
    return value


def parse_measure(text: str, dim: int | None = None) -> DiscreteMeasure:
    """Read rows ``x_1,...,x_d,mass``.

    ``#`` lines and blank lines are skipped.  The first data row may be a
    header if none of its fields is numeric; its column count then fixes d.
    Row numbers in error messages are 1-based line numbers of ``text``.
    """
    rows: list[list[float]] = []
    ncols = None if dim is None else dim + 1
    seen_data = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = next(csv.reader([stripped]))
        if not seen_data:
            seen_data = True
            if not any(_is_number(f) for f in fields):
                if ncols is not None and len(fields) != ncols:
                    raise MeasureParseError(
                        f"header has {len(fields)} columns, expected {ncols}", lineno
                    )
                ncols = len(fields)
                continue
        if ncols is None:
            ncols = len(fields)
        if len(fields) != ncols:
            raise MeasureParseError(
                f"inconsistent column count {len(fields)} (expected {ncols})", lineno
            )
        values = [_parse_float(f, lineno) for f in fields]
        if values[-1] <= 0:
            raise MeasureParseError("nonpositive mass", lineno)
        rows.append(values)
    if ncols is None:
        raise MeasureParseError("no atoms and no header: dimension unknown")
    if ncols < 3:
        raise MeasureParseError(f"need at least 3 columns (d >= 2), got {ncols}")
    d = ncols - 1
    if not rows:
        return DiscreteMeasure.empty(d)
    data = np.array(rows)
    return DiscreteMeasure(data[:, :d], data[:, d], dim=d)


def _is_number(field: str) -> bool:
    try:
        float(field)
    except ValueError:
        return False
    return True


def emit_measure(mu: DiscreteMeasure) -> str:
    """CSV with a header row; floats in shortest round-trip form."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([f"x{i + 1}" for i in range(mu.dim)] + ["mass"])
    for x, m in mu:
        writer.writerow([repr(float(v)) for v in x] + [repr(m)])
    return out.getvalue()


def read_measure(path) -> DiscreteMeasure:
    with open(path, encoding="utf-8") as fh:
        return parse_measure(fh.read())


def write_measure(mu: DiscreteMeasure, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(emit_measure(mu))
