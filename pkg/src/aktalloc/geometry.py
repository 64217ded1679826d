"""Axis-aligned boxes, shifted dyadic lattices, and anchored diameters.

Everything downstream works with axis-aligned cuboids: lattice cubes, the
cells they deform into, and grid windows.  Points are plain float64 vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Cuboid",
    "ShiftedLattice",
    "as_point",
    "diameter_with_anchor",
    "lattice_cube_containing",
    "volume",
]

# Lattice levels outside this range would over/underflow the float grid.
MAX_ABS_LEVEL = 60


def as_point(p) -> np.ndarray:
    """Coerce ``p`` to a finite float64 coordinate vector."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"point must be a non-empty 1-d sequence, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"point has non-finite coordinates: {arr!r}")
    return arr


@dataclass(frozen=True, eq=False)
class Cuboid:
    """Axis-aligned box ``[lower, upper]``.

    Degenerate sides (``lower[i] == upper[i]``) are allowed: wall moves can
    collapse unowned cells to zero volume and they are kept for auditing.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = as_point(self.lower)
        hi = as_point(self.upper)
        if lo.shape != hi.shape:
            raise ValueError("lower/upper dimension mismatch")
        if np.any(hi < lo):
            raise ValueError(f"upper < lower in some axis: {lo} vs {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, p, half_open: bool = True) -> bool:
        """Membership test; ``half_open`` uses ``[lower, upper)`` per axis."""
        q = as_point(p)
        if half_open:
            return bool(np.all(q >= self.lower) and np.all(q < self.upper))
        return bool(np.all(q >= self.lower) and np.all(q <= self.upper))

    def corners(self) -> np.ndarray:
        """All 2^d corner points, lexicographic in the choice of lo/hi."""
        d = self.dim
        out = np.empty((1 << d, d))
        for j in range(d):
            period = 1 << (d - 1 - j)
            col = np.tile(np.repeat([self.lower[j], self.upper[j]], period), 1 << j)
            out[:, j] = col
        return out

    def translate(self, t) -> "Cuboid":
        t = as_point(t)
        return Cuboid(self.lower + t, self.upper + t)

    def approx_equal(self, other: "Cuboid", tol: float = 0.0) -> bool:
        return bool(
            np.all(np.abs(self.lower - other.lower) <= tol)
            and np.all(np.abs(self.upper - other.upper) <= tol)
        )

    def to_json(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Cuboid":
        return cls(np.asarray(obj["lower"], float), np.asarray(obj["upper"], float))

    @classmethod
    def cube(cls, corner, side: float) -> "Cuboid":
        lo = as_point(corner)
        return cls(lo, lo + float(side))

    def __repr__(self):
        return f"Cuboid({self.lower.tolist()}, {self.upper.tolist()})"


@dataclass(frozen=True, eq=False)
class ShiftedLattice:
    """The lattice of cubes ``shift + 2^level * Z^d`` (cube side ``2^level``)."""

    shift: np.ndarray
    level: int

    def __post_init__(self):
        object.__setattr__(self, "shift", as_point(self.shift))
        if abs(self.level) > MAX_ABS_LEVEL:
            raise ValueError(f"lattice level {self.level} out of range")

    @property
    def side(self) -> float:
        return 2.0 ** self.level

    def cube_containing(self, p) -> Cuboid:
        """The unique half-open lattice cube ``[lo, lo + side)`` containing ``p``.

        Points exactly on a lattice hyperplane belong to the cube on their
        upper side (half-open convention).
        """
        q = as_point(p)
        if q.size != self.shift.size:
            raise ValueError("point dimension does not match lattice shift")
        s = self.side
        lo = self.shift + s * np.floor((q - self.shift) / s)
        return Cuboid(lo, lo + s)


def volume(c: Cuboid) -> float:
    """Volume of ``c``; 0 for collapsed boxes."""
    return c.volume()


def lattice_cube_containing(lattice: ShiftedLattice, p) -> Cuboid:
    return lattice.cube_containing(p)


def diameter_with_anchor(c: Cuboid, anchor) -> float:
    """Diameter of ``{anchor} union c``: cells are measured together with
    the point they belong to, so a far-away anchor dominates the diagonal.

    Since ``c`` is convex this is ``max(diagonal, max corner-to-anchor)``.
    """
    a = as_point(anchor)
    if a.size != c.dim:
        raise ValueError("anchor dimension does not match cuboid")
    diag = float(np.linalg.norm(c.sides))
    far = np.maximum(np.abs(a - c.lower), np.abs(c.upper - a))
    return max(diag, float(np.linalg.norm(far)))
