"""Shift-averaged fractional weight fields.

For a fixed palm configuration, running the transport with shift ``v``
yields a partition of the top box containing the origin; each point's cell
indicator, averaged over uniformly sampled shifts in ``[0, 2^n)^d``, gives
a per-center weight function with values in ``[0, 1]``.  Wherever the grid
is covered by every sampled window the weights sum to one exactly, since
each shift contributes a true partition.

Fields are discretized at grid-cell centers; mass accounting multiplies by
``h^d``.  Coverage is tracked per grid point: a window whose boundary cuts
the grid simply does not contribute there, and sum-to-one is only asserted
at fully covered points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Cuboid, as_point, diameter_with_anchor
from .pointprocess import Configuration
from .transport import EmptyWindowError, run_akt

__all__ = [
    "FractionalField",
    "GridSpec",
    "average_field",
    "average_fields",
    "l1_distance",
    "periodicity_check",
    "sample_shifts",
]

SUM_TO_ONE_ATOL = 1e-9
PERIODICITY_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Regular grid of cell centers over ``window`` with spacing ``h``."""

    window: Cuboid
    spacing: float

    def __post_init__(self):
        h = float(self.spacing)
        if not (h > 0):
            raise ValueError("grid spacing must be positive")
        counts = self.window.sides / h
        if np.any(np.abs(counts - np.round(counts)) > 1e-9) or np.any(np.round(counts) < 1):
            raise ValueError("window sides must be positive integer multiples of the spacing")
        object.__setattr__(self, "spacing", h)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(round(s)) for s in self.window.sides / self.spacing)

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_measure(self) -> float:
        return self.spacing ** self.dim

    def axis_centers(self, j: int) -> np.ndarray:
        m = self.shape[j]
        return self.window.lower[j] + (np.arange(m) + 0.5) * self.spacing

    def centers(self) -> np.ndarray:
        """All grid-cell centers, shape ``(n_cells, d)`` in C order."""
        axes = [self.axis_centers(j) for j in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def same_grid(self, other: "GridSpec") -> bool:
        return (
            self.shape == other.shape
            and abs(self.spacing - other.spacing) <= 1e-12
            and self.window.approx_equal(other.window, tol=1e-12)
        )

    def to_json(self) -> dict:
        return {"window": self.window.to_json(), "spacing": self.spacing}

    @classmethod
    def from_json(cls, obj: dict) -> "GridSpec":
        return cls(Cuboid.from_json(obj["window"]), float(obj["spacing"]))


@dataclass
class FractionalField:
    """Grid-discretized per-center weights averaged over ``n_shifts`` runs.

    ``weights`` maps a configuration point index to a dense array over the
    grid; ``coverage`` counts how many sampled windows contained each grid
    point.  ``centers`` are the configuration points the indices refer to.
    """

    grid: GridSpec
    stage: int
    n_shifts: int
    centers: np.ndarray
    origin_id: int | None
    weights: dict[int, np.ndarray] = field(default_factory=dict)
    coverage: np.ndarray | None = None

    def __post_init__(self):
        if self.coverage is None:
            self.coverage = np.zeros(self.grid.shape, dtype=np.int32)

    def covered(self) -> np.ndarray:
        """Mask of grid points covered by every sampled window."""
        return self.coverage == self.n_shifts

    def weight_total(self) -> np.ndarray:
        total = np.zeros(self.grid.shape)
        for w in self.weights.values():
            total += w
        return total

    def sum_to_one_defect(self) -> float:
        """Worst ``|sum of weights - 1|`` over fully covered grid points."""
        mask = self.covered()
        if not mask.any():
            raise ValueError("no grid point is covered by all sampled windows")
        return float(np.max(np.abs(self.weight_total()[mask] - 1.0)))

    def center_mass(self, center_id: int) -> float:
        w = self.weights.get(center_id)
        return 0.0 if w is None else float(w.sum() * self.grid.cell_measure)

    def support_diameter(self, center_id: int, floor: float = 0.0) -> float:
        """Diameter of the on-grid support together with the center itself
        (exact pairwise maximum over support grid centers and the center)."""
        w = self.weights.get(center_id)
        if w is None or not (w > floor).any():
            return 0.0
        pts = self.grid.centers()[(w > floor).ravel()]
        pts = np.vstack([pts, self.centers[center_id][None, :]])
        best = 0.0
        for p in pts:
            best = max(best, float(np.max(np.linalg.norm(pts - p, axis=1))))
        return best

    def to_json(self) -> dict:
        sparse = {}
        for cid, w in sorted(self.weights.items()):
            flat = w.ravel()
            nz = np.flatnonzero(flat)
            sparse[str(cid)] = [[int(i), float(flat[i])] for i in nz]
        return {
            "grid": self.grid.to_json(),
            "stage": self.stage,
            "n_shifts": self.n_shifts,
            "origin_id": self.origin_id,
            "centers": self.centers.tolist(),
            "coverage": self.coverage.ravel().tolist(),
            "weights": sparse,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FractionalField":
        grid = GridSpec.from_json(obj["grid"])
        weights = {}
        for cid, entries in obj["weights"].items():
            w = np.zeros(grid.n_cells)
            for i, val in entries:
                w[int(i)] = float(val)
            weights[int(cid)] = w.reshape(grid.shape)
        coverage = np.asarray(obj["coverage"], dtype=np.int32).reshape(grid.shape)
        return cls(
            grid=grid,
            stage=int(obj["stage"]),
            n_shifts=int(obj["n_shifts"]),
            centers=np.asarray(obj["centers"], float),
            origin_id=obj.get("origin_id"),
            weights=weights,
            coverage=coverage,
        )

    def summary_csv(self) -> str:
        """Per-center summary: total mass, support bounding box, support diameter."""
        d = self.grid.dim
        header = (
            ["center_id", "mass"]
            + [f"support_lo_{j}" for j in range(d)]
            + [f"support_hi_{j}" for j in range(d)]
            + ["support_diameter"]
        )
        lines = [",".join(header)]
        gc = self.grid.centers()
        for cid in sorted(self.weights):
            w = self.weights[cid].ravel()
            nz = w > 0
            mass = float(w.sum() * self.grid.cell_measure)
            if nz.any():
                pts = gc[nz]
                lo = pts.min(axis=0)
                hi = pts.max(axis=0)
                diam = diameter_with_anchor(Cuboid(lo, hi), self.centers[cid])
            else:
                lo = hi = np.full(d, np.nan)
                diam = 0.0
            row = [str(cid), repr(mass)]
            row += [repr(float(x)) for x in lo] + [repr(float(x)) for x in hi]
            row.append(repr(float(diam)))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def sample_shifts(stage: int, count: int, dim: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. uniform lattice shifts in ``[0, 2^stage)^dim``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.random((count, dim)) * (2.0 ** stage)


def _axis_slices(grid: GridSpec, lower: np.ndarray, upper: np.ndarray):
    """Grid index slice per axis of the centers in ``[lower, upper)``."""
    slices = []
    for j in range(grid.dim):
        ax = grid.axis_centers(j)
        i0 = int(np.searchsorted(ax, lower[j], side="left"))
        i1 = int(np.searchsorted(ax, upper[j], side="left"))
        if i1 <= i0:
            return None
        slices.append(slice(i0, i1))
    return tuple(slices)


def _grid_boxes(grid: GridSpec, v: np.ndarray, stage: int):
    """Corners of the lattice boxes of ``v + 2^stage Z^d`` meeting the grid.

    Per axis the corner coordinates come from one shared array, so adjacent
    boxes share their face coordinate bit-for-bit and the boxes partition
    the grid exactly.
    """
    side = 2.0 ** stage
    axes = []
    for j in range(grid.dim):
        glo = grid.window.lower[j]
        ghi = grid.window.upper[j]
        k0 = int(np.floor((glo - v[j]) / side))
        k1 = int(np.ceil((ghi - v[j]) / side))
        axes.append(v[j] + np.arange(k0, k1 + 1) * side)
    for combo in np.ndindex(*(len(a) - 1 for a in axes)):
        lo = np.array([axes[j][combo[j]] for j in range(grid.dim)])
        hi = np.array([axes[j][combo[j] + 1] for j in range(grid.dim)])
        yield lo, hi


def _rasterize_cells(
    fld: FractionalField,
    rep,
    lower: np.ndarray,
    upper: np.ndarray,
    box_lo: np.ndarray,
    box_hi: np.ndarray,
    win_lo: np.ndarray,
    win_hi: np.ndarray,
    w_shift: float,
):
    """Add one shift's owned-cell indicators to the field weights.

    Outermost cells keep the run window's boundary exactly, so those
    coordinates are substituted with the shared per-axis corner values;
    adjacent boxes then tile the grid without float dust on common faces.
    """
    grid = fld.grid
    lo_eff = np.where(lower == win_lo, box_lo, lower)
    hi_eff = np.where(upper == win_hi, box_hi, upper)
    touching = (
        rep.owned_mask()
        & np.all(lo_eff < grid.window.upper, axis=1)
        & np.all(hi_eff > grid.window.lower, axis=1)
    )
    for row in np.flatnonzero(touching):
        slices = _axis_slices(grid, lo_eff[row], hi_eff[row])
        if slices is None:
            continue
        cid = int(rep.point_ids[rep.cell_owner[row]])
        w = fld.weights.get(cid)
        if w is None:
            w = fld.weights.setdefault(cid, np.zeros(grid.shape))
        w[slices] += w_shift


def average_fields(
    config: Configuration,
    stages: list[int],
    shifts: np.ndarray,
    grid: GridSpec,
    require_coverage: bool = True,
) -> dict[int, FractionalField]:
    """Shift-averaged fields for several stages from shared runs.

    For each shift, the transport runs independently on every top box of
    the coarsest requested stage that meets the grid; the earlier stages
    are captured mid-run (their dynamics inside each sub-box are exactly
    the independent runs, since pairings never cross a coarser lattice
    wall).  Each owned cell adds ``1/M`` to its owner's weight on the grid
    centers it covers, so each shift contributes a true partition of the
    covered grid and the weights sum to one exactly wherever every shift
    contributed.

    Coverage bookkeeping is per stage: a sub-box that contains no point
    owns no mass, and its grid points are not covered for that shift.  The
    configuration's domain must contain every participating top box, else
    the box would be silently undersampled; that raises instead.

    Using one shift set for every stage is sound (the stage-``n`` cells
    are periodic in the shift with period ``2^n``) and couples the
    per-stage estimates, which sharpens difference diagnostics.
    """
    if not config.is_palm:
        raise ValueError("average_field requires a palm configuration")
    stages = sorted(set(int(n) for n in stages))
    if not stages:
        raise ValueError("need at least one stage")
    shifts = np.atleast_2d(np.asarray(shifts, float))
    if shifts.shape[1] != config.dim:
        raise ValueError("shift dimension mismatch")
    m = len(shifts)
    top = stages[-1]
    fields = {
        n: FractionalField(
            grid=grid,
            stage=n,
            n_shifts=m,
            centers=config.points.copy(),
            origin_id=config.origin_index,
        )
        for n in stages
    }
    w_shift = 1.0 / m
    dom = config.domain
    for v in shifts:
        for box_lo, box_hi in _grid_boxes(grid, v, top):
            if np.any(box_lo < dom.lower - 1e-9) or np.any(box_hi > dom.upper + 1e-9):
                raise ValueError(
                    "grid not covered: top box "
                    f"[{box_lo.tolist()}, {box_hi.tolist()}] exceeds the "
                    "configuration domain; enlarge the domain or shrink the grid"
                )
            try:
                rep = run_akt(
                    config, v, top,
                    anchor=box_lo + 2.0 ** (top - 1),
                    record_steps=False, keep_empty=False,
                    capture_stages=[n for n in stages if n < top],
                )
            except EmptyWindowError:
                continue
            caps = rep.stage_captures or {}
            caps[top] = (rep.cell_lower, rep.cell_upper, rep.cell_carried)
            for n in stages:
                lower, upper, _ = caps[n]
                _mark_coverage(fields[n], rep, n, box_lo, box_hi)
                _rasterize_cells(
                    fields[n], rep, lower, upper, box_lo, box_hi,
                    rep.window.lower, rep.window.upper, w_shift,
                )
    if require_coverage:
        for n, fld in fields.items():
            if not fld.covered().any():
                raise ValueError(
                    f"no grid point was covered by all {m} sampled shifts at stage {n} "
                    "(too many empty top boxes); increase the stage or intensity"
                )
    return fields


def _mark_coverage(fld: FractionalField, rep, stage: int, box_lo: np.ndarray, box_hi: np.ndarray):
    """Bump coverage on the stage-``stage`` sub-boxes that hold a point.

    Sub-box corner coordinates per axis come from one shared array whose
    endpoints are the top box's own corners, so adjacent sub-boxes (and
    adjacent top boxes) tile the grid exactly.
    """
    grid = fld.grid
    top_side = box_hi[0] - box_lo[0]
    n_sub = max(int(round(top_side / 2.0 ** stage)), 1)
    axes = []
    for j in range(grid.dim):
        ax = box_lo[j] + np.arange(n_sub + 1) * (2.0 ** stage)
        ax[-1] = box_hi[j]
        axes.append(ax)
    occupied = np.unique(rep.cell_unit_index[rep.owned_mask()] >> stage, axis=0)
    for sub in occupied:
        lo = np.array([axes[j][int(sub[j])] for j in range(grid.dim)])
        hi = np.array([axes[j][int(sub[j]) + 1] for j in range(grid.dim)])
        slices = _axis_slices(grid, lo, hi)
        if slices is not None:
            fld.coverage[slices] += 1


def average_field(
    config: Configuration,
    stage: int,
    shifts: np.ndarray,
    grid: GridSpec,
    require_coverage: bool = True,
) -> FractionalField:
    """Shift-averaged field for a single stage (see :func:`average_fields`)."""
    return average_fields(config, [stage], shifts, grid, require_coverage)[stage]


def l1_distance(a: FractionalField, b: FractionalField) -> float:
    """``h^d * sum over centers and grid of |a - b|`` (grids must match)."""
    if not a.grid.same_grid(b.grid):
        raise ValueError("fields live on different grids")
    total = 0.0
    for cid in sorted(set(a.weights) | set(b.weights)):
        wa = a.weights.get(cid)
        wb = b.weights.get(cid)
        if wa is None:
            total += float(np.abs(wb).sum())
        elif wb is None:
            total += float(np.abs(wa).sum())
        else:
            total += float(np.abs(wa - wb).sum())
    return total * a.grid.cell_measure


def periodicity_check(config: Configuration, v, stage: int, tol: float = PERIODICITY_ATOL) -> bool:
    """True iff the origin's cell is unchanged when the shift moves by one
    full top-box period along each axis."""
    if not config.is_palm:
        raise ValueError("periodicity_check requires a palm configuration")
    v = as_point(v)
    base = run_akt(config, v, stage, record_steps=False, keep_empty=False)
    r0 = base.origin_cell_row()
    period = 2.0 ** stage
    for j in range(config.dim):
        u = v.copy()
        u[j] += period
        other = run_akt(config, u, stage, record_steps=False, keep_empty=False)
        r1 = other.origin_cell_row()
        dev = max(
            float(np.max(np.abs(base.cell_lower[r0] - other.cell_lower[r1]))),
            float(np.max(np.abs(base.cell_upper[r0] - other.cell_upper[r1]))),
            float(np.max(np.abs(base.cell_carried[r0] - other.cell_carried[r1]))),
        )
        if dev > tol:
            return False
    return True
