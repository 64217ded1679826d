"""Dyadic wall-moving transport: equal-volume cells for point configurations.

The scheme runs on one top-level box of a shifted lattice ``v + 2^N Z^d``.
Unit lattice cubes holding at most one point become cells directly; cubes
holding several points are refined dyadically until every subcube holds at
most one, and the same scheme is run inside them (steps indexed by negative
stages) so the cube is equipartitioned among its points first.  A *step*
pairs adjacent boxes along one axis and moves their shared wall so the two
volumes match the point counts, remapping both halves affinely; a *stage*
is the d consecutive steps (axis d-1 first, descending) that double the box
side.  After stage N every owned cell has volume ``window / n_points``.

Engine notes:

- All coordinates are tracked relative to the window corner.  Lattice
  geometry is then exact dyadic floating point, and coordinates equal to a
  bisector are snapped onto the moved wall, so neighbouring cells share
  walls bit-for-bit.
- Each cell carries the integer corner of its birth cube on the finest
  refinement grid.  That index determines the cell's pairing box and half
  at every step, so no geometric predicates on deformed cells are needed.
- Empty sibling blocks produced by the refinement are kept as single audit
  cells instead of being subdivided; their dynamics are identical.  While a
  point is alone below some subcube its pairings are forced, so its carried
  position is advanced by closed-form doubling moves.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import Cuboid, ShiftedLattice, as_point, diameter_with_anchor
from .pointprocess import Configuration

__all__ = [
    "Cell",
    "EmptyWindowError",
    "RefinementDepthError",
    "RunReport",
    "StepRecord",
    "initialize_cells",
    "move_wall",
    "origin_cell",
    "run_akt",
    "run_stage",
]

DEFAULT_K_MAX = 40
# Hard cap on materialized unit cubes (memory guard for the audit cells).
_MAX_UNIT_CELLS = 1 << 24

VOLUME_RTOL = 1e-9
COORD_ATOL = 1e-12


class RefinementDepthError(ValueError):
    """Two points could not be separated within the allowed dyadic depth."""


class EmptyWindowError(ValueError):
    """The simulation window contains no configuration points."""


def _wall_fraction(n_left, n_total):
    """Volume fraction assigned to the left half: counts ratio, bisector when empty."""
    n_left = np.asarray(n_left, dtype=float)
    n_total = np.asarray(n_total, dtype=float)
    return np.where(n_total > 0, n_left / np.maximum(n_total, 1.0), 0.5)


@dataclass
class Cell:
    """One cell of the evolving partition.

    ``owner``/``carried`` are the original and transported positions of the
    point the cell belongs to (both ``None`` for audit cells of empty
    regions, which can only shrink toward volume zero).  ``unit_index`` is
    the window-local integer index of the initial lattice cube, ``depth``
    the refinement depth of the birth cube (side ``2**-depth``).
    """

    box: Cuboid
    owner: np.ndarray | None
    carried: np.ndarray | None
    owner_id: int | None
    unit_index: tuple[int, ...]
    depth: int

    @property
    def volume(self) -> float:
        return self.box.volume()


@dataclass
class StepRecord:
    """Audit record of one wall move.

    ``shifts`` lists ``(owner_id, coordinate_before, signed_shift)`` for
    every carried point inside the parent box.  The wall satisfies
    ``(new_wall - lo) / (hi - lo) == n_left / (n_left + n_right)``.
    """

    stage: int
    axis: int
    parent: Cuboid
    old_wall: float
    new_wall: float
    n_left: int
    n_right: int
    shifts: list[tuple[int, float, float]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "axis": self.axis,
            "parent": self.parent.to_json(),
            "old_wall": self.old_wall,
            "new_wall": self.new_wall,
            "n_left": self.n_left,
            "n_right": self.n_right,
            "shifts": [[int(i), b, s] for i, b, s in self.shifts],
        }


# ---------------------------------------------------------------------------
# Engine state


@dataclass
class _State:
    """Window-local cell arrays; row ``i < n_points`` owns point ``i``."""

    dim: int
    stages: int            # N: window side 2^N
    k_finest: int          # K: deepest refinement across crowded cubes
    idx: np.ndarray        # (m, d) int64 birth-cube corner, units of 2^-K
    level: np.ndarray      # (m,) int64: birth side 2^level
    lower: np.ndarray      # (m, d) float
    upper: np.ndarray      # (m, d) float
    carried: np.ndarray    # (m, d) float, NaN rows for ownerless cells
    owner_row: np.ndarray  # (m,) int64 point row, -1 ownerless
    depth: np.ndarray      # (m,) int64 birth refinement depth
    pts: np.ndarray        # (n, d) float original local positions
    pt_fi: np.ndarray      # (n, d) int64 finest-grid index of each point
    pt_k: np.ndarray       # (n,) refinement depth of the point's unit cube
    pt_delta: np.ndarray   # (n,) depth at which the point sits alone

    @property
    def n_points(self) -> int:
        return len(self.pts)


def _corner_offsets(d: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)


def _group_rows(ids: np.ndarray, bits: np.ndarray):
    """Group equal rows of an int array; returns (inverse, first_row)."""
    if ids.shape[1] == 1:
        key = ids[:, 0]
    elif int(bits.sum()) <= 62:
        key = ids[:, 0].copy()
        for j in range(1, ids.shape[1]):
            key <<= int(bits[j])
            key |= ids[:, j]
    else:
        _, first, inv = np.unique(ids, axis=0, return_index=True, return_inverse=True)
        return inv.ravel(), first
    _, first, inv = np.unique(key, return_index=True, return_inverse=True)
    return inv.ravel(), first


def _void_rows(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    return a.view([("", a.dtype)] * a.shape[1]).ravel()


class _Recorder:
    """Collects step records and cheap per-stage summaries during a run."""

    def __init__(self, keep_steps: bool):
        self.keep_steps = keep_steps
        self.steps: list[StepRecord] = []
        self.stage_max_shift: dict[int, float] = {}

    def note_shift(self, stage: int, deltas: np.ndarray):
        if deltas.size:
            m = float(np.max(np.abs(deltas)))
            if m > self.stage_max_shift.get(stage, 0.0):
                self.stage_max_shift[stage] = m


def _initial_state(pts: np.ndarray, stages: int, k_max: int, keep_empty: bool = True) -> _State:
    """Build the birth cells: singleton leaves of the lazy dyadic refinement
    plus (unless ``keep_empty`` is off) the empty sibling blocks and empty
    unit cubes.  Ownerless cells never influence wall positions, so dropping
    them changes no owned-cell dynamics, only the audit coverage."""
    n, d = pts.shape
    if keep_empty and stages * d > np.log2(_MAX_UNIT_CELLS):
        raise ValueError(f"window with 2^{stages * d} unit cubes is too large to materialize")
    iu = np.floor(pts).astype(np.int64)
    np.clip(iu, 0, (1 << stages) - 1, out=iu)

    delta = np.zeros(n, dtype=np.int64)
    empty_leaves: list[tuple[int, np.ndarray]] = []
    active = np.arange(n)
    ids = iu
    dep = 0
    inv0 = np.zeros(0, dtype=np.int64)
    while active.size:
        bits = np.full(d, max(stages + dep, 1), dtype=np.int64)
        inv, _ = _group_rows(ids, bits)
        if dep == 0:
            inv0 = inv
        counts = np.bincount(inv)
        shared = counts[inv] >= 2
        delta[active[~shared]] = dep
        survivors = active[shared]
        if survivors.size == 0:
            break
        if dep >= k_max:
            grp = inv[shared]
            pair = survivors[grp == grp[0]][:2]
            raise RefinementDepthError(
                f"points {pair.tolist()} are closer than 2^-{k_max}: {pts[pair].tolist()}"
            )
        if keep_empty:
            split = np.unique(ids[shared], axis=0)
            children = (split[:, None, :] * 2 + _corner_offsets(d)[None, :, :]).reshape(-1, d)
        dep += 1
        ids = np.floor(pts[survivors] * float(1 << dep)).astype(np.int64)
        if keep_empty:
            occupied = np.unique(ids, axis=0)
            empty = children[~np.isin(_void_rows(children), _void_rows(occupied))]
            if len(empty):
                empty_leaves.append((dep, empty))
        active = survivors

    if n:
        k_cube = np.zeros(int(inv0.max()) + 1, dtype=np.int64)
        np.maximum.at(k_cube, inv0, delta)
        pt_k = k_cube[inv0]
    else:
        pt_k = np.zeros(0, dtype=np.int64)
    K = int(delta.max()) if n else 0

    fi = np.floor(pts * float(1 << K)).astype(np.int64)
    if n:
        np.clip(fi, 0, (1 << (stages + K)) - 1, out=fi)

    # empty unit cubes are kept as audit cells
    if keep_empty:
        dims = (1 << stages,) * d
        occupied_units = (
            np.unique(np.ravel_multi_index(tuple(iu.T), dims)) if n else np.zeros(0, np.int64)
        )
        empty_units_flat = np.setdiff1d(np.arange(1 << (stages * d)), occupied_units)
        empty_units = np.stack(np.unravel_index(empty_units_flat, dims), axis=1).astype(np.int64)
    else:
        empty_units = np.zeros((0, d), dtype=np.int64)

    rem = (K - delta)[:, None]
    blocks_idx = [(fi >> rem) << rem]
    blocks_level = [-delta]
    blocks_depth = [delta]
    owner_rows = [np.arange(n, dtype=np.int64)]
    for dep_e, ids_e in empty_leaves:
        blocks_idx.append(ids_e << (K - dep_e))
        blocks_level.append(np.full(len(ids_e), -dep_e, dtype=np.int64))
        blocks_depth.append(np.full(len(ids_e), dep_e, dtype=np.int64))
        owner_rows.append(np.full(len(ids_e), -1, dtype=np.int64))
    blocks_idx.append(empty_units << K)
    blocks_level.append(np.zeros(len(empty_units), dtype=np.int64))
    blocks_depth.append(np.zeros(len(empty_units), dtype=np.int64))
    owner_rows.append(np.full(len(empty_units), -1, dtype=np.int64))

    idx = np.concatenate(blocks_idx, axis=0)
    level = np.concatenate(blocks_level)
    depth = np.concatenate(blocks_depth)
    owner_row = np.concatenate(owner_rows)

    scale = 2.0 ** (-K)
    lower = idx.astype(float) * scale
    upper = lower + (2.0 ** level.astype(float))[:, None]
    carried = np.full((len(idx), d), np.nan)
    carried[:n] = pts

    return _State(
        dim=d, stages=stages, k_finest=K,
        idx=idx, level=level, lower=lower, upper=upper,
        carried=carried, owner_row=owner_row, depth=depth,
        pts=pts.copy(), pt_fi=fi, pt_k=pt_k, pt_delta=delta,
    )


def _parent_box(state: _State, fi_row: np.ndarray, lev: int, axis: int) -> Cuboid:
    """Window-local extents of the pairing box containing a finest index."""
    K = state.k_finest
    lo = np.empty(state.dim)
    hi = np.empty(state.dim)
    for j in range(state.dim):
        s = lev if j >= axis else lev - 1
        side_j = 2.0 ** s
        lo[j] = float(fi_row[j] >> (K + s)) * side_j
        hi[j] = lo[j] + side_j
    return Cuboid(lo, hi)


def _advance_singletons(state: _State, lev: int, axis: int, rec: _Recorder | None):
    """Forced doubling moves of points still alone inside their refinement
    subtree: the empty half collapses and the point's coordinate doubles
    away from the occupied side.  Only the carried position changes; the
    cell is already represented at its birth level."""
    rows = np.flatnonzero((state.pt_k > -lev) & (state.pt_delta <= -lev))
    if rows.size == 0:
        return
    K = state.k_finest
    sh = K + lev
    side = 2.0 ** lev
    fi = state.pt_fi[rows, axis]
    plo = (fi >> sh).astype(float) * side
    phi = plo + side
    bit = (fi >> (sh - 1)) & 1
    x = state.carried[rows, axis]
    new = np.where(bit == 0, plo + 2.0 * (x - plo), phi - 2.0 * (phi - x))
    state.carried[rows, axis] = new
    if rec is not None:
        rec.note_shift(lev, new - x)
        if rec.keep_steps:
            for i, r in enumerate(rows):
                left = bool(bit[i] == 0)
                rec.steps.append(
                    StepRecord(
                        stage=lev, axis=axis,
                        parent=_parent_box(state, state.pt_fi[r], lev, axis),
                        old_wall=float(plo[i] + side * 0.5),
                        new_wall=float(phi[i] if left else plo[i]),
                        n_left=int(left), n_right=int(not left),
                        shifts=[(int(r), float(x[i]), float(new[i] - x[i]))],
                    )
                )


def _apply_step(state: _State, lev: int, axis: int, rec: _Recorder | None):
    """One wall move at level ``lev`` along ``axis`` over all pairing boxes."""
    K = state.k_finest
    sh = K + lev
    act = np.flatnonzero(state.level < lev)
    if act.size == 0:
        return
    d = state.dim
    idx = state.idx[act]
    shifts = np.full(d, sh, dtype=np.int64)
    shifts[:axis] = sh - 1
    pid = idx >> shifts[None, :]
    bits = state.stages - lev + np.where(np.arange(d) < axis, 1, 0) + 1
    inv, first = _group_rows(pid, bits)
    n_groups = int(inv.max()) + 1

    owned = state.owner_row[act] >= 0
    half = ((idx[:, axis] >> (sh - 1)) & 1).astype(bool)
    n_left = np.bincount(inv[owned & ~half], minlength=n_groups)
    n_right = np.bincount(inv[owned & half], minlength=n_groups)
    frac = _wall_fraction(n_left, n_left + n_right)

    side = 2.0 ** lev
    plo = (idx[:, axis] >> sh).astype(float) * side
    phi = plo + side
    pmid = plo + side * 0.5
    f = frac[inv]
    wall = np.where(f == 0.0, plo, np.where(f == 1.0, phi, plo + f * side))
    s_left = 2.0 * f
    s_right = 2.0 * (1.0 - f)

    before = state.carried[act, axis] if rec is not None else None
    for arr in (state.lower, state.upper, state.carried):
        x = arr[act, axis]
        mapped = np.where(half, phi - (phi - x) * s_right, plo + (x - plo) * s_left)
        arr[act, axis] = np.where(x == pmid, wall, mapped)

    if rec is not None:
        own_pos = np.flatnonzero(owned)
        deltas = state.carried[act[own_pos], axis] - before[own_pos]
        rec.note_shift(lev, deltas)
        if rec.keep_steps:
            order = np.argsort(inv[own_pos], kind="stable")
            bounds = np.searchsorted(inv[own_pos][order], np.arange(n_groups + 1))
            wall_g = np.empty(n_groups)
            wall_g[inv] = wall
            mid_g = np.empty(n_groups)
            mid_g[inv] = pmid
            for g in range(n_groups):
                members = own_pos[order[bounds[g]:bounds[g + 1]]]
                rec.steps.append(
                    StepRecord(
                        stage=lev, axis=axis,
                        parent=_parent_box(state, idx[first[g]], lev, axis),
                        old_wall=float(mid_g[g]),
                        new_wall=float(wall_g[g]),
                        n_left=int(n_left[g]), n_right=int(n_right[g]),
                        shifts=[
                            (
                                int(state.owner_row[act[r]]),
                                float(before[r]),
                                float(state.carried[act[r], axis] - before[r]),
                            )
                            for r in members
                        ],
                    )
                )


def _run_levels(
    state: _State,
    up_to: int,
    rec: _Recorder | None,
    origin_row: int | None,
    capture: set[int] | None = None,
):
    """Advance the state through all steps of levels ``-K+1 .. up_to``.

    Returns the origin cell's sidelength vectors (after initialization and
    after every completed non-negative level, when an origin is tracked)
    and array snapshots of the requested capture stages.
    """
    origin_sides: list[np.ndarray] = []
    snapshots: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    if origin_row is not None and state.k_finest == 0:
        origin_sides.append(state.upper[origin_row] - state.lower[origin_row])
    for lev in range(-state.k_finest + 1, up_to + 1):
        for axis in range(state.dim - 1, -1, -1):
            if lev <= 0:
                _advance_singletons(state, lev, axis, rec)
            _apply_step(state, lev, axis, rec)
        if origin_row is not None and lev >= 0:
            origin_sides.append(state.upper[origin_row] - state.lower[origin_row])
        if capture and lev in capture:
            snapshots[lev] = (
                state.lower.copy(),
                state.upper.copy(),
                state.carried.copy(),
            )
    return origin_sides, snapshots


# ---------------------------------------------------------------------------
# Reports


@dataclass
class RunReport:
    """Full outcome of a transport run on one window.

    Cell arrays are parallel: row ``i`` of ``cell_lower`` / ``cell_upper`` /
    ``cell_carried`` describes cell ``i``; ``cell_owner`` maps it to a row of
    ``points`` (-1 for ownerless audit cells).  Coordinates are absolute.
    """

    window: Cuboid
    shift: np.ndarray
    stages: int
    points: np.ndarray
    point_ids: np.ndarray
    origin_row: int | None
    cell_lower: np.ndarray
    cell_upper: np.ndarray
    cell_carried: np.ndarray
    cell_owner: np.ndarray
    cell_unit_index: np.ndarray
    cell_depth: np.ndarray
    steps: list[StepRecord]
    stage_max_shift: dict[int, float]
    origin_stage_sides: np.ndarray | None
    dropped: int
    # optional mid-run snapshots: stage -> (cell_lower, cell_upper, cell_carried)
    stage_captures: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_cells(self) -> int:
        return len(self.cell_lower)

    @cached_property
    def cells(self) -> list[Cell]:
        out = []
        for i in range(self.n_cells):
            o = int(self.cell_owner[i])
            out.append(
                Cell(
                    box=Cuboid(self.cell_lower[i], self.cell_upper[i]),
                    owner=self.points[o].copy() if o >= 0 else None,
                    carried=self.cell_carried[i].copy() if o >= 0 else None,
                    owner_id=o if o >= 0 else None,
                    unit_index=tuple(int(v) for v in self.cell_unit_index[i]),
                    depth=int(self.cell_depth[i]),
                )
            )
        return out

    def sidelengths(self) -> np.ndarray:
        return self.cell_upper - self.cell_lower

    def volumes(self) -> np.ndarray:
        return np.prod(self.sidelengths(), axis=1)

    def owned_mask(self) -> np.ndarray:
        return self.cell_owner >= 0

    def target_volume(self) -> float:
        return self.window.volume() / self.n_points

    def equipartition_error(self) -> tuple[float, int]:
        """Worst relative deviation of owned-cell volume from window/n and
        the offending cell row."""
        owned_rows = np.flatnonzero(self.owned_mask())
        vols = self.volumes()[owned_rows]
        target = self.target_volume()
        rel = np.abs(vols - target) / target
        worst = int(np.argmax(rel))
        return float(rel[worst]), int(owned_rows[worst])

    def volume_defect(self) -> float:
        """Relative defect of summed cell volumes against the window volume."""
        total = float(self.volumes().sum())
        ref = self.window.volume()
        return abs(total - ref) / ref

    def displacements(self) -> np.ndarray:
        """Per-point total displacement vectors (carried minus original)."""
        out = np.full_like(self.points, np.nan)
        owned = self.owned_mask()
        rows = self.cell_owner[owned]
        out[rows] = self.cell_carried[owned] - self.points[rows]
        return out

    def origin_cell_row(self) -> int:
        if self.origin_row is None:
            raise ValueError("run was not made from a palm configuration (no origin)")
        rows = np.flatnonzero(self.cell_owner == self.origin_row)
        return int(rows[0])

    def to_json(self, include_steps: bool = True) -> dict:
        obj = {
            "window": self.window.to_json(),
            "shift": self.shift.tolist(),
            "stages": self.stages,
            "dropped": self.dropped,
            "points": self.points.tolist(),
            "point_ids": self.point_ids.tolist(),
            "origin_row": self.origin_row,
            "cells": [
                {
                    "lower": self.cell_lower[i].tolist(),
                    "upper": self.cell_upper[i].tolist(),
                    "owner": int(self.cell_owner[i]),
                    "carried": (
                        self.cell_carried[i].tolist() if self.cell_owner[i] >= 0 else None
                    ),
                    "unit_index": self.cell_unit_index[i].tolist(),
                    "depth": int(self.cell_depth[i]),
                }
                for i in range(self.n_cells)
            ],
            "stage_max_shift": {str(k): v for k, v in sorted(self.stage_max_shift.items())},
        }
        if self.origin_stage_sides is not None:
            obj["origin_stage_sides"] = self.origin_stage_sides.tolist()
        if include_steps:
            obj["steps"] = [s.to_json() for s in self.steps]
        return obj

    def cells_csv(self) -> str:
        """One row per cell: volume, diameter (anchored at the owner),
        sidelengths, total displacement."""
        d = self.window.dim
        header = (
            ["volume", "diameter"]
            + [f"side_{j}" for j in range(d)]
            + [f"displacement_{j}" for j in range(d)]
        )
        lines = [",".join(header)]
        sides = self.sidelengths()
        vols = self.volumes()
        for i in range(self.n_cells):
            box = Cuboid(self.cell_lower[i], self.cell_upper[i])
            o = int(self.cell_owner[i])
            if o >= 0:
                diam = diameter_with_anchor(box, self.points[o])
                disp = [repr(float(x)) for x in self.cell_carried[i] - self.points[o]]
            else:
                diam = float(np.linalg.norm(box.sides))
                disp = [""] * d
            row = [repr(float(vols[i])), repr(float(diam))]
            row += [repr(float(s)) for s in sides[i]]
            row += disp
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Public operations


def run_akt(
    config: Configuration,
    shift,
    stages: int,
    *,
    anchor=None,
    record_steps: bool = True,
    keep_empty: bool = True,
    capture_stages=None,
    k_max: int = DEFAULT_K_MAX,
) -> RunReport:
    """Run the transport scheme on the window of ``shift + 2^stages Z^d``
    containing ``anchor`` (the origin for palm configurations, else the
    domain center).  Points outside the window are dropped and counted.

    ``keep_empty=False`` drops the ownerless audit cells (identical owned
    dynamics, cheaper sweeps); the partition-sum audit then only covers the
    owned cells.  ``capture_stages`` snapshots the cell arrays after the
    named stages into ``report.stage_captures`` (cells never split or merge
    once born, so rows stay aligned across snapshots)."""
    v = as_point(shift)
    d = config.dim
    if v.size != d:
        raise ValueError("shift dimension does not match configuration")
    if stages < 0:
        raise ValueError("stages must be >= 0")
    if anchor is None:
        anchor = np.zeros(d) if config.is_palm else config.domain.center
    window = ShiftedLattice(v, stages).cube_containing(anchor)
    side = 2.0 ** stages

    local = config.points - window.lower
    inside = np.all(local >= 0.0, axis=1) & np.all(local < side, axis=1)
    point_ids = np.flatnonzero(inside)
    pts = local[inside]
    dropped = int(len(config.points) - len(pts))
    if len(pts) == 0:
        raise EmptyWindowError("empty window: no configuration points inside the top box")

    origin_row = None
    if config.is_palm:
        hits = np.flatnonzero(np.all(config.points[inside] == 0.0, axis=1))
        origin_row = int(hits[0]) if hits.size else None

    state = _initial_state(pts, stages, k_max, keep_empty=keep_empty)
    rec = _Recorder(keep_steps=record_steps)
    cap = set(int(c) for c in capture_stages) if capture_stages else None
    origin_sides, snapshots = _run_levels(state, stages, rec, origin_row, cap)

    corner = window.lower
    for s in rec.steps:
        s.parent = s.parent.translate(corner)
        off = float(corner[s.axis])
        s.old_wall += off
        s.new_wall += off
        s.shifts = [(i, b + off, dlt) for i, b, dlt in s.shifts]

    carried_abs = state.carried + corner
    carried_abs[state.owner_row < 0] = np.nan
    return RunReport(
        window=window,
        shift=v,
        stages=stages,
        points=pts + corner,
        point_ids=point_ids,
        origin_row=origin_row,
        cell_lower=state.lower + corner,
        cell_upper=state.upper + corner,
        cell_carried=carried_abs,
        cell_owner=state.owner_row,
        cell_unit_index=state.idx >> state.k_finest,
        cell_depth=state.depth,
        steps=rec.steps,
        stage_max_shift=rec.stage_max_shift,
        origin_stage_sides=(np.array(origin_sides) if origin_row is not None else None),
        dropped=dropped,
        stage_captures=(
            {n: (lo + corner, hi + corner, ca + corner) for n, (lo, hi, ca) in snapshots.items()}
            if snapshots
            else None
        ),
    )


def origin_cell(report: RunReport) -> Cell:
    """The cell owned by the origin of a palm run."""
    return report.cells[report.origin_cell_row()]


def initialize_cells(
    config: Configuration, lattice: ShiftedLattice, k_max: int = DEFAULT_K_MAX
) -> list[Cell]:
    """Birth cells over ``config.domain``: one cell per unit cube holding at
    most one point, and refined, internally equipartitioned cells inside
    crowded cubes (their negative-stage steps already applied).

    The domain must be a power-of-two cube tiled by the level-0 lattice.
    """
    if lattice.level != 0:
        raise ValueError("initialization lattice must have level 0 (unit cubes)")
    domain = config.domain
    sides = domain.sides
    if not np.allclose(sides, sides[0], rtol=0, atol=1e-12):
        raise ValueError("domain must be a cube")
    stages = int(round(np.log2(sides[0]))) if sides[0] > 0 else -1
    if stages < 0 or not np.isclose(sides[0], 2.0 ** stages, rtol=0, atol=1e-12):
        raise ValueError("domain side must be a power of two >= 1")
    align = (domain.lower - lattice.shift) - np.round(domain.lower - lattice.shift)
    if np.any(np.abs(align) > 1e-12):
        raise ValueError("unit lattice does not tile the domain")

    local = config.points - domain.lower
    state = _initial_state(local, stages, k_max)
    _run_levels(state, 0, None, None, None)
    corner = domain.lower
    cells = []
    for i in range(len(state.idx)):
        o = int(state.owner_row[i])
        cells.append(
            Cell(
                box=Cuboid(state.lower[i] + corner, state.upper[i] + corner),
                owner=(config.points[o].copy() if o >= 0 else None),
                carried=(state.carried[i] + corner if o >= 0 else None),
                owner_id=o if o >= 0 else None,
                unit_index=tuple(int(v) for v in state.idx[i] >> state.k_finest),
                depth=int(state.depth[i]),
            )
        )
    return cells


def _affine_1d(x: float, lo: float, mid: float, hi: float, wall: float, f: float) -> float:
    if x == mid:
        return wall
    if x < mid:
        return lo + (x - lo) * (2.0 * f)
    return hi - (hi - x) * (2.0 * (1.0 - f))


def move_wall(
    cells: list[Cell], parent: Cuboid, axis: int, stage: int
) -> tuple[list[Cell], StepRecord]:
    """Reference (scalar) wall move for the cells of one pairing box.

    Every cell must lie entirely inside one half of ``parent`` along
    ``axis``; the bisector wall moves so the two volumes match the carried
    point counts, and both halves are remapped affinely, carried points
    included.
    """
    d = parent.dim
    if not 0 <= axis < d:
        raise ValueError(f"axis {axis} out of range for dimension {d}")
    lo = float(parent.lower[axis])
    hi = float(parent.upper[axis])
    mid = 0.5 * (lo + hi)
    tol = 1e-9 * max(hi - lo, 1.0)

    halves = []
    for c in cells:
        clo, chi = float(c.box.lower[axis]), float(c.box.upper[axis])
        if clo < lo - tol or chi > hi + tol:
            raise ValueError("cell lies outside the parent box")
        if chi <= mid + tol:
            halves.append(0)
        elif clo >= mid - tol:
            halves.append(1)
        else:
            raise ValueError("cell straddles the bisector wall")

    n_left = sum(1 for c, h in zip(cells, halves) if h == 0 and c.owner_id is not None)
    n_right = sum(1 for c, h in zip(cells, halves) if h == 1 and c.owner_id is not None)
    total = n_left + n_right
    f = float(_wall_fraction(n_left, total))
    wall = lo if f == 0.0 else hi if f == 1.0 else lo + f * (hi - lo)

    out = []
    shifts = []
    for c in cells:
        blo = c.box.lower.copy()
        bhi = c.box.upper.copy()
        blo[axis] = _affine_1d(float(blo[axis]), lo, mid, hi, wall, f)
        bhi[axis] = _affine_1d(float(bhi[axis]), lo, mid, hi, wall, f)
        carried = None
        if c.carried is not None:
            carried = c.carried.copy()
            x0 = float(carried[axis])
            carried[axis] = _affine_1d(x0, lo, mid, hi, wall, f)
            shifts.append((int(c.owner_id), x0, float(carried[axis]) - x0))
        out.append(
            Cell(
                box=Cuboid(blo, bhi),
                owner=None if c.owner is None else c.owner.copy(),
                carried=carried,
                owner_id=c.owner_id,
                unit_index=c.unit_index,
                depth=c.depth,
            )
        )
    record = StepRecord(
        stage=stage, axis=axis, parent=parent,
        old_wall=mid, new_wall=wall,
        n_left=n_left, n_right=n_right, shifts=shifts,
    )
    return out, record


def run_stage(
    cells: list[Cell], window: Cuboid, stage: int
) -> tuple[list[Cell], list[StepRecord]]:
    """One full stage (d wall moves, axis d-1 down to 0) over all pairing
    boxes of the window, composed from :func:`move_wall`."""
    d = window.dim
    if stage < 1:
        raise ValueError("run_stage applies to stages >= 1")
    cells = list(cells)
    records: list[StepRecord] = []
    units = np.array([c.unit_index for c in cells], dtype=np.int64).reshape(len(cells), d)
    for axis in range(d - 1, -1, -1):
        groups: dict[tuple, list[int]] = {}
        for i in range(len(cells)):
            key = tuple(
                int(units[i, j]) >> (stage if j >= axis else stage - 1) for j in range(d)
            )
            groups.setdefault(key, []).append(i)
        for key in sorted(groups):
            rows = groups[key]
            lo = np.empty(d)
            hi = np.empty(d)
            for j in range(d):
                s = 2.0 ** (stage if j >= axis else stage - 1)
                lo[j] = window.lower[j] + key[j] * s
                hi[j] = lo[j] + s
            moved, recd = move_wall([cells[i] for i in rows], Cuboid(lo, hi), axis, stage)
            for i, c in zip(rows, moved):
                cells[i] = c
            records.append(recd)
    return cells, records
