"""Purification of a fractional weight field into a one-owner allocation.

The covered grid decomposes into maximal connected patches on which the
same set of centers carries positive weight.  Within each patch the weight
mass of center ``i`` is its quota; patches are then split by simultaneous
nearest-first growth: grid cells are claimed in increasing Euclidean
distance to the centers, and a center stops claiming once it has reached
its quota.  Quotas are rounded to whole grid cells by largest remainder,
which guarantees both full coverage of the patch and per-center accuracy
to one grid cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .fractional import FractionalField, GridSpec

__all__ = [
    "PureAllocation",
    "QuotaReport",
    "Region",
    "compute_regions",
    "grow_balls",
    "purify_field",
    "verify_quotas",
]

DEFAULT_WEIGHT_FLOOR = 1e-9
QUOTA_SUM_RTOL = 1e-6


@dataclass
class Region:
    """A connected patch of grid cells supporting the same centers.

    ``cells`` are flat grid indices; ``quotas[i]`` is the weight mass of
    ``center_ids[i]`` on the patch (in measure units, ``h^d`` per cell).
    """

    region_id: int
    center_ids: tuple[int, ...]
    cells: np.ndarray
    quotas: np.ndarray

    @property
    def measure(self) -> float:
        return float(self.quotas.sum())


@dataclass
class PureAllocation:
    """Grid-cell ownership map: ``owner`` holds a center id per grid cell,
    -1 where the field was not covered."""

    grid: GridSpec
    owner: np.ndarray
    centers: np.ndarray

    def achieved(self) -> dict[int, float]:
        """Measure captured per center."""
        ids, counts = np.unique(self.owner[self.owner >= 0], return_counts=True)
        h = self.grid.cell_measure
        return {int(i): float(c) * h for i, c in zip(ids, counts)}

    def to_json(self) -> dict:
        return {
            "grid": self.grid.to_json(),
            "centers": self.centers.tolist(),
            "owner": self.owner.ravel().tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PureAllocation":
        grid = GridSpec.from_json(obj["grid"])
        owner = np.asarray(obj["owner"], dtype=np.int64).reshape(grid.shape)
        return cls(grid=grid, owner=owner, centers=np.asarray(obj["centers"], float))


@dataclass
class QuotaRow:
    center_id: int
    quota: float
    achieved: float
    n_regions: int
    tolerance: float

    @property
    def ok(self) -> bool:
        return abs(self.achieved - self.quota) <= self.tolerance


@dataclass
class QuotaReport:
    rows: list[QuotaRow]
    support_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.support_ok and all(r.ok for r in self.rows)

    def to_csv(self) -> str:
        lines = ["center_id,quota,achieved,n_regions,tolerance,ok"]
        for r in self.rows:
            lines.append(
                f"{r.center_id},{r.quota!r},{r.achieved!r},{r.n_regions},{r.tolerance!r},{int(r.ok)}"
            )
        return "\n".join(lines) + "\n"


def compute_regions(
    field: FractionalField, weight_floor: float = DEFAULT_WEIGHT_FLOOR
) -> list[Region]:
    """Decompose the covered grid into connected same-support patches.

    A grid cell's label is the set of centers whose weight there exceeds
    ``weight_floor`` (a small floor suppresses float dust from averaging).
    A covered cell with no supporting center violates the sum-to-one
    contract and raises.
    """
    grid = field.grid
    covered = field.covered()
    ids = sorted(field.weights)
    if covered.any() and not ids:
        raise ValueError("covered grid cell with no supporting center")
    stack = np.stack([field.weights[i] for i in ids]) if ids else np.zeros((0,) + grid.shape)
    support = stack > weight_floor

    bad = covered & ~support.any(axis=0)
    if bad.any():
        raise ValueError(
            f"{int(bad.sum())} covered grid cell(s) carry no center weight "
            "(sum-to-one violated)"
        )

    # signature = subset of supporting centers, encoded per covered cell
    flat_support = support.reshape(len(ids), -1).T
    flat_covered = covered.ravel()
    sig, inv = np.unique(flat_support[flat_covered], axis=0, return_inverse=True)
    inv = inv.ravel()
    sig_map = np.full(grid.n_cells, -1, dtype=np.int64)
    sig_map[np.flatnonzero(flat_covered)] = inv

    h_meas = grid.cell_measure
    regions: list[Region] = []
    for s in range(len(sig)):
        mask = (sig_map == s).reshape(grid.shape)
        labels, n_comp = ndimage.label(mask)
        members = tuple(ids[j] for j in np.flatnonzero(sig[s]))
        for comp in range(1, n_comp + 1):
            cells = np.flatnonzero((labels == comp).ravel())
            quotas = np.array(
                [field.weights[cid].ravel()[cells].sum() * h_meas for cid in members]
            )
            measure = len(cells) * h_meas
            if abs(quotas.sum() - measure) > QUOTA_SUM_RTOL * max(measure, h_meas):
                raise ValueError(
                    f"region quota sum {quotas.sum()!r} does not match its "
                    f"measure {measure!r}"
                )
            regions.append(
                Region(
                    region_id=len(regions),
                    center_ids=members,
                    cells=cells,
                    quotas=quotas,
                )
            )
    return regions


def _integer_targets(quotas: np.ndarray, n_cells: int, h_meas: float) -> np.ndarray:
    """Largest-remainder rounding of quotas to whole grid cells.

    Keeps every center within one cell of its quota and makes the targets
    sum to the patch size, so the growth always terminates with the patch
    fully claimed.
    """
    raw = quotas / h_meas
    base = np.floor(raw).astype(np.int64)
    short = n_cells - int(base.sum())
    if short < 0:
        raise ValueError("quotas exceed the region measure")
    rem = raw - base
    order = np.lexsort((np.arange(len(raw)), -rem))
    base[order[:short]] += 1
    return base


def grow_balls(region: Region, grid: GridSpec, centers: np.ndarray) -> dict[int, int]:
    """Split one patch by simultaneous nearest-first ball growth.

    Returns ``{flat grid index: center id}``.  Claims happen in increasing
    squared distance from the centers' true positions to the grid-cell
    centers; ties break on lower center id, then on grid index, so the
    outcome is deterministic.  A center stops claiming at its rounded
    quota.
    """
    k = len(region.center_ids)
    m = len(region.cells)
    if k == 0 or m == 0:
        return {}
    h_meas = grid.cell_measure
    targets = _integer_targets(region.quotas, m, h_meas)

    cell_pos = grid.centers()[region.cells]
    cpos = centers[list(region.center_ids)]
    d2 = ((cell_pos[None, :, :] - cpos[:, None, :]) ** 2).sum(axis=2)

    ci, cj = np.meshgrid(np.arange(k), np.arange(m), indexing="ij")
    order = np.lexsort(
        (
            region.cells[cj.ravel()],
            np.asarray(region.center_ids)[ci.ravel()],
            d2.ravel(),
        )
    )
    taken = np.zeros(m, dtype=bool)
    claimed = np.zeros(k, dtype=np.int64)
    out: dict[int, int] = {}
    remaining = m
    for pos in order:
        i = pos // m
        j = pos % m
        if taken[j] or claimed[i] >= targets[i]:
            continue
        taken[j] = True
        claimed[i] += 1
        out[int(region.cells[j])] = int(region.center_ids[i])
        remaining -= 1
        if remaining == 0:
            break
    if remaining:
        raise RuntimeError(
            f"region {region.region_id}: {remaining} grid cell(s) left unclaimed "
            f"(targets {targets.tolist()}, claimed {claimed.tolist()})"
        )
    return out


def purify_field(
    field: FractionalField, weight_floor: float = DEFAULT_WEIGHT_FLOOR
) -> tuple[PureAllocation, list[Region], QuotaReport]:
    """Regions, growth, and the quota audit in one pass."""
    regions = compute_regions(field, weight_floor)
    owner = np.full(field.grid.n_cells, -1, dtype=np.int64)
    for region in regions:
        for cell, cid in grow_balls(region, field.grid, field.centers).items():
            owner[cell] = cid
    alloc = PureAllocation(
        grid=field.grid, owner=owner.reshape(field.grid.shape), centers=field.centers
    )
    report = verify_quotas(alloc, regions)
    return alloc, regions, report


def verify_quotas(alloc: PureAllocation, regions: list[Region]) -> QuotaReport:
    """Per-center audit: achieved measure versus summed quotas, allowing one
    grid cell per participating region; plus the support-containment check
    (every owned cell's region lists its owner)."""
    h_meas = alloc.grid.cell_measure
    quota: dict[int, float] = {}
    n_regions: dict[int, int] = {}
    flat_owner = alloc.owner.ravel()
    support_ok = True
    for region in regions:
        for cid, q in zip(region.center_ids, region.quotas):
            quota[cid] = quota.get(cid, 0.0) + float(q)
            n_regions[cid] = n_regions.get(cid, 0) + 1
        owners_here = np.unique(flat_owner[region.cells])
        if not set(int(o) for o in owners_here if o >= 0) <= set(region.center_ids):
            support_ok = False
    achieved = alloc.achieved()
    rows = [
        QuotaRow(
            center_id=cid,
            quota=quota[cid],
            achieved=achieved.get(cid, 0.0),
            n_regions=n_regions[cid],
            tolerance=h_meas * n_regions[cid],
        )
        for cid in sorted(quota)
    ]
    return QuotaReport(rows=rows, support_ok=support_ok)
