"""Concentration checks, diameter-tail sweeps, and shape diagnostics.

The Chernoff-style bound ``2 exp(-lambda rho^2 / 4)`` on the two-sided
Poisson tail is checked against the exact tail, summed term by term in log
space so lambda = 1000 works without underflow.  Tail sweeps estimate the
survival function of the origin-cell diameter over seeded palm samples;
``fit_decay`` extracts the stretch exponent from ``log(-log P)`` against
``log R``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import Cuboid, diameter_with_anchor
from .pointprocess import Configuration, palm
from .seeding import derive_seed
from .transport import RunReport, run_akt

__all__ = [
    "DecayFit",
    "SidelengthSummary",
    "TailStats",
    "chernoff_bound",
    "exact_poisson_two_sided_tail",
    "fit_decay",
    "sidelength_diagnostics",
    "tail_sweep",
]

_TERM_EPS = 1e-30


def chernoff_bound(lam: float, rho: float) -> float:
    """The bound ``2 exp(-lam * rho^2 / 4)`` on ``P(|X - lam| > lam*rho)``
    for Poisson ``X``; valid for ``0 <= rho <= 2``."""
    if not (lam > 0):
        raise ValueError("lam must be positive")
    if not (0.0 <= rho <= 2.0):
        raise ValueError(f"rho must lie in [0, 2], got {rho}")
    return 2.0 * math.exp(-lam * rho * rho / 4.0)


def _poisson_logpmf(k: int, lam: float) -> float:
    return k * math.log(lam) - lam - math.lgamma(k + 1)


def exact_poisson_two_sided_tail(lam: float, rho: float) -> float:
    """``P(|X - lam| > lam*rho)`` by direct pmf summation.

    Terms are evaluated individually in log space and accumulated outward
    from the band edges (which straddle the mode), so the result is stable
    for large means.
    """
    if not (lam > 0):
        raise ValueError("lam must be positive")
    if rho < 0:
        raise ValueError("rho must be >= 0")
    band = lam * rho

    upper = 0.0
    k = math.floor(lam + band) + 1
    while True:
        term = math.exp(_poisson_logpmf(k, lam))
        upper += term
        k += 1
        if k > lam and (term == 0.0 or term < _TERM_EPS * upper):
            break

    lower = 0.0
    j = math.ceil(lam - band) - 1
    while j >= 0:
        term = math.exp(_poisson_logpmf(j, lam))
        lower += term
        j -= 1
        if term == 0.0 or term < _TERM_EPS * lower:
            break

    return upper + lower


@dataclass
class TailStats:
    """Binned survival estimates of anchored origin-cell diameters.

    ``survival[i]`` estimates ``P(diam > bin_edges[i])`` over the kept
    trials; ``tail_counts`` are the corresponding raw counts.  Trials whose
    cell approached the window boundary closer than ``margin`` are excluded
    (the finite window truncates large cells and would bias the tail down)
    and reported in ``discarded``.
    """

    dim: int
    intensity: float
    levels: int
    trials: int
    kept: int
    discarded: int
    margin: float
    seed: int
    bin_edges: np.ndarray
    tail_counts: np.ndarray
    survival: np.ndarray
    diameters: np.ndarray

    def to_csv(self) -> str:
        lines = ["R,count_above,survival"]
        for r, c, s in zip(self.bin_edges, self.tail_counts, self.survival):
            lines.append(f"{float(r)!r},{int(c)},{float(s)!r}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "intensity": self.intensity,
            "levels": self.levels,
            "trials": self.trials,
            "kept": self.kept,
            "discarded": self.discarded,
            "margin": self.margin,
            "seed": self.seed,
            "bin_edges": self.bin_edges.tolist(),
            "tail_counts": self.tail_counts.tolist(),
            "survival": self.survival.tolist(),
        }


def default_bin_edges(dim: int, levels: int) -> np.ndarray:
    """Geometric diameter bins from below the typical cell scale up to the
    window diagonal."""
    top = (2.0 ** levels) * math.sqrt(dim)
    return np.geomspace(0.4, top, 61)


def _tail_trial(args) -> tuple[float, bool]:
    dim, levels, intensity, margin, sub_seed = args
    rng = np.random.default_rng(sub_seed)
    side = 2.0 ** levels
    v = rng.uniform(0.0, side, dim)
    corner = v + side * np.floor(-v / side)
    domain = Cuboid(corner, corner + side)
    count = int(rng.poisson(intensity * side ** dim))
    pts = corner + rng.random((count, dim)) * side
    config = Configuration(domain=domain, points=pts, seed=None, validate=False)
    config = palm(config)
    rep = run_akt(config, v, levels, record_steps=False, keep_empty=False)
    row = rep.origin_cell_row()
    box = Cuboid(rep.cell_lower[row], rep.cell_upper[row])
    diam = diameter_with_anchor(box, np.zeros(dim))
    gap = min(
        float(np.min(box.lower - domain.lower)),
        float(np.min(domain.upper - box.upper)),
    )
    return diam, gap >= margin


def tail_sweep(
    dim: int,
    levels: int,
    intensity: float,
    trials: int,
    *,
    margin: float | None = None,
    seed: int = 0,
    bin_edges: np.ndarray | None = None,
    workers: int = 1,
) -> TailStats:
    """Sample the anchored diameter of the origin's cell over independent
    palm draws, one uniformly shifted lattice per trial.

    Each trial draws its own sub-seed from ``seed``, so results do not
    depend on trial order or on the worker count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if margin is None:
        margin = (2.0 ** levels) / 4.0
    if bin_edges is None:
        bin_edges = default_bin_edges(dim, levels)
    bin_edges = np.asarray(bin_edges, float)

    jobs = [
        (dim, levels, intensity, margin, derive_seed(seed, "tail", t))
        for t in range(trials)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_tail_trial, jobs, chunksize=32))
    else:
        results = [_tail_trial(j) for j in jobs]

    diams = np.array([d for d, keep in results if keep])
    discarded = trials - len(diams)
    if len(diams) == 0:
        raise ValueError(
            "all trials were discarded by the boundary margin; "
            "increase the window levels or lower the margin"
        )
    counts = (diams[None, :] > bin_edges[:, None]).sum(axis=1)
    return TailStats(
        dim=dim,
        intensity=intensity,
        levels=levels,
        trials=trials,
        kept=len(diams),
        discarded=discarded,
        margin=margin,
        seed=seed,
        bin_edges=bin_edges,
        tail_counts=counts.astype(np.int64),
        survival=counts / len(diams),
        diameters=diams,
    )


@dataclass
class DecayFit:
    """Least-squares slope of ``log(-log P)`` against ``log R``."""

    slope: float
    intercept: float
    stderr: float
    r_lo: float
    r_hi: float
    n_bins: int
    p_lo: float
    p_hi: float

    def to_json(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "r_lo": self.r_lo,
            "r_hi": self.r_hi,
            "n_bins": self.n_bins,
            "p_lo": self.p_lo,
            "p_hi": self.p_hi,
        }


def fit_decay(stats: TailStats, p_min: float = 0.02, p_max: float = 0.9) -> DecayFit:
    """Fit the decay exponent on the bins with ``p_min <= survival <= p_max``."""
    surv = stats.survival
    edges = stats.bin_edges
    usable = (surv >= p_min) & (surv <= p_max) & (surv < 1.0) & (edges > 0)
    if int(usable.sum()) < 3:
        raise ValueError(
            f"only {int(usable.sum())} usable bins with survival in "
            f"[{p_min}, {p_max}]; need at least 3"
        )
    x = np.log(edges[usable])
    y = np.log(-np.log(surv[usable]))
    n = len(x)
    xbar = x.mean()
    sxx = float(((x - xbar) ** 2).sum())
    slope = float(((x - xbar) * (y - y.mean())).sum() / sxx)
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    sigma2 = float((resid ** 2).sum() / max(n - 2, 1))
    return DecayFit(
        slope=slope,
        intercept=intercept,
        stderr=math.sqrt(sigma2 / sxx),
        r_lo=float(edges[usable].min()),
        r_hi=float(edges[usable].max()),
        n_bins=n,
        p_lo=p_min,
        p_hi=p_max,
    )


@dataclass
class SidelengthSummary:
    """Shape diagnostics of origin cells across palm runs.

    ``products`` holds the final-cell sidelength product per run and
    ``stage_products`` the product after every stage.  Products outside
    (1/2, 2) are counted two ways: on the final cell and on any stage.
    Both are reported, not asserted; runs with few points (a single-point
    window has product = window volume) are expected to land outside.
    ``stage_deltas`` holds per-run max-norm changes of the sidelength
    vector between consecutive tracked stages.
    """

    products: np.ndarray
    stage_products: np.ndarray
    violation_fraction: float
    any_stage_violation_fraction: float
    max_sidelength: np.ndarray
    stage_deltas: np.ndarray

    def to_csv(self) -> str:
        n_stages = self.stage_deltas.shape[1] if self.stage_deltas.size else 0
        header = ["product", "max_sidelength"] + [f"delta_{i}" for i in range(n_stages)]
        lines = [",".join(header)]
        for i in range(len(self.products)):
            row = [repr(float(self.products[i])), repr(float(self.max_sidelength[i]))]
            row += [repr(float(x)) for x in self.stage_deltas[i]]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def _outside_band(products: np.ndarray) -> np.ndarray:
    return (products <= 0.5) | (products >= 2.0)


def sidelength_diagnostics(reports) -> SidelengthSummary:
    """Summarize origin-cell sidelength behaviour over palm run reports."""
    products = []
    stage_products = []
    max_side = []
    deltas = []
    for rep in reports:
        if not isinstance(rep, RunReport) or rep.origin_stage_sides is None:
            raise ValueError("sidelength diagnostics need palm runs with origin tracking")
        sides = rep.origin_stage_sides
        products.append(float(np.prod(sides[-1])))
        stage_products.append(np.prod(sides[1:], axis=1))  # row 0 is the birth cell
        max_side.append(float(sides.max()))
        deltas.append(np.abs(np.diff(sides, axis=0)).max(axis=1))
    products = np.asarray(products)
    stage_products = np.asarray(stage_products) if stage_products else np.zeros((0, 0))
    return SidelengthSummary(
        products=products,
        stage_products=stage_products,
        violation_fraction=(
            float(np.mean(_outside_band(products))) if len(products) else 0.0
        ),
        any_stage_violation_fraction=(
            float(np.mean(_outside_band(stage_products).any(axis=1)))
            if stage_products.size
            else 0.0
        ),
        max_sidelength=np.asarray(max_side),
        stage_deltas=np.asarray(deltas) if deltas else np.zeros((0, 0)),
    )
