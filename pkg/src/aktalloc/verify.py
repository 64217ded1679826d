"""Built-in invariant suites behind the ``verify`` command.

Each suite runs a scaled-down deterministic version of a structural check:
equipartition, shift periodicity, concentration-bound domination, weight
sum-to-one, and the per-step displacement formula.  All go through the
public run path, so an implanted defect in the wall arithmetic is caught.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fractional import GridSpec, average_field, periodicity_check, sample_shifts
from .geometry import Cuboid
from .pointprocess import Configuration, palm, sample_poisson
from .seeding import derive_seed
from .stats import chernoff_bound, exact_poisson_two_sided_tail
from .transport import run_akt

__all__ = ["SUITES", "SuiteResult", "run_suites"]

_SEED = 20260809


@dataclass
class SuiteResult:
    name: str
    ok: bool
    detail: str


def _palm_window_config(dim: int, levels: int, intensity: float, rng) -> tuple[Configuration, np.ndarray]:
    side = 2.0 ** levels
    v = rng.uniform(0.0, side, dim)
    corner = v + side * np.floor(-v / side)
    domain = Cuboid(corner, corner + side)
    count = int(rng.poisson(intensity * side ** dim))
    pts = corner + rng.random((count, dim)) * side
    cfg = palm(Configuration(domain=domain, points=pts, seed=None, validate=False))
    return cfg, v


def suite_equipartition(seed: int = _SEED) -> SuiteResult:
    worst = 0.0
    for trial in range(10):
        rng = np.random.default_rng(derive_seed(seed, "verify-equi", trial))
        side = 16.0
        v = rng.uniform(0.0, side, 2)
        corner = v - side
        domain = Cuboid(corner, corner + side)
        pts = corner + rng.random((200, 2)) * side
        cfg = Configuration(domain=domain, points=pts, seed=None, validate=False)
        rep = run_akt(cfg, v, 4, record_steps=False)
        err, _ = rep.equipartition_error()
        worst = max(worst, err, rep.volume_defect())
    return SuiteResult("equipartition", worst <= 1e-9, f"worst relative error {worst:.3e}")


def suite_periodicity(seed: int = _SEED) -> SuiteResult:
    failures = 0
    for trial in range(10):
        rng = np.random.default_rng(derive_seed(seed, "verify-per", trial))
        cfg, v = _palm_window_config(2, 3, 1.0, rng)
        if not periodicity_check(cfg, v, 3):
            failures += 1
    return SuiteResult("periodicity", failures == 0, f"{failures}/10 windows failed")


def suite_chernoff(seed: int = _SEED) -> SuiteResult:
    worst_ratio = 0.0
    for lam in (1.0, 10.0, 100.0, 1000.0):
        for rho in np.linspace(0.05, 2.0, 40):
            exact = exact_poisson_two_sided_tail(lam, float(rho))
            bound = chernoff_bound(lam, float(rho))
            if bound > 0:
                worst_ratio = max(worst_ratio, exact / bound)
    return SuiteResult("chernoff", worst_ratio <= 1.0, f"max exact/bound {worst_ratio:.6f}")


def suite_sum_to_one(seed: int = _SEED) -> SuiteResult:
    rng = np.random.default_rng(derive_seed(seed, "verify-sum"))
    domain = Cuboid([-5.0, -5.0], [5.0, 5.0])
    cfg = palm(sample_poisson(domain, 1.0, int(rng.integers(1 << 31))))
    shifts = sample_shifts(2, 16, 2, derive_seed(seed, "verify-sum-shifts"))
    grid = GridSpec(Cuboid([-1.0, -1.0], [1.0, 1.0]), 0.25)
    fld = average_field(cfg, 2, shifts, grid)
    defect = fld.sum_to_one_defect()
    return SuiteResult("sum_to_one", defect <= 1e-9, f"max |sum - 1| = {defect:.3e}")


def suite_shift_formula(seed: int = _SEED) -> SuiteResult:
    worst = 0.0
    checked = 0
    for trial in range(10):
        rng = np.random.default_rng(derive_seed(seed, "verify-shift", trial))
        cfg, v = _palm_window_config(2, 3, 1.0, rng)
        rep = run_akt(cfg, v, 3, record_steps=True)
        orow = rep.origin_row
        for s in rep.steps:
            for pid, before, delta in s.shifts:
                if pid != orow:
                    continue
                half = 0.5 * (s.parent.upper[s.axis] - s.parent.lower[s.axis])
                rel = abs(before - s.old_wall) / half
                m = s.n_left + s.n_right
                formula = (1.0 - rel) * half * (s.n_left - s.n_right) / m
                worst = max(worst, abs(delta - formula))
                checked += 1
    return SuiteResult(
        "shift_formula", worst <= 1e-12, f"{checked} steps, worst deviation {worst:.3e}"
    )


SUITES = {
    "equipartition": suite_equipartition,
    "periodicity": suite_periodicity,
    "chernoff": suite_chernoff,
    "sum_to_one": suite_sum_to_one,
    "shift_formula": suite_shift_formula,
}


def run_suites(names=None, seed: int = _SEED) -> list[SuiteResult]:
    if names is None:
        names = list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s): {unknown}; available: {sorted(SUITES)}")
    return [SUITES[n](seed) for n in names]
