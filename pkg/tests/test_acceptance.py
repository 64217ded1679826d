"""Acceptance criteria, one test per criterion, one printed verdict line each.

Statistical criteria run on seeds pinned in ``aktalloc/data/pilot_references.json``
(regenerate with ``scripts/run_pilots.py``); everything else is deterministic
arithmetic at the stated tolerances.
"""

import json
import math
import xml.etree.ElementTree as ET
from importlib import resources

import numpy as np
import pytest

from aktalloc.cli import main as cli_main
from aktalloc.fractional import (
    GridSpec,
    average_field,
    average_fields,
    l1_distance,
    sample_shifts,
)
from aktalloc.geometry import Cuboid
from aktalloc.pointprocess import Configuration, palm, sample_poisson
from aktalloc.purify import purify_field
from aktalloc.seeding import derive_seed
from aktalloc.stats import (
    TailStats,
    chernoff_bound,
    exact_poisson_two_sided_tail,
    fit_decay,
    sidelength_diagnostics,
    tail_sweep,
)
from aktalloc.transport import run_akt

SEED = 20260809


def report(criterion: str, ok: bool, detail: str):
    print(f"[acceptance] {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def references():
    text = resources.files("aktalloc.data").joinpath("pilot_references.json").read_text()
    return json.loads(text)


def window_palm_config(dim, levels, intensity, rng):
    side = 2.0 ** levels
    v = rng.uniform(0.0, side, dim)
    corner = v + side * np.floor(-v / side)
    count = int(rng.poisson(intensity * side ** dim))
    pts = corner + rng.random((count, dim)) * side
    cfg = palm(Configuration(
        domain=Cuboid(corner, corner + side), points=pts, validate=False
    ))
    return cfg, v


@pytest.fixture(scope="module")
def criterion5_field():
    cfg = palm(sample_poisson(Cuboid([-9, -9], [9, 9]), 1.0, derive_seed(SEED, "c5-config")))
    shifts = sample_shifts(3, 64, 2, derive_seed(SEED, "c5-shifts"))
    grid = GridSpec(Cuboid([-1, -1], [1, 1]), 1 / 8)
    return average_field(cfg, 3, shifts, grid)


def test_c1_equipartition():
    worst_cell = 0.0
    worst_total = 0.0
    for s in range(50):
        for j in range(10):
            rng = np.random.default_rng(derive_seed(SEED, "c1", s, j))
            v = rng.uniform(0.0, 16.0, 2)
            corner = v + 16.0 * np.floor(-v / 16.0)
            pts = corner + rng.random((200, 2)) * 16.0
            cfg = Configuration(
                domain=Cuboid(corner, corner + 16.0), points=pts, validate=False
            )
            rep = run_akt(cfg, v, 4, record_steps=False, keep_empty=True)
            err, _ = rep.equipartition_error()
            worst_cell = max(worst_cell, err)
            worst_total = max(worst_total, rep.volume_defect())
    ok = worst_cell <= 1e-9 and worst_total <= 1e-9
    report("C1 equipartition", ok,
           f"500 runs, worst cell rel err {worst_cell:.3e}, worst total defect {worst_total:.3e}")


def test_c2_periodicity():
    worst = 0.0
    for t in range(100):
        rng = np.random.default_rng(derive_seed(SEED, "c2", t))
        cfg, v = window_palm_config(2, 4, 1.0, rng)
        axis = int(rng.integers(0, 2))
        u = v.copy()
        u[axis] += 16.0
        rep_a = run_akt(cfg, v, 4, record_steps=False, keep_empty=False)
        rep_b = run_akt(cfg, u, 4, record_steps=False, keep_empty=False)
        ra, rb = rep_a.origin_cell_row(), rep_b.origin_cell_row()
        dev = max(
            float(np.max(np.abs(rep_a.cell_lower[ra] - rep_b.cell_lower[rb]))),
            float(np.max(np.abs(rep_a.cell_upper[ra] - rep_b.cell_upper[rb]))),
            float(np.max(np.abs(rep_a.cell_carried[ra] - rep_b.cell_carried[rb]))),
        )
        worst = max(worst, dev)
    report("C2 periodicity", worst <= 1e-12, f"100 triples, worst deviation {worst:.3e}")


def test_c3_shift_formula():
    worst = 0.0
    checked = 0
    for t in range(100):
        rng = np.random.default_rng(derive_seed(SEED, "c3", t))
        cfg, v = window_palm_config(2, 3, 1.0, rng)
        rep = run_akt(cfg, v, 3, record_steps=True)
        orow = rep.origin_row
        for s in rep.steps:
            half = 0.5 * float(s.parent.upper[s.axis] - s.parent.lower[s.axis])
            m = s.n_left + s.n_right
            for pid, before, delta in s.shifts:
                if pid != orow:
                    continue
                rel = abs(before - s.old_wall) / half
                formula = (1.0 - rel) * half * (s.n_left - s.n_right) / m
                worst = max(worst, abs(delta - formula))
                checked += 1
    ok = worst <= 1e-12 and checked >= 100
    report("C3 shift formula", ok, f"{checked} origin steps, worst |dev| {worst:.3e}")


def test_c4_chernoff_domination():
    violations = 0
    margin = math.inf
    for lam in (1.0, 10.0, 100.0, 1000.0):
        for rho in np.linspace(0.05, 2.0, 40):
            exact = exact_poisson_two_sided_tail(lam, float(rho))
            bound = chernoff_bound(lam, float(rho))
            if exact > bound:
                violations += 1
            if exact > 0:
                margin = min(margin, bound / exact)
    report("C4 chernoff domination", violations == 0,
           f"160 grid points, min bound/exact {margin:.3f}")


def test_c5_sum_to_one(criterion5_field):
    fld = criterion5_field
    covered = int(fld.covered().sum())
    defect = fld.sum_to_one_defect()
    ok = defect <= 1e-9 and covered > 0
    report("C5 fractional sum-to-one", ok,
           f"{covered}/{fld.grid.n_cells} grid points covered, max |sum-1| {defect:.3e}")


def test_c6_cauchy_sequence(references):
    p = references["cauchy_sequence"]["params"]
    grid = GridSpec(
        Cuboid([-p["grid_half"]] * p["dim"], [p["grid_half"]] * p["dim"]), p["grid_h"]
    )
    domain = Cuboid([-p["domain_half"]] * p["dim"], [p["domain_half"]] * p["dim"])
    stages = p["stages"]
    deltas = []
    for c in range(p["configs"]):
        cfg = palm(sample_poisson(domain, p["intensity"], derive_seed(p["seed"], "cauchy-cfg", c)))
        shifts = sample_shifts(
            stages[-1], p["shifts"], p["dim"], derive_seed(p["seed"], "cauchy-shifts", c)
        )
        fields = average_fields(cfg, stages, shifts, grid)
        deltas.append([l1_distance(fields[n], fields[n + 1]) for n in stages[:-1]])
    arr = np.array(deltas)
    pinned = np.array(references["cauchy_sequence"]["deltas"])
    assert np.allclose(arr, pinned, rtol=1e-9), "pinned pilot deltas drifted"
    gaps = -np.diff(arr, axis=1)
    gap_means = gaps.mean(axis=0)
    gap_sems = gaps.std(axis=0, ddof=1) / np.sqrt(len(arr))
    ok = bool(np.all(gap_means >= -2.0 * gap_sems))
    detail = "; ".join(
        f"delta_{n}->delta_{n + 1}: gap {g:.2f} (sem {s:.2f})"
        for n, g, s in zip(stages[:-1], gap_means, gap_sems)
    )
    report("C6 cauchy sequence", ok, detail)


def test_c7_purification_quotas(criterion5_field):
    fld = criterion5_field
    alloc, regions, quota_report = purify_field(fld)
    h_meas = fld.grid.cell_measure
    flat = alloc.owner.ravel()
    worst = 0.0
    containment_ok = True
    for region in regions:
        owners = flat[region.cells]
        for o in np.unique(owners):
            if int(o) not in region.center_ids:
                containment_ok = False
        for cid, quota in zip(region.center_ids, region.quotas):
            got = float((owners == cid).sum()) * h_meas
            worst = max(worst, abs(got - quota))
    ok = containment_ok and worst <= h_meas + 1e-12 and quota_report.all_ok
    report("C7 purification quotas", ok,
           f"{len(regions)} regions, worst per-region |achieved-quota| {worst:.5f} "
           f"(h^d {h_meas:.5f})")


def test_c8_tail_regime_contrast(references):
    p = references["tail_contrast"]["params"]
    slopes = {}
    for d in (2, 3):
        stats = tail_sweep(d, p["levels"], p["intensity"], p["trials"],
                           margin=p["margin"], seed=p["seed"])
        fit = fit_decay(stats, p["p_min"], p["p_max"])
        slopes[d] = fit.slope
        pinned = references["tail_contrast"]["dims"][str(d)]["slope"]
        assert fit.slope == pytest.approx(pinned, rel=1e-9), "pinned slope drifted"
    gap = slopes[3] - slopes[2]
    report("C8 tail regime contrast", gap >= 0.5,
           f"slope d=3 {slopes[3]:.3f} vs d=2 {slopes[2]:.3f}, gap {gap:.3f}")


def test_c9_fit_oracle_recovery():
    edges = np.geomspace(0.5, 1.5, 40)
    devs = []
    for expo in (3.0, 1.0):
        stats = TailStats(
            dim=3, intensity=1.0, levels=5, trials=1, kept=1, discarded=0,
            margin=0.0, seed=0, bin_edges=edges,
            tail_counts=np.zeros(len(edges), np.int64),
            survival=np.exp(-edges ** expo), diameters=np.zeros(1),
        )
        fit = fit_decay(stats, 0.02, 0.95)
        devs.append(abs(fit.slope - expo))
    ok = all(d <= 1e-6 for d in devs)
    report("C9 fit oracle recovery", ok,
           f"|slope-3| {devs[0]:.2e}, |slope-1| {devs[1]:.2e}")


def test_c10_sidelength_products(references):
    p = references["sidelength_products"]["params"]
    reports_gen = []
    for t in range(p["runs"]):
        rng = np.random.default_rng(derive_seed(p["seed"], "sideprod", t))
        cfg, v = window_palm_config(p["dim"], p["levels"], p["intensity"], rng)
        reports_gen.append(
            run_akt(cfg, v, p["levels"], record_steps=False, keep_empty=False)
        )
    summ = sidelength_diagnostics(reports_gen)
    ref_final = references["sidelength_products"]["final_violation_fraction"]
    ref_any = references["sidelength_products"]["any_stage_violation_fraction"]
    ok = (
        summ.violation_fraction <= ref_final + 1e-12
        and summ.any_stage_violation_fraction <= ref_any + 1e-12
    )
    report("C10 sidelength products", ok,
           f"final {summ.violation_fraction:.3f} (ref {ref_final:.3f}), "
           f"any-stage {summ.any_stage_violation_fraction:.3f} (ref {ref_any:.3f})")


def test_c11_figure_reproduction(tmp_path):
    cfg = tmp_path / "cfg.json"
    assert cli_main(["generate", "--d", "2", "--side", "4", "--n", "8",
                     "--seed", "1", "--out", str(cfg)]) == 0
    out = tmp_path / "fig"
    assert cli_main(["allocate", "--config", str(cfg), "--svg",
                     "--out", str(out)]) == 0
    root = ET.parse(tmp_path / "fig.svg").getroot()
    polys = {e.get("data-cell"): e for e in root.iter() if e.tag.endswith("polygon")}
    moved = {
        e.get("data-cell"): e
        for e in root.iter()
        if e.tag.endswith("circle") and e.get("class") == "transported"
    }
    centers = [
        e for e in root.iter()
        if e.tag.endswith("circle") and e.get("class") == "center"
    ]
    inside = 0
    for key, circ in moved.items():
        poly = polys[key]
        xs = [float(pair.split(",")[0]) for pair in poly.get("points").split()]
        ys = [float(pair.split(",")[1]) for pair in poly.get("points").split()]
        cx, cy = float(circ.get("cx")), float(circ.get("cy"))
        if min(xs) <= cx <= max(xs) and min(ys) <= cy <= max(ys):
            inside += 1
    ok = len(polys) == 8 and len(centers) == 8 and len(moved) == 8 and inside == 8
    report("C11 figure reproduction", ok,
           f"{len(polys)} cell polygons, {len(centers)} centers, "
           f"{len(moved)} transported, {inside} inside their polygons")
