import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from aktalloc.stats import (
    TailStats,
    chernoff_bound,
    default_bin_edges,
    exact_poisson_two_sided_tail,
    fit_decay,
    sidelength_diagnostics,
    tail_sweep,
)


def synthetic_stats(edges, survival):
    return TailStats(
        dim=3, intensity=1.0, levels=5, trials=1, kept=1, discarded=0,
        margin=0.0, seed=0, bin_edges=np.asarray(edges, float),
        tail_counts=np.zeros(len(edges), np.int64),
        survival=np.asarray(survival, float), diameters=np.zeros(1),
    )


# ---------------------------------------------------------------------------
# concentration bound


def test_chernoff_vacuous_at_zero():
    assert chernoff_bound(5.0, 0.0) == 2.0


def test_chernoff_direct_value():
    assert chernoff_bound(100.0, 0.5) == pytest.approx(2 * math.exp(-6.25), rel=0, abs=0)


def test_chernoff_rejects_rho_outside():
    with pytest.raises(ValueError):
        chernoff_bound(10.0, 2.5)
    with pytest.raises(ValueError):
        chernoff_bound(10.0, -0.1)
    with pytest.raises(ValueError):
        chernoff_bound(0.0, 1.0)


def test_exact_tail_hand_enumeration():
    # P(|X-1| > 1) = P(X > 2) = 1 - e^-1 (1 + 1 + 1/2)
    got = exact_poisson_two_sided_tail(1.0, 1.0)
    assert got == pytest.approx(1 - math.exp(-1) * 2.5, abs=1e-15)


def test_exact_tail_band_covers_everything():
    # the band [0, 2 lam] at rho=1 leaves only the far upper tail; huge rho -> 0
    assert exact_poisson_two_sided_tail(5.0, 100.0) == pytest.approx(0.0, abs=1e-200)


def test_exact_tail_monotone_in_rho():
    vals = [exact_poisson_two_sided_tail(25.0, r) for r in np.linspace(0.0, 2.0, 41)]
    assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))


def test_exact_tail_matches_scipy():
    for lam in (1.0, 10.0, 100.0, 1000.0):
        for rho in np.linspace(0.05, 2.0, 40):
            band = lam * float(rho)
            hi = math.floor(lam + band)
            lo = math.ceil(lam - band) - 1
            ref = float(sps.poisson.sf(hi, lam))
            if lo >= 0:
                ref += float(sps.poisson.cdf(lo, lam))
            mine = exact_poisson_two_sided_tail(lam, float(rho))
            assert mine == pytest.approx(ref, rel=1e-9, abs=1e-300)


def test_chernoff_dominates_exact_tail():
    for lam in (1.0, 10.0, 100.0, 1000.0):
        for rho in np.linspace(0.05, 2.0, 40):
            assert exact_poisson_two_sided_tail(lam, float(rho)) <= chernoff_bound(
                lam, float(rho)
            )


@given(lam=st.floats(0.5, 2000), rho=st.floats(0.001, 2.0))
@settings(max_examples=60, deadline=None)
def test_chernoff_domination_property(lam, rho):
    assert exact_poisson_two_sided_tail(lam, rho) <= chernoff_bound(lam, rho)


# ---------------------------------------------------------------------------
# decay fitting


def test_fit_recovers_cubic_exponent():
    edges = np.geomspace(0.5, 1.5, 40)
    fit = fit_decay(synthetic_stats(edges, np.exp(-edges ** 3)))
    assert fit.slope == pytest.approx(3.0, abs=1e-6)
    assert fit.stderr < 1e-9


def test_fit_recovers_linear_exponent():
    edges = np.geomspace(0.2, 3.5, 40)
    fit = fit_decay(synthetic_stats(edges, np.exp(-edges)), p_min=0.05, p_max=0.8)
    assert fit.slope == pytest.approx(1.0, abs=1e-6)


def test_fit_needs_enough_bins():
    edges = np.array([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        fit_decay(synthetic_stats(edges, np.array([1.0, 1.0, 0.0])))


# ---------------------------------------------------------------------------
# tail sweeps


def test_tail_sweep_deterministic():
    a = tail_sweep(2, 3, 1.0, 40, margin=1.0, seed=77)
    b = tail_sweep(2, 3, 1.0, 40, margin=1.0, seed=77)
    assert np.array_equal(a.diameters, b.diameters)
    assert np.array_equal(a.survival, b.survival)
    assert a.to_csv() == b.to_csv()


def test_tail_sweep_workers_match_serial():
    a = tail_sweep(2, 3, 1.0, 24, margin=1.0, seed=5, workers=1)
    b = tail_sweep(2, 3, 1.0, 24, margin=1.0, seed=5, workers=2)
    assert np.array_equal(a.diameters, b.diameters)


def test_tail_sweep_survival_monotone():
    ts = tail_sweep(2, 4, 1.0, 80, margin=2.0, seed=13)
    assert np.all(np.diff(ts.survival) <= 0)
    assert ts.kept + ts.discarded == ts.trials


def test_tail_sweep_intensity_zero_gives_window_diagonal():
    # only the palm origin exists: its cell is the whole window every trial
    ts = tail_sweep(2, 3, 0.0, 10, margin=0.0, seed=3)
    assert ts.kept == 10
    diag = 8.0 * math.sqrt(2)
    # the origin sits inside the window, so the anchored diameter is the diagonal
    assert np.allclose(ts.diameters, diag, rtol=1e-12)


def test_tail_sweep_all_discarded_raises():
    with pytest.raises(ValueError, match="discarded"):
        tail_sweep(2, 3, 0.0, 10, margin=1.0, seed=3)


def test_tail_sweep_rejects_zero_trials():
    with pytest.raises(ValueError):
        tail_sweep(2, 3, 1.0, 0, seed=1)


def test_default_bins_cover_window():
    edges = default_bin_edges(3, 5)
    assert edges[0] < 1.0
    assert edges[-1] == pytest.approx(32 * math.sqrt(3))


def test_median_tail_matches_pilot_reference():
    import json
    from importlib import resources

    refs = json.loads(
        resources.files("aktalloc.data").joinpath("pilot_references.json").read_text()
    )["median_tail"]
    p = refs["params"]
    ts = tail_sweep(p["dim"], p["levels"], p["intensity"], p["trials"],
                    margin=p["margin"], seed=p["seed"])
    med = float(np.median(ts.diameters))
    assert med == pytest.approx(refs["median_diameter"], rel=0, abs=0)
    assert med < 2.0 ** p["levels"] / 4  # far below the window side


# ---------------------------------------------------------------------------
# sidelength diagnostics


def palm_window_run(dim, levels, intensity, seed):
    from aktalloc.geometry import Cuboid
    from aktalloc.pointprocess import Configuration, palm
    from aktalloc.transport import run_akt

    rng = np.random.default_rng(seed)
    side = 2.0 ** levels
    v = rng.uniform(0, side, dim)
    corner = v + side * np.floor(-v / side)
    count = int(rng.poisson(intensity * side ** dim))
    pts = corner + rng.random((count, dim)) * side
    cfg = palm(Configuration(domain=Cuboid(corner, corner + side), points=pts, validate=False))
    return run_akt(cfg, v, levels, record_steps=False, keep_empty=False)


def test_sidelength_single_point_flagged():
    rep = palm_window_run(2, 3, 0.0, seed=1)
    summ = sidelength_diagnostics([rep])
    assert summ.products[0] == pytest.approx(64.0)
    assert summ.violation_fraction == 1.0


def test_sidelength_shapes_and_band():
    reps = [palm_window_run(2, 4, 1.0, seed=s) for s in range(30)]
    summ = sidelength_diagnostics(reps)
    assert summ.products.shape == (30,)
    assert summ.stage_products.shape == (30, 4)
    assert summ.stage_deltas.shape == (30, 4)
    # 256-point windows concentrate the final product hard around 1
    assert summ.violation_fraction <= 0.1
    assert 0.0 <= summ.any_stage_violation_fraction <= 1.0
    csv = summ.to_csv()
    assert csv.splitlines()[0].startswith("product,max_sidelength")


def test_sidelength_requires_palm_reports():
    from aktalloc.geometry import Cuboid
    from aktalloc.pointprocess import Configuration
    from aktalloc.transport import run_akt

    cfg = Configuration(domain=Cuboid([0, 0], [2, 2]), points=np.array([[0.5, 0.5]]))
    rep = run_akt(cfg, [0.0, 0.0], 1, anchor=[1.0, 1.0])
    with pytest.raises(ValueError):
        sidelength_diagnostics([rep])
