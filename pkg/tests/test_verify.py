import numpy as np
import pytest

import aktalloc.transport as tr
from aktalloc.verify import SUITES, run_suites


def test_all_suites_pass():
    results = run_suites()
    assert [r.name for r in results] == list(SUITES)
    for r in results:
        assert r.ok, f"{r.name}: {r.detail}"


def test_unknown_suite_rejected():
    with pytest.raises(ValueError):
        run_suites(["nonsense"])


def test_equipartition_suite_catches_biased_wall(monkeypatch):
    orig = tr._wall_fraction

    def biased(n_left, n_total):
        return np.minimum(orig(n_left, n_total) + 0.005, 1.0)

    monkeypatch.setattr(tr, "_wall_fraction", biased)
    results = run_suites(["equipartition"])
    assert not results[0].ok


def test_shift_formula_suite_catches_scaled_walls(monkeypatch):
    orig = tr._wall_fraction

    def warped(n_left, n_total):
        f = orig(n_left, n_total)
        return np.clip(f + 0.02 * f * (1.0 - f), 0.0, 1.0)

    monkeypatch.setattr(tr, "_wall_fraction", warped)
    results = run_suites(["shift_formula", "equipartition"])
    assert not all(r.ok for r in results)
