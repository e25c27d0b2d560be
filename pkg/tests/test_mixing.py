import math

import numpy as np
import pytest

from adjwalk.mixing import (
    InconsistentWindowError,
    MixingWindow,
    cutoff_sweep,
    default_sweep_grid,
    mixing_window,
    t_delta,
    tv_lower,
    tv_upper,
    wilson_interval,
)
from adjwalk.process import ModelParams


def test_wilson_basic():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert hi - lo < 0.25
    lo0, hi0 = wilson_interval(0, 100)
    assert lo0 == 0.0 and hi0 < 0.06
    lo1, hi1 = wilson_interval(100, 100)
    assert hi1 == 1.0 and lo1 > 0.94
    with pytest.raises(ValueError):
        wilson_interval(1, 0)


def test_t_delta_values():
    # 10 log 4 / (1 - 0.8)
    p = ModelParams(N=10, lam=0.6)
    assert t_delta(p, 0.0) == pytest.approx(69.3147, abs=1e-3)
    assert t_delta(p, 1.0) == pytest.approx(2 * 69.3147, abs=2e-3)
    # small-lambda expansion: log r ~ 2 lam, 1 - sqrt(1-lam^2) ~ lam^2/2
    p2 = ModelParams(N=100, lam=0.01)
    assert t_delta(p2, 0.0) == pytest.approx(4 * 100 / 0.01, rel=0.01)


def test_tv_upper_n2_is_event_clock():
    # at N=2 the pair merges at the first clock ring, so the no-merge
    # fraction estimates e^{-t}
    p = ModelParams(N=2, lam=0.6)
    grid = np.array([0.5, 1.0, 2.0, 3.0])
    curve = tv_upper(p, grid, 4000, 99)
    for b, t in zip(curve.bound, grid):
        ref = math.exp(-t)
        assert abs(b - ref) < 4 * math.sqrt(ref * (1 - ref) / 4000)


def test_tv_upper_monotone_start():
    p = ModelParams(N=8, lam=0.3)
    curve = tv_upper(p, np.array([0.0001, 50.0, 200.0]), 200, 7)
    assert curve.bound[0] >= 0.99  # distinct starts: nothing merges instantly
    assert curve.bound[0] >= curve.bound[1] >= curve.bound[2]


def test_tv_upper_triple_dominates_pair():
    p = ModelParams(N=8, lam=0.3)
    grid = np.array([20.0, 60.0, 120.0])
    curve = tv_upper(p, grid, 200, 11, include_triple=True)
    assert curve.worst_bound is not None
    assert np.all(curve.worst_bound <= 2.0)
    assert np.all(curve.worst_bound >= curve.bound - 0.25)


def test_tv_lower_decays():
    p = ModelParams(N=8, lam=0.3)
    grid = np.array([1.0, 40.0, 160.0])
    curve = tv_lower(p, grid, 300, 13)
    assert curve.bound[0] >= 0.9  # far from stationarity at t ~ 1
    assert curve.bound[-1] <= 0.2
    assert np.all((0.0 <= curve.bound) & (curve.bound <= 1.0))
    assert np.all(curve.pi_tail <= 0.02)


def test_threads_do_not_change_results():
    p = ModelParams(N=8, lam=0.3)
    grid = np.array([10.0, 50.0, 150.0])
    a = tv_upper(p, grid, 120, 31, threads=1)
    b = tv_upper(p, grid, 120, 31, threads=4)
    assert np.array_equal(a.bound, b.bound)
    la = tv_lower(p, grid, 120, 31, threads=1)
    lb = tv_lower(p, grid, 120, 31, threads=4)
    assert np.array_equal(la.bound, lb.bound)


def test_mixing_window_n2_oracle():
    # true TV from the max start is exactly e^{-t}; t_mix(1/4) = log 4
    p = ModelParams(N=2, lam=0.6)
    win = mixing_window(p, 0.25, np.linspace(0.9, 1.9, 11), 20000, 77)
    assert win.t_lower <= math.log(4.0) <= win.t_upper
    assert win.t_upper - win.t_lower <= 0.2 * math.log(4.0) + 1e-9


def test_window_grid_validation():
    p = ModelParams(N=2, lam=0.6)
    with pytest.raises(ValueError):
        mixing_window(p, 0.25, [1.0, 1.0, 2.0], 100, 1)


def test_window_consistency_guard():
    with pytest.raises(InconsistentWindowError):
        MixingWindow(epsilon=0.25, t_lower=2.0, t_upper=1.0, t_grid=np.array([1.0]),
                     upper_curve=None, lower_curve=None, trajectories=1)


def test_default_sweep_grids():
    p = ModelParams(N=64, lam=0.125)
    g1 = default_sweep_grid(p, "vanishing", 10)
    norm = 4.0 * 64 / 0.125
    assert g1[0] == pytest.approx(0.25 * norm)
    assert g1[-1] == pytest.approx(1.9 * norm)
    g2 = default_sweep_grid(p, "fixed", 10)
    assert g2[0] < g2[-1]


def test_cutoff_sweep_singleton():
    rows = cutoff_sweep([(2, 0.6, "vanishing")], 0.25, 2000, 5, points=12)
    assert len(rows) == 1
    r = rows[0]
    assert r.N == 2 and r.normalizer == pytest.approx(8.0 / 0.6)
    assert 0.0 <= r.t_lower <= r.t_upper
    with pytest.raises(ValueError):
        cutoff_sweep([(2, 0.6, "bogus")], 0.25, 10, 5)
