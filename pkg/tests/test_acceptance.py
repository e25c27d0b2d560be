"""Acceptance gate: one test per numbered criterion, summary lines in conftest.

Each test accumulates its violations into a list and asserts the list is
empty, so a failure message shows everything that went wrong at once.
Runtime budgets are part of the criteria and asserted alongside.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from adjwalk import _kernels
from adjwalk.cli import ExperimentManifest, run as cli_run
from adjwalk.coupling import simulate_coupled, simulate_triple
from adjwalk.distributions import BetaParams, IntervalBeta, tv_by_quadrature
from adjwalk.hydro import (
    SchemeKind,
    TransformT,
    barrier_profiles_naive,
    calibrate_sub_barrier,
    exact_fX,
    initial_profile,
    integrate_scheme,
    lax_solution,
    naive_front,
    pde_residual_S,
    sub_barrier,
    super_barrier_M,
)
from adjwalk.mixing import cutoff_sweep, mixing_window, t_delta, tv_lower, tv_upper
from adjwalk.process import (
    Configuration,
    ModelParams,
    mu_k_calibrate,
    sample_stationary,
    sample_stationary_batch,
    simulate_X,
    simulate_XM,
)
from adjwalk.spectral import decay_check, gamma_N
from adjwalk.special import reg_beta_cdf
from adjwalk.streams import seed_stream


def _finish(problems, t0, budget):
    elapsed = time.monotonic() - t0
    if elapsed > budget:
        problems.append(f"runtime {elapsed:.1f}s exceeds budget {budget}s")
    assert not problems, "; ".join(problems)


def _marginal_cdf(p, k):
    a, b = p.marginal_shapes(k)

    def cdf(z):
        return np.array([reg_beta_cdf(a, b, zi) for zi in np.atleast_1d(z)])

    return cdf


def _ks_stationary(p, heights, sites, problems, label):
    for k in sites:
        pv = stats.kstest(heights[:, k] / p.N, _marginal_cdf(p, k)).pvalue
        if pv <= 0.01:
            problems.append(f"{label}: KS p-value {pv:.4g} at k={k}")


def test_criterion_01_stationary_marginals():
    t0 = time.monotonic()
    problems = []
    p = ModelParams(N=64, lam=0.2, alpha1=1.0)
    heights = sample_stationary_batch(p, 10_000, seed_stream(101, 0))
    _ks_stationary(p, heights, (16, 32, 48), problems, "stationary sampler")
    _finish(problems, t0, 10.0)


def test_criterion_02_stationarity_preserved():
    t0 = time.monotonic()
    problems = []
    p = ModelParams(N=32, lam=0.3)
    start = sample_stationary_batch(p, 10_000, seed_stream(102, 0))
    final = np.empty_like(start)
    for i in range(start.shape[0]):
        c, _ = simulate_X(Configuration(start[i]), p, 10.0, seed_stream(102, i + 1))
        final[i] = c.heights
    _ks_stationary(p, final, (8, 16, 24), problems, "after t=10")
    _finish(problems, t0, 60.0)


def test_criterion_03_eigen_decay():
    t0 = time.monotonic()
    problems = []
    p = ModelParams(N=32, lam=0.3)
    rep = decay_check(p, np.arange(2.0, 21.0, 2.0), 10_000, seed_stream(103, 0))
    gamma = gamma_N(p)
    if not rep.ci_low <= gamma <= rep.ci_high:
        problems.append(
            f"gamma {gamma:.6f} outside slope CI [{rep.ci_low:.6f}, {rep.ci_high:.6f}]")
    _finish(problems, t0, 300.0)


def _random_ordered_pair(p, rng):
    # overlapping ordered intervals: lower endpoints below upper ones
    while True:
        k = int(rng.integers(1, p.N))
        ll = rng.uniform(0.0, 2.0)
        ul = ll + rng.uniform(0.0, 1.2)
        lr = ll + rng.uniform(0.4, 2.0)
        ur = ul + rng.uniform(0.4, 2.0)
        if lr <= ur and ul < lr:
            t = p.tables
            params = BetaParams(t.a[k], t.b[k])
            return k, IntervalBeta(params, ll, lr), IntervalBeta(params, ul, ur)


def test_criterion_04_coupling_exactness():
    t0 = time.monotonic()
    problems = []
    p = ModelParams(N=12, lam=0.4)
    t = p.tables
    pair_rng = seed_stream(104, 0)
    trials = 100_000
    for pair in range(10):
        k, lo, up = _random_ordered_pair(p, pair_rng)
        tv = tv_by_quadrature(lo, up)
        rng = seed_stream(104, pair + 1)
        vls = np.empty(trials)
        vus = np.empty(trials)
        merged = 0
        for i in range(trials):
            vl, vu = _kernels.coupled_event(rng, k, lo.left, lo.width,
                                            up.left, up.width,
                                            t.a, t.b, t.s, t.sd, t.mu_u)
            vls[i], vus[i] = vl, vu
            merged += vl == vu
        target = 1.0 - tv
        se = math.sqrt(max(target * (1.0 - target), 1e-12) / trials)
        if abs(merged / trials - target) > 3.0 * se:
            problems.append(
                f"pair {pair}: merge rate {merged / trials:.5f} vs 1-TV {target:.5f}")
        law = stats.beta(t.a[k], t.b[k])
        pl = stats.kstest(vls, lambda z, d=lo: law.cdf((z - d.left) / d.width)).pvalue
        pu = stats.kstest(vus, lambda z, d=up: law.cdf((z - d.left) / d.width)).pvalue
        if pl <= 0.01 or pu <= 0.01:
            problems.append(f"pair {pair}: marginal KS p-values {pl:.4g}/{pu:.4g}")
    _finish(problems, t0, 120.0)


def test_criterion_05_zero_order_violations():
    # the event kernels count order violations and every wrapper raises on
    # a nonzero count, so any violation anywhere in the suite is fatal;
    # this battery exercises the corners directly
    problems = []
    for n, lam, t_end in ((16, 0.4, 100.0), (64, 0.8, 50.0), (8, 0.05, 200.0),
                          (32, 0.3, 150.0)):
        p = ModelParams(N=n, lam=lam)
        for i in range(25):
            rng = seed_stream(105, 1000 * n + i)
            try:
                simulate_coupled(Configuration.maximal(p), sample_stationary(p, rng),
                                 p, t_end, rng)
                simulate_triple(Configuration.minimal(p), p, t_end, rng)
            except RuntimeError as exc:
                problems.append(f"N={n} lam={lam} run {i}: {exc}")
    assert not problems, "; ".join(problems)


def test_criterion_06_n2_mixing_oracle():
    t0 = time.monotonic()
    problems = []
    p = ModelParams(N=2, lam=0.6)
    grid = np.arange(0.5, 4.5, 0.5)
    curve = tv_upper(p, grid, 10_000, 106)
    for b, t in zip(curve.bound, grid):
        ref = math.exp(-t)  # exact TV from the max start
        se = math.sqrt(ref * (1.0 - ref) / 10_000)
        if abs(b - ref) > 3.0 * se:
            problems.append(f"envelope at t={t}: {b:.4f} vs e^-t {ref:.4f}")
    win = mixing_window(p, 0.25, np.linspace(1.0, 1.8, 33), 40_000, 1066)
    target = math.log(4.0)
    if not win.t_lower <= target <= win.t_upper:
        problems.append(f"window [{win.t_lower}, {win.t_upper}] misses log 4")
    if win.t_upper - win.t_lower > 0.2 * target:
        problems.append(f"window width {win.t_upper - win.t_lower:.3f} > 20%")
    _finish(problems, t0, 60.0)


def test_criterion_07_scheme_identity():
    t0 = time.monotonic()
    problems = []
    p = ModelParams(N=16, lam=0.5)
    t_list = [0.5, 1.0, 2.0, 4.0]
    kind = SchemeKind("X")
    _, prof = integrate_scheme(kind, initial_profile(kind, p), p, 4.0,
                               store_times=t_list)
    for j, t in enumerate(t_list):
        gap = float(np.max(np.abs(prof[j] - exact_fX(p, t))))
        if gap > 1e-6:
            problems.append(f"spectral vs RK4 gap {gap:.2e} at t={t}")
    # Monte Carlo cross-check: T of the empirical mean profile
    tr = TransformT(p)
    real_times = np.asarray(t_list) * p.N / p.lam
    trials = 10_000
    c0 = Configuration.maximal(p)
    sum_h = np.zeros((4, p.N + 1))
    sum_t = np.zeros((4, p.N + 1))
    sum_t2 = np.zeros((4, p.N + 1))
    for i in range(trials):
        _, snaps = simulate_X(c0, p, float(real_times[-1]) + 1e-9,
                              seed_stream(107, i), obs_times=real_times)
        tv = tr(np.clip(snaps, 0.0, float(p.N)))
        sum_h += snaps
        sum_t += tv
        sum_t2 += tv * tv
    mean_t = sum_t / trials
    se_t = np.sqrt(np.clip(sum_t2 / trials - mean_t ** 2, 0.0, None) / trials)
    for j, t in enumerate(t_list):
        emp = tr(np.clip(sum_h[j] / trials, 0.0, float(p.N)))
        gap = np.abs(exact_fX(p, t) - emp)
        bad = gap > 3.0 * se_t[j] + 1e-9
        if np.any(bad):
            k = int(np.argmax(gap - 3.0 * se_t[j]))
            problems.append(
                f"t={t}: |f_X - T(mean)| = {gap[k]:.4g} > 3 SE {3 * se_t[j][k]:.4g} at k={k}")
    _finish(problems, t0, 300.0)


SCHEME_NS = (64, 128, 256, 512)
# storage starts after the step initial data of the M scheme has smoothed;
# its right edge necessarily comes down during that first transient
SCHEME_TIMES = np.arange(0.5, 4.5, 0.5)


@pytest.fixture(scope="module")
def scheme_runs():
    """Integrated X and M profiles for the convergence and sandwich criteria."""
    runs = {}
    for n in SCHEME_NS:
        p = ModelParams(N=n, lam=n ** -0.5)
        sched = mu_k_calibrate(p)
        kind_x = SchemeKind("X")
        kind_m = SchemeKind("M", mu=sched)
        _, fx = integrate_scheme(kind_x, initial_profile(kind_x, p), p, 4.0,
                                 store_times=SCHEME_TIMES)
        _, fm = integrate_scheme(kind_m, initial_profile(kind_m, p), p, 4.0,
                                 store_times=SCHEME_TIMES)
        runs[n] = (p, fx, fm, calibrate_sub_barrier(p, [kind_x, kind_m]))
    return runs


def test_criterion_08_convergence_to_lax(scheme_runs):
    t0 = time.monotonic()
    problems = []
    check_times = [1.0, 2.0, 3.0, 4.0]
    sups = {"X": {}, "M": {}}
    for n in SCHEME_NS:
        p, fx, fm, _ = scheme_runs[n]
        x = np.arange(n + 1) / n
        sel = x >= 0.1
        for t in check_times:
            j = int(np.nonzero(SCHEME_TIMES == t)[0][0])
            s_vals = lax_solution(x, t)
            sups["X"][(n, t)] = float(np.abs(fx[j] - s_vals)[sel].max())
            sups["M"][(n, t)] = float(np.abs(fm[j] - s_vals)[sel].max())
    for name, tol in (("X", 0.1), ("M", 0.15)):
        for t in check_times:
            seq = [sups[name][(n, t)] for n in SCHEME_NS]
            if not all(a > b for a, b in zip(seq, seq[1:])):
                problems.append(f"f_{name} sup at t={t} not decreasing: "
                                + ", ".join(f"{v:.4f}" for v in seq))
            if seq[-1] >= tol:
                problems.append(f"f_{name} sup at t={t}, N=512: {seq[-1]:.4f} >= {tol}")
    _finish(problems, t0, 120.0)


def test_criterion_09_sandwich_and_comparison(scheme_runs):
    problems = []
    tol = 1e-8
    for n in SCHEME_NS:
        p, fx, fm, c_sub = scheme_runs[n]
        x = np.arange(n + 1) / n
        c_n = 1.0 / (1.0 - p.k0 / n)
        v_m = super_barrier_M(p)
        for j, t in enumerate(SCHEME_TIMES):
            if np.any(fx[j] < -tol) or np.any(fx[j] > 1.0 - x + tol):
                problems.append(f"N={n} t={t}: f_X outside [0, 1-x]")
            if np.any(fm[j] > c_n * (1.0 - x) + tol):
                problems.append(f"N={n} t={t}: f_M above c_N (1-x)")
            if j > 0 and (np.any(fx[j] < fx[j - 1] - tol)
                          or np.any(fm[j] < fm[j - 1] - tol)):
                problems.append(f"N={n} t={t}: profile decreased in time")
            if t < 4.0:  # the barrier formula degenerates at t = 4
                barrier = sub_barrier(p, float(t), c_sub)
                if np.any(barrier > fx[j] + tol) or np.any(barrier > fm[j] + tol):
                    problems.append(f"N={n} t={t}: sub-barrier above a scheme")
            if np.any(fm[j] > v_m + tol):
                problems.append(f"N={n} t={t}: f_M above its super-barrier")
    assert not problems, "; ".join(problems)


def test_criterion_10_m_domination():
    t0 = time.monotonic()
    problems = []
    p = ModelParams(N=64, lam=0.3)
    sched = mu_k_calibrate(p)
    t_end = p.N / p.lam
    ok = sum(simulate_XM(p, t_end, seed_stream(110, i), schedule=sched)
             for i in range(1000))
    if ok / 1000 < 0.99:
        problems.append(f"domination fraction {ok / 1000:.3f} < 0.99")
    _finish(problems, t0, 300.0)


def test_criterion_11_naive_front():
    t0 = time.monotonic()
    problems = []
    p = ModelParams(N=512, lam=0.8)
    rep = naive_front(p, 0.5, 500, seed_stream(99, 0))
    if rep.frac_low_ok < 0.95:
        problems.append(f"g(0.4) <= 0.05 in only {rep.frac_low_ok:.3f} of runs")
    if rep.frac_high_ok < 0.95:
        problems.append(f"g(0.6) >= 0.95 in only {rep.frac_high_ok:.3f} of runs")
    f_minus, f_plus = barrier_profiles_naive(p, 0.5)
    if np.any(f_minus > rep.g_mean + 1e-9) or np.any(rep.g_mean > f_plus + 1e-9):
        problems.append("barrier sandwich violated on the mean profile")
    _finish(problems, t0, 600.0)


def test_criterion_12_lax_residual():
    t0 = time.monotonic()
    problems = []
    rng = np.random.default_rng(112)
    pts = []
    while len(pts) < 1000:
        x = rng.uniform(0.05, 0.9)
        t = rng.uniform(0.5, 3.5)
        # stay away from the characteristics' kinks so S is smooth there
        if x < t - 0.05 and 4.0 * t * (1.0 - x) > 1.2 * (t - x) ** 2:
            pts.append((x, t))
    r_small = pde_residual_S(pts, 1e-4)
    if r_small > 1e-6:
        problems.append(f"residual {r_small:.2e} at h=1e-4")
    ratio = pde_residual_S(pts, 1e-3) / max(r_small, 1e-300)
    if not 50.0 < ratio < 200.0:
        problems.append(f"residual ratio {ratio:.1f} not consistent with O(h^2)")
    _finish(problems, t0, 1.0)


def test_criterion_13_cutoff_window():
    t0 = time.monotonic()
    problems = []
    p = ModelParams(N=128, lam=0.25)
    norm = 4.0 * p.N / p.lam
    low = tv_lower(p, [0.5 * norm], 500, 1313)
    if low.bound[0] < 0.9:
        problems.append(f"tv_lower {low.bound[0]:.3f} < 0.9 at 0.5 (4N/lam)")
    up = tv_upper(p, [1.5 * norm], 500, 1414)
    if up.bound[0] > 0.1:
        problems.append(f"tv_upper {up.bound[0]:.3f} > 0.1 at 1.5 (4N/lam)")
    schedule = [(n, n ** -0.5, "vanishing") for n in (64, 128, 256)]
    rows = cutoff_sweep(schedule, 0.25, 250, 20260823, points=21)
    mids = [0.5 * (r.ratio_low + r.ratio_high) for r in rows]
    gaps = [abs(m - 1.0) for m in mids]
    if not (gaps[0] > gaps[1] > gaps[2]):
        problems.append("normalized midpoints not approaching 1 monotonically: "
                        + ", ".join(f"{m:.4f}" for m in mids))
    if not 0.6 <= mids[-1] <= 1.4:
        problems.append(f"final normalized midpoint {mids[-1]:.4f} outside [0.6, 1.4]")
    _finish(problems, t0, 1800.0)


def test_criterion_14_fixed_lambda_bracket():
    t0 = time.monotonic()
    problems = []
    from adjwalk.mixing import default_sweep_grid

    for n in (32, 64, 128):
        p = ModelParams(N=n, lam=0.6)
        grid = default_sweep_grid(p, "fixed", 25)
        win = mixing_window(p, 0.25, grid, 300, 424242 + n)
        lo = (n / 0.6) / 1.25
        hi = 1.25 * t_delta(p, 0.0)
        if not (lo <= win.t_lower and win.t_upper <= hi):
            problems.append(
                f"N={n}: window [{win.t_lower:.1f}, {win.t_upper:.1f}] "
                f"outside widened bracket [{lo:.1f}, {hi:.1f}]")
    _finish(problems, t0, 900.0)


def test_criterion_15_thread_determinism(tmp_path):
    problems = []
    m = ExperimentManifest(kind="mixing", n=16, lam=0.3, epsilon=0.25,
                           t_grid=np.linspace(5.0, 120.0, 8).tolist(),
                           trajectories=200, seed=115)
    dirs = {}
    for threads in (1, 8):
        d = tmp_path / f"threads{threads}"
        assert cli_run(m, out_dir=str(d), threads=threads) == 0
        dirs[threads] = (d / "mixing_window.json").read_bytes()
    if dirs[1] != dirs[8]:
        problems.append("outputs differ between 1-thread and 8-thread runs")
    assert not problems, "; ".join(problems)
