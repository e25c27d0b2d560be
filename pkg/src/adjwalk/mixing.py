"""Total-variation bounds, mixing windows, and the cutoff sweep.

Upper bounds come from coalescence of the grand coupling: the chance the
(max, stationary) pair has not merged by t dominates the TV distance at
t, and a triple run with an adversarial third start extends this to a
worst-start bound by the triangle inequality.  Lower bounds use a single
height threshold whose stationary probability is exact.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .process import Configuration, ModelParams, sample_stationary
from .spectral import EigenSystem
from .special import reg_beta_cdf
from .streams import seed_stream

__all__ = [
    "MixingWindow",
    "InconsistentWindowError",
    "t_delta",
    "tv_upper",
    "tv_lower",
    "mixing_window",
    "cutoff_sweep",
    "wilson_interval",
]


class InconsistentWindowError(RuntimeError):
    """CI-adjusted lower edge of the mixing window exceeded the upper edge."""


def wilson_interval(successes: int, total: int, z: float = 1.959964) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if total <= 0:
        raise ValueError("need at least one trial")
    phat = successes / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (phat + z2 / (2.0 * total)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / total + z2 / (4.0 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def t_delta(p: ModelParams, delta: float) -> float:
    """(1 + delta) N log r / (1 - sqrt(1 - lam^2)), in real-time units."""
    p._require_asymmetric()
    return (1.0 + delta) * p.N * p.log_r / (1.0 - math.sqrt(1.0 - p.lam * p.lam))


def _map_indexed(fn, count: int, threads: int):
    """fn(i) for i in range(count), results ordered by index."""
    if threads <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def _pair_merge_time(p: ModelParams, t_cap: float, rng: np.random.Generator) -> float:
    xu = Configuration.maximal(p).heights.copy()
    xl = sample_stationary(p, rng).heights.copy()
    t = p.tables
    empty = np.empty(0)
    mt, violations = _kernels.run_coupled(rng, xl, xu, t_cap, empty, empty, empty,
                                          t.a, t.b, t.s, t.sd, t.mu_u)
    if math.isnan(mt):
        raise RuntimeError("rejection budget exceeded in coupled run")
    if violations:
        raise RuntimeError(f"{violations} order violations in coupled run")
    return float(mt)


def _triple_merge_times(p: ModelParams, t_cap: float, rng: np.random.Generator):
    xt = Configuration.maximal(p).heights.copy()
    xm = Configuration.minimal(p).heights.copy()
    xr = sample_stationary(p, rng).heights.copy()
    t = p.tables
    mt_m, mt_r, violations = _kernels.run_triple(rng, xt, xm, xr, t_cap,
                                                 t.a, t.b, t.s, t.sd, t.mu_u)
    if math.isnan(mt_m):
        raise RuntimeError("rejection budget exceeded in triple run")
    if violations:
        raise RuntimeError(f"{violations} order violations in triple run")
    return float(mt_m), float(mt_r)


@dataclass
class TvUpperCurve:
    t_grid: np.ndarray
    bound: np.ndarray  # fraction of pairs not merged
    ci_low: np.ndarray
    ci_high: np.ndarray
    worst_bound: np.ndarray | None = None  # triple-based, worst start
    worst_ci_high: np.ndarray | None = None


def tv_upper(p: ModelParams, t_grid, trajectories: int, master_seed: int,
             include_triple: bool = False, threads: int = 1) -> TvUpperCurve:
    """Coalescence bound P(not merged by t) on the grid, with Wilson CIs."""
    if trajectories < 1:
        raise ValueError("need trajectories >= 1")
    t_grid = np.asarray(t_grid, dtype=float)
    t_cap = float(t_grid.max())
    merge_pair = np.asarray(_map_indexed(
        lambda i: _pair_merge_time(p, t_cap, seed_stream(master_seed, i)),
        trajectories, threads))
    n = trajectories
    bound = np.empty_like(t_grid)
    lo = np.empty_like(t_grid)
    hi = np.empty_like(t_grid)
    for j, t in enumerate(t_grid):
        k = int(np.sum(merge_pair > t))
        bound[j] = k / n
        lo[j], hi[j] = wilson_interval(k, n)
    curve = TvUpperCurve(t_grid=t_grid, bound=bound, ci_low=lo, ci_high=hi)
    if include_triple:
        times = _map_indexed(
            lambda i: _triple_merge_times(p, t_cap, seed_stream(master_seed + 7_777_777, i)),
            trajectories, threads)
        mid = np.array([a for a, _ in times])
        ref = np.array([b for _, b in times])
        worst = np.empty_like(t_grid)
        worst_hi = np.empty_like(t_grid)
        for j, t in enumerate(t_grid):
            km = int(np.sum(mid > t))
            kr = int(np.sum(ref > t))
            worst[j] = (km + kr) / n
            worst_hi[j] = wilson_interval(km, n)[1] + wilson_interval(kr, n)[1]
        curve.worst_bound = worst
        curve.worst_ci_high = np.minimum(worst_hi, 1.0)
    return curve


def _stationary_quantile(p: ModelParams, k: int, prob: float) -> float:
    """Height c with stationary P(x_k <= c) = prob, by bisection on the exact CDF."""
    a, b = p.marginal_shapes(k)
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if reg_beta_cdf(a, b, mid) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) * p.N


def _lower_statistic_site(p: ModelParams, t: float, quantile: float) -> tuple[int, float, float]:
    """Pick the threshold site from the exact mean profile (data-independent).

    Returns (k, threshold height c, exact stationary P(x_k >= c)); the site
    maximizes the gap between the mean of the chain at time t and c.
    """
    es = EigenSystem(p)
    mean = es.evolve(Configuration.maximal(p).heights, t)
    slack = 2.0 * (1.0 - quantile)
    # At strongly biased parameters the stationary marginals concentrate
    # below float resolution and the quantile degenerates onto the mean;
    # the threshold is then pushed a fixed margin above the mean, which is
    # huge against the stationary spread yet tiny against the transient
    # deviation of a max start, so the statistic still separates.
    margin = 1e-9 * p.N
    best_k, best_gap = 0, -np.inf
    best_c, best_tail = 0.0, 1.0
    for k in range(1, p.N):
        c = max(_stationary_quantile(p, k, quantile), p.xbar[k] + margin)
        a, b = p.marginal_shapes(k)
        tail = 1.0 - reg_beta_cdf(a, b, c / p.N)
        if tail > slack:
            continue
        gap = (mean[k] - c) / p.N
        if gap > best_gap:
            best_k, best_gap, best_c, best_tail = k, gap, c, tail
    if best_k == 0:
        raise RuntimeError("no site admits a separating stationary quantile")
    return best_k, best_c, best_tail


@dataclass
class TvLowerCurve:
    t_grid: np.ndarray
    bound: np.ndarray
    ci_low: np.ndarray
    sites: np.ndarray
    thresholds: np.ndarray
    pi_tail: np.ndarray
    degenerate: np.ndarray  # True where no separating statistic existed


def tv_lower(p: ModelParams, t_grid, trajectories: int, master_seed: int,
             quantile: float = 0.995, threads: int = 1) -> TvLowerCurve:
    """Distinguishing-statistic bound |P_chain(A) - pi(A)| minus CI margin.

    A is a one-coordinate upper threshold; its stationary probability is
    exact, the chain probability is Monte Carlo from max starts.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    sites = np.empty(t_grid.shape[0], dtype=np.int64)
    cs = np.empty_like(t_grid)
    pi_tail = np.empty_like(t_grid)
    for j, t in enumerate(t_grid):
        sites[j], cs[j], pi_tail[j] = _lower_statistic_site(p, float(t), quantile)
    c0 = Configuration.maximal(p)

    def one(i):
        from .process import simulate_X
        rng = seed_stream(master_seed + 13_131_313, i)
        _, snaps = simulate_X(c0, p, float(t_grid.max()) + 1e-9, rng,
                              obs_times=t_grid, obs_idx=sites)
        return np.array([snaps[j, j] for j in range(t_grid.shape[0])])

    vals = np.asarray(_map_indexed(one, trajectories, threads))
    n = trajectories
    bound = np.empty_like(t_grid)
    lo = np.empty_like(t_grid)
    degenerate = np.zeros(t_grid.shape[0], dtype=bool)
    for j in range(t_grid.shape[0]):
        k_hit = int(np.sum(vals[:, j] >= cs[j]))
        w_lo, _ = wilson_interval(k_hit, n)
        raw = w_lo - pi_tail[j]
        if raw <= 0.0:
            degenerate[j] = True
            raw = 0.0
        bound[j] = raw
        lo[j] = raw
    return TvLowerCurve(t_grid=t_grid, bound=bound, ci_low=lo, sites=sites,
                        thresholds=cs, pi_tail=pi_tail, degenerate=degenerate)


@dataclass
class MixingWindow:
    epsilon: float
    t_lower: float
    t_upper: float
    t_grid: np.ndarray
    upper_curve: TvUpperCurve
    lower_curve: TvLowerCurve
    trajectories: int
    method: str = "coalescence-upper/threshold-lower"

    def __post_init__(self):
        if self.t_lower > self.t_upper:
            raise InconsistentWindowError(
                f"window [{self.t_lower}, {self.t_upper}] is empty")


def mixing_window(p: ModelParams, epsilon: float, t_grid, trajectories: int,
                  master_seed: int, threads: int = 1) -> MixingWindow:
    """CI-adjusted first/last crossing times of the two TV bounds.

    Both curves get a monotone cleanup before thresholding: the true TV
    distance is nonincreasing in t, so an upper bound obtained at time s
    applies to every t >= s and a lower bound at s to every t <= s.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0.0):
        raise ValueError("t_grid must be strictly increasing")
    up = tv_upper(p, t_grid, trajectories, master_seed, threads=threads)
    low = tv_lower(p, t_grid, trajectories, master_seed, threads=threads)
    upper_clean = np.minimum.accumulate(up.ci_high)
    lower_clean = np.maximum.accumulate(low.ci_low[::-1])[::-1]
    above = np.nonzero(upper_clean <= epsilon)[0]
    t_upper = float(t_grid[above[0]]) if above.size else math.inf
    below = np.nonzero(lower_clean >= epsilon)[0]
    t_lower = float(t_grid[below[-1]]) if below.size else 0.0
    return MixingWindow(epsilon=epsilon, t_lower=t_lower, t_upper=t_upper,
                        t_grid=t_grid, upper_curve=up, lower_curve=low,
                        trajectories=trajectories)


@dataclass
class SweepRow:
    N: int
    lam: float
    regime: str
    epsilon: float
    t_lower: float
    t_upper: float
    normalizer: float
    ratio_low: float
    ratio_high: float


def default_sweep_grid(p: ModelParams, regime: str, points: int = 25) -> np.ndarray:
    norm = 4.0 * p.N / p.lam
    if regime == "vanishing":
        return np.linspace(0.25 * norm, 1.9 * norm, points)
    low = p.N / p.lam
    high = t_delta(p, 0.0)
    return np.linspace(0.4 * low, 1.5 * high, points)


def cutoff_sweep(schedule, epsilon: float, trajectories: int, master_seed: int,
                 threads: int = 1, points: int = 25) -> list[SweepRow]:
    """Mixing windows across (N, lam, regime) triples, normalized by 4N/lam."""
    rows = []
    for idx, (n, lam, regime) in enumerate(schedule):
        if regime not in ("vanishing", "fixed"):
            raise ValueError("regime must be 'vanishing' or 'fixed'")
        p = ModelParams(N=n, lam=lam)
        grid = default_sweep_grid(p, regime, points)
        win = mixing_window(p, epsilon, grid, trajectories,
                            master_seed + 1_000_003 * idx, threads=threads)
        norm = 4.0 * n / lam
        rows.append(SweepRow(N=n, lam=lam, regime=regime, epsilon=epsilon,
                             t_lower=win.t_lower, t_upper=win.t_upper,
                             normalizer=norm, ratio_low=win.t_lower / norm,
                             ratio_high=win.t_upper / norm))
    return rows
