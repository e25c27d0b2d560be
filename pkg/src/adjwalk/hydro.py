"""Transform, Lax solution, discrete schemes, barriers, and profile experiments.

Times here are rescaled: a scheme time t corresponds to the real process
time t N / lambda.  Profiles live on the grid x = k/N, k = 0..N, and the
transformed ones take values in [0, 1] with the pins f(0, t) = 1 and
f(1, t) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .process import Configuration, ModelParams, MuSchedule, initial_M, mu_k_calibrate, simulate_M, simulate_X
from .spectral import EigenSystem

__all__ = [
    "TransformT",
    "SchemeKind",
    "StepTooLargeError",
    "lax_solution",
    "scheme_rhs",
    "integrate_scheme",
    "exact_fX",
    "initial_profile",
    "comparison_check",
    "barrier_profiles_naive",
    "naive_front",
    "pde_residual_S",
    "sub_barrier",
    "calibrate_sub_barrier",
    "super_barrier_M",
    "empirical_transformed_profile",
]


class StepTooLargeError(RuntimeError):
    """The explicit integrator left the admissible value band."""


@dataclass(frozen=True)
class TransformT:
    """T(u) = -(1/N) log_r(u / a_N + r^{-N}), a bijection [0, N] -> [0, 1].

    The r^{-N} term underflows long before the shapes do, so the sum is
    evaluated with logaddexp.
    """

    p: ModelParams

    def __post_init__(self):
        self.p._require_asymmetric()

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < -1e-12) or np.any(u > self.p.N * (1 + 1e-12)):
            raise ValueError("argument outside [0, N]")
        n, lr = self.p.N, self.p.log_r
        with np.errstate(divide="ignore"):
            log_term = np.log(np.clip(u, 0.0, None) / self.p.a_N)
        out = -np.logaddexp(log_term, -n * lr) / (n * lr)
        return float(out) if out.ndim == 0 else out

    def inverse(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < -1e-12) or np.any(z > 1 + 1e-12):
            raise ValueError("argument outside [0, 1]")
        n, lr = self.p.N, self.p.log_r
        u = self.p.a_N * np.exp(-n * np.clip(z, 0.0, 1.0) * lr) * (-np.expm1(-n * (1.0 - np.clip(z, 0.0, 1.0)) * lr))
        out = np.clip(u, 0.0, float(n))
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SchemeKind:
    """Which discrete Hamiltonian drives the grid ODE."""

    variant: str  # "X", "M", or "naive"
    mu: Optional[MuSchedule] = None

    def __post_init__(self):
        if self.variant not in ("X", "M", "naive"):
            raise ValueError("variant must be X, M, or naive")
        if self.variant == "M" and self.mu is None:
            raise ValueError("M scheme needs a mu schedule")


def lax_solution(x, t):
    """S(x, t) = min(1 - x, ((t - x)_+)^2 / (4 t)); S(., 0) = 0."""
    x = np.asarray(x, dtype=float)
    t = float(t)
    if t < 0.0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        out = np.zeros_like(x)
    else:
        ramp = np.clip(t - x, 0.0, None)
        out = np.minimum(1.0 - x, ramp * ramp / (4.0 * t))
    return float(out) if out.ndim == 0 else out


@njit(cache=True)
def _rhs_fill(f, out, variant, c, lam, lr, lam_lr, mu):
    # variant: 0 = X, 1 = M, 2 = naive; c = N log r; boundary rows pinned.
    n = f.shape[0] - 1
    out[0] = 0.0
    out[n] = 0.0
    for k in range(1, n):
        da = c * (f[k] - f[k - 1])
        db = c * (f[k] - f[k + 1])
        if variant == 0:
            h = (0.5 * (1.0 + lam) * math.expm1(da) + 0.5 * (1.0 - lam) * math.expm1(db)) / lam_lr
        elif variant == 1:
            wp = 0.5 * (1.0 + lam + mu[k])
            wm = 0.5 * (1.0 - lam - mu[k])
            mx = da if da > db else db
            if wm <= 0.0:
                h = (mx + math.log(wp * math.exp(da - mx))) / lam_lr if wp > 0.0 else 0.0
            else:
                h = (mx + math.log(wp * math.exp(da - mx) + wm * math.exp(db - mx))) / lam_lr
        else:
            h = -(c / lam_lr) * (0.5 * (1.0 + lam) * (f[k - 1] - f[k]) + 0.5 * (1.0 - lam) * (f[k + 1] - f[k]))
        out[k] = -h


@njit(cache=True)
def _rk4_span(f, h, n_steps, variant, c, lam, lr, lam_lr, mu):
    """Advance f by n_steps RK4 steps of size h; returns False on blow-up."""
    n1 = f.shape[0]
    k1 = np.empty(n1)
    k2 = np.empty(n1)
    k3 = np.empty(n1)
    k4 = np.empty(n1)
    tmp = np.empty(n1)
    for _ in range(n_steps):
        _rhs_fill(f, k1, variant, c, lam, lr, lam_lr, mu)
        for i in range(n1):
            tmp[i] = f[i] + 0.5 * h * k1[i]
        _rhs_fill(tmp, k2, variant, c, lam, lr, lam_lr, mu)
        for i in range(n1):
            tmp[i] = f[i] + 0.5 * h * k2[i]
        _rhs_fill(tmp, k3, variant, c, lam, lr, lam_lr, mu)
        for i in range(n1):
            tmp[i] = f[i] + h * k3[i]
        _rhs_fill(tmp, k4, variant, c, lam, lr, lam_lr, mu)
        for i in range(n1):
            f[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not (-0.1 <= f[i] <= 1.1):
                return False
    return True


def _variant_code(kind: SchemeKind) -> int:
    return {"X": 0, "M": 1, "naive": 2}[kind.variant]


def scheme_rhs(kind: SchemeKind, values: np.ndarray, p: ModelParams) -> np.ndarray:
    """Time derivative -H(f_{k-1}, f_k, f_{k+1} [, k]) on the grid; pinned ends."""
    f = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("profile must be finite")
    p._require_asymmetric()
    out = np.empty_like(f)
    mu = kind.mu.mu if kind.mu is not None else np.zeros(1)
    _rhs_fill(f, out, _variant_code(kind), p.N * p.log_r, p.lam, p.log_r,
              p.lam * p.log_r, mu)
    return out


def initial_profile(kind: SchemeKind, p: ModelParams) -> np.ndarray:
    """Canonical start: X and naive from T of the max start; M per its display."""
    n = p.N
    f = np.zeros(n + 1)
    if kind.variant == "X":
        f[0] = 1.0
    elif kind.variant == "M":
        cut = math.sqrt(math.log(n) / (p.lam * n))
        f[:] = (np.arange(n + 1) / n < cut).astype(float)
        f[n] = 0.0
        f[0] = 1.0
    else:
        f[1:] = 1.0
        f[0] = 0.0
    return f


def integrate_scheme(kind: SchemeKind, initial: np.ndarray, p: ModelParams,
                     t_end: float, dt: float | None = None, store_times=None):
    """RK4 in rescaled time with pinned boundary rows.

    Returns (times, profiles) with profiles[i] the grid values at times[i];
    the initial profile is stored when store_times starts at 0.
    """
    p._require_asymmetric()
    if dt is None:
        dt = 0.05 * p.lam / p.N
    if dt > 0.1 * p.lam / p.N + 1e-15:
        raise ValueError("dt exceeds the stability margin 0.1 lam / N")
    times = np.asarray([t_end] if store_times is None else store_times, dtype=float)
    if np.any(np.diff(times) < 0.0) or (times.size and times[-1] > t_end + 1e-12):
        raise ValueError("store times must be sorted and within [0, t_end]")
    f = np.asarray(initial, dtype=float).copy()
    out = np.empty((times.shape[0], f.shape[0]))
    mu = kind.mu.mu if kind.mu is not None else np.zeros(1)
    args = (_variant_code(kind), p.N * p.log_r, p.lam, p.log_r, p.lam * p.log_r, mu)
    t_cur = 0.0
    for i, t_i in enumerate(times):
        span = t_i - t_cur
        if span > 0.0:
            n_steps = max(1, int(math.ceil(span / dt)))
            ok = _rk4_span(f, span / n_steps, n_steps, *args)
            if not ok:
                raise StepTooLargeError(f"profile left [-0.1, 1.1] before t = {t_i}")
            t_cur = t_i
        out[i] = f
    return times, out


def exact_fX(p: ModelParams, t: float) -> np.ndarray:
    """T applied to the exact mean of X from max at real time t N / lambda."""
    p._require_asymmetric()
    es = EigenSystem(p)
    mean = es.evolve(Configuration.maximal(p).heights, t * p.N / p.lam)
    return TransformT(p)(np.clip(mean, 0.0, float(p.N)))


def comparison_check(sub: np.ndarray, sup: np.ndarray, tol: float = 1e-9):
    """Pointwise sub <= sup + tol over matching (time, grid) arrays.

    Returns (ok, worst_gap, position of the first violation or None).
    """
    sub = np.asarray(sub, float)
    sup = np.asarray(sup, float)
    if sub.shape != sup.shape:
        raise ValueError("trajectories must share shape")
    gap = sub - sup
    worst = float(gap.max())
    if worst <= tol:
        return True, worst, None
    pos = np.unravel_index(int(np.argmax(gap)), gap.shape)
    return False, worst, pos


def barrier_profiles_naive(p: ModelParams, t: float):
    """Closed-form sub/super barriers for the naive scheme at rescaled time t."""
    p._require_asymmetric()
    nl = p.N * p.lam
    x = np.arange(p.N + 1) / p.N
    cube = nl ** (1.0 / 3.0)
    f_minus = 1.0 - cube ** 2 * np.clip(t - x + 1.0 / cube, 0.0, None) ** 2 - t / cube
    f_plus = cube ** 2 * np.clip(x + 1.0 / cube - t, 0.0, None) ** 2 + t / cube
    return f_minus, f_plus


@dataclass
class FrontReport:
    x_grid: np.ndarray
    g_mean: np.ndarray
    g_se: np.ndarray
    front_location: float
    sharpness: float
    frac_low_ok: float  # per-trajectory g(0.4) <= 0.05
    frac_high_ok: float  # per-trajectory g(0.6) >= 0.95


def naive_front(p: ModelParams, t: float, trajectories: int, rng: np.random.Generator,
                x_low: float = 0.4, x_high: float = 0.6) -> FrontReport:
    """Estimate the rescaled height profile g(x, t) = x_{xN}(t N / lambda) / N."""
    p._require_asymmetric()
    if p.N * p.lam < 20.0:
        raise ValueError("naive front requires N * lam >= 20")
    real_t = t * p.N / p.lam
    c0 = Configuration.maximal(p)
    vals = np.empty((trajectories, p.N + 1))
    for i in range(trajectories):
        final, _ = simulate_X(c0, p, real_t, rng)
        vals[i] = final.heights / p.N
    g_mean = vals.mean(axis=0)
    g_se = vals.std(axis=0, ddof=1) / math.sqrt(trajectories)
    x_grid = np.arange(p.N + 1) / p.N
    below = np.nonzero(g_mean >= 0.5)[0]
    front = float(x_grid[below[0]]) if below.size else 1.0
    lo_idx = int(round(x_low * p.N))
    hi_idx = int(round(x_high * p.N))
    frac_low = float(np.mean(vals[:, lo_idx] <= 0.05))
    frac_high = float(np.mean(vals[:, hi_idx] >= 0.95))
    lo_cross = np.nonzero(g_mean >= 0.05)[0]
    hi_cross = np.nonzero(g_mean >= 0.95)[0]
    width = (x_grid[hi_cross[0]] if hi_cross.size else 1.0) - (x_grid[lo_cross[0]] if lo_cross.size else 1.0)
    return FrontReport(x_grid=x_grid, g_mean=g_mean, g_se=g_se, front_location=front,
                       sharpness=float(width), frac_low_ok=frac_low, frac_high_ok=frac_high)


def pde_residual_S(points, h: float) -> float:
    """Max |f_t + f_x + f_x^2| of the Lax solution by central differences."""
    worst = 0.0
    for x, t in points:
        fx = (lax_solution(x + h, t) - lax_solution(x - h, t)) / (2.0 * h)
        ft = (lax_solution(x, t + h) - lax_solution(x, t - h)) / (2.0 * h)
        worst = max(worst, abs(ft + fx + fx * fx))
    return worst


def sub_barrier(p: ModelParams, t: float, C: float) -> np.ndarray:
    """-x^2/(16-4t) - x/2 + t/4 - C max(lam, 1/(N lam)) t on the grid."""
    x = np.arange(p.N + 1) / p.N
    m = max(p.lam, 1.0 / (p.N * p.lam))
    return -x * x / (16.0 - 4.0 * t) - 0.5 * x + 0.25 * t - C * m * t


def _sub_barrier_dt(p: ModelParams, t: float, C: float) -> np.ndarray:
    x = np.arange(p.N + 1) / p.N
    m = max(p.lam, 1.0 / (p.N * p.lam))
    return -4.0 * x * x / (16.0 - 4.0 * t) ** 2 + 0.25 - C * m


def calibrate_sub_barrier(p: ModelParams, kinds, t_grid=None, step: float = 0.05,
                          c_max: float = 400.0) -> float:
    """Smallest C (grid resolution `step`) making the barrier a discrete
    sub-solution of every given scheme at the probe times.

    At fixed lambda the exponential discretization overshoots the
    continuous hamiltonian where the barrier steepens (t near 4), so the
    admissible C can be far above the vanishing-lambda scale; the search
    brackets coarsely first and then refines to `step`.
    """
    if t_grid is None:
        t_grid = np.linspace(0.0, 3.9, 14)

    def ok(C):
        for t in t_grid:
            f = sub_barrier(p, float(t), C)
            dft = _sub_barrier_dt(p, float(t), C)
            for kind in kinds:
                rhs = scheme_rhs(kind, f, p)
                if np.any(dft[1:-1] > rhs[1:-1] + 1e-9):
                    return False
        return True

    lo, hi = 0.0, step
    if ok(lo):
        return 0.0
    while not ok(hi):
        lo, hi = hi, 2.0 * hi
        if hi > c_max:
            raise RuntimeError("sub-barrier calibration failed")
    while hi - lo > step:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def super_barrier_M(p: ModelParams) -> np.ndarray:
    """1 below k0/N, then the steeper linear profile c_N (1 - x)."""
    n, k0 = p.N, p.k0
    c_n = 1.0 / (1.0 - k0 / n)
    x = np.arange(n + 1) / n
    v = np.where(x < k0 / n, 1.0, c_n * (1.0 - x))
    return v


@dataclass
class TransformedProfiles:
    t: float
    x_grid: np.ndarray
    T_mean_X: np.ndarray  # T(mean of X), empirical means
    mean_T_X: np.ndarray  # mean of T(X)
    mean_T_M: np.ndarray  # mean of T(M)
    se_T_X: np.ndarray
    se_T_M: np.ndarray
    lax: np.ndarray


def empirical_transformed_profile(p: ModelParams, t: float, trajectories: int,
                                  rng: np.random.Generator,
                                  schedule: MuSchedule | None = None) -> TransformedProfiles:
    """Monte Carlo transformed profiles of X (from max) and M at rescaled time t."""
    p._require_asymmetric()
    if p.lam < 4.0 * math.log(p.N) / p.N:
        raise ValueError("transformed profiles require lam >= 4 log N / N")
    if schedule is None:
        schedule = mu_k_calibrate(p)
    tr = TransformT(p)
    real_t = t * p.N / p.lam
    c0 = Configuration.maximal(p)
    n = p.N
    sum_x = np.zeros(n + 1)
    sum_tx = np.zeros(n + 1)
    sum_tx2 = np.zeros(n + 1)
    sum_tm = np.zeros(n + 1)
    sum_tm2 = np.zeros(n + 1)
    for _ in range(trajectories):
        final, _ = simulate_X(c0, p, real_t, rng)
        tx = tr(np.clip(final.heights, 0.0, float(n)))
        sum_x += final.heights
        sum_tx += tx
        sum_tx2 += tx * tx
        m, _ = simulate_M(p, real_t, rng, schedule=schedule)
        tm = tr(np.clip(m, 0.0, float(n)))
        sum_tm += tm
        sum_tm2 += tm * tm
    k = float(trajectories)
    mean_tx = sum_tx / k
    mean_tm = sum_tm / k
    se_tx = np.sqrt(np.clip(sum_tx2 / k - mean_tx ** 2, 0.0, None) / k)
    se_tm = np.sqrt(np.clip(sum_tm2 / k - mean_tm ** 2, 0.0, None) / k)
    x_grid = np.arange(n + 1) / n
    return TransformedProfiles(
        t=t, x_grid=x_grid,
        T_mean_X=tr(np.clip(sum_x / k, 0.0, float(n))),
        mean_T_X=mean_tx, mean_T_M=mean_tm,
        se_T_X=se_tx, se_T_M=se_tm,
        lax=lax_solution(x_grid, t),
    )
