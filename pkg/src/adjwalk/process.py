"""Model parameters, configurations, and the event-driven dynamics.

The process keeps N-1 ordered particles in [0, N] with pinned endpoints
x_0 = 0 and x_N = N.  Each site k carries a rate-1 clock; when it rings,
x_k <- x_{k-1} + U (x_{k+1} - x_{k-1}) with U ~ Beta(shape_k, shape_{k+1})
and shape_k = alpha1 * r**(k-1), r = (1+lam)/(1-lam).  The
companion process M uses the deterministic weight (1+lam+mu_k)/2 instead
of the beta draw and shares the clock stream when co-driven with X.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import _kernels
from .special import BIG_SHAPE, reg_beta_cdf

__all__ = [
    "ModelParams",
    "Configuration",
    "MuSchedule",
    "SiteTables",
    "resample_site",
    "simulate_X",
    "simulate_M",
    "simulate_XM",
    "sample_stationary",
    "sample_stationary_batch",
    "gradient_tail_check",
    "mu_k_calibrate",
]


def log_expm1(z: float) -> float:
    """log(exp(z) - 1), stable for large and small positive z."""
    if z <= 0.0:
        raise ValueError("requires z > 0")
    if z > 33.0:
        return z + math.log1p(-math.exp(-z))
    return math.log(math.expm1(z))


class SiteTables(NamedTuple):
    """Per-site constants consumed by the event kernels (index = site k)."""

    a: np.ndarray  # shape_k, inf allowed
    b: np.ndarray  # shape_{k+1}, inf allowed
    s: np.ndarray  # shape_k + shape_{k+1}
    sd: np.ndarray  # std of the resampling beta, used on the normal path
    mu_u: float  # common mean (1-lam)/2


@dataclass(frozen=True)
class ModelParams:
    """System size N, asymmetry lam in [0, 1), and base shape alpha1 >= 1."""

    N: int
    lam: float
    alpha1: float = 1.0

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or self.N < 2:
            raise ValueError("N must be an integer >= 2")
        if not (0.0 <= self.lam < 1.0):
            raise ValueError("lam must lie in [0, 1)")
        if not (math.isfinite(self.alpha1) and self.alpha1 >= 1.0):
            raise ValueError("alpha1 must be finite and >= 1")

    @property
    def r(self) -> float:
        return (1.0 + self.lam) / (1.0 - self.lam)

    @cached_property
    def log_r(self) -> float:
        return math.log1p(self.lam) - math.log1p(-self.lam)

    @property
    def a_N(self) -> float:
        """N / (1 - r**-N); requires lam > 0."""
        self._require_asymmetric()
        return self.N / -math.expm1(-self.N * self.log_r)

    @cached_property
    def k0(self) -> int:
        self._require_asymmetric()
        return int(self.N * math.sqrt(math.log(self.N) / (self.lam * self.N)))

    def _require_asymmetric(self):
        if self.lam == 0.0:
            raise ValueError("operation requires lam > 0")

    def log_alpha(self, k) -> float:
        return math.log(self.alpha1) + (k - 1) * self.log_r

    def alpha(self, k) -> float:
        la = self.log_alpha(k)
        return math.exp(la) if la < 709.0 else math.inf

    @cached_property
    def log_alpha_total(self) -> float:
        if self.lam == 0.0:
            return math.log(self.alpha1 * self.N)
        return math.log(self.alpha1) + log_expm1(self.N * self.log_r) - log_expm1(self.log_r)

    @property
    def alpha_total(self) -> float:
        lt = self.log_alpha_total
        return math.exp(lt) if lt < 709.0 else math.inf

    def log_partial_alpha(self, k) -> float:
        """log of shape_1 + ... + shape_k."""
        if k < 1 or k > self.N:
            raise ValueError("k out of range")
        if self.lam == 0.0:
            return math.log(self.alpha1 * k)
        return math.log(self.alpha1) + log_expm1(k * self.log_r) - log_expm1(self.log_r)

    def log_tail_alpha(self, k) -> float:
        """log of shape_{k+1} + ... + shape_N (the complement of the partial sum)."""
        if k < 1 or k >= self.N:
            raise ValueError("k out of range")
        if self.lam == 0.0:
            return math.log(self.alpha1 * (self.N - k))
        return (
            math.log(self.alpha1)
            + k * self.log_r
            + log_expm1((self.N - k) * self.log_r)
            - log_expm1(self.log_r)
        )

    def marginal_shapes(self, k) -> tuple[float, float]:
        """Shape pair of the stationary law of x_k / N (may be huge; use with reg_beta_cdf).

        When either shape overflows a double the pair is rescaled by a
        common factor: the mean a/(a+b) is preserved and the law was a
        point mass at that mean long before the overflow anyway.
        """
        la, lb = self.log_partial_alpha(k), self.log_tail_alpha(k)
        m = max(la, lb)
        if m >= 709.0:
            la, lb = la - m + 690.0, lb - m + 690.0
        return math.exp(la), math.exp(lb)

    @cached_property
    def xbar(self) -> np.ndarray:
        """Stationary mean heights, xbar_k = N (r**k - 1)/(r**N - 1), k = 0..N."""
        n = self.N
        if self.lam == 0.0:
            return np.arange(n + 1, dtype=float)
        lr = self.log_r
        den = log_expm1(n * lr)
        out = np.empty(n + 1)
        out[0] = 0.0
        for k in range(1, n + 1):
            out[k] = n * math.exp(log_expm1(k * lr) - den)
        out[n] = float(n)
        return out

    @cached_property
    def tables(self) -> SiteTables:
        n = self.N
        a = np.empty(n, dtype=float)
        b = np.empty(n, dtype=float)
        s = np.empty(n, dtype=float)
        sd = np.zeros(n, dtype=float)
        r = self.r
        log1pr = math.log1p(r)
        for k in range(1, n):
            la = self.log_alpha(k)
            a[k] = math.exp(la) if la < 709.0 else math.inf
            b[k] = math.exp(la + self.log_r) if la + self.log_r < 709.0 else math.inf
            s[k] = a[k] + b[k] if math.isfinite(a[k]) and math.isfinite(b[k]) else math.inf
            if s[k] > BIG_SHAPE:
                # var U_k = r / ((1+r)^2 (s_k + 1)); s_k = shape_k (1 + r)
                log_var = self.log_r - 2.0 * log1pr - (la + log1pr)
                sd[k] = math.exp(0.5 * log_var)
        a[0] = b[0] = s[0] = 1.0  # site 0 never fires
        return SiteTables(a=a, b=b, s=s, sd=sd, mu_u=(1.0 - self.lam) / 2.0)


@dataclass
class Configuration:
    """Ordered heights x_0 = 0 <= x_1 <= ... <= x_N = N."""

    heights: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        self.heights = h
        n = h.shape[0] - 1
        if n < 2:
            raise ValueError("need at least 3 height values")
        if not np.all(np.isfinite(h)):
            raise ValueError("heights must be finite")
        if h[0] != 0.0 or h[n] != float(n):
            raise ValueError("endpoints must be pinned at 0 and N")
        if np.any(np.diff(h) < 0.0):
            raise ValueError("heights must be nondecreasing")

    @property
    def N(self) -> int:
        return self.heights.shape[0] - 1

    def gaps(self) -> np.ndarray:
        return np.diff(self.heights)

    @classmethod
    def maximal(cls, p: ModelParams) -> "Configuration":
        h = np.full(p.N + 1, float(p.N))
        h[0] = 0.0
        return cls(h)

    @classmethod
    def minimal(cls, p: ModelParams) -> "Configuration":
        h = np.zeros(p.N + 1)
        h[p.N] = float(p.N)
        return cls(h)


@dataclass(frozen=True)
class MuSchedule:
    """Twist amplitudes mu_k for the M process plus the calibrated constant."""

    C_cal: float
    mu: np.ndarray  # index k, entries 1..N-1 meaningful
    regime_violation: bool


def resample_site(c: Configuration, k: int, u: float) -> Configuration:
    """Move x_k to x_{k-1} + u (x_{k+1} - x_{k-1}); all other heights unchanged."""
    if not 1 <= k <= c.N - 1:
        raise ValueError("site out of range")
    if not (0.0 <= u <= 1.0):
        raise ValueError("u must lie in [0, 1]")
    h = c.heights.copy()
    h[k] = h[k - 1] + u * (h[k + 1] - h[k - 1])
    return Configuration(h)


def _obs_arrays(p: ModelParams, obs_times, obs_idx):
    times = np.asarray([] if obs_times is None else obs_times, dtype=float)
    if np.any(np.diff(times) < 0.0):
        raise ValueError("observer times must be sorted")
    idx = np.arange(p.N + 1, dtype=np.int64) if obs_idx is None else np.asarray(obs_idx, dtype=np.int64)
    out = np.empty((times.shape[0], idx.shape[0]), dtype=float)
    return times, idx, out


def simulate_X(c0: Configuration, p: ModelParams, t_end: float, rng: np.random.Generator,
               obs_times=None, obs_idx=None):
    """Run the beta-resampling dynamics to t_end.

    Returns (final Configuration, snapshot array); snapshots hold the
    pre-event state at each requested time, restricted to obs_idx columns.
    """
    if t_end < 0.0:
        raise ValueError("t_end must be >= 0")
    times, idx, out = _obs_arrays(p, obs_times, obs_idx)
    x = c0.heights.copy()
    t = p.tables
    _kernels.run_x(rng, x, float(t_end), times, idx, out, t.a, t.b, t.s, t.sd, t.mu_u)
    return Configuration(x), out


def initial_M(p: ModelParams, schedule: MuSchedule) -> np.ndarray:
    """Start profile of M: 0 below k0, 1 from k0 on (endpoint m_0 stays 0)."""
    m = np.ones(p.N + 1)
    m[: min(p.k0, p.N + 1)] = 0.0
    m[0] = 0.0
    return m


def simulate_M(p: ModelParams, t_end: float, rng: np.random.Generator,
               schedule: MuSchedule | None = None, obs_times=None, obs_idx=None):
    """Run the deterministic-weight companion process from its canonical start."""
    p._require_asymmetric()
    if schedule is None:
        schedule = mu_k_calibrate(p)
    times, idx, out = _obs_arrays(p, obs_times, obs_idx)
    m = initial_M(p, schedule)
    wplus = 0.5 * (1.0 + p.lam + schedule.mu)
    _kernels.run_m(rng, m, float(t_end), times, idx, out, wplus)
    return m, out


def simulate_XM(p: ModelParams, t_end: float, rng: np.random.Generator,
                schedule: MuSchedule | None = None) -> bool:
    """Co-drive X from max and M from its start on shared clocks.

    Returns True when M stayed below X at every event, the testable form
    of the domination property.
    """
    p._require_asymmetric()
    if schedule is None:
        schedule = mu_k_calibrate(p)
    x = Configuration.maximal(p).heights.copy()
    m = initial_M(p, schedule)
    wplus = 0.5 * (1.0 + p.lam + schedule.mu)
    t = p.tables
    ok = _kernels.run_xm(rng, x, m, float(t_end), wplus, t.a, t.b, t.s, t.sd, t.mu_u)
    return bool(ok)


def sample_stationary_batch(p: ModelParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Exact stationary samples, one configuration per row (heights, N+1 columns).

    Gaps are Dirichlet with the site shapes; drawn as normalized gammas.
    Huge shapes go through the log-scale normal limit of log Gamma(shape),
    and the normalization is done relative to the max log term so that
    shapes spanning hundreds of orders of magnitude cannot overflow.
    """
    n = p.N
    log_a = np.array([p.log_alpha(i) for i in range(1, n + 1)])
    a = np.where(log_a < 709.0, np.exp(log_a), np.inf)
    small = a <= BIG_SHAPE
    log_g = np.empty((count, n))
    if small.any():
        draws = rng.standard_gamma(a[small], size=(count, small.sum()))
        with np.errstate(divide="ignore"):
            log_g[:, small] = np.log(draws)
    if (~small).any():
        z = rng.standard_normal(size=(count, (~small).sum()))
        la = log_a[~small]
        log_g[:, ~small] = la + z * np.exp(-0.5 * la)
    log_g -= log_g.max(axis=1, keepdims=True)
    g = np.exp(log_g)
    eta = n * g / g.sum(axis=1, keepdims=True)
    heights = np.empty((count, n + 1))
    heights[:, 0] = 0.0
    np.cumsum(eta, axis=1, out=heights[:, 1:])
    heights[:, n] = float(n)
    return heights


def sample_stationary(p: ModelParams, rng: np.random.Generator) -> Configuration:
    return Configuration(sample_stationary_batch(p, 1, rng)[0])


def gradient_tail_check(p: ModelParams, k: int, threshold: float) -> float:
    """Exact stationary P(x_{k+1} - x_{k-1} <= threshold) via the beta marginal."""
    if not 1 <= k <= p.N - 1:
        raise ValueError("site out of range")
    if threshold <= 0.0:
        return 0.0
    la = np.logaddexp(p.log_alpha(k), p.log_alpha(k + 1))
    lb = _log_sub_exp(p.log_alpha_total, la)
    m = max(la, lb)
    if m >= 709.0:
        la, lb = la - m + 690.0, lb - m + 690.0
    return reg_beta_cdf(math.exp(la), math.exp(lb), threshold / p.N)


def _log_sub_exp(lx: float, ly: float) -> float:
    """log(exp(lx) - exp(ly)) for lx > ly."""
    if ly >= lx:
        raise ValueError("requires lx > ly")
    return lx + math.log1p(-math.exp(ly - lx))


def mu_k_calibrate(p: ModelParams, resolution: float = 1e-3) -> MuSchedule:
    """Smallest C (bisection) with P(U_k below mean - C log N r^{-k/2}) <= N^-5 at all k.

    Flags (rather than rejects) parameter sets where mu_{k0} fails to stay
    under lam^2/4; the asymptotic regime the twist needs is lam well above
    log(N)/N and small N can sit outside it.
    """
    from .distributions import check_left_tail

    p._require_asymmetric()
    target = float(p.N) ** -5

    def ok(C):
        return all(check_left_tail(k, p, C) <= target for k in range(1, p.N))

    lo, hi = 0.0, 1.0
    while not ok(hi):
        lo, hi = hi, hi * 2.0
        if hi > 1e6:
            raise RuntimeError("tail calibration failed to bracket")
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    C = hi
    n, k0 = p.N, p.k0
    ks = np.arange(n, dtype=float)
    mu = np.where(ks < k0, 1.0 - p.lam, 2.0 * C * math.log(n) * p.r ** (-0.5 * ks))
    mu[0] = 0.0
    mu_k0 = 2.0 * C * math.log(n) * p.r ** (-0.5 * k0)
    violation = not (mu_k0 < p.lam * p.lam / 4.0)
    return MuSchedule(C_cal=C, mu=mu, regime_violation=violation)
