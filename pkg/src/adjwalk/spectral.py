"""Closed-form spectrum of the mean evolution and decay verification.

The expected heights solve a linear tridiagonal ODE.  In the symmetrized
coordinates y_k = r**(-k/2) (m_k - xbar_k) the system matrix becomes the
symmetric tridiagonal with diagonal -1 and off-diagonal sqrt(1-lam^2)/2,
whose eigenvectors are the discrete sine modes.  The j = 1 eigenvalue is
the spectral value gamma_N; the higher modes are used only as a validated
computational device for solving the ODE exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .process import Configuration, ModelParams, simulate_X

__all__ = [
    "EigenSystem",
    "InsufficientGridError",
    "gamma_N",
    "twisted_area",
    "mean_profile_exact",
    "mean_profile_rk4",
    "decay_check",
    "DecayReport",
]


class InsufficientGridError(ValueError):
    """A rate fit needs at least two time points."""


def gamma_N(p: ModelParams) -> float:
    """-(1 - sqrt(1-lam^2) cos(pi/N)), the decay rate of the slowest mode."""
    return -(1.0 - math.sqrt(1.0 - p.lam * p.lam) * math.cos(math.pi / p.N))


@dataclass(frozen=True)
class EigenSystem:
    """Sine-mode diagonalization of the mean evolution for fixed parameters."""

    p: ModelParams

    @cached_property
    def gamma(self) -> np.ndarray:
        """Eigenvalues gamma_j = -(1 - sqrt(1-lam^2) cos(pi j / N)), j = 1..N-1."""
        j = np.arange(1, self.p.N)
        return -(1.0 - math.sqrt(1.0 - self.p.lam ** 2) * np.cos(np.pi * j / self.p.N))

    @cached_property
    def modes(self) -> np.ndarray:
        """Orthonormal sine basis, modes[k-1, j-1] = sqrt(2/N) sin(k pi j / N)."""
        n = self.p.N
        k = np.arange(1, n)[:, None]
        j = np.arange(1, n)[None, :]
        return math.sqrt(2.0 / n) * np.sin(np.pi * k * j / n)

    @cached_property
    def half_weights(self) -> np.ndarray:
        """r**(-k/2) for k = 1..N-1 (the symmetrizing change of variables)."""
        k = np.arange(1, self.p.N)
        return np.exp(-0.5 * k * self.p.log_r)

    def to_symmetric(self, heights: np.ndarray) -> np.ndarray:
        dev = np.asarray(heights)[..., 1:-1] - self.p.xbar[1:-1]
        return dev * self.half_weights

    def from_symmetric(self, y: np.ndarray) -> np.ndarray:
        dev = y / self.half_weights
        out = np.zeros(y.shape[:-1] + (self.p.N + 1,))
        out[..., 1:-1] = dev + self.p.xbar[1:-1]
        out[..., -1] = float(self.p.N)
        return out

    def evolve(self, heights: np.ndarray, t: float) -> np.ndarray:
        """Exact mean heights at time t started from the given profile."""
        if t < 0.0:
            raise ValueError("t must be >= 0")
        y = self.to_symmetric(heights)
        coef = self.modes.T @ y
        y_t = self.modes @ (np.exp(self.gamma * t) * coef)
        return self.from_symmetric(y_t)


def twisted_area(c_upper, c_lower, p: ModelParams) -> float:
    """Weighted area sum_k r**(-k/2) sin(k pi / N) (upper_k - lower_k)."""
    hu = c_upper.heights if isinstance(c_upper, Configuration) else np.asarray(c_upper, float)
    hl = c_lower.heights if isinstance(c_lower, Configuration) else np.asarray(c_lower, float)
    k = np.arange(1, p.N)
    w = np.exp(-0.5 * k * p.log_r) * np.sin(np.pi * k / p.N)
    return float(np.sum(w * (hu[1:-1] - hl[1:-1])))


def area_weights(p: ModelParams) -> np.ndarray:
    """Weights of the twisted area, index k = 0..N (endpoints zero)."""
    w = np.zeros(p.N + 1)
    k = np.arange(1, p.N)
    w[1:-1] = np.exp(-0.5 * k * p.log_r) * np.sin(np.pi * k / p.N)
    return w


def mean_profile_exact(c0: Configuration, p: ModelParams, t: float) -> np.ndarray:
    return EigenSystem(p).evolve(c0.heights, t)


def mean_profile_rk4(c0: Configuration, p: ModelParams, t: float, dt: float = 1e-3) -> np.ndarray:
    """Independent oracle: RK4 on the tridiagonal ODE for the means."""
    n = p.N
    cl = p.r / (1.0 + p.r)
    cr = 1.0 / (1.0 + p.r)

    def rhs(m):
        d = np.zeros_like(m)
        d[1:-1] = cl * m[:-2] - m[1:-1] + cr * m[2:]
        return d

    m = c0.heights.astype(float).copy()
    steps = max(1, int(math.ceil(t / dt)))
    h = t / steps
    for _ in range(steps):
        k1 = rhs(m)
        k2 = rhs(m + 0.5 * h * k1)
        k3 = rhs(m + 0.5 * h * k2)
        k4 = rhs(m + h * k3)
        m = m + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return m


@dataclass
class DecayReport:
    slope: float
    ci_low: float
    ci_high: float
    gamma: float
    t_grid: np.ndarray
    log_means: np.ndarray
    n_excluded: int


def _fit_slope(t, logm):
    tbar = t.mean()
    return float(np.sum((t - tbar) * (logm - logm.mean())) / np.sum((t - tbar) ** 2))


def decay_check(p: ModelParams, t_grid, trajectories: int, rng: np.random.Generator,
                bootstrap: int = 400) -> DecayReport:
    """Fit the decay rate of the mean twisted-area functional from max.

    Regresses log of the trajectory-averaged functional on time and
    bootstraps the trajectories for a 95% CI on the slope.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.shape[0] < 2:
        raise InsufficientGridError("need at least two time points")
    c0 = Configuration.maximal(p)
    w = area_weights(p)
    xbar_a = float(np.sum(w * p.xbar))
    vals = np.empty((trajectories, t_grid.shape[0]))
    for i in range(trajectories):
        _, snaps = simulate_X(c0, p, float(t_grid[-1]) + 1e-9, rng, obs_times=t_grid)
        vals[i] = snaps @ w - xbar_a
    means = vals.mean(axis=0)
    keep = means > 0.0
    n_excluded = int((~keep).sum())
    if keep.sum() < 2:
        raise InsufficientGridError("fewer than two positive mean estimates")
    t_fit = t_grid[keep]
    slope = _fit_slope(t_fit, np.log(means[keep]))
    idx = np.arange(trajectories)
    boot = np.empty(bootstrap)
    for bi in range(bootstrap):
        sel = rng.choice(idx, size=trajectories, replace=True)
        m = vals[sel].mean(axis=0)
        ok = keep & (m > 0.0)
        if ok.sum() < 2:
            boot[bi] = np.nan
            continue
        boot[bi] = _fit_slope(t_grid[ok], np.log(m[ok]))
    boot = boot[np.isfinite(boot)]
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return DecayReport(slope=slope, ci_low=float(lo), ci_high=float(hi),
                       gamma=gamma_N(p), t_grid=t_grid, log_means=np.where(keep, np.log(np.abs(means) + 1e-300), np.nan),
                       n_excluded=n_excluded)
