"""Monotone maximal coupling of ordered copies and coalescence records.

Two code paths compute the same joint law.  ``coupled_resample`` works at
the API level: it computes the merge probability exactly from the TV
distance of the two interval betas, then splits into the shared draw or
the two positive-part draws.  The event kernels instead use the
rejection form, which never evaluates a special function; the two are
cross-checked distributionally in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .distributions import (
    BetaParams,
    DegenerateEqualError,
    IntervalBeta,
    beta_pdf,
    density_crossing,
    sample_interval_beta,
    tv_interval_betas,
)
from .process import Configuration, ModelParams
from .spectral import area_weights

__all__ = [
    "CoupledState",
    "TripleState",
    "CoalescenceRecord",
    "TripleRecord",
    "OrderViolationError",
    "RejectionBudgetExceededError",
    "coupled_resample",
    "coupled_resample_sampler",
    "simulate_coupled",
    "simulate_triple",
    "q_diagnostic",
]


class OrderViolationError(RuntimeError):
    """The coupled copies lost their pointwise ordering (must never happen)."""


class RejectionBudgetExceededError(RuntimeError):
    """A positive-part sampler failed to accept within its trial budget."""


@dataclass
class CoupledState:
    """Ordered pair of configurations with per-site merge bookkeeping."""

    upper: Configuration
    lower: Configuration

    def __post_init__(self):
        if self.upper.N != self.lower.N:
            raise ValueError("copies must share N")
        if np.any(self.lower.heights > self.upper.heights):
            raise ValueError("requires lower <= upper pointwise")

    @property
    def merged_sites(self) -> np.ndarray:
        return self.lower.heights == self.upper.heights

    @property
    def fully_merged(self) -> bool:
        return bool(self.merged_sites.all())


@dataclass
class TripleState:
    """Top copy from max dominating both a mid and a reference copy."""

    top: Configuration
    mid: Configuration
    ref: Configuration

    def __post_init__(self):
        if np.any(self.mid.heights > self.top.heights) or np.any(self.ref.heights > self.top.heights):
            raise ValueError("requires mid <= top and ref <= top")


@dataclass
class CoalescenceRecord:
    merge_time: float  # inf when not merged by t_end
    merged: bool
    t_end: float
    area_times: np.ndarray
    areas: np.ndarray


@dataclass
class TripleRecord:
    merge_time_mid: float
    merge_time_ref: float
    t_end: float


def _site_intervals(s: CoupledState, k: int, p: ModelParams):
    params = BetaParams(p.alpha(k), p.alpha(k + 1))
    hl, hu = s.lower.heights, s.upper.heights
    lo = None if hl[k + 1] == hl[k - 1] else IntervalBeta(params, hl[k - 1], hl[k + 1])
    up = None if hu[k + 1] == hu[k - 1] else IntervalBeta(params, hu[k - 1], hu[k + 1])
    return lo, up, hl[k - 1], hu[k - 1]


def coupled_resample(s: CoupledState, k: int, p: ModelParams, rng: np.random.Generator) -> CoupledState:
    """One resampling at site k under the maximal monotone coupling.

    The merge probability 1 - TV is computed exactly; on a merge both
    copies take one draw from the normalized minimum of the densities,
    otherwise each side draws from its positive-part density.
    """
    if not 1 <= k <= s.upper.N - 1:
        raise ValueError("site out of range")
    lo, up, pt_lo, pt_up = _site_intervals(s, k, p)
    if lo is None and up is None:
        vl, vu = pt_lo, pt_up
    elif lo is None:
        vl, vu = pt_lo, sample_interval_beta(up, rng)
    elif up is None:
        vl, vu = sample_interval_beta(lo, rng), pt_up
    else:
        tv = tv_interval_betas(lo, up)
        if rng.random() < 1.0 - tv:
            vl = vu = coupled_resample_sampler("nu2", lo, up, rng)
        else:
            vl = coupled_resample_sampler("nu1", lo, up, rng)
            vu = coupled_resample_sampler("nu3", lo, up, rng)
    hl = s.lower.heights.copy()
    hu = s.upper.heights.copy()
    hl[k] = vl
    hu[k] = vu
    if vl > vu:
        raise OrderViolationError(f"site {k}: {vl} > {vu}")
    return CoupledState(upper=Configuration(hu), lower=Configuration(hl))


def coupled_resample_sampler(which: str, lower: IntervalBeta, upper: IntervalBeta,
                             rng: np.random.Generator, max_tries: int = 1_000_000) -> float:
    """Draw from nu1 = (rho_l - rho_u)+, nu2 = min(rho_l, rho_u), or nu3 = (rho_u - rho_l)+.

    Accept/reject with the matching interval beta as proposal; the single
    crossing point bounds the support of the positive parts.
    """
    if upper.left >= lower.right:  # disjoint: nu1 = rho_l, nu3 = rho_u, nu2 empty
        if which == "nu1":
            return sample_interval_beta(lower, rng)
        if which == "nu3":
            return sample_interval_beta(upper, rng)
        raise ValueError("overlap is empty, nu2 has no mass")
    try:
        s = density_crossing(lower, upper)
    except DegenerateEqualError:
        if which == "nu1" or which == "nu3":
            raise ValueError("positive parts are empty for identical laws")
        return sample_interval_beta(lower, rng)
    for _ in range(max_tries):
        if which == "nu1":
            w = sample_interval_beta(lower, rng)
            if w > s:
                continue
            if rng.random() * beta_pdf(lower, w) > beta_pdf(upper, w):
                return w
        elif which == "nu3":
            w = sample_interval_beta(upper, rng)
            if w < s:
                continue
            if rng.random() * beta_pdf(upper, w) > beta_pdf(lower, w):
                return w
        elif which == "nu2":
            w = sample_interval_beta(upper, rng)
            if rng.random() * beta_pdf(upper, w) <= beta_pdf(lower, w):
                return w
        else:
            raise ValueError(f"unknown component {which!r}")
    raise RejectionBudgetExceededError(which)


def simulate_coupled(upper0: Configuration, lower0: Configuration, p: ModelParams,
                     t_end: float, rng: np.random.Generator,
                     area_times=None) -> CoalescenceRecord:
    """Run the grand coupling to t_end or coalescence (kernel fast path)."""
    state = CoupledState(upper=upper0, lower=lower0)  # validates ordering
    xl = state.lower.heights.copy()
    xu = state.upper.heights.copy()
    times = np.asarray([] if area_times is None else area_times, dtype=float)
    areas = np.empty(times.shape[0])
    t = p.tables
    merge_time, violations = _kernels.run_coupled(
        rng, xl, xu, float(t_end), times, area_weights(p), areas,
        t.a, t.b, t.s, t.sd, t.mu_u)
    if math.isnan(merge_time):
        raise RejectionBudgetExceededError("coupled event")
    if violations:
        raise OrderViolationError(f"{violations} order violations in coupled run")
    return CoalescenceRecord(merge_time=float(merge_time),
                             merged=math.isfinite(merge_time),
                             t_end=float(t_end), area_times=times, areas=areas)


def simulate_triple(x0: Configuration, p: ModelParams, t_end: float,
                    rng: np.random.Generator) -> TripleRecord:
    """Couple (top from max, mid from x0, ref from stationary) on shared clocks.

    mid and ref are conditionally independent given top's draw; each pair
    with top is marginally the pairwise monotone maximal coupling.
    """
    from .process import sample_stationary

    xt = Configuration.maximal(p).heights.copy()
    xm = x0.heights.copy()
    xr = sample_stationary(p, rng).heights.copy()
    t = p.tables
    mt_m, mt_r, violations = _kernels.run_triple(
        rng, xt, xm, xr, float(t_end), t.a, t.b, t.s, t.sd, t.mu_u)
    if math.isnan(mt_m):
        raise RejectionBudgetExceededError("triple event")
    if violations:
        raise OrderViolationError(f"{violations} order violations in triple run")
    return TripleRecord(merge_time_mid=float(mt_m), merge_time_ref=float(mt_r),
                        t_end=float(t_end))


def q_diagnostic(s: CoupledState, k: int, p: ModelParams):
    """(q, Q, q / (r^{k/2} Q)) where q is the no-merge probability at site k
    and Q the mean displacement over the larger local gradient."""
    hl, hu = s.lower.heights, s.upper.heights
    grad_l = hl[k + 1] - hl[k - 1]
    grad_u = hu[k + 1] - hu[k - 1]
    mean_shift = (1.0 - p.lam) / 2.0
    dbar = (1.0 - mean_shift) * (hu[k - 1] - hl[k - 1]) + mean_shift * (hu[k + 1] - hl[k + 1])
    lo, up, _, _ = _site_intervals(s, k, p)
    if lo is None and up is None:
        q = 0.0 if hl[k - 1] == hu[k - 1] else 1.0
    elif lo is None or up is None:
        q = 1.0
    else:
        q = tv_interval_betas(lo, up)
    gmax = max(grad_l, grad_u)
    if gmax == 0.0:
        if q > 0.0:
            raise RuntimeError("anomaly: positive q with zero gradients")
        return 0.0, 0.0, 0.0
    Q = dbar / gmax
    if Q == 0.0:
        if q > 0.0:
            raise RuntimeError("anomaly: positive q with zero displacement")
        return q, Q, 0.0
    return q, Q, q / (p.r ** (0.5 * k) * Q)
