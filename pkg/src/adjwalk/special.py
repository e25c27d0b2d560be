"""Log-space beta/gamma primitives shared by the python API and the numba kernels.

The regularized incomplete beta comes from scipy's cephes build, exposed
through ``scipy.special.cython_special`` so the event kernels can call it
without leaving nopython mode.  Shapes grow like alpha1 * r**(k-1) and can
exceed what cephes handles (or what a double can represent), so every
entry point switches to a moments-based normal tail once the shapes pass
``BIG_SHAPE``; at that size the beta law is within ~1e-7 of its gaussian
limit, far below anything the suite resolves.
"""

from __future__ import annotations

import ctypes
import math

import numba
import numpy as np
from numba import njit
from numba.extending import get_cython_function_address

__all__ = [
    "BIG_SHAPE",
    "betainc_raw",
    "gammainc_reg",
    "log_beta_pdf01",
    "reg_beta_cdf",
    "sample_beta",
    "sample_log_gamma",
]

_d1 = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double)
_d2 = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double, ctypes.c_double)
_d3 = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double, ctypes.c_double, ctypes.c_double)

# __pyx_fuse_0 selects the double specialization of the fused signatures.
_betainc_c = _d3(get_cython_function_address("scipy.special.cython_special", "__pyx_fuse_0betainc"))
_gammaln_c = _d1(get_cython_function_address("scipy.special.cython_special", "gammaln"))
_betaln_c = _d2(get_cython_function_address("scipy.special.cython_special", "betaln"))
_gammainc_c = _d2(get_cython_function_address("scipy.special.cython_special", "gammainc"))

# Shapes above this go through the normal limit instead of cephes, which
# starts returning garbage (values > 1, NaN) somewhere past 1e12.
BIG_SHAPE = 1e12


@njit
def betainc_raw(a, b, x):
    """Regularized incomplete beta, cephes path only. Caller guards the range."""
    return _betainc_c(a, b, x)


@njit
def gammainc_reg(a, x):
    """Regularized lower incomplete gamma P(a, x)."""
    return _gammainc_c(a, x)


@njit(cache=True)
def _norm_cdf(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


@njit
def reg_beta_cdf(a, b, x):
    """CDF of Beta(a, b) at x, stable for arbitrarily large shapes."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    s = a + b
    if s > BIG_SHAPE or not math.isfinite(s):
        # Gaussian limit; sigma may underflow for astronomically large
        # shapes, in which case the law is a point mass at the mean.
        mu = a / s if math.isfinite(s) else 1.0 / (1.0 + b / a)
        var = (a / s) * (b / s) / (s + 1.0)
        if var <= 0.0:
            return 1.0 if x >= mu else 0.0
        return _norm_cdf((x - mu) / math.sqrt(var))
    v = _betainc_c(a, b, x)
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


@njit
def log_beta_pdf01(a, b, x):
    """log density of Beta(a, b) on [0, 1]; -inf outside the open support edges."""
    if x < 0.0 or x > 1.0:
        return -np.inf
    if a == 1.0:
        la = 0.0
    elif x > 0.0:
        la = (a - 1.0) * math.log(x)
    else:
        return -np.inf
    if b == 1.0:
        lb = 0.0
    elif x < 1.0:
        lb = (b - 1.0) * math.log1p(-x)
    else:
        return -np.inf
    return la + lb - _betaln_c(a, b)


@njit(cache=True)
def sample_beta(gen, a, b):
    """Exact Beta(a, b) draw via two gammas (shapes >= 1); normal limit for huge shapes."""
    s = a + b
    if s > BIG_SHAPE or not math.isfinite(s):
        if math.isfinite(s):
            mu = a / s
            sd = math.sqrt((a / s) * (b / s) / (s + 1.0))
        else:
            mu = 1.0 / (1.0 + b / a)
            sd = 0.0
        u = mu + sd * gen.standard_normal()
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
        return u
    x = gen.standard_gamma(a)
    y = gen.standard_gamma(b)
    return x / (x + y)


@njit(cache=True)
def sample_log_gamma(gen, shape, log_shape):
    """log of a Gamma(shape, 1) draw; normal limit on the log scale for huge shapes."""
    if shape > BIG_SHAPE or not math.isfinite(shape):
        # G ~ shape * (1 + Z/sqrt(shape)), so log G ~ log(shape) + Z/sqrt(shape).
        return log_shape + gen.standard_normal() * math.exp(-0.5 * log_shape)
    return math.log(gen.standard_gamma(shape))
