import math

import numpy as np
import pytest
from scipy import special as sps
from scipy import stats

from adjwalk.special import (
    BIG_SHAPE,
    betainc_raw,
    gammainc_reg,
    log_beta_pdf01,
    reg_beta_cdf,
    sample_beta,
)


def test_betainc_matches_scipy():
    for a, b, x in [(2.0, 3.0, 0.4), (1.0, 1.0, 0.7), (10.0, 0.5, 0.99),
                    (50.0, 50.0, 0.5), (1e5, 1e5, 0.5001)]:
        assert betainc_raw(a, b, x) == pytest.approx(sps.betainc(a, b, x), rel=1e-12)


def test_gammainc_matches_scipy():
    for a, x in [(1.0, 1.0), (4.0, 2.5), (100.0, 90.0)]:
        assert gammainc_reg(a, x) == pytest.approx(sps.gammainc(a, x), rel=1e-12)


def test_log_beta_pdf_matches_scipy():
    for a, b, x in [(2.0, 2.0, 0.5), (7.0, 3.0, 0.25), (1.0, 9.0, 0.01)]:
        assert log_beta_pdf01(a, b, x) == pytest.approx(
            stats.beta.logpdf(x, a, b), rel=1e-10)


def test_reg_beta_cdf_edges():
    assert reg_beta_cdf(3.0, 4.0, 0.0) == 0.0
    assert reg_beta_cdf(3.0, 4.0, 1.0) == 1.0
    assert reg_beta_cdf(2.0, 2.0, 0.5) == pytest.approx(0.5, abs=1e-14)


def test_reg_beta_cdf_normal_limit_consistency():
    # just below and above the shape cutoff the two evaluation paths must agree
    s = BIG_SHAPE
    a, b = 0.4 * s, 0.6 * s
    mean = a / (a + b)
    sd = math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1.0)))
    for z in (-2.0, -0.5, 0.0, 0.5, 2.0):
        x = mean + z * sd
        exact = reg_beta_cdf(a * 0.999, b * 0.999, x)  # cephes path
        limit = reg_beta_cdf(a * 1.001, b * 1.001, x)  # normal path
        assert limit == pytest.approx(exact, abs=2e-3)


def test_reg_beta_cdf_huge_shapes_step():
    # degenerate concentration: CDF becomes a step at the mean ratio
    assert reg_beta_cdf(1e300, 1e300, 0.499) == 0.0
    assert reg_beta_cdf(1e300, 1e300, 0.501) == 1.0
    assert reg_beta_cdf(1e300, 2e300, 0.3) == 0.0
    assert reg_beta_cdf(1e300, 2e300, 0.35) == 1.0


def test_sample_beta_ks():
    rng = np.random.default_rng(123)
    draws = np.array([sample_beta(rng, 3.0, 5.0) for _ in range(5000)])
    assert stats.kstest(draws, stats.beta(3.0, 5.0).cdf).pvalue > 0.01


def test_sample_beta_huge_shapes():
    rng = np.random.default_rng(5)
    a, b = 4e12, 6e12
    draws = np.array([sample_beta(rng, a, b) for _ in range(2000)])
    mean = a / (a + b)
    sd = math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1.0)))
    assert abs(draws.mean() - mean) < 5 * sd / math.sqrt(2000) + 1e-12
    assert np.all(draws > 0.0) and np.all(draws < 1.0)
