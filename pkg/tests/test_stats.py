import numpy as np
import pytest
from scipy.special import ndtr

from polymer_lab.stats import bootstrap_ci, empirical_cdf, ks_null_quantile, ks_one_sample, ks_two_sample, moments, pairwise_sum


def test_identical_samples():
    x = np.random.default_rng(0).normal(size=500)
    r = ks_two_sample(x, x)
    assert r.statistic == 0.0 and r.passed


def test_shifted_samples_fail():
    rng = np.random.default_rng(1)
    assert not ks_two_sample(rng.normal(size=2000), rng.normal(1.0, size=2000)).passed


def test_one_sample_normal():
    x = np.random.default_rng(2).normal(size=5000)
    r = ks_one_sample(x, ndtr)
    assert r.passed
    assert r.threshold == pytest.approx(1.5 * r.null_quantile)


def test_null_quantile_scaling():
    assert ks_null_quantile(10000) == pytest.approx(ks_null_quantile(2500) / 2, rel=0.02)
    assert ks_null_quantile(1000, 1000) > ks_null_quantile(1000)


def test_nonfinite_dropped():
    assert ks_two_sample([1.0, np.nan, 2.0], [1.0, 2.0]).statistic == 0.0
    with pytest.raises(ValueError):
        ks_two_sample([np.nan], [1.0, 2.0])


def test_moments_and_sum():
    m = moments([1.0, 2.0, 3.0, 4.0])
    assert m["mean"] == 2.5 and m["var"] == pytest.approx(5 / 3)
    assert moments([]) == {"count": 0}
    assert pairwise_sum(np.arange(7.0)) == 21.0


def test_empirical_cdf():
    F = empirical_cdf([1.0, 2.0, 3.0])
    assert F(0.5) == 0 and F(2.0) == pytest.approx(2 / 3) and F(9) == 1


def test_bootstrap_contains_truth():
    x = np.random.default_rng(3).normal(size=400)
    lo, hi = bootstrap_ci((x,), np.mean, seed=0)
    assert lo < 0 < hi
