import math

import numpy as np
import pytest

from polymer_lab.airy import airy
from polymer_lab.crossover import (
    CrossoverParams,
    airy_kernel,
    build_cdf,
    crossover_cdf,
    crossover_pdf,
    rho_smooth,
    sigma,
    trace_paths,
    tw_gue_cdf,
)


@pytest.fixture(scope="module")
def cdf1():
    return build_cdf(CrossoverParams(1.0))


def test_airy_against_scipy():
    from scipy.special import airy as sp_airy

    x = np.linspace(-20, 20, 801)
    a, d = airy(x)
    A, D, _, _ = sp_airy(x)
    assert np.max(np.abs(a - A)) < 1e-12 and np.max(np.abs(d - D)) < 1e-11


def test_airy_kernel_symmetric_and_diagonal():
    u = np.array([-1.0, 0.3, 2.0])
    K = airy_kernel(u, u)
    assert np.allclose(K, K.T, atol=1e-14)
    a, d = airy(0.3)
    assert K[1, 1] == pytest.approx(float(d) ** 2 - 0.3 * float(a) ** 2, rel=1e-10)
    h = 1e-5
    assert airy_kernel(np.array([0.3]), np.array([0.3 + h]))[0] == pytest.approx(K[1, 1], rel=1e-4)


def test_rho_smooth_matches_sigma_away_from_zero():
    t = np.array([-2.0, -0.7, 0.9, 3.0])
    k = 2.0
    assert np.allclose(rho_smooth(t, k), sigma(t, k) - 1 / (k * t), atol=1e-13)
    assert rho_smooth(np.array([1e-6, -1e-6]), k) == pytest.approx([0.5, 0.5], abs=1e-5)


def test_tracy_widom_values():
    assert tw_gue_cdf(-2.0).value == pytest.approx(0.41322, abs=1e-5)
    assert tw_gue_cdf(0.0).value == pytest.approx(0.96937, abs=1e-5)
    assert tw_gue_cdf(-3.0).self_convergence < 1e-10
    with pytest.raises(ValueError):
        tw_gue_cdf(-9.0)


def test_trace_paths_agree():
    a, b = trace_paths(0.5, 1.0)
    assert a == pytest.approx(b, rel=1e-10)


def test_pdf_self_convergence():
    res = crossover_pdf(0.0, CrossoverParams(1.0))
    assert res.self_convergence < 1e-8 and not res.flagged
    assert set(res.to_dict()) >= {"value", "self_convergence", "params"}


def test_density_is_signed_but_normalized(cdf1):
    assert cdf1.mass == pytest.approx(1.0, abs=1e-10)
    assert cdf1.f.min() < -1e-3  # genuine negative lobe in the far left tail


def test_cdf_is_a_cdf(cdf1):
    s = np.linspace(-12, 10, 89)
    g = cdf1(s)
    assert np.all(np.diff(g) > 0)
    assert g[0] < 0.01 and g[-1] > 0.999


def test_narrow_grid_rejected():
    with pytest.raises(ValueError, match="too narrow"):
        build_cdf(CrossoverParams(1.0), r_grid=(-2.0, 2.0))


def test_crossover_cdf_reports_convergence(cdf1):
    res = crossover_cdf(np.array([0.0]), CrossoverParams(1.0), refine=("m",))
    assert res[0].value == pytest.approx(float(cdf1(np.array([0.0]))[0]), abs=1e-10)
    assert 0 <= res[0].self_convergence < 1e-6
    assert res[0].params["refine"] == ["m"]


def test_params_doubling():
    p = CrossoverParams(0.5)
    assert p.doubled("m").quad_order == 16
    assert p.doubled("T").T == 2 * p.T
    assert p.doubled("L").domain_cap == 28.0
    assert p.doubled("r").panel == p.panel / 2
    assert p.shift == pytest.approx(0.5 * math.log(32 * math.pi * 0.5**4))
