import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from polymer_lab.walk import (
    LatticeTimeVector,
    SimplexPoint,
    discrete_kernel_pkn,
    fock_norm,
    heat_kernel,
    heat_kernel_k,
    kernel_bound_constant,
    llt_gap,
    parity_round,
    pkn_norm_sq,
    pkn_norm_sq_all,
    return_probs,
    rw_pmf,
    rw_pmf_exact,
    rw_pmf_row,
)


@pytest.mark.parametrize("i", [0, 1, 7, 50, 51, 400])
def test_pmf_row_normalized(i):
    row = rw_pmf_row(i)
    assert row.size == i + 1
    assert row.sum() == pytest.approx(1.0, abs=1e-13)
    assert rw_pmf(i, -i) == pytest.approx(row[0], rel=1e-12)


def test_pmf_exact_and_parity():
    assert rw_pmf_exact(4, 0) == Fraction(3, 8)
    assert rw_pmf_exact(4, 1) == 0
    assert rw_pmf(3, 5) == 0.0
    assert rw_pmf(60, 4) == pytest.approx(math.comb(60, 32) / 2**60, rel=1e-12)


def test_return_probs():
    q = return_probs(30)
    assert np.allclose(q, [rw_pmf(2 * a, 0) for a in range(31)], rtol=1e-13)
    assert np.allclose(q[1:6], [float(sum(rw_pmf_exact(a, x) ** 2 for x in range(-a, a + 1))) for a in range(1, 6)])


def test_parity_round():
    assert parity_round(0.4, 2) == 0
    assert parity_round(0.4, 1) == 1
    assert parity_round(-2.2, 1) == -3 or parity_round(-2.2, 1) == -1
    assert (parity_round(7.3, 5) + 5) % 2 == 0


def test_heat_kernel_integrates():
    x = np.linspace(-12, 12, 4001)
    assert np.trapezoid(heat_kernel(0.7, x), x) == pytest.approx(1.0, abs=1e-10)
    p = SimplexPoint((0.5, 1.0), (0.0, 0.0))
    assert heat_kernel_k(p) == pytest.approx(heat_kernel(0.5, 0.0) ** 2)


def test_llt_gap_shrinks():
    assert llt_gap(1024) < llt_gap(64) < 0.05


def test_point_validation():
    with pytest.raises(ValueError):
        SimplexPoint((0.5, 0.5), (0.0, 0.0))
    with pytest.raises(ValueError):
        SimplexPoint((0.0,), (0.0,))
    with pytest.raises(ValueError):
        LatticeTimeVector((3, 2), 4)


def test_fock_norm_values():
    assert fock_norm(0) == 1.0
    assert fock_norm(1) == pytest.approx(1.0 / (2 * math.gamma(1.5)))


def test_pkn_norm_brute_force():
    # exact sum over all time tuples and sites for small n
    n, k = 6, 2
    total = 0.0
    for times in itertools.combinations(range(1, n + 1), k):
        prev, acc = 0, 1.0
        for t in times:
            acc *= rw_pmf(2 * (t - prev), 0)
            prev = t
        total += acc
    assert pkn_norm_sq(k, n) == pytest.approx(total * n ** (-k / 2) * 0.25, rel=1e-13)
    assert pkn_norm_sq_all(n, 3)[k] == pytest.approx(pkn_norm_sq(k, n), rel=1e-13)


def test_pkn_norm_tends_to_fock():
    # the deficit 1 - ||.||^2 / ||rho_k||^2 decays like n^(-1/2)
    for k in (1, 2, 3):
        gaps = [1 - pkn_norm_sq(k, n) / fock_norm(k) for n in (256, 1024, 4096)]
        assert 0 < gaps[2] < gaps[1] < gaps[0]
        assert gaps[1] / gaps[2] == pytest.approx(2.0, rel=0.1)


def test_kernel_bound_constant():
    assert all(kernel_bound_constant(k, n) <= 2 for k in range(1, 5) for n in (16, 64))
    with pytest.raises(ValueError):
        kernel_bound_constant(0, 16)


def test_discrete_kernel_outside_support():
    p = SimplexPoint((0.5,), (100.0,))
    assert discrete_kernel_pkn(1, 16, p) == 0.0
