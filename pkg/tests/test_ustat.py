import math

import numpy as np
import pytest

from polymer_lab.env import EnvSpec, sample_env, stream_seeds
from polymer_lab.transfer import evolve, four_param, p2l_value
from polymer_lab.ustat import (
    chaos_layers,
    chaos_tail_mass,
    enumerate_oracle,
    enumerate_oracle_json,
    first_order_samples,
    first_order_variance,
    grid_from_cells,
    pkn_grid,
    rect_average,
    u_stat,
    u_stat_product,
)
from polymer_lab.walk import rw_pmf


def test_layers_sum_to_partition_function():
    env = sample_env(EnvSpec("uniform"), 12, 12, 3)
    layers = chaos_layers(env, 12, beta=0.8)
    assert layers.orders[0] == pytest.approx(1.0)
    assert layers.total() == pytest.approx(p2l_value(evolve(env, 0.8, "product", log_space=False)), rel=1e-12)


def test_first_layer_is_linear_term():
    n = 10
    env = sample_env(EnvSpec("gaussian"), n, n, 7)
    direct = sum(rw_pmf(i, x) * env.value(i, x) for i in range(1, n + 1) for x in range(-i, i + 1, 2))
    assert chaos_layers(env, n).orders[1] == pytest.approx(direct, rel=1e-12)


def test_layers_four_param_target():
    env = sample_env(EnvSpec("gaussian"), 12, 12, 1)
    layers = chaos_layers(env, 12, ("four_param", 2, 0, 10, 2), beta=0.5)
    assert layers.total() == pytest.approx(four_param(env, 0.5, "product", 2, 0, 10, 2), rel=1e-12)


def test_u_stat_of_walk_kernel_is_chaos_term():
    n = 5
    env = sample_env(EnvSpec("rademacher"), n, n, 2)
    S = chaos_layers(env, n).s_terms()
    for k in (1, 2):
        assert u_stat(pkn_grid(k, n), env) == pytest.approx(S[k], rel=1e-12)


def test_rect_average_constant_kernel():
    g = rect_average(lambda t, x: np.ones(np.broadcast(t, x).shape[:-1]), 1, 4, 4)
    assert np.all(g.values[g.values != 0] == pytest.approx(1.0))


def test_u_stat_product_rejects_overlap():
    env = sample_env(EnvSpec("gaussian"), 4, 4, 0)
    a = grid_from_cells(1, 4, 4, {((1,), (1,)): 1.0})
    b = grid_from_cells(1, 4, 4, {((2,), (0,)): 2.0})
    assert u_stat_product([a, b], env) == pytest.approx(u_stat(a, env) * u_stat(b, env))
    with pytest.raises(ValueError):
        u_stat_product([a, a], env)


def test_parity_invalid_cell():
    with pytest.raises(ValueError):
        grid_from_cells(1, 4, 4, {((1,), (0,)): 1.0})


def test_enumeration_oracle():
    res = enumerate_oracle(2, 2)
    m = {r["moment"]: r for r in res["moments"]}
    assert res["environments"] == 2 ** res["cells"]
    assert m["E[S_1]"]["exact_rational"] == "0"
    assert m["E[S_1 S_2]"]["exact_rational"] == "0"
    assert m["E[S_2^2]"]["within_bound"]
    assert not m["E[S_2^2 full]"]["within_bound"]
    assert '"moments"' in enumerate_oracle_json(2, 2)
    with pytest.raises(ValueError):
        enumerate_oracle(8, 3)


def test_first_order_variance_limit():
    assert first_order_variance(4096) == pytest.approx(2 / math.sqrt(math.pi), rel=0.02)


def test_first_order_samples_variance():
    n = 64
    t1 = first_order_samples(EnvSpec("gaussian"), n, stream_seeds(5, (1,), 4000)) * n**-0.25
    assert np.var(t1) == pytest.approx(first_order_variance(n), rel=0.1)


def test_first_order_samples_match_layers():
    spec, n = EnvSpec("uniform"), 16
    seeds = stream_seeds(8, (2,), 2)
    t1 = first_order_samples(spec, n, seeds)
    for s, v in zip(seeds, t1):
        assert v == pytest.approx(chaos_layers(sample_env(spec, n, n, s), n).orders[1], rel=1e-12)


def test_tail_mass_decreasing():
    t = [chaos_tail_mass(K, 1.0) for K in (5, 10, 20)]
    assert t[0] > t[1] > t[2] > 0
