import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swapkit.core import FunctionTable, ProductMeasure, inner_product
from swapkit.cube import (apply_noise, biased_measure, collision_probability, gaussian_project,
                          noise_stability, resampling_kernel, sample_biased_pair,
                          sample_biased_pairs, sse_probe)


def naive_collision(A, rho, gamma):
    n = A.ndim
    total = 0.0
    for x in itertools.product((0, 1), repeat=n):
        px = np.prod([rho if b else 1 - rho for b in x])
        for y in itertools.product((0, 1), repeat=n):
            py = 1.0
            for xi, yi in zip(x, y):
                py *= (1 - gamma) * (xi == yi) + gamma * (rho if yi else 1 - rho)
            total += px * py * A[x] * A[y]
    return total


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.floats(0.05, 0.95), st.floats(0.0, 1.0), st.integers(0, 2**31 - 1))
def test_collision_probability_matches_enumeration(n, rho, gamma, seed):
    A = np.random.default_rng(seed).random((2,) * n) < 0.5
    assert collision_probability(A, rho, gamma) == pytest.approx(naive_collision(A, rho, gamma), abs=1e-12)


def test_collision_against_sampling():
    rng = np.random.default_rng(3)
    A = rng.random((2,) * 5) < 0.4
    x, y = sample_biased_pairs(5, 0.3, 0.2, 200000, rng)
    emp = np.mean(A[tuple(x.T.astype(int))] & A[tuple(y.T.astype(int))])
    assert emp == pytest.approx(collision_probability(A, 0.3, 0.2), abs=0.005)


def test_sampler_marginals():
    x, y = sample_biased_pairs(10, 0.3, 0.4, 100000, np.random.default_rng(0))
    assert x.mean() == pytest.approx(0.3, abs=0.01)
    assert y.mean() == pytest.approx(0.3, abs=0.01)
    # Pr[x_i != y_i] = gamma * 2 rho (1 - rho)
    assert np.mean(x != y) == pytest.approx(0.4 * 2 * 0.3 * 0.7, abs=0.01)


def test_sampler_validation_and_single_pair():
    with pytest.raises(ValueError):
        sample_biased_pairs(3, 0.0, 0.5, 1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_biased_pairs(3, 0.5, 1.5, 1, np.random.default_rng(0))
    p = sample_biased_pair(6, 0.5, 0.0, seed=2)
    assert np.array_equal(p.x, p.y)


def test_kernel_rows_are_distributions():
    K = resampling_kernel([0.2, 0.5, 0.3], 0.6)
    assert np.allclose(K.sum(axis=1), 1)
    assert K[0, 0] == pytest.approx(0.6 + 0.4 * 0.2)


def test_noise_endpoints(rng):
    m = ProductMeasure([[0.3, 0.7], [0.5, 0.25, 0.25]])
    f = FunctionTable.random([2, 3], rng)
    assert apply_noise(f, 1.0, m) == f
    mean = np.sum(m.weights() * f.values)
    assert np.allclose(apply_noise(f, 0.0, m).values, mean)
    assert noise_stability(f, 1.0, m) == pytest.approx(inner_product(f, f, m).real)
    assert noise_stability(f, 0.0, m) == pytest.approx(abs(mean) ** 2)
    with pytest.raises(ValueError):
        apply_noise(f, -0.1)


def test_noise_is_a_semigroup(rng):
    f = FunctionTable.random([2, 2, 3], rng)
    a = apply_noise(apply_noise(f, 0.5), 0.6)
    assert np.allclose(a.values, apply_noise(f, 0.3).values)


def test_noise_stability_monotone_in_correlation(rng):
    f = FunctionTable.random([2] * 4, rng, "real")
    m = biased_measure(4, 0.3)
    vals = [noise_stability(f, k, m) for k in np.linspace(0, 1, 11)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_gaussian_projection_preserves_norm_on_average():
    u = np.random.default_rng(0).standard_normal((50, 40))
    v = gaussian_project(u, 2000, seed=1)
    ratio = np.linalg.norm(v, axis=1) / np.linalg.norm(u, axis=1)
    assert np.all(np.abs(ratio - 1) < 0.15)
    assert np.array_equal(v, gaussian_project(u, 2000, seed=1))
    with pytest.raises(ValueError):
        gaussian_project(u, 0, seed=1)


def test_sse_probe_constant_map():
    p_local, p_global, w = sse_probe(lambda x: np.zeros((len(x), 2)), 8, 0.3, 0.2, 0.5, 500, 0)
    assert p_local == 1.0 and p_global == 1.0 and w.mass == 1.0


def test_sse_probe_local_at_least_global_for_coordinate_map():
    p_local, p_global, _ = sse_probe(lambda x: x.astype(float), 30, 0.5, 0.05, 1.5, 4000, 1,
                                     spread_const=0.0)
    assert p_local > 0.5
    assert p_global <= p_local
