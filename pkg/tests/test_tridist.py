import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swapkit.core import BudgetError, DomainError, FunctionTable
from swapkit.threeap import FIVE_ELEMENT_SET, restricted_three_ap, three_ap_set
from swapkit.tridist import (TriDist, conditional_conj_product, decompose_uniform,
                             full_support_pipeline, is_full_pair, lift_function,
                             minus_decomposition, pairwise_connected, path_trick,
                             symmetry_witness, tri_correlation, tri_correlation_mc)


def random_tridist(rng, shape=(3, 3, 3), density=0.6):
    while True:
        P = rng.random(shape) * (rng.random(shape) < density)
        if P.sum() > 0:
            mu = TriDist(P / P.sum())
            if pairwise_connected(mu)[0]:
                return mu


def naive_tri(f, g, h, mu):
    n = f.n
    total = 0j
    s, gm, ph = mu.shape
    for x in itertools.product(range(s), repeat=n):
        for y in itertools.product(range(gm), repeat=n):
            for z in itertools.product(range(ph), repeat=n):
                w = np.prod([mu.probs[x[i], y[i], z[i]] for i in range(n)])
                if w:
                    total += w * f(x) * g(y) * h(z)
    return total


def naive_x_walk(mu, r=2):
    # alternating walk y1 -x1-> z1 -x1'-> y2 -x2-> z2 with exact transition weights
    P = mu.probs
    my, mz = P.sum(axis=(0, 2)), P.sum(axis=(0, 1))
    out = {}
    k = P.shape[0]
    for c in itertools.product(range(k), repeat=3):
        Q = np.zeros(P.shape[1:])
        for s, z1, y2, e in itertools.product(range(P.shape[1]), range(P.shape[2]),
                                              range(P.shape[1]), range(P.shape[2])):
            if mz[z1] > 0 and my[y2] > 0:
                Q[s, e] += P[c[0], s, z1] * P[c[1], y2, z1] / mz[z1] * P[c[2], y2, e] / my[y2]
        if Q.sum() > 0:
            out[c] = Q
    return out


def test_validation():
    with pytest.raises(DomainError):
        TriDist(np.ones((2, 2)))
    with pytest.raises(DomainError):
        TriDist(np.ones((2, 2, 2)))
    with pytest.raises(DomainError, match="probs"):
        TriDist.from_json('{"sigma": 2, "gamma": 2, "phi": 2}')


def test_json_roundtrip(rng):
    mu = random_tridist(rng)
    assert np.array_equal(TriDist.from_json(mu.to_json()).probs, mu.probs)


def test_connectivity_certificate():
    # x and y always equal with two symbols: the xy graph splits into two components
    mu = TriDist.uniform_on([(0, 0, 0), (1, 1, 0)], (2, 2, 1))
    ok, cert = pairwise_connected(mu)
    assert not ok and cert.failing_pair == "xy"
    assert cert.left_part == (0,) and cert.right_part == (0,)
    with pytest.raises(DomainError):
        path_trick(mu, "x", 1)


def test_named_sets_connected():
    for S in (three_ap_set(3), restricted_three_ap(3), FIVE_ELEMENT_SET):
        assert pairwise_connected(S.uniform())[0]


def test_decompose_uniform():
    a, nu = decompose_uniform([0.5, 0.25, 0.25])
    assert a == pytest.approx(0.75)
    assert np.allclose(a / 3 + (1 - a) * nu, [0.5, 0.25, 0.25])
    assert decompose_uniform([0.5, 0.5]) == (1.0, None)


@pytest.mark.parametrize("axis", ["x", "y", "z"])
def test_path_trick_r1_is_identity(axis, rng):
    mu = random_tridist(rng)
    res = path_trick(mu, axis, 1)
    assert np.allclose(res.dist.probs, mu.probs)


def test_path_trick_r2_matches_naive_walk(rng):
    mu = random_tridist(rng, (2, 3, 2))
    res = path_trick(mu, "x", 2)
    ref = naive_x_walk(mu)
    assert sorted(ref) == [tuple(t) for t in res.decode]
    for i, t in enumerate(res.decode):
        assert np.allclose(res.dist.probs[i], ref[tuple(t)], atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["x", "y", "z"]), st.integers(1, 2))
def test_path_trick_keeps_connectivity_and_pair_marginal(seed, axis, r):
    mu = random_tridist(np.random.default_rng(seed))
    res = path_trick(mu, axis, r)
    assert pairwise_connected(res.dist)[0]
    # start marginal of the walk is the original marginal
    start = {"x": 1, "y": 2, "z": 0}[axis]
    assert np.allclose(res.dist.marginal(start), mu.marginal(start))


def test_lift_with_r1_preserves_correlation(rng):
    mu = random_tridist(rng)
    f, g, h = (FunctionTable.random([3, 3], rng) for _ in range(3))
    res = path_trick(mu, "x", 1)
    fl = res.lift(f)
    assert tri_correlation(fl, g, h, res.dist) == pytest.approx(tri_correlation(f, g, h, mu))


def test_lift_conjugates_odd_positions():
    f = FunctionTable([2], [1j, 2.0])
    decode = np.array([[0, 0, 1]])
    lifted = lift_function(f, decode)
    assert lifted((0,)) == pytest.approx(1j * np.conj(1j) * 2.0)


def test_pipeline_full_support_and_witnesses():
    res = full_support_pipeline(three_ap_set(3).uniform())
    assert np.all(res.dist.probs.sum(axis=0) > 0)
    assert is_full_pair(res.dist, "xy") and is_full_pair(res.dist, "xz")
    for a in range(3):
        for b in range(3):
            assert symmetry_witness(res, a, b) is not None
    dec = minus_decomposition(res, 3)
    assert 0 < dec.alpha <= 1
    mixed = dec.alpha * dec.mu_minus.probs + (1 - dec.alpha) * (dec.rest.probs if dec.rest else 0)
    assert np.allclose(mixed, res.dist.probs)


def test_path_trick_budget():
    with pytest.raises(BudgetError):
        path_trick(three_ap_set(3).uniform(), "x", 3, budget=4)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 2))
def test_tri_correlation_matches_enumeration(seed, n):
    rng = np.random.default_rng(seed)
    mu = random_tridist(rng, (2, 3, 2))
    f = FunctionTable.random([2] * n, rng)
    g = FunctionTable.random([3] * n, rng)
    h = FunctionTable.random([2] * n, rng)
    assert tri_correlation(f, g, h, mu) == pytest.approx(naive_tri(f, g, h, mu), abs=1e-10)


def test_tri_correlation_mc(rng):
    mu = random_tridist(rng)
    f, g, h = (FunctionTable.random([3, 3], rng, "unimodular") for _ in range(3))
    est = tri_correlation_mc(f, g, h, mu, 40000, 0)
    assert abs(est.value - tri_correlation(f, g, h, mu)) <= 4 * est.std_error


def test_conditional_product_recovers_correlation(rng):
    # E[f(x) g(y) h(z)] = E_z[h(z) conj(E[conj f conj g | z])]
    mu = random_tridist(rng, (2, 2, 3))
    f, g = FunctionTable.random([2, 2], rng), FunctionTable.random([2, 2], rng)
    h = FunctionTable.random([3, 3], rng)
    c = conditional_conj_product(f, g, mu, "z")
    mz = mu.marginal(2)
    w = np.multiply.outer(mz, mz)
    assert np.sum(w * h.values * np.conj(c.values)) == pytest.approx(tri_correlation(f, g, h, mu))


def test_shape_mismatch(rng):
    mu = random_tridist(rng)
    f = FunctionTable.random([2, 2], rng)
    with pytest.raises(DomainError):
        tri_correlation(f, f, f, mu)
