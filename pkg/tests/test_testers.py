import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swapkit.core import FunctionTable
from swapkit.testers import (DPInstance, DPThresholds, agreement_rate, bits_of,
                             character_swap_reduction, conditioning_check, correlated_params,
                             diamond_pass_prob, dp_classify, dp_pass_prob, dp_recover_global,
                             dp_vote, mask_of, perfect_instance, sample_neighbours,
                             sample_test_sets)


def naive_diamond(F, p):
    shape = F.shape
    n = len(shape)
    pts = list(itertools.product(*[range(k) for k in shape]))
    hits = total = 0
    for a in pts:
        for b in pts:
            for x in itertools.product((0, 1), repeat=n):
                ab = tuple(a[i] if x[i] else b[i] for i in range(n))
                ba = tuple(b[i] if x[i] else a[i] for i in range(n))
                hits += (F[a] - F[ab] - F[ba] + F[b]) % p == 0
                total += 1
    return hits / total


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=3), st.sampled_from([2, 3, 5]),
       st.integers(0, 2**31 - 1))
def test_diamond_exact_matches_naive(alph, p, seed):
    F = np.random.default_rng(seed).integers(0, p, size=alph)
    q, se = diamond_pass_prob(F, p)
    assert q == pytest.approx(naive_diamond(F, p))
    assert se == 0.0


def test_direct_sum_always_passes(rng):
    p = 5
    parts = [rng.integers(0, p, size=k) for k in (3, 2, 4)]
    F = np.add.outer(np.add.outer(parts[0], parts[1]), parts[2])
    assert diamond_pass_prob(F, p)[0] == 1.0
    assert diamond_pass_prob(F, p, mode="mc", samples=2000)[0] == 1.0


def test_diamond_mc_agrees_with_exact(rng):
    F = rng.integers(0, 3, size=(3, 3, 2))
    exact, _ = diamond_pass_prob(F, 3)
    q, se = diamond_pass_prob(F, 3, mode="mc", samples=50000, seed=4)
    assert abs(q - exact) <= 4 * se
    with pytest.raises(ValueError):
        diamond_pass_prob(F, 3, mode="bogus")


def test_character_identity(rng):
    for p in (2, 3, 5):
        F = rng.integers(0, p, size=(2, 3, 2))
        red = character_swap_reduction(FunctionTable(F.shape, F), p)
        assert red.identity_gap < 1e-10
        assert red.value == max(red.values)


def test_non_integer_table_rejected():
    with pytest.raises(ValueError):
        diamond_pass_prob(FunctionTable([2], [0.5, 1.0]), 3)


@given(st.integers(1, 80), st.data())
def test_mask_roundtrip(n, data):
    bits = np.array(data.draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    assert np.array_equal(bits_of(mask_of(bits), n), bits)


def test_test_distribution_matches_correlated_form():
    rho, alpha = 0.4, 0.5
    rng = np.random.default_rng(0)
    A, B, C = sample_test_sets(DPInstance(400, 1, rho, alpha, 1.0, generator={"kind": "random"}), rng, 400)
    assert A.mean() == pytest.approx(rho, abs=0.01)
    assert B.mean() == pytest.approx(rho, abs=0.01)
    assert C.mean() == pytest.approx(alpha * rho, abs=0.01)
    assert not np.any(C & ~(A & B))
    gamma, gamma2 = correlated_params(rho, alpha)
    Bn = np.stack([sample_neighbours(a, rho, gamma, rng, 1)[0] for a in A])
    assert np.mean(A & Bn) == pytest.approx(np.mean(A & B), abs=0.01)
    assert gamma2 == pytest.approx(np.mean(C) / np.mean(A & B), abs=0.02)


def test_perfect_instance_passes_and_recovers():
    g = np.random.default_rng(1).random((10, 2))
    inst = perfect_instance(g, 0.5, 0.5, 0.1)
    assert dp_pass_prob(inst, 300, 0)[0] == 1.0
    A = np.zeros(10, bool)
    A[[1, 4, 7]] = True
    assert np.allclose(inst.rows(A)[A], g[A]) and np.all(inst.rows(A)[~A] == 0)
    cl = dp_classify(inst, A, samples=100)
    assert cl.good and cl.excellent and cl.consistent_rate == 1.0
    rec = dp_recover_global(inst, seed=2, voters=4, test_sets=100)
    assert rec.agreement_rate == 1.0
    assert np.allclose(rec.g, g)
    for x, m in rec.provenance.items():
        assert bits_of(m, 10)[x]


def test_vote_is_deterministic_and_sources_contain_coordinate():
    inst = DPInstance(30, 2, 0.3, 0.5, 1.0, generator={"kind": "planted", "seed": 3, "eta": 0.0})
    A = np.random.default_rng(0).random(30) < 0.3
    a = dp_vote(inst, A, seed=5)
    b = dp_vote(inst, A, seed=5)
    assert a.assignment.keys() == b.assignment.keys()
    assert all(np.array_equal(a.assignment[x], b.assignment[x]) for x in a.assignment)
    for x, m in a.sources.items():
        assert bits_of(m, 30)[x]
        assert np.allclose(a.assignment[x], inst.global_maps()[0][x])


def test_random_instance_is_not_excellent():
    inst = DPInstance(40, 3, 0.3, 0.5, 0.5, generator={"kind": "random", "seed": 1})
    A = np.random.default_rng(2).random(40) < 0.3
    cl = dp_classify(inst, A, DPThresholds(consistency=0.5), samples=100)
    assert not cl.good


def test_generated_rows_deterministic_and_zero_outside():
    inst = DPInstance(20, 2, 0.3, 0.5, 1.0, generator={"kind": "two_cluster", "seed": 9})
    A = np.random.default_rng(0).random(20) < 0.5
    r1 = inst.rows(A)
    fresh = DPInstance(20, 2, 0.3, 0.5, 1.0, generator={"kind": "two_cluster", "seed": 9})
    assert np.array_equal(r1, fresh.rows(mask_of(A)))
    assert np.all(r1[~A] == 0)
    assert any(np.allclose(r1[A], g[A]) for g in inst.global_maps())


def test_json_roundtrip_and_errors():
    inst = perfect_instance(np.arange(6.0).reshape(3, 2), 0.5, 0.5, 1.0)
    back = DPInstance.from_json(inst.to_json())
    assert all(np.array_equal(back.table[m], inst.table[m]) for m in inst.table)
    gen = DPInstance(50, 2, 0.3, 0.5, 1.0, generator={"kind": "planted", "seed": 1, "eta": 0.1})
    assert DPInstance.from_json(gen.to_json()).generator == gen.generator
    with pytest.raises(ValueError, match="'D'"):
        DPInstance.from_json('{"n": 3, "K": 1, "rho": 0.5, "alpha": 0.5}')
    with pytest.raises(ValueError, match="rows"):
        DPInstance.from_json('{"n": 2, "K": 1, "rho": 0.5, "alpha": 0.5, "D": 1, "table": {"3": [[1.0]]}}')
    with pytest.raises(ValueError):
        DPInstance(3, 1, 0.5, 0.5, 1.0)
    with pytest.raises(ValueError):
        DPInstance(3, 1, 1.5, 0.5, 1.0, generator={"kind": "random"})


def test_agreement_rate_of_truth():
    inst = DPInstance(30, 2, 0.3, 0.5, 1.0, generator={"kind": "planted", "seed": 4, "eta": 0.0})
    assert agreement_rate(inst, inst.global_maps()[0], 1e-9, 50, 0) == 1.0


def test_conditioning_check_against_naive():
    p = np.array([0.3, 0.6, 0.5])
    event = np.zeros(8, bool)
    event[[3, 5, 6, 7]] = True  # at least two ones
    shift, info = conditioning_check(p, event)
    pts = np.array(list(itertools.product((0, 1), repeat=3)))
    w = np.prod(np.where(pts == 1, p, 1 - p), axis=1)
    d = w[event].sum()
    cond = (w[event, None] * pts[event]).sum(axis=0) / d
    assert shift == pytest.approx(np.sum((cond - p) ** 2))
    assert info == pytest.approx(np.log(1 / d))
    assert conditioning_check(p, np.ones(8, bool)) == pytest.approx((0.0, 0.0))
    with pytest.raises(ValueError):
        conditioning_check(p, np.zeros(8, bool))
