import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swapkit.core import BudgetError, DomainError, FunctionTable, ProductFunction, product_to_table
from swapkit.norms import (NormEstimate, box_inner, swap, swap_inner, swap_inner_direct,
                           swap_inner_estimate, swap_inner_mc, swap_inner_symmetrized, swap_norm,
                           swap_T)

small_alph = st.lists(st.integers(1, 3), min_size=1, max_size=3)


def naive_box(f1, f2, f3, f4, S):
    # every x, y; f3 takes y on S and x elsewhere, f4 the reverse
    alph = f1.alphabets
    pts = list(itertools.product(*[range(k) for k in alph]))
    total = 0j
    for x in pts:
        for y in pts:
            u = tuple(y[i] if i in S else x[i] for i in range(len(alph)))
            v = tuple(x[i] if i in S else y[i] for i in range(len(alph)))
            total += f1(x) * f2(y) * np.conj(f3(u) * f4(v))
    return total / len(pts) ** 2


def four(alph, seed, kind="complex"):
    rng = np.random.default_rng(seed)
    return [FunctionTable.random(alph, rng, kind) for _ in range(4)]


@settings(max_examples=25, deadline=None)
@given(small_alph, st.integers(0, 2**31 - 1), st.data())
def test_box_matches_naive(alph, seed, data):
    fs = four(alph, seed)
    S = data.draw(st.sets(st.integers(0, len(alph) - 1)))
    assert box_inner(*fs, sorted(S)) == pytest.approx(naive_box(*fs, S), abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(small_alph, st.integers(0, 2**31 - 1))
def test_three_exact_routes_agree(alph, seed):
    fs = four(alph, seed)
    a = swap_inner(*fs)
    assert swap_inner_direct(*fs) == pytest.approx(a, abs=1e-10)
    assert swap_inner_symmetrized(*fs) == pytest.approx(a, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(small_alph, st.integers(0, 2**31 - 1))
def test_swap_real_nonnegative_and_l2_bounded(alph, seed):
    f = four(alph, seed)[0]
    v = swap_inner(f, f, f, f)
    assert abs(v.imag) < 1e-10
    assert swap(f) >= 0
    assert swap(f) <= np.mean(np.abs(f.values) ** 2) ** 2 + 1e-9


def test_swap_of_unimodular_product_is_one(rng):
    P = ProductFunction([np.exp(2j * np.pi * rng.random(k)) for k in (2, 3, 2)])
    assert swap(product_to_table(P)) == pytest.approx(1.0)
    assert swap_norm(product_to_table(P)) == pytest.approx(1.0)


def test_swap_T_endpoints(rng):
    fs = four([2, 2, 2], 3)
    assert swap_T(*fs, []) == pytest.approx(box_inner(*fs, []))
    assert swap_T(*fs, [0, 1, 2]) == pytest.approx(swap_inner(*fs))


def test_swap_triangle_random(rng):
    for _ in range(20):
        f = FunctionTable.random([2, 3, 2], rng)
        g = FunctionTable.random([2, 3, 2], rng, "unimodular")
        assert swap_norm(f + g) <= swap_norm(f) + swap_norm(g) + 1e-9


def test_proved_box_cauchy_schwarz_holds(rng):
    for _ in range(30):
        f1, f2, f3, f4 = (FunctionTable.random([2, 2, 3], rng) for _ in range(4))
        for S in ([], [0], [0, 1], [2]):
            lhs = abs(box_inner(f1, f2, f3, f4, S)) ** 2
            rhs = box_inner(f1, f3, f3, f1, S).real * box_inner(f2, f4, f4, f2, S).real
            assert lhs <= rhs + 1e-9


def test_other_box_pairing_has_counterexample():
    # pairing (f1, f3, f1, f3) x (f2, f4, f2, f4) does not bound |box|^2 in general
    rng = np.random.default_rng(40)
    f1, f2, f3, f4 = (FunctionTable.random([2, 2, 3], rng) for _ in range(4))
    lhs = abs(box_inner(f1, f2, f3, f4, [0, 1])) ** 2
    rhs = box_inner(f1, f3, f1, f3, [0, 1]).real * box_inner(f2, f4, f2, f4, [0, 1]).real
    assert lhs > rhs + 0.05


def test_mc_within_four_standard_errors():
    fs = four([3, 2, 3, 2], 11, "bounded")
    exact = swap_inner(*fs)
    est = swap_inner_mc(fs, 40000, seed=5)
    assert abs(est.value - exact) <= 4 * est.std_error
    assert est.method == "mc" and est.samples == 40000


def test_mc_accepts_callables():
    f = FunctionTable.random([2, 2], np.random.default_rng(0))
    ev = f.evaluate
    a = swap_inner_mc([ev] * 4, 1000, 1, alphabets=(2, 2))
    b = swap_inner_mc([f] * 4, 1000, 1)
    assert a.value == b.value
    with pytest.raises(ValueError):
        swap_inner_mc([ev] * 4, 1000, 1)


def test_estimate_falls_back_to_mc():
    fs = four([2] * 6, 2)
    assert swap_inner_estimate(fs).method == "exact"
    est = swap_inner_estimate(fs, samples=2000, budget=8)
    assert est.method == "mc" and est.std_error > 0


def test_budget_and_domain_errors():
    fs = four([2] * 4, 0)
    with pytest.raises(BudgetError):
        box_inner(*fs, [0], budget=8)
    g = FunctionTable.constant([3, 2])
    with pytest.raises(DomainError):
        swap_inner(fs[0], fs[1], fs[2], g)
    with pytest.raises(DomainError):
        box_inner(*fs, [7])


def test_estimate_json_roundtrip():
    e = NormEstimate(1 + 2j, 0.1, "mc", 10)
    assert NormEstimate.from_json(e.to_json()) == e
