import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swapkit.core import (BudgetError, DomainError, FunctionTable, ProductFunction, ProductMeasure,
                          Restriction, all_points, check_budget, expectation, inner_product,
                          lp_norm, matricize, product_to_table, random_restriction, restrict,
                          subsets, unmatricize)

alphabets = st.lists(st.integers(1, 3), min_size=1, max_size=4)


def naive_table(alph, fn):
    vals = [fn(p) for p in itertools.product(*[range(k) for k in alph])]
    return np.array(vals, dtype=complex).reshape(alph)


def test_flat_values_are_lexicographic():
    f = FunctionTable([2, 3], np.arange(6))
    assert f((1, 0)) == 3
    assert f((0, 2)) == 2
    assert np.array_equal(all_points([2, 3])[4], [1, 1])


def test_wrong_size_rejected():
    with pytest.raises(DomainError, match="need 6"):
        FunctionTable([2, 3], np.zeros(5))
    with pytest.raises(DomainError):
        FunctionTable([0, 2], [])


def test_values_are_read_only():
    f = FunctionTable([2], [1, 2])
    with pytest.raises(ValueError):
        f.values[0] = 3


@settings(max_examples=30, deadline=None)
@given(alphabets, st.integers(0, 2**31 - 1))
def test_json_roundtrip(alph, seed):
    f = FunctionTable.random(alph, np.random.default_rng(seed))
    g = FunctionTable.from_json(f.to_json())
    assert g == f


def test_missing_field_named():
    with pytest.raises(DomainError, match="values"):
        FunctionTable.from_json('{"alphabets": [2]}')


@settings(max_examples=30, deadline=None)
@given(alphabets, st.integers(0, 2**31 - 1))
def test_restrict_matches_pointwise(alph, seed):
    rng = np.random.default_rng(seed)
    f = FunctionTable.random(alph, rng)
    fixed = {i: int(rng.integers(alph[i])) for i in range(len(alph)) if rng.random() < 0.5}
    g = restrict(f, Restriction(fixed))
    free = [i for i in range(len(alph)) if i not in fixed]

    def full(p):
        pt = [0] * len(alph)
        for i, v in fixed.items():
            pt[i] = v
        for i, v in zip(free, p):
            pt[i] = v
        return f(pt)

    assert np.allclose(g.values, naive_table([alph[i] for i in free], full))


def test_restrict_rejects_bad_symbol():
    f = FunctionTable.constant([2, 2])
    with pytest.raises(DomainError):
        restrict(f, Restriction({0: 5}))
    with pytest.raises(DomainError):
        restrict(f, Restriction({4: 0}))


@settings(max_examples=30, deadline=None)
@given(alphabets, st.integers(0, 2**31 - 1))
def test_matricize_roundtrip(alph, seed):
    rng = np.random.default_rng(seed)
    f = FunctionTable.random(alph, rng)
    rows = [i for i in range(len(alph)) if rng.random() < 0.5]
    M = matricize(f, rows)
    assert M.shape[0] == int(np.prod([alph[i] for i in rows]))
    assert unmatricize(M, alph, rows) == f


def test_matricize_entry():
    f = FunctionTable.random([2, 3, 2], np.random.default_rng(0))
    M = matricize(f, [2, 0])
    # row index (x2, x0), column index x1
    assert M[1 * 2 + 1, 2] == f((1, 2, 1))


def test_norms_against_naive(rng):
    f = FunctionTable.random([3, 2], rng)
    a = np.abs(f.flat)
    assert lp_norm(f, 1) == pytest.approx(a.mean())
    assert lp_norm(f, 2) == pytest.approx(np.sqrt((a ** 2).mean()))
    assert lp_norm(f, 4) == pytest.approx(((a ** 4).mean()) ** 0.25)
    assert lp_norm(f, np.inf) == pytest.approx(a.max())
    assert lp_norm(f, 1) <= lp_norm(f, 2) <= lp_norm(f, 4) <= lp_norm(f, "inf")
    with pytest.raises(ValueError):
        lp_norm(f, 3)


def test_weighted_expectation(rng):
    f = FunctionTable.random([2, 3], rng)
    g = FunctionTable.random([2, 3], rng)
    m = ProductMeasure([[0.25, 0.75], [0.5, 0.3, 0.2]])
    w = np.outer([0.25, 0.75], [0.5, 0.3, 0.2])
    assert expectation(f, m) == pytest.approx(np.sum(w * f.values))
    assert inner_product(f, g, m) == pytest.approx(np.sum(w * f.values * np.conj(g.values)))
    assert inner_product(f, g) == pytest.approx(np.mean(f.values * np.conj(g.values)))


def test_measure_validation():
    with pytest.raises(DomainError):
        ProductMeasure([[0.5, 0.6]])
    with pytest.raises(DomainError):
        ProductMeasure([[1.2, -0.2]])


def test_measure_sampling_frequencies():
    m = ProductMeasure([[0.2, 0.8]])
    pts = m.sample(np.random.default_rng(1), 20000)
    assert abs(pts[:, 0].mean() - 0.8) < 0.02


def test_random_restriction_extremes(rng):
    f = FunctionTable.random([2, 2, 2], rng)
    r, g = random_restriction(f, 1.0, rng)
    assert r.assignment == {} and g == f
    r, g = random_restriction(f, 0.0, rng)
    assert r.fixed_set == frozenset(range(3)) and g.n == 0
    with pytest.raises(ValueError):
        random_restriction(f, 1.5, rng)


def test_product_table(rng):
    a, b = rng.standard_normal(2), rng.standard_normal(3)
    P = ProductFunction([a, b])
    assert np.allclose(product_to_table(P).values, np.outer(a, b))
    assert P((1, 2)) == pytest.approx(a[1] * b[2])


def test_subsets_order():
    assert list(subsets(2)) == [(), (0,), (1,), (0, 1)]


def test_budget():
    check_budget(10, 10)
    with pytest.raises(BudgetError):
        check_budget(11, 10)
