"""Box and swap inner products, exact and Monte Carlo."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (BudgetError, DomainError, FunctionTable, all_points,
                   check_budget, matricize, subsets)

# below this magnitude a negative swap(f) is treated as rounding noise
NEGATIVE_CLAMP = 1e-12


@dataclass(frozen=True)
class NormEstimate:
    value: complex
    std_error: float
    method: str
    samples: int

    def to_json(self) -> str:
        return json.dumps({"re": float(self.value.real), "im": float(self.value.imag),
                           "stderr": float(self.std_error), "method": self.method,
                           "samples": int(self.samples)})

    @classmethod
    def from_json(cls, text: str) -> "NormEstimate":
        d = json.loads(text)
        return cls(complex(d["re"], d["im"]), float(d["stderr"]), d["method"], int(d["samples"]))


def _same_domain(fs: Sequence[FunctionTable]) -> tuple[int, ...]:
    alph = fs[0].alphabets
    for f in fs[1:]:
        if f.alphabets != alph:
            raise DomainError(f"alphabet mismatch {alph} vs {f.alphabets}")
    return alph


def _box_rows(f1, f2, f3, f4, rows) -> complex:
    # A(x_R, y_R) = E_u f1(x_R,u) conj f3(y_R,u);  B(x_R, y_R) = E_v conj f4(x_R,v) f2(y_R,v)
    M1, M2, M3, M4 = (matricize(f, rows) for f in (f1, f2, f3, f4))
    ncols = M1.shape[1]
    A = M1 @ M3.conj().T
    B = M4.conj() @ M2.T
    return complex(np.sum(A * B) / (ncols * ncols * M1.shape[0] ** 2))


def box_inner(f1: FunctionTable, f2: FunctionTable, f3: FunctionTable, f4: FunctionTable,
              S: Sequence[int], budget: int | None = None) -> complex:
    """E f1(xS,x~) f2(yS,y~) conj(f3(yS,x~) f4(xS,y~)), x~ and y~ on the complement of S."""
    alph = _same_domain([f1, f2, f3, f4])
    check_budget(int(np.prod(alph, dtype=np.int64)), budget)
    n = len(alph)
    S = sorted(set(int(i) for i in S))
    if any(not 0 <= i < n for i in S):
        raise DomainError(f"coordinate set {S} not inside range({n})")
    comp = [i for i in range(n) if i not in S]
    side_s = int(np.prod([alph[i] for i in S], dtype=np.int64))
    side_c = int(np.prod([alph[i] for i in comp], dtype=np.int64))
    if side_s <= side_c:
        return _box_rows(f1, f2, f3, f4, S)
    # box over S equals box over the complement with f3, f4 exchanged
    return _box_rows(f1, f2, f4, f3, comp)


def swap_T(f1, f2, f3, f4, T: Sequence[int], budget: int | None = None) -> complex:
    """Swap inner product where only coordinates in T may be exchanged."""
    T = sorted(set(int(i) for i in T))
    total = 0j
    for mask in range(1 << len(T)):
        S = [T[j] for j in range(len(T)) if mask >> j & 1]
        total += box_inner(f1, f2, f3, f4, S, budget)
    return total / (1 << len(T))


def swap_inner(f1: FunctionTable, f2: FunctionTable, f3: FunctionTable, f4: FunctionTable,
               budget: int | None = None) -> complex:
    """Exact swap inner product as the average of box inner products over all S."""
    n = len(_same_domain([f1, f2, f3, f4]))
    total = 0j
    for S in subsets(n):
        total += box_inner(f1, f2, f3, f4, S, budget)
    return total / (1 << n)


def swap_inner_symmetrized(f1, f2, f3, f4, budget: int = 1 << 22) -> complex:
    """Second exact route: symmetrise f3 (x) f4 coordinate by coordinate.

    Costs n |domain|^2, so it is used for cross-checks on small domains.
    """
    alph = _same_domain([f1, f2, f3, f4])
    n = len(alph)
    N = int(np.prod(alph, dtype=np.int64))
    check_budget(N * N, budget, "pair domain")
    G = np.multiply.outer(f3.values, f4.values)
    for i in range(n):
        G = 0.5 * (G + np.swapaxes(G, i, n + i))
    H = np.multiply.outer(f1.values, f2.values)
    return complex(np.mean(H * np.conj(G)))


def swap_inner_direct(f1, f2, f3, f4, budget: int = 1 << 20) -> complex:
    """Reference evaluation straight from the definition: every x, y and swap pattern."""
    alph = _same_domain([f1, f2, f3, f4])
    n = len(alph)
    pts = all_points(alph)
    N = len(pts)
    check_budget(N * N << n, budget, "direct swap enumeration")
    xi, yi = np.divmod(np.arange(N * N), N)
    x, y = pts[xi], pts[yi]
    total = 0j
    for mask in range(1 << n):
        S = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        x_sw = np.where(S, y, x)   # x with its S-coordinates taken from y
        y_sw = np.where(S, x, y)
        vals = f1.evaluate(x) * f2.evaluate(y) * np.conj(f3.evaluate(x_sw) * f4.evaluate(y_sw))
        total += vals.mean()
    return complex(total / (1 << n))


def swap(f: FunctionTable, budget: int | None = None) -> float:
    """swap(f, f, f, f); real and nonnegative up to rounding."""
    v = swap_inner(f, f, f, f, budget).real
    if v < 0:
        if v < -NEGATIVE_CLAMP * max(1.0, float(np.max(np.abs(f.values))) ** 4):
            raise ArithmeticError(f"swap(f) = {v} is materially negative")
        v = 0.0
    return float(v)


def swap_norm(f: FunctionTable, budget: int | None = None) -> float:
    return swap(f, budget) ** 0.25


def _evaluator(f) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(f, FunctionTable):
        return f.evaluate
    if callable(f):
        return f
    raise TypeError(f"expected FunctionTable or callable, got {type(f).__name__}")


def swap_inner_mc(fs: Sequence, samples: int, seed: int, alphabets=None,
                  chunk: int = 1 << 14) -> NormEstimate:
    """Monte Carlo swap inner product with antithetic swap patterns.

    Each draw (x, y, pattern) is paired with the complementary pattern; the
    estimate is the mean of the pair averages and ``std_error`` is their
    standard deviation over sqrt(samples).
    """
    if len(fs) != 4:
        raise ValueError("need exactly four functions")
    if samples < 2:
        raise ValueError("need at least two samples")
    if alphabets is None:
        tables = [f for f in fs if isinstance(f, FunctionTable)]
        if not tables:
            raise ValueError("alphabets are required when every input is an evaluator")
        alphabets = _same_domain(tables)
    alphabets = tuple(int(a) for a in alphabets)
    ev = [_evaluator(f) for f in fs]
    rng = np.random.default_rng(seed)
    k = np.array(alphabets)
    vals = []
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        x = (rng.random((m, len(k))) * k).astype(np.int64)
        y = (rng.random((m, len(k))) * k).astype(np.int64)
        pat = rng.random((m, len(k))) < 0.5
        xs, ys = np.where(pat, y, x), np.where(pat, x, y)
        head = ev[0](x) * ev[1](y)
        v1 = head * np.conj(ev[2](xs) * ev[3](ys))
        v2 = head * np.conj(ev[2](ys) * ev[3](xs))
        vals.append(0.5 * (v1 + v2))
        done += m
    v = np.concatenate(vals)
    mean = complex(v.mean())
    spread = np.sqrt(np.var(v.real, ddof=1) + np.var(v.imag, ddof=1))
    return NormEstimate(mean, float(spread / np.sqrt(len(v))), "mc", int(samples))


def swap_inner_estimate(fs: Sequence, samples: int = 20000, seed: int = 0,
                        budget: int | None = None) -> NormEstimate:
    """Exact when the domain fits the budget, Monte Carlo otherwise."""
    try:
        return NormEstimate(swap_inner(*fs, budget=budget), 0.0, "exact", 0)
    except BudgetError:
        return swap_inner_mc(fs, samples, seed)
