"""Functions on finite product domains.

A function on Sigma_1 x ... x Sigma_n is stored densely as a complex numpy
array whose shape is the tuple of alphabet sizes.  Row-major (C) order of that
array is the lexicographic order of the domain, which is also the order used
by the flat JSON layout.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Largest domain that is enumerated exactly unless a caller overrides it.
EXACT_DOMAIN_MAX = 4096


class DomainError(ValueError):
    """Raised when alphabets or tables do not fit together."""


class BudgetError(RuntimeError):
    """Raised when an exact computation would exceed its enumeration budget."""


@dataclass(frozen=True)
class Alphabet:
    size: int

    def __post_init__(self):
        if int(self.size) < 1:
            raise DomainError(f"alphabet size must be >= 1, got {self.size}")


def _sizes(alphabets: Iterable) -> tuple[int, ...]:
    out = []
    for a in alphabets:
        k = a.size if isinstance(a, Alphabet) else int(a)
        if k < 1:
            raise DomainError(f"alphabet size must be >= 1, got {k}")
        out.append(k)
    return tuple(out)


class FunctionTable:
    """Dense complex function on a product domain.

    Parameters
    ----------
    alphabets : sequence of int or Alphabet
        Per-coordinate alphabet sizes.
    values : array_like
        Either an array already shaped like ``alphabets`` or a flat array in
        lexicographic order.
    """

    __slots__ = ("alphabets", "values")

    def __init__(self, alphabets, values):
        sizes = _sizes(alphabets)
        arr = np.array(values, dtype=np.complex128)
        expected = int(np.prod(sizes, dtype=np.int64))
        if arr.size != expected:
            raise DomainError(
                f"table has {arr.size} entries but alphabets {sizes} need {expected}")
        arr = arr.reshape(sizes)
        arr.setflags(write=False)
        self.alphabets = sizes
        self.values = arr

    # construction helpers
    @classmethod
    def constant(cls, alphabets, c: complex = 1.0) -> "FunctionTable":
        sizes = _sizes(alphabets)
        return cls(sizes, np.full(sizes, c, dtype=np.complex128))

    @classmethod
    def random(cls, alphabets, rng: np.random.Generator, kind: str = "complex") -> "FunctionTable":
        """Random table.  ``kind`` is one of complex, unimodular, sign, bounded, real."""
        sizes = _sizes(alphabets)
        if kind == "complex":
            v = rng.standard_normal(sizes) + 1j * rng.standard_normal(sizes)
        elif kind == "unimodular":
            v = np.exp(2j * np.pi * rng.random(sizes))
        elif kind == "sign":
            v = rng.choice([-1.0, 1.0], size=sizes)
        elif kind == "bounded":
            v = np.sqrt(rng.random(sizes)) * np.exp(2j * np.pi * rng.random(sizes))
        elif kind == "real":
            v = rng.standard_normal(sizes)
        else:
            raise ValueError(f"unknown random kind {kind!r}")
        return cls(sizes, v)

    @classmethod
    def from_callable(cls, alphabets, fn) -> "FunctionTable":
        sizes = _sizes(alphabets)
        pts = all_points(sizes)
        return cls(sizes, np.array([fn(tuple(p)) for p in pts], dtype=np.complex128))

    @property
    def n(self) -> int:
        return len(self.alphabets)

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __call__(self, point) -> complex:
        return complex(self.values[tuple(point)])

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Vectorised evaluation at integer points of shape (m, n)."""
        points = np.asarray(points, dtype=np.int64)
        if self.n == 0:
            return np.full(len(points), self.values[()], dtype=np.complex128)
        return self.values[tuple(points.T)]

    def conj(self) -> "FunctionTable":
        return FunctionTable(self.alphabets, np.conj(self.values))

    def _combine(self, other, op):
        if isinstance(other, FunctionTable):
            if other.alphabets != self.alphabets:
                raise DomainError(f"alphabet mismatch {self.alphabets} vs {other.alphabets}")
            return FunctionTable(self.alphabets, op(self.values, other.values))
        return FunctionTable(self.alphabets, op(self.values, other))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return FunctionTable(self.alphabets, self.values / c)

    def __neg__(self):
        return FunctionTable(self.alphabets, -self.values)

    def __eq__(self, other):
        return (isinstance(other, FunctionTable) and self.alphabets == other.alphabets
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.alphabets, self.values.tobytes()))

    def __repr__(self):
        return f"FunctionTable(alphabets={self.alphabets})"

    # serialisation
    def to_json(self, modulus: int | None = None) -> str:
        doc = {"alphabets": list(self.alphabets),
               "values": [[float(z.real), float(z.imag)] for z in self.flat]}
        if modulus is not None:
            doc["modulus"] = int(modulus)
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "FunctionTable":
        return function_from_dict(json.loads(text))


def function_from_dict(doc: dict) -> FunctionTable:
    for key in ("alphabets", "values"):
        if key not in doc:
            raise DomainError(f"function table is missing field {key!r}")
    vals = doc["values"]
    try:
        arr = np.array([complex(float(re), float(im)) for re, im in vals], dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"field 'values' must be a list of [re, im] pairs: {exc}") from None
    return FunctionTable(doc["alphabets"], arr)


def all_points(alphabets) -> np.ndarray:
    """All domain points in lexicographic order, shape (N, n)."""
    sizes = _sizes(alphabets)
    if not sizes:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices(sizes).reshape(len(sizes), -1)
    return grids.T.astype(np.int64)


def check_budget(size: int, budget: int | None = None, what: str = "domain"):
    limit = EXACT_DOMAIN_MAX if budget is None else budget
    if size > limit:
        raise BudgetError(f"{what} of size {size} exceeds exact budget {limit}")


@dataclass(frozen=True)
class ProductFunction:
    """P(x) = prod_i factors[i][x_i]."""
    factors: tuple

    def __init__(self, factors: Sequence):
        object.__setattr__(self, "factors",
                           tuple(np.asarray(f, dtype=np.complex128).copy() for f in factors))

    @property
    def alphabets(self) -> tuple[int, ...]:
        return tuple(len(f) for f in self.factors)

    @property
    def n(self) -> int:
        return len(self.factors)

    def to_table(self) -> FunctionTable:
        return product_to_table(self)

    def factor_norms(self) -> np.ndarray:
        return np.array([np.sqrt(np.mean(np.abs(f) ** 2)) for f in self.factors])

    def __call__(self, point) -> complex:
        out = 1.0 + 0j
        for f, a in zip(self.factors, point):
            out *= f[a]
        return out


def product_to_table(P: ProductFunction) -> FunctionTable:
    vals = np.ones((), dtype=np.complex128)
    for f in P.factors:
        vals = np.multiply.outer(vals, f)
    return FunctionTable(P.alphabets, vals)


@dataclass(frozen=True)
class ProductMeasure:
    """Product of per-coordinate probability vectors."""
    coords: tuple

    def __init__(self, coords: Sequence):
        cs = []
        for i, c in enumerate(coords):
            c = np.asarray(c, dtype=float)
            if c.ndim != 1 or len(c) == 0 or np.any(c < -1e-15) or abs(c.sum() - 1) > 1e-9:
                raise DomainError(f"coordinate {i} is not a probability vector: {c}")
            cs.append(np.clip(c, 0.0, None))
        object.__setattr__(self, "coords", tuple(cs))

    @classmethod
    def uniform(cls, alphabets) -> "ProductMeasure":
        return cls([np.full(k, 1.0 / k) for k in _sizes(alphabets)])

    @property
    def alphabets(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.coords)

    def weights(self) -> np.ndarray:
        w = np.ones(())
        for c in self.coords:
            w = np.multiply.outer(w, c)
        return w

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.empty((size, len(self.coords)), dtype=np.int64)
        for i, c in enumerate(self.coords):
            out[:, i] = rng.choice(len(c), size=size, p=c)
        return out


def _measure_for(f: FunctionTable, m: ProductMeasure | None) -> np.ndarray | None:
    if m is None:
        return None
    if m.alphabets != f.alphabets:
        raise DomainError(f"measure alphabets {m.alphabets} do not match {f.alphabets}")
    return m.weights()


def expectation(f: FunctionTable, m: ProductMeasure | None = None) -> complex:
    w = _measure_for(f, m)
    if w is None:
        return complex(np.mean(f.values))
    return complex(np.sum(w * f.values))


def inner_product(f: FunctionTable, g: FunctionTable, m: ProductMeasure | None = None) -> complex:
    """E_m[f * conj(g)]; uniform measure when ``m`` is None."""
    if f.alphabets != g.alphabets:
        raise DomainError(f"alphabet mismatch {f.alphabets} vs {g.alphabets}")
    w = _measure_for(f, m)
    prod = f.values * np.conj(g.values)
    if w is None:
        return complex(np.mean(prod))
    return complex(np.sum(w * prod))


def lp_norm(f: FunctionTable, p, m: ProductMeasure | None = None) -> float:
    """(E_m |f|^p)^(1/p) for p in {1, 2, 4, inf}."""
    w = _measure_for(f, m)
    a = np.abs(f.values)
    if p in (np.inf, "inf", float("inf")):
        if w is None:
            return float(a.max())
        return float(a[w > 0].max())
    if p not in (1, 2, 4):
        raise ValueError(f"unsupported norm order {p!r}")
    if w is None:
        return float(np.mean(a ** p) ** (1.0 / p))
    return float(np.sum(w * a ** p) ** (1.0 / p))


@dataclass(frozen=True)
class Restriction:
    """Fixes the coordinates in ``assignment`` (a coordinate -> symbol map)."""
    assignment: dict = field(default_factory=dict)

    @property
    def fixed_set(self) -> frozenset:
        return frozenset(self.assignment)

    def free_coords(self, n: int) -> list[int]:
        return [i for i in range(n) if i not in self.assignment]

    def to_dict(self) -> dict:
        return {"fixed": {str(k): int(v) for k, v in sorted(self.assignment.items())}}


def restrict(f: FunctionTable, r: Restriction) -> FunctionTable:
    """f_{I -> z}: function of the free coordinates, in their original order."""
    idx = []
    for i in range(f.n):
        if i in r.assignment:
            a = int(r.assignment[i])
            if not 0 <= a < f.alphabets[i]:
                raise DomainError(f"symbol {a} outside alphabet of coordinate {i}")
            idx.append(a)
        else:
            idx.append(slice(None))
    bad = [i for i in r.assignment if not 0 <= i < f.n]
    if bad:
        raise DomainError(f"restriction fixes coordinates {bad} outside range(n={f.n})")
    free = r.free_coords(f.n)
    return FunctionTable([f.alphabets[i] for i in free], f.values[tuple(idx)])


def random_restriction(f: FunctionTable, keep_rate: float, rng: np.random.Generator,
                       nu: ProductMeasure | None = None) -> tuple[Restriction, FunctionTable]:
    """Fix each coordinate independently with probability 1 - keep_rate, z ~ nu."""
    if not 0.0 <= keep_rate <= 1.0:
        raise ValueError(f"keep_rate must lie in [0, 1], got {keep_rate}")
    if nu is None:
        nu = ProductMeasure.uniform(f.alphabets)
    fixed = rng.random(f.n) >= keep_rate
    assignment = {}
    for i in np.flatnonzero(fixed):
        c = nu.coords[i]
        assignment[int(i)] = int(rng.choice(len(c), p=c))
    r = Restriction(assignment)
    return r, restrict(f, r)


def matricize(f: FunctionTable, rows: Sequence[int]) -> np.ndarray:
    """Matrix with rows indexed by Sigma^rows and columns by the remaining coordinates."""
    rows = list(rows)
    cols = [i for i in range(f.n) if i not in rows]
    nr = int(np.prod([f.alphabets[i] for i in rows], dtype=np.int64))
    return np.transpose(f.values, rows + cols).reshape(nr, -1)


def unmatricize(M: np.ndarray, alphabets, rows: Sequence[int]) -> FunctionTable:
    rows = list(rows)
    n = len(alphabets)
    cols = [i for i in range(n) if i not in rows]
    perm = rows + cols
    arr = M.reshape([alphabets[i] for i in perm])
    return FunctionTable(alphabets, np.transpose(arr, np.argsort(perm)))


def subsets(n: int):
    """All subsets of range(n) as tuples, ordered by bitmask."""
    for mask in range(1 << n):
        yield tuple(i for i in range(n) if mask >> i & 1)
