"""Restricted 3-AP style patterns: constraint sets, dense sets and one density-increment step."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .core import BudgetError, FunctionTable, ProductFunction, all_points, check_budget
from .extract import refine_product
from .tridist import TriDist, decompose_uniform, pairwise_connected, tri_correlation


@dataclass(frozen=True)
class ConstraintSet:
    sigma: int
    triples: frozenset

    def __init__(self, sigma: int, triples):
        object.__setattr__(self, "sigma", int(sigma))
        object.__setattr__(self, "triples", frozenset(tuple(int(v) for v in t) for t in triples))

    def uniform(self) -> TriDist:
        return TriDist.uniform_on(self.triples, (self.sigma,) * 3)

    @property
    def off_diagonal(self) -> list:
        return sorted(t for t in self.triples if not t[0] == t[1] == t[2])


def three_ap_set(m: int, steps=None) -> ConstraintSet:
    """{(x, x+a, x+2a)} over Z_m, with a ranging over ``steps`` (all of Z_m by default)."""
    steps = range(m) if steps is None else steps
    return ConstraintSet(m, [(x, (x + a) % m, (x + 2 * a) % m) for x in range(m) for a in steps])


FIVE_ELEMENT_SET = ConstraintSet(3, [(0, 0, 0), (1, 1, 1), (2, 2, 2), (0, 1, 2), (1, 2, 0)])


def restricted_three_ap(m: int = 3) -> ConstraintSet:
    return three_ap_set(m, steps=(0, 1))


def validate_constraint_set(S: ConstraintSet) -> dict:
    """Check both hypotheses: diagonal containment and pairwise connectedness."""
    if not S.triples:
        raise ValueError("constraint set is empty")
    bad = [t for t in S.triples if any(not 0 <= v < S.sigma for v in t)]
    if bad:
        raise ValueError(f"triples outside the alphabet: {sorted(bad)}")
    diagonal = all((a, a, a) in S.triples for a in range(S.sigma))
    connected, cert = pairwise_connected(S.uniform())
    return {"diagonal": diagonal, "connected": bool(connected),
            "failing_pair": None if connected else cert.failing_pair}


@dataclass
class DenseSet:
    sigma: int
    n: int
    members: np.ndarray  # bool, shape (sigma,) * n

    def __post_init__(self):
        self.members = np.asarray(self.members, dtype=bool).reshape((self.sigma,) * self.n)

    @property
    def density(self) -> float:
        return float(self.members.mean())

    def __len__(self):
        return int(self.members.sum())

    def points(self) -> np.ndarray:
        return np.argwhere(self.members)

    def indicator(self) -> FunctionTable:
        return FunctionTable(self.members.shape, self.members.astype(float))

    @classmethod
    def random(cls, sigma: int, n: int, density: float, rng: np.random.Generator) -> "DenseSet":
        return cls(sigma, n, rng.random((sigma,) * n) < density)

    def to_json(self) -> str:
        packed = np.packbits(self.members.reshape(-1))
        return json.dumps({"sigma": self.sigma, "n": self.n, "bits": packed.tobytes().hex()})

    @classmethod
    def from_json(cls, text: str) -> "DenseSet":
        return denseset_from_dict(json.loads(text))


def denseset_from_dict(doc: dict) -> DenseSet:
    for key in ("sigma", "n", "bits"):
        if key not in doc:
            raise ValueError(f"dense set is missing field {key!r}")
    sigma, n = int(doc["sigma"]), int(doc["n"])
    size = sigma ** n
    raw = np.frombuffer(bytes.fromhex(doc["bits"]), dtype=np.uint8)
    bits = np.unpackbits(raw)
    if len(bits) < size:
        raise ValueError(f"field 'bits' holds {len(bits)} bits, expected {size}")
    return DenseSet(sigma, n, bits[:size].astype(bool))


# --- triples ------------------------------------------------------------------

def _slices(S: ConstraintSet):
    m = S.sigma
    ys = np.zeros((m, m), dtype=bool)
    zs = np.zeros((m, m, m), dtype=bool)
    for a, b, c in S.triples:
        ys[a, b] = True
        zs[a, b, c] = True
    return ys, zs


def _outer(vectors) -> np.ndarray:
    return reduce(np.multiply.outer, vectors).astype(bool)


def find_valid_triple(A: DenseSet, S: ConstraintSet, budget: int = 1 << 28):
    """First (x, y, z) in A^3, not all equal, with (x_i, y_i, z_i) in S for every i."""
    if A.sigma != S.sigma:
        raise ValueError("set and constraint alphabet differ")
    ys, zs = _slices(S)
    pts = A.points()
    check_budget(len(pts) * A.members.size, budget, "triple search")
    for x in pts:
        ymask = A.members & _outer([ys[a] for a in x])
        for y in np.argwhere(ymask):
            zmask = A.members & _outer([zs[a, b] for a, b in zip(x, y)])
            if np.array_equal(x, y):
                zmask = zmask.copy()
                zmask[tuple(x)] = False
            hits = np.argwhere(zmask)
            if len(hits):
                return tuple(int(v) for v in x), tuple(int(v) for v in y), tuple(int(v) for v in hits[0])
    return None


def valid_triples(S: ConstraintSet, n: int) -> list:
    """All valid triples of Sigma^n as tuples of flat indices."""
    check_budget(len(S.triples) ** n, 1 << 20, "triple enumeration")
    strides = [S.sigma ** (n - 1 - i) for i in range(n)]
    out = []
    for combo in itertools.product(sorted(S.triples), repeat=n):
        x, y, z = (sum(t[k] * s for t, s in zip(combo, strides)) for k in range(3))
        if not x == y == z:
            out.append((x, y, z))
    return out


def max_triple_free(S: ConstraintSet, n: int) -> tuple[int, int]:
    """Largest triple-free subset of Sigma^n by exhaustive search: (size, bitmask)."""
    N = S.sigma ** n
    if N > 20:
        raise BudgetError(f"exhaustive search over 2^{N} subsets is out of budget")
    masks = sorted({(1 << x) | (1 << y) | (1 << z) for x, y, z in valid_triples(S, n)})
    best, arg = 0, 0
    for s in range(1 << N):
        size = bin(s).count("1")
        if size <= best:
            continue
        if all(s & t != t for t in masks):
            best, arg = size, s
    return best, arg


# --- the increment distribution -----------------------------------------------

def build_mu_increment(S: ConstraintSet, delta: float, n: int) -> TriDist:
    """Mass 1/m - delta/(m sqrt n) on each diagonal triple, the rest spread over S off the diagonal."""
    m = S.sigma
    off = S.off_diagonal
    if not off:
        raise ValueError("constraint set has no off-diagonal triples")
    diag = 1.0 / m - delta / (m * np.sqrt(n))
    if diag < 0:
        raise ValueError(f"delta={delta} is too large for n={n}")
    p = np.zeros((m, m, m))
    for a in range(m):
        p[a, a, a] = diag
    for t in off:
        p[t] = delta / ((len(S.triples) - m) * np.sqrt(n))
    return TriDist(p)


def merge_groups(values: np.ndarray, groups) -> np.ndarray:
    """Force the coordinates of each group to share one value.

    Output axes are one per group, in order, then the untouched coordinates in
    their original order.
    """
    n = values.ndim
    groups = [list(g) for g in groups]
    used = [t for g in groups for t in g]
    if len(set(used)) != len(used):
        raise ValueError("groups must be disjoint")
    rest = [i for i in range(n) if i not in used]
    sizes = []
    for g in groups:
        ks = {values.shape[t] for t in g}
        if len(ks) != 1:
            raise ValueError("merged coordinates need equal alphabets")
        sizes.append(ks.pop())
    out_shape = tuple(sizes) + tuple(values.shape[i] for i in rest)
    grids = np.indices(out_shape) if out_shape else np.zeros((0,), dtype=np.int64)
    idx = [None] * n
    for j, g in enumerate(groups):
        for t in g:
            idx[t] = grids[j]
    for k, i in enumerate(rest):
        idx[i] = grids[len(groups) + k]
    return values[tuple(idx)]


def merge_coords(g: FunctionTable, T) -> FunctionTable:
    """g_{=T}: first coordinate is the common value on T, then the others in order."""
    T = sorted(set(int(t) for t in T))
    vals = merge_groups(g.values, [T])
    return FunctionTable(vals.shape, vals)


def same_gap(g: FunctionTable, S, k: int) -> tuple[float, float]:
    """|E g - E_T E g_{=T}| over all k-subsets T of S, and the bound 2 m k / sqrt|S|."""
    S = sorted(S)
    total, count = 0j, 0
    for T in itertools.combinations(S, k):
        total += np.mean(merge_groups(g.values, [T]))
        count += 1
    m = max(g.alphabets)
    return abs(np.mean(g.values) - total / count), 2 * m * k / np.sqrt(len(S))


def dirichlet_approx(v, k_max: int) -> tuple[int, float]:
    """k in 1..k_max minimising max_j ||k v_j|| in R/Z; smallest k on ties."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    best_k, best = 1, np.inf
    for k in range(1, k_max + 1):
        kv = k * v
        d = float(np.max(np.abs(kv - np.round(kv)))) if len(v) else 0.0
        if d < best - 1e-15:
            best_k, best = k, d
    return best_k, best


def circle_dist(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.abs(a - np.round(a))


def merged_phase_spread(phases, groups) -> tuple[float, float]:
    """For P_t = exp(2 pi i v_t): max |Q(x) - Q(y)| of the merged product over Sigma^N,
    and 100 N times the largest group drift max_a ||sum_{t in T_j} v_t(a)||."""
    phases = [np.asarray(v, float) for v in phases]
    sums = [np.sum([phases[t] for t in g], axis=0) for g in groups]
    drift = max(float(np.max(circle_dist(s))) for s in sums) if sums else 0.0
    total = np.zeros(())
    for s in sums:
        total = np.add.outer(total, s)
    Q = np.exp(2j * np.pi * total).reshape(-1)
    spread = float(np.max(np.abs(Q[:, None] - Q[None, :]))) if Q.size else 0.0
    return spread, 100 * len(groups) * drift


# --- one density-increment step -------------------------------------------------

@dataclass
class StepParams:
    delta: float = 0.05
    gamma: float = 0.1
    keep_rate: float | None = None  # free-coordinate rate; defaults to the uniform weight
    restriction_samples: int = 64
    merge_samples: int = 32
    restarts: int = 4
    min_gain: float | None = None   # defaults to delta
    triple_budget: int = 1 << 26


@dataclass
class StepOutcome:
    kind: str                      # triple | increment | no_triple_certificate | inconclusive
    certified: bool                # exhaustive search proved there is no valid triple
    triple: tuple | None = None
    new_set: DenseSet | None = None
    new_density: float | None = None
    how: dict = field(default_factory=dict)
    log: dict = field(default_factory=dict)


def _best_disc_product(F: FunctionTable, restarts: int, rng) -> tuple[ProductFunction, float]:
    best = None
    for k in range(restarts):
        start = ProductFunction([np.exp(2j * np.pi * rng.random(a)) if k else np.ones(a)
                                 for a in F.alphabets])
        # |E[F P]| = |<F, conj P>|, and conj of a unimodular product is one too
        P, val = refine_product(F, start, unimodular=True)
        if best is None or val > best[1]:
            best = (ProductFunction([np.conj(p) for p in P.factors]), val)
    return best


def density_increment_step(A: DenseSet, S: ConstraintSet, params: StepParams | None = None,
                           seed: int = 0) -> StepOutcome:
    """Search for a valid triple; failing that, try to find a denser restriction.

    The first branch restricts a random set of coordinates to values drawn from
    the non-uniform part of the x-marginal.  The second keeps restrictions whose
    balanced function correlates with a disc-valued product, buckets the
    product's phases on a grid, merges a Dirichlet-sized subset of each bucket
    and restricts the rest uniformly.
    """
    params = params or StepParams()
    gain = params.delta if params.min_gain is None else params.min_gain
    rng = np.random.default_rng(seed)
    m, n = A.sigma, A.n
    alpha = A.density
    try:
        triple = find_valid_triple(A, S, params.triple_budget)
        certified = triple is None
    except BudgetError:
        triple, certified = None, False
    if triple is not None:
        return StepOutcome("triple", False, triple=triple)

    log = {"density": alpha, "free_rate": None}
    mu = build_mu_increment(S, params.delta, n)
    ind = A.indicator()
    balanced = ind - alpha
    try:
        log["correlations"] = [abs(tri_correlation(*fs, mu)) for fs in
                               ((balanced, ind, ind), (ind, balanced, ind), (ind, ind, balanced))]
        log["diagonal_mass"] = tri_correlation(ind, ind, ind, mu).real
    except BudgetError:
        log["correlations"] = None

    # branch 1: restrictions drawn from the x-marginal decomposition
    u_part, nu = decompose_uniform(mu.marginal(0))
    beta = u_part if params.keep_rate is None else min(params.keep_rate, u_part)
    # marginal = beta * uniform + (1 - beta) * fill
    if beta >= 1.0 - 1e-12:
        fill = np.full(m, 1.0 / m)
    else:
        nu = np.zeros(m) if nu is None else nu
        fill = ((u_part - beta) / m + (1 - u_part) * nu) / (1 - beta)
        fill = fill / fill.sum()
    log["free_rate"] = beta
    samples = []
    for _ in range(params.restriction_samples):
        fixed = rng.random(n) >= beta
        u = rng.choice(m, size=n, p=fill)
        idx = tuple(int(u[i]) if fixed[i] else slice(None) for i in range(n))
        sub = A.members[idx]
        samples.append((fixed, u, sub))
        if sub.ndim and sub.mean() >= alpha + gain:
            free = int((~fixed).sum())
            return StepOutcome("increment", certified, new_set=DenseSet(m, free, sub),
                               new_density=float(sub.mean()),
                               how={"branch": "restriction",
                                    "fixed": {int(i): int(u[i]) for i in np.flatnonzero(fixed)}},
                               log=log)

    # branch 2: correlation with a disc-valued product, then phase bucketing and merging
    floor = alpha - 10 * params.delta / params.gamma
    best_seen = None
    for fixed, u, sub in samples:
        if sub.ndim == 0 or sub.mean() < floor:
            continue
        F = FunctionTable(sub.shape, sub.astype(float) - alpha)
        P, corr = _best_disc_product(F, params.restarts, rng)
        if corr < params.gamma:
            continue
        free = np.flatnonzero(~fixed)
        nfree = len(free)
        phases = [np.mod(np.angle(p) / (2 * np.pi), 1.0) for p in P.factors]
        side = nfree ** (-1.0 / (2 * m))
        cells = {}
        for j, v in enumerate(phases):
            cells.setdefault(tuple(np.floor(v / side).astype(int)), []).append(j)
        buckets = [cells[k] for k in sorted(cells)]
        ks = [dirichlet_approx(phases[b[0]], len(b))[0] for b in buckets]
        for _ in range(params.merge_samples):
            groups = [sorted(rng.choice(b, size=k, replace=False).tolist()) for b, k in zip(buckets, ks)]
            merged = merge_groups(sub, groups)
            N = len(groups)
            tail = merged.ndim - N
            u_rest = rng.integers(m, size=tail)
            cand = merged[(slice(None),) * N + tuple(int(v) for v in u_rest)]
            dens = float(cand.mean())
            spread, bound = merged_phase_spread(phases, groups)
            if best_seen is None or dens > best_seen[0]:
                best_seen = (dens, cand, groups, spread, bound)
            if dens >= alpha + gain:
                return StepOutcome("increment", certified, new_set=DenseSet(m, N, cand),
                                   new_density=dens,
                                   how={"branch": "merge", "groups": groups,
                                        "correlation": corr, "phase_spread": spread,
                                        "phase_bound": bound},
                                   log=log)
    if best_seen is not None:
        log["best_merged_density"] = best_seen[0]
    return StepOutcome("no_triple_certificate" if certified else "inconclusive", certified, log=log)
