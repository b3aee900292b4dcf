"""Diamond test for direct sums and the direct-product agreement test."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import BudgetError, FunctionTable, all_points, check_budget
from .norms import swap

# --- diamond test -------------------------------------------------------------


def as_residues(f, p: int) -> np.ndarray:
    """Integer table of f mod p; accepts FunctionTable or an integer array."""
    vals = f.values.real if isinstance(f, FunctionTable) else np.asarray(f)
    ints = np.rint(vals).astype(np.int64)
    if isinstance(f, FunctionTable) and np.max(np.abs(f.values - ints), initial=0) > 1e-9:
        raise ValueError("diamond test needs an integer-valued table")
    return np.mod(ints, p)


def _pattern_indices(shape, pattern: np.ndarray):
    strides = np.array([int(np.prod(shape[i + 1:], dtype=np.int64)) for i in range(len(shape))])
    pts = all_points(shape)
    on = pts[:, pattern] @ strides[pattern]
    off = pts[:, ~pattern] @ strides[~pattern]
    return on, off


def diamond_pass_prob(f, p: int, mode: str = "exact", samples: int = 20000, seed: int = 0,
                      budget: int = 1 << 26) -> tuple[float, float]:
    """Pr[f(a) - f(phi_x(a,b)) - f(phi_x(b,a)) + f(b) = 0 mod p], with its standard error.

    phi_x(a, b) takes a_i where x_i = 1 and b_i elsewhere; a, b, x are uniform.
    """
    F = as_residues(f, p)
    shape = F.shape
    n = len(shape)
    flat = F.reshape(-1)
    N = flat.size
    if mode == "exact":
        check_budget(N * N * (1 << n), budget, "diamond enumeration")
        hits = 0
        for mask in range(1 << n):
            pattern = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
            on, off = _pattern_indices(shape, pattern)
            mix_ab = on[:, None] + off[None, :]
            res = flat[:, None] + flat[None, :] - flat[mix_ab] - flat[mix_ab.T]
            hits += int(np.count_nonzero(res % p == 0))
        return hits / (N * N * (1 << n)), 0.0
    if mode != "mc":
        raise ValueError(f"mode must be 'exact' or 'mc', got {mode!r}")
    rng = np.random.default_rng(seed)
    k = np.array(shape)
    a = (rng.random((samples, n)) * k).astype(np.int64)
    b = (rng.random((samples, n)) * k).astype(np.int64)
    x = rng.random((samples, n)) < 0.5
    ab, ba = np.where(x, a, b), np.where(x, b, a)
    ev = lambda pts: F[tuple(pts.T)]
    ok = (ev(a) + ev(b) - ev(ab) - ev(ba)) % p == 0
    q = float(ok.mean())
    return q, float(np.sqrt(max(q * (1 - q), 0.0) / samples))


@dataclass(frozen=True)
class CharacterReduction:
    best_j: int
    value: float          # max_j swap(omega^{j f})
    values: tuple         # swap(omega^{j f}) for j = 1 .. p-1
    pass_prob: float
    identity_gap: float   # |p q - 1 - sum_j swap(omega^{j f})|


def character_table(f, p: int, j: int) -> FunctionTable:
    F = as_residues(f, p)
    return FunctionTable(F.shape, np.exp(2j * np.pi * j * F / p))


def character_swap_reduction(f, p: int) -> CharacterReduction:
    """Relate the diamond pass probability to swap norms of the characters of f."""
    q, _ = diamond_pass_prob(f, p)
    vals = tuple(swap(character_table(f, p, j)) for j in range(1, p))
    j = int(np.argmax(vals)) + 1
    return CharacterReduction(j, vals[j - 1], vals, q, abs(p * q - 1 - sum(vals)))


# --- direct product test ------------------------------------------------------


def mask_of(bits: np.ndarray) -> int:
    return int.from_bytes(np.packbits(np.asarray(bits, bool), bitorder="little").tobytes(), "little")


def bits_of(mask: int, n: int) -> np.ndarray:
    raw = np.frombuffer(int(mask).to_bytes((n + 7) // 8 or 1, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n].astype(bool)


def _split(mask: int) -> list[int]:
    return [mask & 0xFFFFFFFF, mask >> 32]


@dataclass
class DPInstance:
    """Assignment A -> F[A] in R^{|A| x K} with test parameters.

    Either ``table`` (bitmask -> rows, elements in increasing order) or a
    ``generator`` dict is given.  ``rows`` always returns an (n, K) array whose
    rows outside A are zero.
    """
    n: int
    K: int
    rho: float
    alpha: float
    D: float
    table: dict | None = None
    generator: dict | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if (self.table is None) == (self.generator is None):
            raise ValueError("exactly one of table or generator must be given")
        if not 0 < self.rho < 1 or not 0 < self.alpha < 1:
            raise ValueError("rho and alpha must lie in (0, 1)")
        if self.generator is not None:
            kind = self.generator.get("kind")
            if kind not in ("planted", "random", "two_cluster"):
                raise ValueError(f"unknown generator kind {kind!r}")

    def global_maps(self) -> list[np.ndarray]:
        """The planted assignments behind a generated instance."""
        if "maps" not in self._cache:
            self._cache["maps"] = self._make_maps()
        return self._cache["maps"]

    def _make_maps(self) -> list[np.ndarray]:
        g = self.generator or {}
        rng = np.random.default_rng([int(g.get("seed", 0)), 0])
        g0 = rng.random((self.n, self.K))
        if g.get("kind") == "two_cluster":
            return [g0, np.mod(g0 + 0.5, 1.0)]
        return [g0]

    def rows(self, A) -> np.ndarray:
        mask = A if isinstance(A, int) else mask_of(A)
        hit = self._cache.get(mask)
        if hit is not None:
            return hit
        bits = bits_of(mask, self.n)
        out = np.zeros((self.n, self.K))
        if self.table is not None:
            if mask not in self.table:
                raise KeyError(f"set {mask:#x} missing from table")
            out[bits] = self.table[mask]
        else:
            out[bits] = self._generated(mask)[bits]
        if len(self._cache) < 200000:
            self._cache[mask] = out
        return out

    def _generated(self, mask: int) -> np.ndarray:
        g = self.generator
        seed = int(g.get("seed", 0))
        rng = np.random.default_rng([seed, 1] + _split(mask))
        kind = g["kind"]
        fresh = rng.random((self.n, self.K))
        if kind == "random":
            return fresh
        maps = self.global_maps()
        if kind == "planted":
            corrupt = rng.random(self.n) < float(g.get("eta", 0.0))
            return np.where(corrupt[:, None], fresh, maps[0])
        side = rng.random() < 0.5
        return maps[int(side)]

    def to_json(self) -> str:
        doc = {"n": self.n, "K": self.K, "rho": self.rho, "alpha": self.alpha, "D": self.D}
        if self.table is not None:
            doc["table"] = {str(m): np.asarray(v).tolist() for m, v in sorted(self.table.items())}
        else:
            doc["generator"] = self.generator
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "DPInstance":
        return dpinstance_from_dict(json.loads(text))


def dpinstance_from_dict(doc: dict) -> DPInstance:
    for key in ("n", "K", "rho", "alpha", "D"):
        if key not in doc:
            raise ValueError(f"DP instance is missing field {key!r}")
    table = None
    if "table" in doc:
        if int(doc["n"]) > 16:
            raise ValueError("explicit DP tables are limited to n <= 16")
        n, K = int(doc["n"]), int(doc["K"])
        table = {}
        for key, rows in doc["table"].items():
            m = int(key)
            arr = np.asarray(rows, dtype=float).reshape(-1, K)
            if len(arr) != int(bits_of(m, n).sum()):
                raise ValueError(f"table entry {key} has {len(arr)} rows, expected one per element")
            table[m] = arr
    elif "generator" not in doc:
        raise ValueError("DP instance needs a 'table' or a 'generator' field")
    return DPInstance(int(doc["n"]), int(doc["K"]), float(doc["rho"]), float(doc["alpha"]),
                      float(doc["D"]), table=table, generator=doc.get("generator"))


def perfect_instance(g: np.ndarray, rho: float, alpha: float, D: float) -> DPInstance:
    """Explicit table F[A] = g|_A for every A (n <= 16)."""
    n, K = g.shape
    if n > 16:
        raise BudgetError("explicit tables are limited to n <= 16")
    table = {m: g[bits_of(m, n)] for m in range(1 << n)}
    return DPInstance(n, K, rho, alpha, D, table=table)


def correlated_params(rho: float, alpha: float) -> tuple[float, float]:
    """(gamma, gamma') such that A ~ rho, B ~_{1-gamma} A, C ~_{gamma'} A & B
    matches the (A, B, C) law of the test."""
    q = (rho - alpha * rho) / (1 - alpha * rho)
    both = alpha * rho + (1 - alpha * rho) * q * q
    gamma = (1 - alpha - (1 - alpha * rho) * q * q / rho) / (1 - rho)
    return float(gamma), float(alpha * rho / both)


def sample_test_sets(inst: DPInstance, rng: np.random.Generator, size: int):
    """(A, B, C) boolean arrays of shape (size, n) from the test distribution."""
    n, rho, a = inst.n, inst.rho, inst.alpha
    C = rng.random((size, n)) < a * rho
    q = (rho - a * rho) / (1 - a * rho)
    A = C | (rng.random((size, n)) < q)
    B = C | (rng.random((size, n)) < q)
    return A, B, C


def sample_neighbours(A: np.ndarray, rho: float, gamma: float, rng: np.random.Generator,
                      size: int) -> np.ndarray:
    """B ~_{1-gamma} A: keep A_i w.p. 1 - gamma, else redraw Bernoulli(rho)."""
    redraw = rng.random((size, len(A))) < gamma
    fresh = rng.random((size, len(A))) < rho
    return np.where(redraw, fresh, A[None, :])


def _dist(inst, A, B, on) -> float:
    d = (inst.rows(A) - inst.rows(B))[on]
    return float(np.sqrt(np.sum(d * d)))


def dp_pass_prob(inst: DPInstance, samples: int, seed: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    A, B, C = sample_test_sets(inst, rng, samples)
    ok = np.array([_dist(inst, a, b, c) <= inst.D for a, b, c in zip(A, B, C)])
    q = float(ok.mean())
    return q, float(np.sqrt(q * (1 - q) / samples))


@dataclass
class DPThresholds:
    consistency: float = 2.0     # D' for Cons(A)
    excellence: float = 2.0      # D'' for the excellence condition
    eps: float = 0.5
    r: float = 0.25


@dataclass
class Classification:
    consistent_rate: float
    std_error: float
    good: bool
    excellent: bool
    vacuous: bool
    bad_rate: float

    @property
    def degree(self) -> float:
        return self.consistent_rate


def _pool(inst, A, gamma, rng, size):
    Bs = sample_neighbours(A, inst.rho, gamma, rng, size)
    rows = np.stack([inst.rows(B) for B in Bs])
    return Bs, rows


def dp_classify(inst: DPInstance, A, th: DPThresholds | None = None, samples: int = 200,
                seed: int = 0) -> Classification:
    """Estimate deg(A) and decide good / excellent with a 3-sigma margin."""
    th = th or DPThresholds()
    A = bits_of(A, inst.n) if isinstance(A, int) else np.asarray(A, bool)
    gamma, _ = correlated_params(inst.rho, inst.alpha)
    rng = np.random.default_rng(seed)
    Bs, rows = _pool(inst, A, gamma, rng, samples)
    FA = inst.rows(A)
    on = Bs & A[None, :]
    dA = np.sqrt(np.sum(((rows - FA[None]) ** 2) * on[:, :, None], axis=(1, 2)))
    cons = dA <= th.consistency
    p = float(cons.mean())
    sd = np.sqrt(p * (1 - p) / samples)
    good = p - 3 * sd >= th.eps / 3
    vacuous = not cons.any()
    bad = np.zeros(samples, dtype=bool)
    if not vacuous:
        idx = np.flatnonzero(cons)
        sub = rows[idx]
        both = Bs[idx][:, None, :] & Bs[idx][None, :, :]
        sq = np.sum((sub[:, None] - sub[None, :]) ** 2 * both[..., None], axis=(2, 3))
        inner = sq.mean(axis=1)
        bad[idx] = inner > th.excellence ** 2
    b = float(bad.mean())
    sb = np.sqrt(b * (1 - b) / samples)
    excellent = bool(good and (vacuous or b + 3 * sb <= th.r))
    return Classification(p, float(sd), bool(good), excellent, bool(vacuous), b)


@dataclass
class Vote:
    assignment: dict       # coordinate -> vector
    flagged: bool          # no consistent neighbour was found
    sources: dict = field(default_factory=dict)   # coordinate -> bitmask of the B' supplying it


def dp_vote(inst: DPInstance, A, th: DPThresholds | None = None, candidates: int = 64,
            pool: int = 200, seed: int = 0) -> Vote:
    """g_A(x) = the candidate value minimising the consistency-weighted squared error."""
    th = th or DPThresholds()
    A = bits_of(A, inst.n) if isinstance(A, int) else np.asarray(A, bool)
    gamma, _ = correlated_params(inst.rho, inst.alpha)
    rng = np.random.default_rng(seed)
    Bs, rows = _pool(inst, A, gamma, rng, pool)
    FA = inst.rows(A)
    on = Bs & A[None, :]
    cons = np.sqrt(np.sum(((rows - FA[None]) ** 2) * on[:, :, None], axis=(1, 2))) <= th.consistency
    if not cons.any():
        return Vote({}, True)
    out, src = {}, {}
    for x in range(inst.n):
        who = cons & Bs[:, x]
        if not who.any():
            continue
        cands = sample_neighbours(A, inst.rho, gamma, rng, candidates)
        cands[:, x] = True
        vals = np.stack([inst.rows(B)[x] for B in cands])
        targets = rows[who, x]
        cost = np.sum((vals[:, None, :] - targets[None]) ** 2, axis=(1, 2))
        best = int(np.argmin(cost))
        out[x] = vals[best]
        src[x] = mask_of(cands[best])
    return Vote(out, False, src)


@dataclass
class Recovery:
    g: np.ndarray
    provenance: dict           # coordinate -> bitmask of the set that supplied g(x)
    agreement_rate: float
    threshold: float
    voters: int


def _plurality(vecs: np.ndarray, radius: float) -> int:
    d = np.sqrt(np.sum((vecs[:, None] - vecs[None]) ** 2, axis=2))
    return int(np.argmax(np.sum(d <= radius, axis=1)))


def dp_recover_global(inst: DPInstance, th: DPThresholds | None = None, seed: int = 0,
                      voters: int = 12, attempts: int = 48, candidates: int = 64,
                      pool: int = 200, test_sets: int = 200, radius: float | None = None,
                      agree_threshold: float | None = None) -> Recovery:
    """Vote from excellent sets, keep the largest mutually agreeing group,
    and take a per-coordinate plurality."""
    th = th or DPThresholds()
    rng = np.random.default_rng(seed)
    radius = th.consistency / 4 if radius is None else radius
    votes, sources = [], []
    for k in range(attempts):
        if len(votes) >= voters:
            break
        A = rng.random(inst.n) < inst.rho
        sub = int(rng.integers(1 << 31))
        if not dp_classify(inst, A, th, pool, sub).excellent:
            continue
        v = dp_vote(inst, A, th, candidates, pool, sub + 1)
        if not v.flagged:
            votes.append(v.assignment)
            sources.append(v.sources)
    g = np.zeros((inst.n, inst.K))
    prov = {}
    if votes:
        m = len(votes)
        close = np.zeros((m, m), dtype=bool)
        for i in range(m):
            for j in range(m):
                common = [x for x in votes[i] if x in votes[j]]
                if not common:
                    close[i, j] = i == j
                    continue
                d = np.array([votes[i][x] - votes[j][x] for x in common])
                close[i, j] = np.sqrt(np.mean(np.sum(d * d, axis=1))) <= radius
        lead = int(np.argmax(close.sum(axis=1)))
        group = [i for i in range(m) if close[lead, i]]
        for x in range(inst.n):
            have = [i for i in group if x in votes[i]]
            if have:
                vecs = np.stack([votes[i][x] for i in have])
                pick = have[_plurality(vecs, radius)]
                g[x] = votes[pick][x]
                prov[x] = sources[pick][x]
    for x in range(inst.n):
        if x not in prov:
            # fall back to any sampled set containing x
            A = rng.random(inst.n) < inst.rho
            A[x] = True
            g[x] = inst.rows(A)[x]
            prov[x] = mask_of(A)
    thr = th.consistency if agree_threshold is None else agree_threshold
    rate = agreement_rate(inst, g, thr, test_sets, int(rng.integers(1 << 31)))
    return Recovery(g, prov, rate, thr, len(votes))


def agreement_rate(inst: DPInstance, g: np.ndarray, threshold: float, samples: int,
                   seed: int) -> float:
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(samples):
        A = rng.random(inst.n) < inst.rho
        d = (inst.rows(A) - g)[A]
        hits += np.sqrt(np.sum(d * d)) <= threshold
    return hits / samples


def distance_profile(inst: DPInstance, g: np.ndarray, samples: int, seed: int) -> np.ndarray:
    """||g|_A - F[A]|| for sampled A ~ rho, used to calibrate agreement thresholds."""
    rng = np.random.default_rng(seed)
    out = np.empty(samples)
    for k in range(samples):
        A = rng.random(inst.n) < inst.rho
        d = (inst.rows(A) - g)[A]
        out[k] = np.sqrt(np.sum(d * d))
    return out


def conditioning_check(marginals, event: np.ndarray) -> tuple[float, float]:
    """Sum of squared TV shifts of coordinate marginals under an event, and log(1/Pr[event]).

    ``marginals`` are Bernoulli parameters of a product measure on {0,1}^n and
    ``event`` is a boolean array over all 2^n outcomes in lexicographic order.
    """
    p = np.asarray(marginals, float)
    n = len(p)
    pts = all_points((2,) * n).astype(bool)
    w = np.prod(np.where(pts, p, 1 - p), axis=1)
    event = np.asarray(event, bool).reshape(-1)
    d = float(w[event].sum())
    if d <= 0:
        raise ValueError("event has probability zero")
    cond = (w[event][:, None] * pts[event]).sum(axis=0) / d
    return float(np.sum((cond - p) ** 2)), float(np.log(1 / d))
