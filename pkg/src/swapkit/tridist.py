"""Distributions on Sigma x Gamma x Phi, connectivity and the path trick."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .core import BudgetError, DomainError, FunctionTable, all_points, check_budget
from .norms import NormEstimate

AXES = ("x", "y", "z")
PAIRS = {"xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}


@dataclass(frozen=True)
class TriDist:
    """Joint distribution stored as a dense (|Sigma|, |Gamma|, |Phi|) array."""
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 3:
            raise DomainError(f"probs must be three-dimensional, got shape {p.shape}")
        if np.any(p < -1e-15):
            raise DomainError("probs contains negative entries")
        total = p.sum()
        if total <= 0:
            raise DomainError("distribution has empty support")
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"probs sum to {total}, not 1")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform_on(cls, triples, shape) -> "TriDist":
        p = np.zeros(shape)
        triples = sorted(set(tuple(int(v) for v in t) for t in triples))
        for t in triples:
            p[t] = 1.0
        return cls(p / p.sum())

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.probs.shape

    def marginal(self, axis: int) -> np.ndarray:
        others = tuple(a for a in range(3) if a != axis)
        return self.probs.sum(axis=others)

    def pair_marginal(self, pair: str) -> np.ndarray:
        i, j = PAIRS[pair]
        k = 3 - i - j
        return self.probs.sum(axis=k)

    def support(self) -> np.ndarray:
        return np.argwhere(self.probs > 0)

    def to_json(self) -> str:
        s, g, p = self.shape
        return json.dumps({"sigma": s, "gamma": g, "phi": p,
                           "probs": [float(v) for v in self.probs.reshape(-1)]})

    @classmethod
    def from_json(cls, text: str) -> "TriDist":
        return tridist_from_dict(json.loads(text))


def tridist_from_dict(doc: dict) -> TriDist:
    for key in ("sigma", "gamma", "phi", "probs"):
        if key not in doc:
            raise DomainError(f"tri-distribution is missing field {key!r}")
    shape = (int(doc["sigma"]), int(doc["gamma"]), int(doc["phi"]))
    probs = np.array(doc["probs"], dtype=float)
    if probs.size != int(np.prod(shape)):
        raise DomainError(f"field 'probs' has {probs.size} entries, expected {int(np.prod(shape))}")
    return TriDist(probs.reshape(shape))


@dataclass(frozen=True)
class Connectivity:
    """Outcome of the pairwise connectivity check.

    When a pair graph is disconnected, ``left_part`` and ``right_part`` hold the
    symbols of the component containing left symbol 0; the rest of the
    vertices form the other side of the cut.
    """
    connected: bool
    failing_pair: str | None = None
    left_part: tuple = ()
    right_part: tuple = ()


def _bipartite_components(M: np.ndarray):
    rows, cols = np.nonzero(M > 0)
    k1, k2 = M.shape
    adj = coo_matrix((np.ones(len(rows)), (rows, k1 + cols)), shape=(k1 + k2, k1 + k2))
    count, labels = connected_components(adj, directed=False)
    return count, labels


def pairwise_connected(mu: TriDist) -> tuple[bool, Connectivity]:
    for name in ("xy", "xz", "yz"):
        M = mu.pair_marginal(name)
        count, labels = _bipartite_components(M)
        if count > 1:
            k1 = M.shape[0]
            comp = labels[0]
            left = tuple(int(a) for a in range(k1) if labels[a] == comp)
            right = tuple(int(b) for b in range(M.shape[1]) if labels[k1 + b] == comp)
            return False, Connectivity(False, name, left, right)
    return True, Connectivity(True)


def is_full_pair(mu: TriDist, pair: str) -> bool:
    return bool(np.all(mu.pair_marginal(pair) > 0))


def decompose_uniform(marginal) -> tuple[float, np.ndarray | None]:
    """Split marginal = alpha * uniform + (1 - alpha) * nu with alpha maximal."""
    m = np.asarray(marginal, dtype=float)
    k = len(m)
    alpha = float(k * m.min())
    if alpha >= 1.0 - 1e-12:
        return 1.0, None
    nu = (m - alpha / k) / (1.0 - alpha)
    return alpha, np.clip(nu, 0.0, None)


# --- path trick -----------------------------------------------------------

# (enlarged, walk start, walk end) for each axis
_ROLES = {"x": (0, 1, 2), "y": (1, 2, 0), "z": (2, 0, 1)}


@dataclass
class PathTrickResult:
    dist: TriDist
    axis: str
    r: int
    decode: np.ndarray  # (new alphabet size, 2^r - 1) original symbols

    @property
    def length(self) -> int:
        return self.decode.shape[1]

    def symbol_of(self, tup) -> int | None:
        hits = np.flatnonzero(np.all(self.decode == np.asarray(tup), axis=1))
        return int(hits[0]) if len(hits) else None

    def lift(self, f: FunctionTable) -> FunctionTable:
        """f+(X) = prod_j f(X^(j)) prod_j conj f(X'^(j)), primed entries at odd positions."""
        return lift_function(f, self.decode)


def lift_function(f: FunctionTable, decode: np.ndarray, budget: int | None = None) -> FunctionTable:
    k = decode.shape[0]
    new_alph = (k,) * f.n
    check_budget(k ** f.n * decode.shape[1], budget, "lifted table")
    pts = all_points(new_alph)
    out = np.ones(len(pts), dtype=np.complex128)
    for j in range(decode.shape[1]):
        v = f.evaluate(decode[pts, j])
        out *= np.conj(v) if j % 2 else v
    return FunctionTable(new_alph, out)


def _safe_inverse(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = 1.0 / v[pos]
    return out


def path_trick(mu: TriDist, axis: str, r: int, budget: int = 1 << 16) -> PathTrickResult:
    """Exact distribution of the alternating walk that enlarges ``axis``.

    For the x axis the walk is y1 -> z1 -> y2 -> ... -> zK with K = 2^(r-1);
    edge labels x1, x1', x2, ..., xK form the new symbol, and the result is a
    distribution over (label tuple, y1, zK).  The y and z axes are handled by
    cyclically relabelling the roles.
    """
    if axis not in _ROLES:
        raise ValueError(f"axis must be one of x, y, z; got {axis!r}")
    if r < 1:
        raise ValueError("r must be at least 1")
    ok, cert = pairwise_connected(mu)
    if not ok:
        raise DomainError(f"distribution is not pairwise connected ({cert.failing_pair} graph)")
    enl, start, end = _ROLES[axis]
    P = np.transpose(mu.probs, (enl, start, end))  # P[label, s, e]
    inv_s = _safe_inverse(P.sum(axis=(0, 2)))
    inv_e = _safe_inverse(P.sum(axis=(0, 1)))
    length = 2 ** r - 1
    labels = range(P.shape[0])

    # depth-first in label order keeps the tuples lexicographic
    finished = []

    def extend(prefix, M):
        if len(prefix) == length:
            finished.append((prefix, M))
            return
        for c in labels:
            if len(prefix) % 2 == 0:   # forward edge s -> e
                step = P[c] if not prefix else (inv_s[:, None] * P[c])
                N = step if not prefix else M @ step
            else:                      # backward edge e -> s
                N = M @ (inv_e[:, None] * P[c].T)
            if np.any(N > 0):
                if len(finished) > budget:
                    raise BudgetError(f"path trick alphabet exceeds budget {budget}")
                extend(prefix + (c,), N)

    extend((), None)
    decode = np.array([t for t, _ in finished], dtype=np.int64).reshape(len(finished), length)
    Q = np.stack([M for _, M in finished])  # (new, s, e)
    Q = Q / Q.sum()
    probs = np.transpose(Q, np.argsort((enl, start, end)))
    return PathTrickResult(TriDist(probs), axis, r, decode)


def _smallest_r(mu: TriDist, axis: str, pair: str, r_max: int, budget: int) -> PathTrickResult:
    for r in range(1, r_max + 1):
        res = path_trick(mu, axis, r, budget)
        if is_full_pair(res.dist, pair):
            return res
    raise BudgetError(f"{axis} path trick did not give full {pair} support with r <= {r_max}")


@dataclass
class PipelineResult:
    y_step: PathTrickResult
    z_step: PathTrickResult
    x_step: PathTrickResult

    @property
    def dist(self) -> TriDist:
        return self.x_step.dist


def full_support_pipeline(mu: TriDist, r_max: int = 6, budget: int = 1 << 16) -> PipelineResult:
    """y trick until the xz pair is full, z trick until xy is full, then an r=2 x trick.

    The walk length is chosen as the smallest r that achieves full support,
    which keeps the enlarged alphabets small.
    """
    y_step = _smallest_r(mu, "y", "xz", r_max, budget)
    z_step = _smallest_r(y_step.dist, "z", "xy", r_max, budget)
    x_step = path_trick(z_step.dist, "x", 2, budget)
    return PipelineResult(y_step, z_step, x_step)


@dataclass(frozen=True)
class SymmetryWitness:
    y: int
    z: int


def symmetry_witness(result: PipelineResult, a: int, b: int) -> SymmetryWitness | None:
    """First (y, z) with both ((a,a,b), y, z) and ((b,a,a), y, z) in the support."""
    xs = result.x_step
    i = xs.symbol_of((a, a, b))
    j = xs.symbol_of((b, a, a))
    if i is None or j is None:
        return None
    P = result.dist.probs
    hits = np.argwhere((P[i] > 0) & (P[j] > 0))
    if not len(hits):
        return None
    return SymmetryWitness(int(hits[0][0]), int(hits[0][1]))


@dataclass
class MinusDecomposition:
    mu_minus: TriDist
    alpha: float
    rest: TriDist | None
    witnesses: dict


def minus_decomposition(result: PipelineResult, sigma: int) -> MinusDecomposition:
    """mu+ = alpha mu- + (1 - alpha) nu with mu- the symmetric witness distribution."""
    xs = result.x_step
    P = result.dist.probs
    minus = np.zeros_like(P)
    witnesses = {}
    for a in range(sigma):
        for b in range(sigma):
            w = symmetry_witness(result, a, b)
            if w is None:
                raise DomainError(f"no symmetry witness for ({a}, {b})")
            witnesses[(a, b)] = w
    for a in range(sigma):
        for b in range(sigma):
            for c in (a, b):
                w = witnesses[(a, b)] if c == a else witnesses[(b, a)]
                minus[xs.symbol_of((a, c, b)), w.y, w.z] += 1.0 / (2 * sigma * sigma)
    mask = minus > 0
    alpha = float(np.min(P[mask] / minus[mask]))
    alpha = min(alpha, 1.0)
    rest = None
    if alpha < 1.0 - 1e-12:
        R = np.clip(P - alpha * minus, 0.0, None)
        rest = TriDist(R / R.sum())
    return MinusDecomposition(TriDist(minus), alpha, rest, witnesses)


# --- correlations -----------------------------------------------------------

def _check_shapes(f, g, h, mu):
    s, gm, ph = mu.shape
    n = f.n
    if g.n != n or h.n != n:
        raise DomainError("f, g, h must have the same number of coordinates")
    if f.alphabets != (s,) * n or g.alphabets != (gm,) * n or h.alphabets != (ph,) * n:
        raise DomainError("function alphabets do not match the distribution")


def tri_correlation(f: FunctionTable, g: FunctionTable, h: FunctionTable, mu: TriDist,
                    budget: int = 1 << 20) -> complex:
    """E over mu^n of f(x) g(y) h(z), by enumerating support^n."""
    _check_shapes(f, g, h, mu)
    atoms = mu.support()
    w = mu.probs[tuple(atoms.T)]
    n = f.n
    check_budget(len(atoms) ** n, budget, "support power")
    combos = all_points((len(atoms),) * n)
    weight = np.prod(w[combos], axis=1) if n else np.ones(1)
    pts = atoms[combos]  # (M, n, 3)
    vals = f.evaluate(pts[:, :, 0]) * g.evaluate(pts[:, :, 1]) * h.evaluate(pts[:, :, 2])
    return complex(np.sum(weight * vals))


def tri_correlation_mc(f, g, h, mu: TriDist, samples: int, seed: int) -> NormEstimate:
    _check_shapes(f, g, h, mu)
    atoms = mu.support()
    w = mu.probs[tuple(atoms.T)]
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(atoms), size=(samples, f.n), p=w / w.sum())
    pts = atoms[pick]
    vals = f.evaluate(pts[:, :, 0]) * g.evaluate(pts[:, :, 1]) * h.evaluate(pts[:, :, 2])
    spread = np.sqrt(np.var(vals.real, ddof=1) + np.var(vals.imag, ddof=1))
    return NormEstimate(complex(vals.mean()), float(spread / np.sqrt(samples)), "mc", samples)


def conditional_conj_product(f: FunctionTable, g: FunctionTable, mu: TriDist, axis: str = "z",
                             budget: int = 1 << 22) -> FunctionTable:
    """E[conj(f(u) g(v)) | w] over mu^n, where w is ``axis`` and u, v the other two in order."""
    target = AXES.index(axis)
    others = [a for a in range(3) if a != target]
    P = np.transpose(mu.probs, others + [target])
    n = f.n
    check_budget(P.size ** n, budget, "joint table")
    joint = np.ones(())
    for _ in range(n):
        joint = np.multiply.outer(joint, P)
    # axes are (u1, v1, w1, u2, v2, w2, ...); regroup to (u..., v..., w...)
    order = [3 * i for i in range(n)] + [3 * i + 1 for i in range(n)] + [3 * i + 2 for i in range(n)]
    joint = np.transpose(joint, order)
    ku, kv, kw = P.shape
    J = joint.reshape(ku ** n, kv ** n, kw ** n)
    num = np.einsum("uvw,u,v->w", J, np.conj(f.flat), np.conj(g.flat))
    den = J.sum(axis=(0, 1))
    return FunctionTable((kw,) * n, num * _safe_inverse(den))
