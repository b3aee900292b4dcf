"""Partition SVDs and extraction of correlated product functions."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import (FunctionTable, ProductFunction, Restriction, all_points, inner_product,
                   lp_norm, matricize, product_to_table, restrict, unmatricize)
from .norms import swap, swap_inner


@dataclass(frozen=True)
class SVDTriple:
    """One term lam * g(x_J) * h(x_rest), with E|g|^2 = E|h|^2 = 1."""
    lam: float
    g: FunctionTable
    h: FunctionTable


def _rank_cut(s: np.ndarray, shape) -> int:
    if len(s) == 0 or s[0] <= 1e-300:
        return 0
    tol = max(shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > tol))


def _phase_fix(u: np.ndarray) -> complex:
    mag = np.abs(u)
    idx = int(np.flatnonzero(mag >= mag.max() * (1 - 1e-12))[0])
    return u[idx] / mag[idx] if mag[idx] > 0 else 1.0


def partition_svd(f: FunctionTable, J) -> list[SVDTriple]:
    """J-SVD of f scaled to expectation norms.

    The phase of each pair is fixed so that the largest-magnitude entry of g
    (first one on ties) is real and nonnegative.
    """
    J = sorted(set(int(j) for j in J))
    if any(not 0 <= j < f.n for j in J):
        raise ValueError(f"coordinate set {J} not inside range({f.n})")
    rest = [i for i in range(f.n) if i not in J]
    M = matricize(f, J)
    nr, nc = M.shape
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    k = _rank_cut(s, M.shape)
    g_alph = [f.alphabets[j] for j in J]
    h_alph = [f.alphabets[i] for i in rest]
    out = []
    for i in range(k):
        u = U[:, i] * np.sqrt(nr)
        v = Vh[i, :] * np.sqrt(nc)
        ph = _phase_fix(u)
        out.append(SVDTriple(float(s[i] / np.sqrt(nr * nc)),
                             FunctionTable(g_alph, u / ph), FunctionTable(h_alph, v * ph)))
    return out


def svd_reconstruct(f_alphabets, J, triples: list[SVDTriple]) -> FunctionTable:
    J = sorted(set(int(j) for j in J))
    n = len(f_alphabets)
    nr = int(np.prod([f_alphabets[j] for j in J], dtype=np.int64))
    nc = int(np.prod([f_alphabets[i] for i in range(n) if i not in J], dtype=np.int64))
    M = np.zeros((nr, nc), dtype=np.complex128)
    for t in triples:
        M += t.lam * np.outer(t.g.flat, t.h.flat)
    return unmatricize(M, f_alphabets, J)


def rank_residual(f: FunctionTable, J, k: int) -> FunctionTable:
    """f minus its top-k J-SVD terms."""
    triples = partition_svd(f, J)[:k]
    if not triples:
        return f
    return f - svd_reconstruct(f.alphabets, J, triples)


def extract_product_99(f: FunctionTable) -> tuple[ProductFunction, float]:
    """Peel first-coordinate SVDs one at a time; returns (P, |<f, P>|) with ||P_i||_2 = 1."""
    factors = []
    residual = f
    for i in range(f.n - 1):
        triples = partition_svd(residual, [0])
        if not triples:
            factors.extend(np.ones(k) for k in f.alphabets[i:])
            break
        factors.append(triples[0].g.flat.copy())
        residual = triples[0].h
    else:
        if f.n:
            last = residual.flat
            nrm = np.sqrt(np.mean(np.abs(last) ** 2))
            factors.append(last / nrm if nrm > 0 else np.ones_like(last))
    P = ProductFunction(factors)
    return P, abs(inner_product(f, product_to_table(P)))


# --- alternating refinement -------------------------------------------------

def _partial_contraction(f: FunctionTable, factors, i: int) -> np.ndarray:
    """w(a) = E_{x : x_i = a} f(x) prod_{j != i} conj P_j(x_j)."""
    vals = f.values
    for j in reversed(range(f.n)):
        if j == i:
            continue
        vals = np.tensordot(vals, np.conj(factors[j]) / len(factors[j]), axes=([j], [0]))
    return vals


def refine_product(f: FunctionTable, P: ProductFunction, sweeps: int = 20,
                   unimodular: bool = False, tol: float = 1e-12) -> tuple[ProductFunction, float]:
    """Coordinatewise maximisation of |<f, P>|, each factor solved exactly."""
    factors = [np.array(p, dtype=np.complex128) for p in P.factors]
    best = abs(inner_product(f, product_to_table(ProductFunction(factors)))) if f.n else abs(complex(f.values[()]))
    for _ in range(sweeps):
        for i in range(f.n):
            w = _partial_contraction(f, factors, i)
            if unimodular:
                mag = np.abs(w)
                factors[i] = np.where(mag > 0, w / np.where(mag > 0, mag, 1), 1.0)
            else:
                nrm = np.sqrt(np.mean(np.abs(w) ** 2))
                if nrm > 0:
                    factors[i] = w / nrm
        cur = abs(inner_product(f, product_to_table(ProductFunction(factors))))
        if cur <= best + tol:
            best = max(best, cur)
            break
        best = cur
    return ProductFunction(factors), best


@dataclass
class SearchBudget:
    keep_rates: tuple = (1.0, 0.75, 0.5)
    samples_per_rate: int = 8
    sweeps: int = 20


def best_product_correlation(f: FunctionTable, budget: SearchBudget | None = None,
                             seed: int = 0) -> tuple[Restriction, ProductFunction, float]:
    """Heuristic search for a restriction and an l2-normalised product correlating with it.

    Candidates are the empty restriction plus random restrictions at each keep
    rate; each restricted function is seeded with the 99% extraction and
    refined coordinatewise.  The first best candidate wins.
    """
    budget = budget or SearchBudget()
    rng = np.random.default_rng(seed)
    candidates = [Restriction({})]
    for rate in budget.keep_rates:
        if rate >= 1.0:
            continue
        for _ in range(budget.samples_per_rate):
            fixed = rng.random(f.n) >= rate
            candidates.append(Restriction({int(i): int(rng.integers(f.alphabets[i]))
                                           for i in np.flatnonzero(fixed)}))
    best = None
    for r in candidates:
        g = restrict(f, r)
        if g.n == 0:
            P, corr = ProductFunction([]), abs(complex(g.values[()]))
        else:
            nrm = lp_norm(g, 2)
            P, _ = extract_product_99(g / nrm if nrm > 0 else g)
            P, corr = refine_product(g, P, budget.sweeps)
        if best is None or corr > best[2] + 1e-12:
            best = (r, P, corr)
    return best


# --- iterative peeling --------------------------------------------------------

@dataclass
class PeelStep:
    t: int
    coords: list          # R_t as original coordinate ids
    left: list            # S_t
    right: list           # T_t
    norm_f_sq: float
    norm_delta_sq: float
    swap_f: float
    swap_delta: float
    potential: float
    fixed: dict = field(default_factory=dict)    # restriction that produced this step
    peeled_norm_sq: float | None = None          # ||(Delta'_{t-1})_{I->z}||^2

    def to_dict(self) -> dict:
        return {"t": self.t, "R": self.coords, "S": self.left, "T": self.right,
                "norm_f_sq": self.norm_f_sq, "norm_delta_sq": self.norm_delta_sq,
                "swap_f": self.swap_f, "swap_delta": self.swap_delta,
                "potential": self.potential,
                "fixed": {str(k): int(v) for k, v in sorted(self.fixed.items())},
                "peeled_norm_sq": self.peeled_norm_sq}


@dataclass
class PeelTrace:
    steps: list
    termination: str
    diagnostic: dict
    tables: list = field(default_factory=list, repr=False)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"step": s.to_dict()}) for s in self.steps]
        lines.append(json.dumps({"termination": self.termination, "diagnostic": self.diagnostic}))
        return "\n".join(lines) + "\n"


def peel_iterate(f: FunctionTable, eps: float, gamma: float = 0.1, T_max: int = 32,
                 seed: int = 0) -> PeelTrace:
    """Run the restrict-and-peel scheme and record every step.

    At step t the function f_t lives on coordinates R_t = S_t + T_t and
    Delta_t is f_t minus its top t (S_t, T_t)-SVD terms.  The scheme stops
    once swap(Delta_t)^(1/2) < gamma ||f_t||^2, or at T_max, or when the
    coordinates run out.
    """
    rng = np.random.default_rng(seed)
    coords = list(range(f.n))
    left = [i for i in coords if rng.random() < 0.5]
    ft = f
    steps, tables = [], []
    fixed, peeled = {}, None
    t = 0
    while True:
        pos = {c: k for k, c in enumerate(coords)}
        rows = [pos[c] for c in left]
        right = [c for c in coords if c not in left]
        nf = lp_norm(ft, 2) ** 2
        delta = rank_residual(ft, rows, t)
        nd = lp_norm(delta, 2) ** 2
        sf = swap(ft)
        sd = swap(delta)
        phi = (eps ** -5 * np.sqrt(sf) - nd) / nf if nf > 0 else float("nan")
        steps.append(PeelStep(t, list(coords), list(left), right, nf, nd, sf, sd, phi,
                              dict(fixed), peeled))
        tables.append(ft)
        if nf <= 1e-300:
            reason = "zero function"
            break
        if np.sqrt(sd) < gamma * nf:
            reason = "small residual"
            break
        if t >= T_max:
            reason = "step limit"
            break
        if not coords:
            reason = "coordinates exhausted"
            break
        # new random split; keep coordinates on which old and new splits agree
        new_left = {c for c in coords if rng.random() < 0.5}
        keep_left = [c for c in left if c in new_left]
        keep_right = [c for c in right if c not in new_left]
        kept = sorted(keep_left + keep_right)
        dropped = [c for c in coords if c not in kept]
        z = {c: int(rng.integers(f.alphabets[c])) for c in dropped}
        r_local = Restriction({pos[c]: z[c] for c in dropped})
        # Delta'_t: Delta_t minus its top term on the new split
        new_rows = [pos[c] for c in coords if c in new_left]
        peeled = lp_norm(restrict(rank_residual(delta, new_rows, 1), r_local), 2) ** 2
        ft = restrict(ft, r_local)
        fixed = z
        coords, left = kept, sorted(keep_left)
        t += 1
    last = steps[-1]
    pos = {c: k for k, c in enumerate(last.coords)}
    diag = svdinc_diagnostic(tables[-1], [pos[c] for c in last.left], last.t, eps, gamma, seed)
    return PeelTrace(steps, reason, diag, tables)


def svdinc_diagnostic(ft: FunctionTable, rows, t: int, eps: float, gamma: float,
                      seed: int = 0, lam_const: float = 1.0) -> dict:
    """Classify a terminal state into the three increment cases.

    Case "1": the top singular value is essentially one.
    Case "2a": cross terms between the kept right singular vectors carry at
    least gamma/4 of swap(f); a random unit combination of them is built.
    Case "2b": otherwise the best single right singular vector is reported.
    """
    nf = lp_norm(ft, 2)
    if nf == 0 or ft.n == 0:
        return {"case": "degenerate"}
    g = ft / nf
    triples = partition_svd(g, rows)
    sf = swap(g)
    out = {"swap_f": sf, "lambda1": triples[0].lam if triples else 0.0, "terms": 0}
    if triples and triples[0].lam >= 1 - eps ** 2 / 1e10:
        out.update(case="1", swap_g=swap(triples[0].g), swap_h=swap(triples[0].h))
        return out
    floor = lam_const * eps ** 4 / max(t, 1)
    kept = [tr for tr in triples[:max(t, 1)] if tr.lam >= floor] or triples[:1]
    out["terms"] = len(kept)
    cross = 0.0
    for i in range(len(kept)):
        for j in range(i + 1, len(kept)):
            hi, hj = kept[i].h, kept[j].h
            cross += 2 * kept[i].lam ** 2 * kept[j].lam ** 2 * swap_inner(hi, hj, hi, hj).real
    out["cross_term"] = cross
    if cross >= gamma / 4 * sf and len(kept) > 1:
        rng = np.random.default_rng(seed)
        beta = np.exp(2j * np.pi * rng.random(len(kept)))
        h = sum((b * tr.lam * tr.h for b, tr in zip(beta, kept)), start=kept[0].h * 0)
        h = h / lp_norm(h, 2)
        out.update(case="2a", swap_h=swap(h), eta=1 / np.sqrt(len(kept)))
    else:
        big = [tr for tr in kept if tr.lam ** 2 > gamma * sf / 10] or kept
        vals = [swap(tr.h) for tr in big]
        i = int(np.argmax(vals))
        out.update(case="2b", swap_h=vals[i], eta=big[i].lam)
    out["swap_ratio"] = out["swap_h"] / sf if sf > 0 else float("inf")
    return out


def phirr_event_probability(f: FunctionTable, g: FunctionTable, fixed, C: float,
                            delta: float) -> tuple[float, float]:
    """Exact probability over z of the potential-preservation event, and its lower bound."""
    fixed = sorted(fixed)
    nf = lp_norm(f, 2) ** 2
    ng = lp_norm(g, 2) ** 2
    phi = (C * np.sqrt(swap(f)) - ng) / nf
    B = lp_norm(f, np.inf)
    hits = 0
    zs = all_points([f.alphabets[i] for i in fixed])
    for z in zs:
        r = Restriction(dict(zip(fixed, (int(v) for v in z))))
        fz, gz = restrict(f, r), restrict(g, r)
        nfz = lp_norm(fz, 2) ** 2
        if nfz <= 0:
            continue
        lhs = (C * np.sqrt(swap(fz)) - lp_norm(gz, 2) ** 2) / nfz
        big = nfz >= delta / (C + 2 * delta + ng / nf) * nf
        hits += lhs >= phi - 2 * delta - 1e-12 and big
    return hits / len(zs), delta * nf / (C * B * B)


def restricted_correlation_probability(f: FunctionTable, P: ProductFunction, fixed,
                                       eps: float) -> float:
    """Pr over z of |<f_{I->z}, P_{I->z}>| >= eps / 2, by enumeration."""
    fixed = sorted(fixed)
    Pt = product_to_table(P)
    zs = all_points([f.alphabets[i] for i in fixed])
    hits = 0
    for z in zs:
        r = Restriction(dict(zip(fixed, (int(v) for v in z))))
        hits += abs(inner_product(restrict(f, r), restrict(Pt, r))) >= eps / 2
    return hits / len(zs)


# --- embeddings and short lists -------------------------------------------------

def _reference_symbols(P: ProductFunction, reference) -> list[int]:
    if np.isscalar(reference):
        return [int(reference)] * P.n
    return [int(a) for a in reference]


def embed_pi(P: ProductFunction, reference=0) -> np.ndarray:
    """Concatenate (Re, Im) of c_i P_i(a), with c_i making c_i P_i(reference) real >= 0."""
    refs = _reference_symbols(P, reference)
    blocks = []
    for i, (p, a) in enumerate(zip(P.factors, refs)):
        if abs(p[a]) == 0:
            raise ValueError(f"factor {i} vanishes at the reference symbol {a}")
        c = np.conj(p[a]) / abs(p[a])
        q = c * p
        blocks.append(np.column_stack([q.real, q.imag]).ravel())
    return np.concatenate(blocks) if blocks else np.zeros(0)


def phase_align(P: ProductFunction, Q: ProductFunction, reference=0) -> tuple[complex, bool]:
    """Unit c = prod c_i with c_i <P_i, Q_i> real >= 0, and whether
    ||cP - Q||^2 <= ||pi(P) - pi(Q)||^2 holds."""
    if P.alphabets != Q.alphabets:
        raise ValueError("products live on different domains")
    c = 1.0 + 0j
    for p, q in zip(P.factors, Q.factors):
        ip = np.mean(p * np.conj(q))
        c *= np.conj(ip) / abs(ip) if abs(ip) > 0 else 1.0
    diff = c * product_to_table(P) - product_to_table(Q)
    lhs = lp_norm(diff, 2) ** 2
    rhs = float(np.sum((embed_pi(P, reference) - embed_pi(Q, reference)) ** 2))
    return c, bool(lhs <= rhs + 1e-9)


def product_inner(P: ProductFunction, Q: ProductFunction) -> complex:
    out = 1.0 + 0j
    for p, q in zip(P.factors, Q.factors):
        out *= np.mean(p * np.conj(q))
    return out


def short_list(f: FunctionTable, eps: float, delta: float, rounds: int = 12,
               restarts: int = 4, seed: int = 0) -> list[ProductFunction]:
    """Greedy short list of unimodular products correlating with f.

    Each round looks for a product correlating with the current residual,
    keeps it when |<f, P>| >= eps, and projects it out.  The pool is pruned so
    kept members have pairwise |<P, P'>| < delta, best correlations first.
    """
    rng = np.random.default_rng(seed)
    pool = []
    residual = f
    for _ in range(rounds):
        best = None
        for k in range(restarts):
            if k == 0:
                nrm = lp_norm(residual, 2)
                if nrm == 0:
                    break
                start, _ = extract_product_99(residual / nrm)
                start = ProductFunction([np.exp(1j * np.angle(p)) for p in start.factors])
            else:
                start = ProductFunction([np.exp(2j * np.pi * rng.random(a)) for a in f.alphabets])
            P, val = refine_product(residual, start, unimodular=True)
            if best is None or val > best[1]:
                best = (P, val)
        if best is None:
            break
        P = best[0]
        if abs(inner_product(f, product_to_table(P))) >= eps:
            pool.append(P)
        Pt = product_to_table(P)
        residual = residual - inner_product(residual, Pt) * Pt
        if lp_norm(residual, 2) < 1e-12:
            break
    pool.sort(key=lambda P: -abs(inner_product(f, product_to_table(P))))
    kept = []
    for P in pool:
        if all(abs(product_inner(P, Q)) < delta for Q in kept):
            kept.append(P)
    return kept
