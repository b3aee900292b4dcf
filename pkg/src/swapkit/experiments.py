"""Config-driven verification experiments.

Each experiment takes a parameter dict (strictly checked against its
defaults) and a run context, and returns check records.  Reports are
deterministic given the config: records are sorted by name and wall-clock
timings are only included on request.
"""
from __future__ import annotations

import copy
import itertools
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounded import dense_scan, pairing, to_bounded_product, constants as bp_constants
from .core import (BudgetError, FunctionTable, ProductFunction, Restriction, all_points,
                   lp_norm, product_to_table, restrict, subsets, inner_product)
from .cube import (collision_probability, gaussian_project, noise_stability,
                   sample_biased_pairs, sse_probe, biased_measure)
from .extract import (extract_product_99, partition_svd, rank_residual, peel_iterate,
                      svd_reconstruct)
from .norms import (box_inner, swap, swap_inner, swap_inner_direct, swap_inner_mc,
                    swap_inner_symmetrized, swap_norm, swap_T)
from .testers import (DPInstance, agreement_rate, character_swap_reduction, conditioning_check,
                      diamond_pass_prob, distance_profile, dp_pass_prob, dp_recover_global,
                      dp_vote, perfect_instance)
from .threeap import (DenseSet, FIVE_ELEMENT_SET, ConstraintSet, StepParams, build_mu_increment,
                      density_increment_step, dirichlet_approx, find_valid_triple,
                      max_triple_free, merged_phase_spread, restricted_three_ap, same_gap,
                      three_ap_set, validate_constraint_set)
from .tridist import (TriDist, conditional_conj_product, full_support_pipeline,
                      minus_decomposition, pairwise_connected, path_trick, symmetry_witness,
                      tri_correlation)

# exhaustive maximum of a triple-free subset of F_3^2 for the restricted 3-AP set
TRIPLE_FREE_MAX_N2 = 6


class ConfigError(ValueError):
    pass


class WallClockExceeded(RuntimeError):
    pass


@dataclass
class Check:
    name: str
    paper_anchor: str
    value: object
    threshold: object
    verdict: str
    std_error: float | None = None
    runtime_ms: float | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "paper_anchor": self.paper_anchor, "value": _plain(self.value),
                "threshold": _plain(self.threshold), "verdict": self.verdict,
                "std_error": _plain(self.std_error), "runtime_ms": self.runtime_ms}


def _plain(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


@dataclass
class Context:
    seed: int
    exact_domain_max: int = 4096
    mc_samples: int = 20000
    wall_clock_seconds: float = 600.0
    timing: bool = False
    threads: int = 1
    started: float = field(default_factory=time.perf_counter)
    checks: list = field(default_factory=list)
    mark: float = field(default_factory=time.perf_counter)   # time of the previous record

    def rng(self, *keys) -> np.random.Generator:
        return np.random.default_rng([self.seed, *keys])

    def subseed(self, *keys) -> int:
        return int(self.rng(*keys).integers(1 << 31))

    def domain(self, alphabets) -> None:
        size = int(np.prod(alphabets))
        if size > self.exact_domain_max:
            raise BudgetError(f"domain of size {size} exceeds exact_domain_max {self.exact_domain_max}")

    def tick(self):
        if time.perf_counter() - self.started > self.wall_clock_seconds:
            raise WallClockExceeded(f"wall clock budget of {self.wall_clock_seconds} s used up")

    def record(self, name, anchor, value, threshold, ok, std_error=None, t0=None):
        ms = None
        if self.timing:
            # checks computed together share the time since the previous record
            ms = round((time.perf_counter() - (self.mark if t0 is None else t0)) * 1000, 3)
        self.checks.append(Check(name, anchor, value, threshold, "pass" if ok else "fail",
                                 std_error, ms))
        self.mark = time.perf_counter()
        self.tick()


def _random_connected(rng, k: int) -> TriDist:
    while True:
        P = rng.random((k, k, k)) * (rng.random((k, k, k)) < 0.5)
        for a in range(k):
            P[a, a, a] += 0.1
        mu = TriDist(P / P.sum())
        if pairwise_connected(mu)[0]:
            return mu


def _orthonormal_pair(rng, shape):
    h1 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    h2 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    h1 /= np.sqrt(np.mean(np.abs(h1) ** 2))
    h2 -= np.mean(h2 * np.conj(h1)) * h1
    h2 /= np.sqrt(np.mean(np.abs(h2) ** 2))
    return FunctionTable(shape, h1), FunctionTable(shape, h2)


def _unimodular_product(rng, alphabets) -> ProductFunction:
    return ProductFunction([np.exp(2j * np.pi * rng.random(a)) for a in alphabets])


# --- experiments ----------------------------------------------------------------

def norm_identities(p, ctx: Context):
    rng = ctx.rng(1)
    shape = (p["alphabet"],) * p["n"]
    ctx.domain(shape)
    t0 = time.perf_counter()
    err_box = err_sym = 0.0
    for _ in range(p["trials"]):
        fs = [FunctionTable.random(shape, rng) for _ in range(4)]
        avg = sum(box_inner(*fs, S) for S in subsets(p["n"])) / 2 ** p["n"]
        err_box = max(err_box, abs(swap_inner_symmetrized(*fs) - avg))
        err_sym = max(err_sym, abs(swap_inner(*fs) - avg))
    ctx.record("box_average_identity", "Lemma box", max(err_box, err_sym), 1e-10,
               max(err_box, err_sym) <= 1e-10, t0=t0)

    t0 = time.perf_counter()
    small = (p["alphabet"],) * p["direct_n"]
    err = 0.0
    for _ in range(p["trials"]):
        fs = [FunctionTable.random(small, rng) for _ in range(4)]
        err = max(err, abs(swap_inner(*fs) - swap_inner_direct(*fs)))
    ctx.record("direct_definition", "Def swap", err, 1e-10, err <= 1e-10, t0=t0)

    t0 = time.perf_counter()
    tri = hom = -np.inf
    for _ in range(p["pairs"]):
        f, g = (FunctionTable.random(shape, rng) for _ in range(2))
        tri = max(tri, swap_norm(f + g) - swap_norm(f) - swap_norm(g))
        c = complex(rng.standard_normal(), rng.standard_normal())
        hom = max(hom, abs(swap_norm(f * c) - abs(c) * swap_norm(f)))
    ctx.record("swap_norm_triangle", "Cor norm", tri, 1e-9, tri <= 1e-9, t0=t0)
    ctx.record("swap_norm_homogeneity", "Cor norm", hom, 1e-9, hom <= 1e-9)

    t0 = time.perf_counter()
    qshape = (p["quad_alphabet"],) * p["quad_n"]
    v_cs = v_cs4 = v_l2box = v_l2 = v_cs1 = v_cs1b = -np.inf
    for _ in range(p["quads"]):
        fs = [FunctionTable.random(qshape, rng) for _ in range(4)]
        f1, f2, f3, f4 = fs
        S = [i for i in range(p["quad_n"]) if rng.random() < 0.5]
        b = abs(box_inner(f1, f2, f3, f4, S))
        self_box = [box_inner(f, f, f, f, S).real for f in fs]
        # the Cauchy-Schwarz step pairs f1 with f3 and f2 with f4 in the mirrored slots
        v_cs = max(v_cs, b ** 2 - (box_inner(f1, f3, f3, f1, S) * box_inner(f2, f4, f4, f2, S)).real)
        v_cs4 = max(v_cs4, b ** 4 - np.prod(self_box))
        v_l2box = max(v_l2box, max(sb - lp_norm(f, 2) ** 4 for sb, f in zip(self_box, fs)))
        s = abs(swap_inner(*fs))
        v_l2 = max(v_l2, s - np.prod([lp_norm(f, 2) for f in fs]))
        s12 = swap_inner(f1, f2, f1, f2).real
        v_cs1 = max(v_cs1, s ** 2 - s12 * swap_inner(f3, f4, f3, f4).real)
        v_cs1b = max(v_cs1b, s12 ** 2 - swap(f1) * swap(f2))
    ctx.record("box_cauchy_schwarz", "Lemma boxstuff", max(v_cs, v_cs4), 1e-9,
               max(v_cs, v_cs4) <= 1e-9, t0=t0)
    ctx.record("box_l2_bound", "Lemma boxstuff", v_l2box, 1e-9, v_l2box <= 1e-9)
    ctx.record("swap_l2_bound", "Lemma l2", v_l2, 1e-9, v_l2 <= 1e-9)
    ctx.record("swap_cauchy_schwarz", "Lemma cs1", max(v_cs1, v_cs1b), 1e-9,
               max(v_cs1, v_cs1b) <= 1e-9)


def swap_properties(p, ctx: Context):
    rng = ctx.rng(2)
    n = p["restrict_n"]
    shape = (p["alphabet"],) * n
    ctx.domain(shape)
    t0 = time.perf_counter()
    worst = -np.inf
    for _ in range(p["restrict_trials"]):
        f = FunctionTable.random(shape, rng, "bounded")
        lhs = np.sqrt(swap(f))
        for I in subsets(n):
            zs = all_points([shape[i] for i in I])
            vals = [np.sqrt(swap(restrict(f, Restriction(dict(zip(I, map(int, z)))))))
                    for z in zs]
            worst = max(worst, lhs - float(np.mean(vals)))
    ctx.record("restriction_monotone", "Lemma valrr", worst, 1e-9, worst <= 1e-9, t0=t0)

    t0 = time.perf_counter()
    pshape = (p["product_alphabet"],) * p["product_n"]
    err = 0.0
    for _ in range(p["product_trials"]):
        P = product_to_table(_unimodular_product(rng, pshape))
        err = max(err, abs(swap(P) - 1.0))
    ctx.record("unimodular_product_swap", "Def swap", err, 1e-9, err <= 1e-9, t0=t0)

    t0 = time.perf_counter()
    worst = -np.inf
    hshape = (p["pair_alphabet"],) * p["pair_n"]
    for _ in range(p["pairs"]):
        h1, h2 = _orthonormal_pair(rng, hshape)
        worst = max(worst, swap_inner(h1, h2, h1, h2).real)
    ctx.record("orthogonal_pair_bound", "Lemma valperp", worst, 2 / 3, worst <= 2 / 3 + 1e-9, t0=t0)

    t0 = time.perf_counter()
    dom = fac = full = -np.inf
    for _ in range(p["swap_t_trials"]):
        f = FunctionTable.random((2, 2, 2), rng)
        sf = swap(f)
        dom = max(dom, sf - swap_T(f, f, f, f, [0, 1]).real)
        e = np.mean(np.abs(f.values) ** 2)
        fac = max(fac, abs(swap_T(f, f, f, f, []) - e * e))
        full = max(full, abs(swap_T(f, f, f, f, [0, 1, 2]) - sf))
    ctx.record("one_sided_swap_dominates", "Lemma svdinc", dom, 1e-9, dom <= 1e-9, t0=t0)
    ctx.record("one_sided_swap_edges", "Lemma svdinc", max(fac, full), 1e-12, max(fac, full) <= 1e-12)

    t0 = time.perf_counter()
    inside = []
    z = []
    for k in range(p["mc_trials"]):
        f = FunctionTable.random((2, 2, 2), np.random.default_rng([ctx.seed, 2, k]))
        exact = swap(f)
        est = swap_inner_mc([f] * 4, ctx.mc_samples, ctx.subseed(2, k))
        inside.append(abs(est.value.real - exact) <= 4 * est.std_error)
        z.append(abs(est.value.real - exact) / max(est.std_error, 1e-300))
    rate = float(np.mean(inside))
    ctx.record("monte_carlo_within_4_stderr", "plumbing", rate, 0.95, rate >= 0.95,
               std_error=float(np.std(z)), t0=t0)


def _synthesize_near_product(rng, shape, eta_max):
    P = product_to_table(_unimodular_product(rng, shape))
    noise = FunctionTable.random(shape, rng)
    eta = rng.uniform(0, eta_max)
    f = P + noise * (eta / lp_norm(noise, 2))
    return f / lp_norm(f, 2)


def ninety_nine(p, ctx: Context):
    rng = ctx.rng(3)
    shape = (p["alphabet"],) * p["n"]
    ctx.domain(shape)
    t0 = time.perf_counter()
    lam_slack = h_slack = corr_slack = np.inf
    found = 0
    for _ in range(20 * p["instances"]):
        if found >= p["instances"]:
            break
        f = _synthesize_near_product(rng, shape, p["eta_max"])
        c = 1.0 - swap(f)
        if c > p["max_c"]:
            continue
        found += 1
        top = partition_svd(f, [0])[0]
        lam_slack = min(lam_slack, top.lam ** 2 - (1 - 3 * c))
        h_slack = min(h_slack, swap(top.h) - (1 - c))
        _, corr = extract_product_99(f)
        corr_slack = min(corr_slack, corr - (1 - p["K"] * c))
    ctx.record("synthesized_instances", "plumbing", found, p["instances"], found >= p["instances"], t0=t0)
    ctx.record("top_singular_value", "Lemma 99induct", lam_slack, -1e-9, lam_slack >= -1e-9)
    ctx.record("top_vector_swap", "Lemma 99induct", h_slack, -1e-9, h_slack >= -1e-9)
    ctx.record("product_extraction", "Thm swapnine", corr_slack, 0.0, corr_slack >= 0.0)

    t0 = time.perf_counter()
    sshape = (p["svd_alphabet"],) * p["svd_n"]
    rec = orth = parse = bound = 0.0
    order_ok = True
    for _ in range(p["svd_instances"]):
        f = FunctionTable.random(sshape, rng, "bounded")
        J = [i for i in range(p["svd_n"]) if rng.random() < 0.5] or [0]
        trip = partition_svd(f, J)
        rec = max(rec, lp_norm(f - svd_reconstruct(f.alphabets, J, trip), 2))
        G = np.array([t.g.flat for t in trip])
        H = np.array([t.h.flat for t in trip])
        for M in (G, H):
            gram = M.conj() @ M.T / M.shape[1]
            orth = max(orth, float(np.max(np.abs(gram - np.eye(len(trip))))))
        lams = np.array([t.lam for t in trip])
        order_ok &= bool(np.all(np.diff(lams) <= 1e-12))
        parse = max(parse, abs(np.sum(lams ** 2) - lp_norm(f, 2) ** 2))
        B = lp_norm(f, np.inf)
        for t in trip:
            bound = max(bound, lp_norm(t.g, np.inf) - B / t.lam, lp_norm(t.h, np.inf) - B / t.lam)
    ctx.record("svd_reconstruction", "Def svd", max(rec, parse), 1e-8, max(rec, parse) <= 1e-8 and order_ok, t0=t0)
    ctx.record("svd_orthonormality", "Def svd", orth, 1e-8, orth <= 1e-8)
    ctx.record("singular_vector_bound", "Lemma svdinf", bound, 1e-9, bound <= 1e-9)


def peel(p, ctx: Context):
    n = p["n"]
    ctx.domain((2,) * n)
    t0 = time.perf_counter()
    dec = valrr = -np.inf
    refine_ok = True
    reasons = []
    for s in range(p["seeds"]):
        rng = ctx.rng(4, s)
        f = FunctionTable.random((2,) * n, rng, "bounded")
        tr = peel_iterate(f, p["eps"], p["gamma"], p["T_max"], ctx.subseed(4, s))
        reasons.append(tr.termination)
        for prev, cur, table in zip(tr.steps, tr.steps[1:], tr.tables):
            dec = max(dec, cur.norm_delta_sq - cur.peeled_norm_sq)
            refine_ok &= set(cur.coords) <= set(prev.coords)
            refine_ok &= set(cur.left) <= set(prev.left) and set(cur.right) <= set(prev.right)
            pos = {c: k for k, c in enumerate(prev.coords)}
            I = sorted(pos[c] for c in cur.fixed)
            zs = all_points([table.alphabets[i] for i in I])
            vals = [np.sqrt(swap(restrict(table, Restriction(dict(zip(I, map(int, z)))))))
                    for z in zs]
            valrr = max(valrr, np.sqrt(swap(table)) - float(np.mean(vals)))
    ok_reasons = all(r in ("zero function", "small residual", "step limit", "coordinates exhausted")
                     for r in reasons)
    dec = 0.0 if dec == -np.inf else dec
    valrr = 0.0 if valrr == -np.inf else valrr
    ctx.record("residual_nonincreasing", "Lemma iter", dec, 1e-9, dec <= 1e-9, t0=t0)
    ctx.record("partition_refines", "plumbing", refine_ok, True, refine_ok)
    ctx.record("restriction_step_monotone", "Lemma valrr", valrr, 1e-9, valrr <= 1e-9)
    ctx.record("termination_reported", "plumbing", sorted(set(reasons)), "known reasons", ok_reasons)


def path_trick_checks(p, ctx: Context):
    rng = ctx.rng(5)
    k = p["alphabet"]
    t0 = time.perf_counter()
    ident = 0.0
    conn = True
    for _ in range(p["trials"]):
        mu = _random_connected(rng, k)
        for axis in "xyz":
            one = path_trick(mu, axis, 1)
            ident = max(ident, float(np.max(np.abs(one.dist.probs - mu.probs))))
            for r in range(1, p["r_max"] + 1):
                conn &= pairwise_connected(path_trick(mu, axis, r).dist)[0]
    ctx.record("single_step_identity", "Def pathtrick", ident, 1e-12, ident <= 1e-12, t0=t0)
    ctx.record("connectivity_preserved", "Def pathtrick", conn, True, conn)

    t0 = time.perf_counter()
    worst = np.inf
    for t in range(p["trials"]):
        mu = _random_connected(rng, k)
        n = 1 + t % 2
        f, g, h = (FunctionTable.random((k,) * n, rng, "bounded") for _ in range(3))
        e0 = abs(tri_correlation(f, g, h, mu))
        ht = conditional_conj_product(f, g, mu, "z")
        for r in range(1, p["r_max"] + 1):
            res = path_trick(mu, "x", r)
            c = abs(tri_correlation(res.lift(f), g, ht, res.dist))
            worst = min(worst, c - e0 ** (2 ** r))
    ctx.record("lifted_correlation_bound", "Lemma pathtrick", worst, -1e-9, worst >= -1e-9, t0=t0)

    t0 = time.perf_counter()
    mu = three_ap_set(3).uniform()
    two = path_trick(mu, "x", 2)
    merr = float(np.max(np.abs(two.dist.marginal(1) - mu.marginal(1))))
    ctx.record("walk_start_marginal", "Def pathtrick", merr, 1e-12, merr <= 1e-12, t0=t0)

    for label, S in (("three_ap", three_ap_set(3)), ("restricted_three_ap", restricted_three_ap()),
                     ("five_element", FIVE_ELEMENT_SET)):
        t0 = time.perf_counter()
        res = full_support_pipeline(S.uniform(), p["pipeline_r_max"])
        missing = [(a, b) for a in range(3) for b in range(3) if symmetry_witness(res, a, b) is None]
        ctx.record(f"symmetry_witnesses_{label}", "Lemma suppmu", len(missing), 0, not missing, t0=t0)
        if not missing:
            dec = minus_decomposition(res, 3)
            mass = float(dec.mu_minus.probs.sum())
            ctx.record(f"minus_mass_{label}", "Thm toswap", mass, 1.0,
                       abs(mass - 1) <= 1e-12 and 0 < dec.alpha <= 1)


def bounded_product_checks(p, ctx: Context):
    rng = ctx.rng(6)
    delta = p["delta"]
    shape = (p["alphabet"],) * p["n"]
    ctx.domain(shape)
    target = bp_constants(delta)["target"]
    t0 = time.perf_counter()
    corr_min, ratio_min, planted_min, unimod = np.inf, np.inf, np.inf, 0.0
    used = 0
    for _ in range(10 * p["instances"]):
        if used >= p["instances"]:
            break
        U = _unimodular_product(rng, shape)
        noise = FunctionTable.random(shape, rng)
        f = product_to_table(ProductFunction([np.conj(u) for u in U.factors]))
        f = f + noise * (p["noise"] / lp_norm(noise, np.inf))
        f = f / lp_norm(f, 4)
        mags = []
        for a in shape:
            m = np.exp(p["spread"] * rng.standard_normal(a))
            mags.append(m / np.sqrt(np.mean(m ** 2)))
        P = ProductFunction([u * m for u, m in zip(U.factors, mags)])
        base = abs(pairing(f, P))
        if base < delta:
            continue
        used += 1
        res = to_bounded_product(f, P, delta)
        _, opt = dense_scan(f, P, 64 / delta ** 3)
        corr_min = min(corr_min, res.corr)
        ratio_min = min(ratio_min, res.corr / opt)
        planted_min = min(planted_min, res.corr / base)
        unimod = max(unimod, max(float(np.max(np.abs(np.abs(q) - 1))) for q in res.product.factors))
    ctx.record("planted_instances", "plumbing", used, p["instances"], used >= p["instances"], t0=t0)
    ctx.record("correlation_threshold", "Thm boundedprod", corr_min, target, corr_min >= target)
    ctx.record("dense_scan_ratio", "Thm boundedprod", ratio_min, 0.9, ratio_min >= 0.9)
    ctx.record("planted_ratio", "Thm boundedprod", planted_min, 0.9, planted_min >= 0.9)
    ctx.record("output_unimodular", "Thm boundedprod", unimod, 1e-12, unimod <= 1e-12)


def diamond(p, ctx: Context):
    rng = ctx.rng(7)
    t0 = time.perf_counter()
    worst = 1.0
    for t in range(p["instances"]):
        prime = p["primes"][t % len(p["primes"])]
        n = 1 + t % p["max_n"]
        k = 2 + t % 2
        ctx.domain((k,) * n)
        parts = [rng.integers(prime, size=k) for _ in range(n)]
        F = np.zeros((k,) * n, dtype=np.int64)
        for i, a in enumerate(parts):
            F = F + a.reshape([-1 if j == i else 1 for j in range(n)])
        worst = min(worst, diamond_pass_prob(F % prime, prime)[0])
    ctx.record("direct_sums_pass", "Thm direct_sum", worst, 1.0, worst == 1.0, t0=t0)

    t0 = time.perf_counter()
    slack = np.inf
    for t in range(p["corruption_trials"]):
        prime = p["primes"][t % len(p["primes"])]
        n, k = p["max_n"], 2
        parts = [rng.integers(prime, size=k) for _ in range(n)]
        F = sum(a.reshape([-1 if j == i else 1 for j in range(n)]) for i, a in enumerate(parts)) % prime
        F = np.broadcast_to(F, (k,) * n).copy()
        hit = rng.random(F.shape) < rng.uniform(0, p["eta_max"])
        F[hit] = (F[hit] + rng.integers(1, prime, size=int(hit.sum()))) % prime
        eta = float(hit.mean())
        q = diamond_pass_prob(F, prime)[0]
        slack = min(slack, 4 * eta - (1 - q))
    ctx.record("corruption_robustness", "Thm direct_sum", slack, 0.0, slack >= -1e-12, t0=t0)

    t0 = time.perf_counter()
    gap = 0.0
    for t in range(p["identity_trials"]):
        prime = p["primes"][t % len(p["primes"])]
        n = 1 + t % p["max_n"]
        F = rng.integers(prime, size=(2,) * n)
        gap = max(gap, character_swap_reduction(F, prime).identity_gap)
    ctx.record("character_identity", "Thm direct_sum", gap, 1e-10, gap <= 1e-10, t0=t0)


def dp(p, ctx: Context):
    t0 = time.perf_counter()
    rng = ctx.rng(8)
    g = rng.random((p["perfect_n"], p["perfect_K"]))
    inst = perfect_instance(g, p["rho"], p["alpha"], 0.0)
    q, _ = dp_pass_prob(inst, 500, ctx.subseed(8, 1))
    rec = dp_recover_global(inst, seed=ctx.subseed(8, 2), agree_threshold=0.0)
    exact = bool(np.array_equal(rec.g, g))
    ok = q == 1.0 and exact and rec.agreement_rate == 1.0
    ctx.record("perfect_instance", "Thm dp", [q, rec.agreement_rate, exact], [1.0, 1.0, True], ok, t0=t0)

    t0 = time.perf_counter()
    rates, controls = [], []
    for s in range(p["seeds"]):
        gen_seed = ctx.subseed(8, 100 + s)
        inst = DPInstance(p["n"], p["K"], p["rho"], p["alpha"], p["D"],
                          generator={"kind": "planted", "seed": gen_seed, "eta": p["eta"]})
        truth = inst.global_maps()[0]
        # distance within which the planted assignment itself agrees on most sets
        prof = distance_profile(inst, truth, 200, gen_seed + 1)
        thr = float(np.quantile(prof, p["threshold_quantile"]))
        rec = dp_recover_global(inst, seed=gen_seed + 2, agree_threshold=thr)
        rates.append(rec.agreement_rate)
        # negative control: the planted assignment with half its coordinates replaced
        half = truth.copy()
        half[: p["n"] // 2] = ctx.rng(8, 200 + s).random((p["n"] // 2, p["K"]))
        controls.append(agreement_rate(inst, half, thr, 200, gen_seed + 3))
        ctx.tick()
    lo = float(min(rates))
    ctx.record("planted_agreement", "Thm dp", lo, p["min_agreement"], lo >= p["min_agreement"],
               std_error=float(np.std(rates)), t0=t0)
    hi = float(max(controls))
    ctx.record("planted_control", "Thm dp", hi, p["min_agreement"], hi < p["min_agreement"])

    t0 = time.perf_counter()
    inst = DPInstance(p["n"], p["K"], p["rho"], p["alpha"], p["D"],
                      generator={"kind": "two_cluster", "seed": ctx.subseed(8, 3)})
    rec = dp_recover_global(inst, seed=ctx.subseed(8, 4))
    g0, g1 = inst.global_maps()
    on0 = np.all(rec.g == g0, axis=1)
    on1 = np.all(rec.g == g1, axis=1)
    ctx.record("two_cluster_never_between", "Def vote", float(np.mean(on0 | on1)), 1.0,
               bool(np.all(on0 | on1)), t0=t0)
    ctx.record("two_cluster_agreement", "Thm dp", rec.agreement_rate, [0.25, 0.75],
               0.25 <= rec.agreement_rate <= 0.75)

    t0 = time.perf_counter()
    v1 = dp_vote(inst, np.arange(p["n"]) % 3 == 0, seed=11)
    v2 = dp_vote(inst, np.arange(p["n"]) % 3 == 0, seed=11)
    same = v1.flagged == v2.flagged and sorted(v1.assignment) == sorted(v2.assignment) and all(
        np.array_equal(v1.assignment[x], v2.assignment[x]) for x in v1.assignment)
    prov_ok = all(np.array_equal(rec.g[x], inst.rows(m)[x]) for x, m in rec.provenance.items())
    ctx.record("vote_deterministic", "plumbing", bool(same), True, bool(same), t0=t0)
    ctx.record("recovery_provenance", "Thm dp", bool(prov_ok), True, bool(prov_ok))

    t0 = time.perf_counter()
    worst = -np.inf
    cn = p["cond_n"]
    rng = ctx.rng(8, 5)
    tested = 0
    while tested < p["cond_events"]:
        event = rng.random(2 ** cn) < rng.uniform(0.1, 1.0)
        marg = np.full(cn, p["rho"])
        w = np.prod(np.where(all_points((2,) * cn).astype(bool), marg, 1 - marg), axis=1)
        if w[event].sum() < p["cond_min_prob"]:
            continue
        tv, bound = conditioning_check(marg, event)
        worst = max(worst, tv - bound)
        tested += 1
    ctx.record("conditioning_pinsker", "Lemma prodcond", worst, 0.0, worst <= 1e-12, t0=t0)


def sse(p, ctx: Context):
    rng = ctx.rng(9)
    t0 = time.perf_counter()
    x, y = sample_biased_pairs(1, p["rho"], p["gamma"], p["draws"], rng)
    freq = float(y.mean())
    sd = np.sqrt(p["rho"] * (1 - p["rho"]) / p["draws"])
    ctx.record("pair_marginal", "Thm sseproj", freq, [p["rho"] - 3 * sd, p["rho"] + 3 * sd],
               abs(freq - p["rho"]) <= 3 * sd, std_error=sd, t0=t0)

    t0 = time.perf_counter()
    M, m = p["proj_M"], p["proj_m"]
    u = rng.standard_normal(M)
    v = u + (lambda d: d / np.linalg.norm(d))(rng.standard_normal(M))
    d2 = []
    for s in range(p["proj_seeds"]):
        pu, pv = gaussian_project(np.stack([u, v]), m, ctx.subseed(9, s))
        d2.append(float(np.sum((pu - pv) ** 2)))
    d2 = np.array(d2)
    ctx.record("projection_unbiased", "Lemma proj", float(d2.mean()), [0.85, 1.15],
               abs(d2.mean() - 1) <= 0.15, std_error=float(d2.std() / np.sqrt(len(d2))), t0=t0)
    tail = float(np.mean(d2 > 2))
    ctx.record("projection_tail", "Lemma proj", tail, 0.05, tail <= 0.05)

    t0 = time.perf_counter()
    n = p["n"]
    ctx.domain((2,) * n)
    meas = biased_measure(n, p["rho"]).weights()
    worst = -np.inf
    done = 0
    while done < p["sets"]:
        A = rng.random((2,) * n) < rng.uniform(0.005, 0.3)
        mu = float(np.sum(meas * A))
        if mu == 0 or mu > p["max_density"]:
            continue
        worst = max(worst, collision_probability(A, p["rho"], p["gamma"]) - mu ** p["exponent"])
        done += 1
    ctx.record("small_set_expansion", "Thm sse", worst, 0.0, worst <= 0.0, t0=t0)

    t0 = time.perf_counter()
    f = FunctionTable.random((2,) * 4, rng)
    e = abs(noise_stability(f, 0.0) - abs(np.mean(f.values)) ** 2)
    e = max(e, abs(noise_stability(f, 1.0) - np.mean(np.abs(f.values) ** 2)))
    ctx.record("stability_endpoints", "Thm sse", e, 1e-12, e <= 1e-12, t0=t0)

    t0 = time.perf_counter()
    const = lambda pts: np.zeros((len(pts), 2))
    pl, pg, _ = sse_probe(const, n, p["rho"], p["gamma"], 0.1, 2000, ctx.subseed(9, 1))
    parity = lambda pts: 10.0 * (pts.astype(float) - p["rho"])
    ql, qg, _ = sse_probe(parity, n, p["rho"], p["gamma"], 0.1, 2000, ctx.subseed(9, 2))
    ctx.record("probe_constant_map", "Thm sseproj", [pl, pg], [1.0, 1.0], pl == 1.0 and pg == 1.0, t0=t0)
    ctx.record("probe_local_dominates", "Thm sseproj", [ql, qg], "global <= local", qg <= ql)


def threeap_step(p, ctx: Context):
    rng = ctx.rng(10)
    t0 = time.perf_counter()
    S3 = three_ap_set(3)
    mu = build_mu_increment(S3, 0.3, 9)
    diag = 1 / 3 - 0.3 / (3 * 3)
    off = 0.3 / ((len(S3.triples) - 3) * 3)
    err = max(max(abs(mu.probs[a, a, a] - diag) for a in range(3)),
              max(abs(mu.probs[t] - off) for t in S3.off_diagonal),
              abs(mu.probs.sum() - 1))
    zero = build_mu_increment(S3, 0.0, 4)
    err = max(err, float(np.max(np.abs(zero.probs - np.eye(3)[:, :, None] * np.eye(3)[None] / 3))))
    ctx.record("increment_masses", "Lemma notuniform", err, 1e-15, err <= 1e-15, t0=t0)

    t0 = time.perf_counter()
    worst = np.inf
    S = restricted_three_ap()
    delta = p["delta"]
    for n in range(1, p["n_uniform_max"] + 1):
        mx = build_mu_increment(S, delta, n).marginal(0)
        w = mx
        for _ in range(n - 1):
            w = np.multiply.outer(w, mx)
        for _ in range(p["sets"]):
            A = rng.random((3,) * n) < rng.uniform(0.05, 0.95)
            worst = min(worst, float(np.sum(w * A)) - (A.mean() - 2 * delta))
    ctx.record("marginal_density_loss", "Lemma notuniform", worst, 0.0, worst >= 0.0, t0=t0)

    t0 = time.perf_counter()
    err = 0.0
    count = 0
    for n in range(1, 4):
        muA = build_mu_increment(S, delta, n) if delta / np.sqrt(n) <= 1 else None
        for _ in range(p["sets"]):
            A = DenseSet(3, n, rng.random((3,) * n) < rng.uniform(0.05, 0.5))
            if len(A) == 0 or find_valid_triple(A, S) is not None:
                continue
            ind = A.indicator()
            val = tri_correlation(ind, ind, ind, muA).real
            d = np.array([muA.probs[a, a, a] for a in range(3)])
            w = d
            for _ in range(n - 1):
                w = np.multiply.outer(w, d)
            err = max(err, abs(val - float(np.sum(w * A.members))))
            count += 1
    ctx.record("diagonal_survival", "Lemma notuniform", err, 1e-12, err <= 1e-12 and count > 0, t0=t0)

    t0 = time.perf_counter()
    worst = -np.inf
    m, sn, k = 2, p["same_n"], p["same_k"]
    for _ in range(p["same_trials"]):
        g = FunctionTable.random((m,) * sn, rng, "bounded")
        Sset = sorted(rng.choice(sn, size=p["same_set"], replace=False).tolist())
        gap, bound = same_gap(g, Sset, k)
        worst = max(worst, gap - bound)
    ctx.record("merge_bias", "Def same", worst, 0.0, worst <= 0.0, t0=t0)

    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        _, d = dirichlet_approx(rng.random(2), 100)
        worst = max(worst, d)
    ctx.record("dirichlet_bound", "Lemma uniform", worst, 0.1, worst <= 0.1, t0=t0)

    t0 = time.perf_counter()
    ok = True
    for _ in range(50):
        N = int(rng.integers(1, 4))
        groups, phases = [], []
        for _ in range(N):
            size = int(rng.integers(2, 5))
            vs = [rng.random(3) for _ in range(size - 1)]
            # last member nearly cancels the others, so the group sum is close to an integer
            vs.append(np.mod(-np.sum(vs, axis=0) + rng.normal(0, 0.01, 3), 1.0))
            groups.append(list(range(len(phases), len(phases) + size)))
            phases.extend(vs)
        spread, bound = merged_phase_spread(phases, groups)
        ok &= spread <= bound + 1e-12
    ctx.record("merged_phase_constancy", "Lemma uniform", bool(ok), True, bool(ok), t0=t0)

    t0 = time.perf_counter()
    found = 0
    for s in range(p["dense_seeds"]):
        A = DenseSet.random(3, p["dense_n"], p["density"], ctx.rng(10, 100 + s))
        found += find_valid_triple(A, S) is not None
    ctx.record("dense_sets_have_triples", "Thm 3ap", found, p["dense_seeds"], found == p["dense_seeds"], t0=t0)

    t0 = time.perf_counter()
    size, mask = max_triple_free(S, 2)
    ctx.record("triple_free_regression", "Thm 3ap", size, TRIPLE_FREE_MAX_N2, size == TRIPLE_FREE_MAX_N2, t0=t0)

    t0 = time.perf_counter()
    v1 = validate_constraint_set(S)
    v2 = validate_constraint_set(FIVE_ELEMENT_SET)
    v3 = validate_constraint_set(ConstraintSet(3, [(a, a, a) for a in range(3)]))
    ok = v1["diagonal"] and v1["connected"] and v2["diagonal"] and v2["connected"] \
        and v3["diagonal"] and not v3["connected"]
    ctx.record("constraint_validation", "Thm 3ap", [v1["connected"], v2["connected"], v3["connected"]],
               [True, True, False], bool(ok), t0=t0)

    t0 = time.perf_counter()
    members = np.array([(mask >> i) & 1 for i in range(9)], dtype=bool)
    free_max = DenseSet(3, 2, members)
    out = density_increment_step(free_max, S, StepParams(delta=p["step_delta"]), ctx.subseed(10, 7))
    full = density_increment_step(DenseSet(3, 2, np.ones(9, bool)), S, seed=ctx.subseed(10, 8))
    ok = out.certified and out.kind in ("no_triple_certificate", "increment") and full.kind == "triple"
    ctx.record("increment_step_outcomes", "Lemma uniform", [out.kind, full.kind],
               ["certified", "triple"], bool(ok), t0=t0)


EXPERIMENTS = {
    "norm-identities": (norm_identities, {
        "trials": 50, "alphabet": 3, "n": 3, "direct_n": 2, "pairs": 200, "quads": 200,
        "quad_alphabet": 3, "quad_n": 3}),
    "swap-properties": (swap_properties, {
        "restrict_trials": 50, "restrict_n": 4, "alphabet": 2, "product_trials": 50,
        "product_n": 3, "product_alphabet": 3, "pairs": 500, "pair_n": 3, "pair_alphabet": 2,
        "swap_t_trials": 50, "mc_trials": 20}),
    "ninety-nine": (ninety_nine, {
        "instances": 100, "alphabet": 3, "n": 4, "eta_max": 0.25, "max_c": 0.05, "K": 10.0,
        "svd_instances": 100, "svd_n": 5, "svd_alphabet": 2}),
    "peel": (peel, {"seeds": 20, "n": 6, "eps": 0.5, "gamma": 0.1, "T_max": 32}),
    "path-trick": (path_trick_checks, {"trials": 30, "alphabet": 3, "r_max": 2, "pipeline_r_max": 6}),
    "bounded-product": (bounded_product_checks, {
        "instances": 10, "delta": 0.5, "alphabet": 3, "n": 3, "noise": 0.1, "spread": 0.3}),
    "diamond": (diamond, {"instances": 50, "max_n": 4, "primes": [2, 3, 5],
                          "corruption_trials": 20, "eta_max": 0.2, "identity_trials": 20}),
    "dp": (dp, {"seeds": 20, "n": 60, "K": 4, "rho": 0.3, "alpha": 0.5, "eta": 0.05, "D": 2.0,
                "perfect_n": 8, "perfect_K": 3, "min_agreement": 0.5, "threshold_quantile": 0.9,
                "cond_n": 10, "cond_events": 20, "cond_min_prob": 0.1}),
    "sse": (sse, {"n": 10, "rho": 0.3, "gamma": 0.2, "sets": 100, "max_density": 0.2,
                  "exponent": 1.05, "draws": 100000, "proj_seeds": 1000, "proj_m": 100, "proj_M": 50}),
    "threeap-step": (threeap_step, {
        "delta": 0.3, "n_uniform_max": 4, "sets": 50, "same_n": 12, "same_set": 12, "same_k": 2,
        "same_trials": 3, "dense_seeds": 20, "dense_n": 3, "density": 0.9, "step_delta": 0.3}),
}
SUITE = "full-suite"
NAMES = sorted(EXPERIMENTS) + [SUITE]
BUDGET_KEYS = {"exact_domain_max": int, "mc_samples": int, "wall_clock_seconds": float}


def _coerce(name, key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: parameter {key!r} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: parameter {key!r} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: parameter {key!r} must be a number")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name}: parameter {key!r} must be a list")
        return list(value)
    return value


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    params: dict = field(default_factory=dict)
    budgets: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(doc) - {"experiment", "seed", "params", "budgets"}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        for key in ("experiment", "seed"):
            if key not in doc:
                raise ConfigError(f"config is missing field {key!r}")
        seed = doc["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit nonnegative integer")
        cfg = cls(str(doc["experiment"]), seed, dict(doc.get("params") or {}),
                  dict(doc.get("budgets") or {}))
        cfg.validate()
        return cfg

    def validate(self):
        if self.experiment not in NAMES:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {NAMES}")
        bad = set(self.budgets) - set(BUDGET_KEYS)
        if bad:
            raise ConfigError(f"unknown budget fields: {sorted(bad)}")
        for k, typ in BUDGET_KEYS.items():
            if k in self.budgets:
                v = self.budgets[k]
                if isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0:
                    raise ConfigError(f"budget {k!r} must be a positive number")
                self.budgets[k] = typ(v)
        self.resolved_params()

    def resolved_params(self) -> dict:
        if self.experiment == SUITE:
            out = {}
            for key, val in self.params.items():
                if key not in EXPERIMENTS or not isinstance(val, dict):
                    raise ConfigError(f"{SUITE}: params must map experiment names to parameter maps")
            for name, (_, defaults) in EXPERIMENTS.items():
                out[name] = _resolve(name, defaults, self.params.get(name, {}))
            return out
        return _resolve(self.experiment, EXPERIMENTS[self.experiment][1], self.params)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed,
                "params": self.resolved_params(), "budgets": self.effective_budgets()}

    def effective_budgets(self) -> dict:
        base = {"exact_domain_max": 4096, "mc_samples": 20000, "wall_clock_seconds": 600.0}
        base.update(self.budgets)
        return base


def _resolve(name, defaults, given) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"{name}: unknown parameters {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        out[key] = _coerce(name, key, value, defaults[key])
    return out


def thread_cap() -> int:
    raw = os.environ.get("SWAPKIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"SWAPKIT_THREADS must be an integer, got {raw!r}") from None


def _run_one(name, params, seed, budgets, timing, started) -> tuple[list[Check], float]:
    ctx = Context(seed, budgets["exact_domain_max"], budgets["mc_samples"],
                  budgets["wall_clock_seconds"], timing, started=started)
    fn = EXPERIMENTS[name][0]
    t0 = time.perf_counter()
    try:
        fn(params, ctx)
    except (WallClockExceeded, BudgetError) as exc:
        ctx.checks.append(Check("truncated", "plumbing", str(exc), None, "fail"))
    return ctx.checks, time.perf_counter() - t0


@dataclass
class ExperimentReport:
    config: dict
    checks: list
    elapsed: dict = field(default_factory=dict)   # seconds per experiment, never serialised

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.verdict == "pass" for c in self.checks)

    def summary(self) -> dict:
        failed = [c.name for c in self.checks if c.verdict != "pass"]
        return {"overall": "pass" if self.passed else "fail", "checks": len(self.checks),
                "failed": failed}

    def to_jsonl(self) -> str:
        lines = [json.dumps({"config": self.config}, sort_keys=True)]
        lines += [json.dumps(c.to_dict(), sort_keys=True) for c in self.checks]
        lines.append(json.dumps({"summary": self.summary()}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        import csv
        import io
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "paper_anchor", "value", "threshold", "verdict", "std_error", "runtime_ms"])
        for c in self.checks:
            d = c.to_dict()
            w.writerow([d["name"], d["paper_anchor"], json.dumps(d["value"]), json.dumps(d["threshold"]),
                        d["verdict"], "" if d["std_error"] is None else d["std_error"],
                        "" if d["runtime_ms"] is None else d["runtime_ms"]])
        return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, timing: bool = False, threads: int | None = None) -> ExperimentReport:
    """Run one experiment (or all of them) and return checks sorted by name."""
    cfg.validate()
    params = cfg.resolved_params()
    budgets = cfg.effective_budgets()
    started = time.perf_counter()
    if cfg.experiment != SUITE:
        checks, secs = _run_one(cfg.experiment, params, cfg.seed, budgets, timing, started)
        elapsed = {cfg.experiment: secs}
    else:
        threads = thread_cap() if threads is None else threads
        names = sorted(EXPERIMENTS)
        jobs = [(n, params[n], cfg.seed, budgets, timing, started) for n in names]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda a: _run_one(*a), jobs))
        else:
            results = [_run_one(*a) for a in jobs]
        checks, elapsed = [], {}
        for name, (res, secs) in zip(names, results):
            elapsed[name] = secs
            for c in res:
                c.name = f"{name}/{c.name}"
                checks.append(c)
    checks.sort(key=lambda c: c.name)
    elapsed["total"] = time.perf_counter() - started
    return ExperimentReport(cfg.to_dict(), checks, elapsed)
