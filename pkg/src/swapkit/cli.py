"""Command line entry point: run experiments, generate instances, check stored files."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import yaml

from .core import BudgetError, FunctionTable, Restriction, lp_norm, restrict
from .experiments import (NAMES, Check, ConfigError, ExperimentConfig, ExperimentReport,
                          run_experiment)
from .extract import extract_product_99, partition_svd
from .norms import box_inner, swap, swap_inner_symmetrized
from .store import StoreError, load_store, save_store
from .testers import (DPInstance, character_swap_reduction, dp_pass_prob,
                      dp_recover_global)
from .threeap import (FIVE_ELEMENT_SET, DenseSet, StepParams, density_increment_step,
                      restricted_three_ap, three_ap_set)
from .tridist import TriDist, full_support_pipeline, pairwise_connected, symmetry_witness


def _parse_params(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"parameter {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        out[key] = yaml.safe_load(raw)
    return out


def _take(params: dict, allowed: dict, what: str) -> dict:
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigError(f"{what}: unknown parameters {sorted(unknown)}")
    return {**allowed, **params}


# --- gen ------------------------------------------------------------------------

def generate(kind: str, seed: int, params: dict):
    rng = np.random.default_rng(seed)
    if kind == "function":
        p = _take(params, {"alphabets": [2, 2, 2], "kind": "complex", "modulus": None}, kind)
        alph = [int(a) for a in p["alphabets"]]
        if p["modulus"] is not None:
            vals = rng.integers(int(p["modulus"]), size=alph)
            return FunctionTable(alph, vals), int(p["modulus"])
        return FunctionTable.random(alph, rng, p["kind"]), None
    if kind == "tridist":
        p = _take(params, {"set": "three_ap", "sigma": 3}, kind)
        sets = {"three_ap": lambda: three_ap_set(p["sigma"]),
                "restricted_three_ap": lambda: restricted_three_ap(p["sigma"]),
                "five_element": lambda: FIVE_ELEMENT_SET}
        if p["set"] == "random":
            k = int(p["sigma"])
            P = rng.random((k, k, k))
            return TriDist(P / P.sum()), None
        if p["set"] not in sets:
            raise ConfigError(f"tridist: unknown set {p['set']!r}")
        return sets[p["set"]]().uniform(), None
    if kind == "denseset":
        p = _take(params, {"sigma": 3, "n": 3, "density": 0.5}, kind)
        return DenseSet.random(int(p["sigma"]), int(p["n"]), float(p["density"]), rng), None
    if kind == "dpinstance":
        p = _take(params, {"n": 60, "K": 4, "rho": 0.3, "alpha": 0.5, "D": 2.0,
                           "generator": "planted", "eta": 0.05}, kind)
        gen = {"kind": p["generator"], "seed": int(rng.integers(1 << 31))}
        if p["generator"] == "planted":
            gen["eta"] = float(p["eta"])
        return DPInstance(int(p["n"]), int(p["K"]), float(p["rho"]), float(p["alpha"]),
                          float(p["D"]), generator=gen), None
    raise ConfigError(f"unknown kind {kind!r}")


# --- check ----------------------------------------------------------------------

COMPATIBLE = {
    "function": {"norm-identities", "swap-properties", "ninety-nine", "diamond"},
    "tridist": {"path-trick"},
    "denseset": {"threeap-step"},
    "dpinstance": {"dp"},
}


def check_object(obj, kind: str, experiment: str, seed: int = 0, modulus: int | None = None,
                 source: str = "") -> ExperimentReport:
    """Run the checks of ``experiment`` that apply to a single stored object."""
    if experiment not in NAMES:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {NAMES}")
    if experiment not in COMPATIBLE[kind]:
        raise ConfigError(f"experiment {experiment!r} does not apply to a {kind}; "
                          f"try one of {sorted(COMPATIBLE[kind])}")
    checks = []

    def rec(name, anchor, value, threshold, ok, se=None):
        checks.append(Check(name, anchor, value, threshold, "pass" if ok else "fail", se))

    try:
        if kind == "function" and experiment == "diamond":
            if modulus is None:
                raise ConfigError("diamond checks need a table with a 'modulus' field")
            red = character_swap_reduction(obj, modulus)
            rec("pass_probability", "Thm direct_sum", red.pass_prob, 1.0 / modulus,
                red.pass_prob >= 1.0 / modulus - 1e-12)
            rec("character_identity", "Thm direct_sum", red.identity_gap, 1e-10, red.identity_gap <= 1e-10)
        elif kind == "function":
            s = swap(obj)
            rec("swap_nonnegative", "Def swap", s, 0.0, s >= 0)
            rec("swap_l2_bound", "Lemma l2", s - lp_norm(obj, 2) ** 4, 1e-9, s <= lp_norm(obj, 2) ** 4 + 1e-9)
            if experiment == "norm-identities" and obj.size ** 2 <= 1 << 22:
                avg = sum(box_inner(obj, obj, obj, obj, [i for i in range(obj.n) if m >> i & 1])
                          for m in range(1 << obj.n)) / 2 ** obj.n
                gap = abs(swap_inner_symmetrized(obj, obj, obj, obj) - avg)
                rec("box_average_identity", "Lemma box", gap, 1e-10, gap <= 1e-10)
            if experiment == "swap-properties":
                worst = -np.inf
                for i in range(obj.n):
                    vals = [np.sqrt(swap(restrict(obj, Restriction({i: a}))))
                            for a in range(obj.alphabets[i])]
                    worst = max(worst, np.sqrt(s) - float(np.mean(vals)))
                rec("restriction_monotone", "Lemma valrr", worst, 1e-9, worst <= 1e-9)
            if experiment == "ninety-nine":
                nrm = lp_norm(obj, 2)
                f = obj / nrm if nrm > 0 else obj
                c = 1 - swap(f)
                lam = partition_svd(f, [0])[0].lam if nrm > 0 else 0.0
                _, corr = extract_product_99(f)
                rec("top_singular_value", "Lemma 99induct", lam ** 2 - (1 - 3 * c), -1e-9,
                    lam ** 2 >= 1 - 3 * c - 1e-9)
                rec("product_extraction", "Thm swapnine", corr, 1 - 10 * c, corr >= 1 - 10 * c)
        elif kind == "tridist":
            ok, cert = pairwise_connected(obj)
            rec("pairwise_connected", "Def pathtrick", bool(ok), True, bool(ok))
            if ok and obj.shape[0] == obj.shape[1] == obj.shape[2]:
                res = full_support_pipeline(obj)
                k = obj.shape[0]
                missing = [(a, b) for a in range(k) for b in range(k)
                           if symmetry_witness(res, a, b) is None]
                rec("symmetry_witnesses", "Lemma suppmu", len(missing), 0, not missing)
        elif kind == "denseset":
            S = restricted_three_ap(obj.sigma)
            out = density_increment_step(obj, S, StepParams(), seed)
            rec("increment_step", "Lemma uniform", out.kind, "any outcome", True)
            if out.triple is not None:
                rec("triple_witness", "Thm 3ap", [list(t) for t in out.triple], "valid triple", True)
        elif kind == "dpinstance":
            q, se = dp_pass_prob(obj, 500, seed)
            rec("pass_probability", "Def dp", q, 0.0, q >= 0.0, se)
            r = dp_recover_global(obj, seed=seed)
            rec("recovery_agreement", "Thm dp", r.agreement_rate, 0.0, r.agreement_rate >= 0.0)
    except BudgetError as exc:
        checks.append(Check("truncated", "plumbing", str(exc), None, "fail"))
    checks.sort(key=lambda c: c.name)
    return ExperimentReport({"file": source, "kind": kind, "experiment": experiment, "seed": seed},
                            checks)


def _kind_of_file(path) -> str:
    with open(path) as fh:
        doc = json.load(fh)
    if "alphabets" in doc:
        return "function"
    if "probs" in doc:
        return "tridist"
    if "bits" in doc:
        return "denseset"
    if "K" in doc:
        return "dpinstance"
    raise StoreError(f"{path}: cannot tell which kind of object this file holds")


# --- main -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swapkit", description="Swap-norm toolkit experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a YAML or JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--csv", help="also write per-check rows to this CSV file")
    run.add_argument("--timing", action="store_true", help="include runtime_ms in the report")
    run.add_argument("--out", help="write the JSON lines report here instead of stdout")

    gen = sub.add_parser("gen", help="generate an instance file")
    gen.add_argument("--kind", required=True, choices=sorted(COMPATIBLE))
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--params", nargs="*", default=[], metavar="KEY=VALUE")

    chk = sub.add_parser("check", help="run one experiment's checks on a stored file")
    chk.add_argument("--file", required=True)
    chk.add_argument("--experiment", required=True)
    chk.add_argument("--kind", choices=sorted(COMPATIBLE))
    chk.add_argument("--seed", type=int, default=0)
    return ap


def _emit(report: ExperimentReport, out=None):
    text = report.to_jsonl()
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            with open(args.config) as fh:
                doc = yaml.safe_load(fh)
            cfg = ExperimentConfig.from_dict(doc)
            report = run_experiment(cfg, timing=args.timing)
            _emit(report, args.out)
            if args.csv:
                with open(args.csv, "w") as fh:
                    fh.write(report.to_csv())
            return 0 if report.passed else 1
        if args.command == "gen":
            obj, modulus = generate(args.kind, args.seed, _parse_params(args.params))
            if modulus is not None:
                with open(args.out, "w") as fh:
                    fh.write(obj.to_json(modulus=modulus) + "\n")
            else:
                save_store(obj, args.out)
            return 0
        if args.command == "check":
            kind = args.kind or _kind_of_file(args.file)
            obj = load_store(args.file, kind)
            modulus = None
            if kind == "function":
                with open(args.file) as fh:
                    modulus = json.load(fh).get("modulus")
            report = check_object(obj, kind, args.experiment, args.seed, modulus, args.file)
            _emit(report)
            return 0 if report.passed else 1
    except (ConfigError, StoreError, yaml.YAMLError, json.JSONDecodeError, OSError) as exc:
        print(f"swapkit: error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
