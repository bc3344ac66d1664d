"""Command-line front end.

Commands mirror the library modules: ``entropy`` evaluates profiles,
``region`` dumps halfspace lists, ``lp solve``/``lp verify`` run one layer
program, ``k3 solve``/``k3 check`` drive the three-encoder machinery,
``prove`` certifies an entropy functional, ``sym chain``/``sym solve`` run
the symmetric-case engine, and ``selftest`` executes the bundled acceptance
checks.  Machine-readable JSON goes to stdout (byte-stable for a fixed seed
and inputs), diagnostics to stderr; every internal verification failure
exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from typing import Optional

from . import core, k3, lp, prover, region, selftest, symmetric

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _num(x):
    """Floats as shortest round-trip JSON numbers, rationals as 'p/q'."""
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float):
        return x
    return x


def emit(doc, fmt: str = "json"):
    if fmt == "json":
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        _emit_text(doc)


def _emit_text(doc, indent: int = 0):
    pad = "  " * indent
    if isinstance(doc, dict):
        for key in sorted(doc):
            val = doc[key]
            if isinstance(val, (dict, list)):
                print(f"{pad}{key}:")
                _emit_text(val, indent + 1)
            else:
                print(f"{pad}{key}: {val}")
    elif isinstance(doc, list):
        for val in doc:
            _emit_text(val, indent)
    else:
        print(f"{pad}{doc}")


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise core.DomainError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise core.DomainError(f"{path}: invalid JSON at line {exc.lineno}, "
                               f"column {exc.colno}") from None


def load_profile(args) -> core.EntropyProfile:
    if getattr(args, "source", None):
        return core.build_profile(core.source_from_json(_load_json(args.source)))
    if getattr(args, "profile", None):
        return core.profile_from_json(_load_json(args.profile),
                                      validate=not getattr(args, "no_validate", False))
    raise core.DomainError("one of --source or --profile is required")


def family_to_json(fam: lp.MultiplierFamily) -> dict:
    return {
        "alpha": fam.alpha,
        "entries": [
            {"V": list(core.members(V)), "Vp": list(core.members(Vp)), "c": _num(c)}
            for (V, Vp), c in fam.support()
        ],
    }


def family_from_json(doc, K: int) -> lp.MultiplierFamily:
    try:
        alpha = int(doc["alpha"])
        raw = doc["entries"]
    except KeyError as exc:
        raise core.DomainError(f"multiplier file missing field {exc}") from None
    entries = {}
    for i, e in enumerate(raw):
        try:
            V = core.mask_from_members(int(k) for k in e["V"])
            Vp = core.mask_from_members(int(k) for k in e["Vp"])
            c = core.parse_number(e["c"])
        except KeyError as exc:
            raise core.DomainError(f"entry {i} missing field {exc}") from None
        entries[(V, Vp)] = entries.get((V, Vp), 0) + c
    return lp.MultiplierFamily(K, alpha, entries)


def report_to_json(rep: lp.MultiplierReport) -> dict:
    return {
        "passed": rep.passed,
        "value_ok": rep.value_ok,
        "weight_ok": rep.weight_ok,
        "nonneg_ok": rep.nonneg_ok,
        "value_gap": rep.value_gap,
        "min_entry": _num(rep.min_entry),
    }


def sym_family_to_json(fam: symmetric.SymMultiplierFamily) -> dict:
    return {
        "alpha": fam.alpha,
        "split": fam.split,
        "tail_average": str(fam.tail_average),
        "entries": {
            ",".join(map(str, core.members(V))): str(c)
            for V, c in sorted(fam.entries().items())
        },
    }


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------

def cmd_entropy(args) -> int:
    profile = load_profile(args)
    doc = core.profile_to_json(profile)
    doc["entropies"] = {k: _num(v) for k, v in doc["entropies"].items()}
    poly = core.validate_polymatroid(profile)
    doc["polymatroid"] = {
        "ok": poly.ok,
        "violations": [v.describe() for v in poly.violations],
    }
    sym = core.is_symmetric_entropywise(profile, tol=args.tol)
    doc["symmetric"] = (
        None if sym is None else
        {f"{m},{alpha}": sym.marginal(m, alpha)
         for alpha in range(1, profile.K + 1) for m in range(0, profile.K + 1)}
    )
    emit(doc, args.format)
    return EXIT_OK


def cmd_region(args) -> int:
    profile = load_profile(args)
    alphas = [args.alpha] if args.alpha else None
    emit(region.region_to_json(profile, alphas), args.format)
    return EXIT_OK


def cmd_lp_solve(args) -> int:
    profile = load_profile(args)
    w = lp.parse_weights(args.w, profile.K)
    reg = region.build_layer_region(profile, args.alpha)
    sol = lp.solve_simplex(lp.LPInstance(w, reg, args.alpha), exact=args.exact)
    rep = lp.verify_multiplier(sol.dual, w, profile, args.alpha, sol.value,
                               tol=max(args.tol, 1e-7))
    doc = {
        "alpha": args.alpha,
        "w": [str(x) for x in w],
        "status": sol.status,
        "value": _num(sol.value),
        "primal": [_num(x) for x in sol.primal],
        "dual": family_to_json(sol.dual),
        "verification": report_to_json(rep),
    }
    emit(doc, args.format)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_lp_verify(args) -> int:
    profile = load_profile(args)
    w = lp.parse_weights(args.w, profile.K)
    fam = family_from_json(_load_json(args.multipliers), profile.K)
    if args.value is not None:
        claimed = float(Fraction(args.value))
    else:
        reg = region.build_layer_region(profile, fam.alpha)
        claimed = float(lp.solve_simplex(lp.LPInstance(w, reg, fam.alpha)).value)
    rep = lp.verify_multiplier(fam, w, profile, fam.alpha, claimed, tol=args.tol)
    doc = {"alpha": fam.alpha, "claimed_value": claimed,
           "verification": report_to_json(rep)}
    emit(doc, args.format)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_k3_solve(args) -> int:
    profile = load_profile(args)
    w = lp.parse_weights(args.w, 3)
    sol = k3.solve_layer2(w, profile, tol=args.tol)
    doc = {
        "case": sol.label.label,
        "perm": list(sol.perm),
        "value": _num(sol.solution.value),
        "primal": [_num(x) for x in sol.solution.primal],
        "dual": family_to_json(sol.solution.dual),
        "verification": report_to_json(sol.report),
        "floors": {
            "single": {str(kk): sol.floors.single[kk] for kk in (1, 2, 3)},
            "peer": {str(kk): sol.floors.peer[kk] for kk in (1, 2, 3)},
            "pair": {",".join(map(str, core.members(p))): sol.floors.pair[p]
                     for p in k3.PAIRS},
        },
    }
    emit(doc, args.format)
    return EXIT_OK if sol.report.passed else EXIT_FAIL


def cmd_k3_check(args) -> int:
    profile = load_profile(args)
    rep = k3.check_region_equality(profile)
    doc = {
        "ok": rep.ok,
        "vertices_match": rep.vertices_match,
        "region_vertices": [list(v) for v in rep.region_vertices],
        "floors_vertices": [list(v) for v in rep.floors_vertices],
        "clause_failures": list(rep.clause_failures),
    }
    emit(doc, args.format)
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_prove(args) -> int:
    f = prover.functional_from_json(_load_json(args.functional))
    if args.k is not None:
        if args.k < f.K:
            raise core.DomainError(f"--k {args.k} below the functional arity {f.K}")
        f = prover.EntropyFunctional(args.k, dict(f.coeffs))
    cert = prover.prove_nonneg(f, symmetrize=args.symmetrize)
    emit(prover.certificate_to_json(cert), args.format)
    return EXIT_OK


def _load_symmetric(path: str, tol: float) -> core.SymmetricProfile:
    profile = core.profile_from_json(_load_json(path))
    sym = core.is_symmetric_entropywise(profile, tol=tol)
    if sym is None:
        raise core.DomainError(f"{path}: profile is not symmetric entropy-wise")
    return sym


def cmd_sym_chain(args) -> int:
    K = args.K
    w = lp.parse_weights(args.w, K)
    chain = symmetric.build_chain(w, K)
    ws, _ = lp.sort_weights(w)
    doc = {
        "K": K,
        "w": [str(x) for x in w],
        "levels": [sym_family_to_json(f) for f in chain],
        "family_checks": [
            {"alpha": f.alpha,
             "ok": symmetric.verify_family(f, ws, chain[i - 1] if i else None).ok}
            for i, f in enumerate(chain)
        ],
    }
    rep = symmetric.verify_sym_chain_inequality(chain)
    doc["steps"] = [
        {"lower": s.lower_alpha, "upper": s.upper_alpha,
         "status": s.certificate.status,
         "lambdas": ({n: str(v) for n, v in sorted(s.certificate.lambdas.items())}
                     if s.certificate.proved else None)}
        for s in rep.steps
    ]
    doc["ok"] = rep.ok and all(c["ok"] for c in doc["family_checks"])
    if args.H:
        H = _load_symmetric(args.H, args.tol)
        if H.K != K:
            raise core.DomainError(f"profile K={H.K} does not match --K {K}")
        doc["closed_forms"] = []
        for alpha in range(1, K + 1):
            sol = symmetric.closed_form_sym(w, H, alpha, with_family=False)
            doc["closed_forms"].append({
                "alpha": alpha, "value": sol.value,
                "primal": [_num(x) for x in sol.primal],
            })
    emit(doc, args.format)
    return EXIT_OK if doc["ok"] else EXIT_FAIL


def cmd_sym_solve(args) -> int:
    H = _load_symmetric(args.H, args.tol)
    w = lp.parse_weights(args.w, H.K)
    feas = symmetric.feasibility_check_rl(
        H, args.alpha, lp.weight_class(lp.sort_weights(w)[0], args.alpha)[0])
    sol = symmetric.closed_form_sym(w, H, args.alpha, check_feasibility=False)
    doc = {
        "alpha": args.alpha,
        "split": sol.split,
        "tail_average": str(sol.tail_average),
        "value": sol.value,
        "primal": [_num(x) for x in sol.primal],
        "family": sym_family_to_json(sol.family) if sol.family else None,
        "feasibility": {"ok": feas.ok, "failures": list(feas.failures)},
    }
    emit(doc, args.format)
    return EXIT_OK if feas.ok else EXIT_FAIL


def cmd_selftest(args) -> int:
    if args.mutate:
        try:
            label, col_text = args.mutate.split(":")
            col = int(col_text)
        except ValueError:
            raise core.DomainError("--mutate expects LABEL:COLUMN, e.g. 2C:0") from None
        w = (Fraction(5), Fraction(4), Fraction(2)) \
            if k3.weight_region_of_label(label) != "W1" else \
            (Fraction(8), Fraction(3), Fraction(2))
        detected = selftest.mutation_detected(label, col, w)
        emit({"label": label, "column": col, "detected": detected}, args.format)
        if detected:
            print(f"mutation in row {label} detected as intended", file=sys.stderr)
            return EXIT_FAIL   # the corrupted table must fail
        print(f"mutation in row {label} went undetected", file=sys.stderr)
        return EXIT_FAIL
    only = args.criteria.split(",") if args.criteria else None
    results = selftest.run_selftest(seed=args.seed, quick=args.quick, only=only,
                                    report=lambda line: print(line), jobs=args.jobs)
    ok = all(r.ok for r in results)
    if not ok:
        first = next(r for r in results if not r.ok)
        print(f"selftest failed at: {first.name}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _default_seed() -> int:
    env = os.environ.get("MLDC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise core.DomainError(f"MLDC_SEED must be an integer, got {env!r}") from None
    return 0


def _add_common(parser: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int,
                        default=d if suppress else None,
                        help="seed for randomized checks (default: MLDC_SEED or 0)")
    parser.add_argument("--tol", type=float,
                        default=d if suppress else core.ENTROPY_TOL,
                        help="entropy comparison tolerance in bits")
    parser.add_argument("--format", choices=("json", "text"),
                        default=d if suppress else "json")
    parser.add_argument("--jobs", type=int, default=d if suppress else 1,
                        help="parallel workers for batch commands (output order fixed)")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="dmldc",
        description="Rate regions and entropy-inequality certificates for "
                    "distributed multilevel diversity coding.")
    _add_common(top, suppress=False)
    # The same flags are accepted after any subcommand and take precedence.
    common = argparse.ArgumentParser(add_help=False)
    _add_common(common, suppress=True)
    sub = top.add_subparsers(dest="command", required=True)

    def add_inputs(p, profile_ok=True):
        p.add_argument("--source", help="layered-source JSON file")
        if profile_ok:
            p.add_argument("--profile", help="abstract entropy-profile JSON file")
            p.add_argument("--no-validate", action="store_true",
                           help="skip the polymatroid gate on abstract profiles")

    p = sub.add_parser("entropy", parents=[common],
                       help="evaluate all subset entropies of a source")
    add_inputs(p)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("region", parents=[common],
                       help="dump the per-layer halfspace lists")
    add_inputs(p)
    p.add_argument("--alpha", type=int, default=None)
    p.set_defaults(func=cmd_region)

    p_lp = sub.add_parser("lp", help="layer linear programs")
    lp_sub = p_lp.add_subparsers(dest="lp_command", required=True)
    p = lp_sub.add_parser("solve", parents=[common], help="solve one layer LP by simplex")
    add_inputs(p)
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--w", required=True, help="weights, e.g. 3,1,1 or 1/2,1/3,0")
    p.add_argument("--exact", action="store_true",
                   help="exact rational mode (requires rational profile entries)")
    p.set_defaults(func=cmd_lp_solve)
    p = lp_sub.add_parser("verify", parents=[common], help="check a multiplier family file")
    add_inputs(p)
    p.add_argument("--multipliers", required=True)
    p.add_argument("--w", required=True)
    p.add_argument("--value", default=None,
                   help="claimed optimal value (default: computed by simplex)")
    p.set_defaults(func=cmd_lp_verify)

    p_k3 = sub.add_parser("k3", help="three-encoder middle-level machinery")
    k3_sub = p_k3.add_subparsers(dest="k3_command", required=True)
    p = k3_sub.add_parser("solve", parents=[common], help="closed-form middle-level solve")
    add_inputs(p)
    p.add_argument("--w", required=True)
    p.set_defaults(func=cmd_k3_solve)
    p = k3_sub.add_parser("check", parents=[common], help="region equality and pair-form clauses")
    add_inputs(p)
    p.set_defaults(func=cmd_k3_check)

    p = sub.add_parser("prove", parents=[common],
                       help="certify an entropy functional nonnegative")
    p.add_argument("--functional", required=True)
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_prove)

    p_sym = sub.add_parser("sym", help="symmetric-source engine")
    sym_sub = p_sym.add_subparsers(dest="sym_command", required=True)
    p = sym_sub.add_parser("chain", parents=[common], help="build and certify a multiplier chain")
    p.add_argument("--w", required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--H", default=None, help="abstract profile file (symmetric)")
    p.set_defaults(func=cmd_sym_chain)
    p = sym_sub.add_parser("solve", parents=[common], help="closed-form symmetric layer solve")
    p.add_argument("--w", required=True)
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--H", required=True)
    p.set_defaults(func=cmd_sym_solve)

    p = sub.add_parser("selftest", parents=[common],
                       help="run the bundled acceptance checks")
    p.add_argument("--quick", action="store_true", help="reduced sample sizes")
    p.add_argument("--criteria", default=None, help="comma list, e.g. 1,2,5")
    p.add_argument("--mutate", default=None, metavar="LABEL:COLUMN",
                   help="flip one dual-row coefficient and expect failure")
    p.set_defaults(func=cmd_selftest)
    return top


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = _default_seed()
    try:
        return args.func(args)
    except (core.DomainError, core.VerificationError, lp.SimplexError,
            symmetric.CanonicalMemberError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
