"""Bundled acceptance checks.

Each criterion is a standalone function returning a ``CriterionResult``; the
CLI ``selftest`` command and the acceptance test module both run them.  All
randomness flows from one explicit seed, so two runs with the same seed do
identical work and produce identical reports.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import core, k3, lp, prover, region, symmetric

F = Fraction

VALUE_TOL = 1e-8
SPOT_TOL = 1e-9


@dataclass
class CriterionResult:
    name: str
    ok: bool
    checks: int
    elapsed: float
    detail: str = ""
    failures: tuple[str, ...] = ()

    def line(self) -> str:
        mark = "PASS" if self.ok else "FAIL"
        msg = f"{mark}  {self.name}  ({self.checks} checks, {self.elapsed:.1f}s)"
        if self.detail:
            msg += f"  {self.detail}"
        if not self.ok and self.failures:
            msg += f"  first failure: {self.failures[0]}"
        return msg


def _rng(seed: int, salt: int) -> np.random.Generator:
    return np.random.default_rng([seed, salt])


def random_k3_source(rng: np.random.Generator) -> core.LayeredSource:
    """Three layers with components of alphabet size 2 or 3 each."""
    layers = []
    for _ in range(3):
        sizes = tuple(int(rng.integers(2, 4)) for _ in range(3))
        p = rng.random(int(np.prod(sizes)))
        p /= p.sum()
        layers.append(core.LayerPmf(sizes, tuple(float(x) for x in p)))
    return core.LayeredSource(3, tuple(layers))


def random_sorted_weights(rng: np.random.Generator, K: int,
                          positive: bool = False) -> tuple[Fraction, ...]:
    while True:
        vals = sorted((F(int(rng.integers(0, 32)), int(rng.integers(1, 8)))
                       for _ in range(K)), reverse=True)
        if positive and vals[-1] == 0:
            continue
        if any(v != 0 for v in vals):
            return tuple(vals)


def weights_in_region(rng: np.random.Generator, kind: str) -> tuple[Fraction, ...]:
    """Sorted rational weights inside one of the two sorted-cone parts."""
    while True:
        w = random_sorted_weights(rng, 3, positive=True)
        if kind == "W0" and w[0] <= w[1] + w[2]:
            return w
        if kind == "W1" and w[0] > w[1] + w[2]:
            return w
        if kind == "any":
            return w


def case_c_anchor_source() -> core.LayeredSource:
    """Components 1 and 3 share a fair bit; component 2 sees it through a
    one-in-four flip.  Pair {1,3} realizes the conditional form, which is the
    structure the worked middle-level example needs."""
    probs = [F(0)] * 8
    probs[0b000] = F(3, 8)
    probs[0b010] = F(1, 8)
    probs[0b111] = F(3, 8)
    probs[0b101] = F(1, 8)
    noisy = core.LayerPmf((2, 2, 2), tuple(probs))
    iid = core.LayerPmf((2, 2, 2), tuple(F(1, 8) for _ in range(8)))
    return core.LayeredSource(3, (iid, noisy, iid))


def iid_bits_source(K: int) -> core.LayeredSource:
    layer = core.LayerPmf((2,) * K, tuple(F(1, 2 ** K) for _ in range(2 ** K)))
    return core.LayeredSource(K, tuple(layer for _ in range(K)))


def exchangeable_symmetric_profile(K: int, rng: np.random.Generator) -> core.SymmetricProfile:
    """Per layer, a pmf that depends on the Hamming weight only, hence exactly
    exchangeable; only the prefix-subset entropies are needed."""
    vals = {}
    for alpha in range(1, K + 1):
        q = rng.random(K + 1)
        q /= q.sum()
        cells = []
        for x in range(2 ** K):
            wt = bin(x).count("1")
            cells.append(q[wt] / math.comb(K, wt))
        layer = core.LayerPmf((2,) * K, tuple(cells))
        for m in range(1, K + 1):
            vals[(m, alpha)] = core.entropy_of_subset(layer, (1 << m) - 1)
    return core.SymmetricProfile(K, vals)


def bottom_family(w: Sequence[Fraction], K: int) -> lp.MultiplierFamily:
    """Level-1 multipliers: each weight on its own singleton constraint."""
    return lp.MultiplierFamily(K, 1, {(1 << (k - 1), 0): w[k - 1]
                                      for k in range(1, K + 1) if w[k - 1] != 0})


def top_family(w: Sequence[Fraction], K: int) -> lp.MultiplierFamily:
    """Level-K multipliers for sorted weights: chain-rule prefix constraints."""
    if not lp.is_sorted_desc(w):
        raise core.DomainError("top_family requires sorted weights")
    entries = {}
    for k in range(1, K + 1):
        c = w[k - 1] - (w[k] if k < K else F(0))
        if c != 0:
            V = core.mask_from_members(range(1, k + 1))
            Vp = core.mask_from_members(range(k + 1, K + 1))
            entries[(V, Vp)] = c
    return lp.MultiplierFamily(K, K, entries)


# ---------------------------------------------------------------------------
# Criterion 1: closed forms match the generic simplex on random K=3 sources
# ---------------------------------------------------------------------------

def criterion_1(seed: int = 0, n_sources: int = 200, n_weights: int = 50,
                census: Optional[Counter] = None) -> CriterionResult:
    t0 = time.time()
    rng = _rng(seed, 1)
    failures: list[str] = []
    checks = 0
    census = census if census is not None else Counter()
    for s in range(n_sources):
        src = random_k3_source(rng)
        prof = core.build_profile(src)
        regions = {a: region.build_layer_region(prof, a) for a in (1, 2, 3)}
        for t in range(n_weights):
            w = random_sorted_weights(rng, 3)
            try:
                sol2 = k3.solve_layer2(w, prof)
                census[sol2.label.label] += 1
                simp2 = lp.solve_simplex(lp.LPInstance(w, regions[2], 2))
                cf1 = lp.closed_form_alpha1(w, prof)
                simp1 = lp.solve_simplex(lp.LPInstance(w, regions[1], 1))
                cf3 = lp.closed_form_alphaK(w, prof)
                simp3 = lp.solve_simplex(lp.LPInstance(w, regions[3], 3))
            except (core.VerificationError, lp.SimplexError) as exc:
                failures.append(f"source {s}, w={w}: {exc}")
                continue
            for alpha, closed, simp in ((2, sol2.solution, simp2),
                                        (1, cf1, simp1), (3, cf3, simp3)):
                checks += 1
                gap = abs(closed.value - simp.value)
                if gap > VALUE_TOL:
                    failures.append(
                        f"source {s}, w={w}, level {alpha}: closed {closed.value!r} "
                        f"vs simplex {simp.value!r} (gap {gap:.3g})")
    detail = f"labels seen: {dict(sorted(census.items()))}"
    return CriterionResult("1 duality sweep (closed forms vs simplex)",
                           not failures, checks, time.time() - t0, detail,
                           tuple(failures[:5]))


# ---------------------------------------------------------------------------
# Criterion 2: chain certificates for all seventeen dual rows
# ---------------------------------------------------------------------------

def criterion_2(seed: int = 0, samples_per_label: int = 5,
                census: Optional[Counter] = None) -> CriterionResult:
    t0 = time.time()
    rng = _rng(seed, 2)
    failures: list[str] = []
    checks = 0
    for label in k3.FEASIBLE_LABELS:
        kind = k3.weight_region_of_label(label)
        for t in range(samples_per_label):
            w = weights_in_region(rng, kind)
            try:
                fam2 = k3.dual_from_row(label, w)
            except core.VerificationError as exc:
                failures.append(f"{label}, w={w}: {exc}")
                continue
            sums = fam2.per_component_sums()
            if [F(x) for x in sums] != list(w):
                failures.append(f"{label}, w={w}: weight identity broken: {sums}")
            if fam2.min_entry() < 0:
                failures.append(f"{label}, w={w}: negative entry {fam2.min_entry()}")
            chain = [bottom_family(w, 3), fam2, top_family(w, 3)]
            rep = prover.verify_star_chain(chain)
            checks += len(rep.steps)
            for step in rep.steps:
                if not step.certificate.proved:
                    failures.append(
                        f"{label}, w={w}: step {step.lower_alpha}->{step.upper_alpha} "
                        "not provable")
    if census is None:
        census = Counter()
        crng = _rng(seed, 21)
        for s in range(40):
            prof = core.build_profile(random_k3_source(crng))
            for _ in range(10):
                w = random_sorted_weights(crng, 3)
                try:
                    census[k3.solve_layer2(w, prof).label.label] += 1
                except k3.VoidCaseError as exc:
                    failures.append(f"void label from genuine source: {exc}")
    void_seen = set(census) & set(k3.VOID_LABELS)
    if void_seen:
        failures.append(f"void labels arose from genuine sources: {sorted(void_seen)}")
    checks += sum(census.values())
    return CriterionResult("2 dual-row certificate sweep (all 17 labels)",
                           not failures, checks, time.time() - t0,
                           f"{len(k3.FEASIBLE_LABELS)} labels x {samples_per_label} weights",
                           tuple(failures[:5]))


# ---------------------------------------------------------------------------
# Criterion 3: region equality for the middle level of three encoders
# ---------------------------------------------------------------------------

def criterion_3(seed: int = 0, n_sources: int = 500) -> CriterionResult:
    t0 = time.time()
    rng = _rng(seed, 3)
    failures: list[str] = []
    for s in range(n_sources):
        p = rng.random(8)
        p /= p.sum()
        layer = core.LayerPmf((2, 2, 2), tuple(float(x) for x in p))
        prof = core.build_profile(core.LayeredSource(3, (layer, layer, layer)))
        rep = k3.check_region_equality(prof)
        if not rep.ok:
            head = rep.clause_failures[0] if rep.clause_failures else "vertex sets differ"
            failures.append(f"source {s}: {head}")
    return CriterionResult("3 region equality (halfspace vs floors form)",
                           not failures, n_sources, time.time() - t0, "",
                           tuple(failures[:5]))


# ---------------------------------------------------------------------------
# Criterion 4: symmetric chains for K = 2..6
# ---------------------------------------------------------------------------

def criterion_4(seed: int = 0, n_weights: int = 50, Ks: Sequence[int] = (2, 3, 4, 5, 6),
                spot_trials: int = 10_000) -> CriterionResult:
    t0 = time.time()
    rng = _rng(seed, 4)
    failures: list[str] = []
    checks = 0

    def run_chain(w: tuple[Fraction, ...], K: int, tag: str):
        nonlocal checks
        try:
            chain = symmetric.build_chain(w, K)
        except (core.VerificationError, core.DomainError) as exc:
            failures.append(f"{tag}: build failed: {exc}")
            return
        for i, fam in enumerate(chain):
            rep = symmetric.verify_family(fam, w, chain[i - 1] if i else None)
            checks += 1
            if not rep.ok:
                failures.append(f"{tag}, level {fam.alpha}: {rep.failures[0]}")
        if K <= 5:
            rep = symmetric.verify_sym_chain_inequality(chain)
            checks += len(rep.steps)
            for step in rep.steps:
                if not step.certificate.proved:
                    failures.append(
                        f"{tag}: step {step.lower_alpha}->{step.upper_alpha} not provable")
        else:
            for lo, hi in zip(chain, chain[1:]):
                f = lo.as_functional() - hi.as_functional()
                mn = prover.numeric_spotcheck(f, spot_trials, seed=seed)
                checks += 1
                if mn < -SPOT_TOL:
                    failures.append(
                        f"{tag}: step {lo.alpha}->{hi.alpha} spotcheck min {mn:.3g}")

    for K in Ks:
        for t in range(n_weights):
            w = random_sorted_weights(rng, K, positive=True)
            run_chain(w, K, f"K={K} trial {t}")
        # trailing-zero path, including an all-zero tail of length > 1
        zero_tails = [random_sorted_weights(rng, K - 1, positive=True) + (F(0),)]
        if K >= 3:
            zero_tails.append(random_sorted_weights(rng, K - 2, positive=True) + (F(0), F(0)))
        zero_tails.append(tuple(F(0) for _ in range(K)))
        for i, w in enumerate(zero_tails):
            run_chain(w, K, f"K={K} zero-tail {i}")
    return CriterionResult("4 symmetric chains (build, identities, certificates)",
                           not failures, checks, time.time() - t0,
                           f"K in {tuple(Ks)}, {n_weights} weights each",
                           tuple(failures[:5]))


# ---------------------------------------------------------------------------
# Criterion 5: hand-checkable anchors
# ---------------------------------------------------------------------------

def criterion_5(seed: int = 0) -> CriterionResult:
    t0 = time.time()
    failures: list[str] = []

    prof = core.build_profile(iid_bits_source(3))
    sv = region.support_value(prof, lp.as_weights([1, 1, 1]))
    if abs(sv - 9.0) > 1e-12:
        failures.append(f"(a) iid support value {sv!r} != 9.0")

    prof_c = core.build_profile(case_c_anchor_source())
    floors = k3.compute_rate_floors(prof_c)
    m = core.mask_from_members
    h1_2 = float(prof_c.cond(2, m([1]), m([2])))
    h2 = float(prof_c.H(2, m([2])))
    h3_2 = float(prof_c.cond(2, m([3]), m([2])))
    primal = k3.primal_from_row(2, floors)
    if max(abs(primal[0] - h1_2), abs(primal[1] - h2), abs(primal[2] - h3_2)) > 1e-12:
        failures.append(f"(b) middle-level row does not reduce to "
                        f"(H(U1|U2), H(U2), H(U3|U2)): {primal}")
    for wv in ((1, 1, 1), (5, 4, 2), (3, 3, 1)):
        w = lp.as_weights(wv)
        value = float(w[0]) * h1_2 + float(w[1]) * h2 + float(w[2]) * h3_2
        dual = k3.dual_from_row("2C", w, peers=floors.peer)
        want = {(m([1]), m([2])): w[0] - w[1], (m([3]), m([2])): w[2],
                (m([1, 2]), 0): w[1]}
        got = dict(dual.entries)
        want = {k: v for k, v in want.items() if v != 0}
        if got != want:
            failures.append(f"(b) 2C dual coefficients off at w={wv}: {got}")
        rep = lp.verify_multiplier(dual, w, prof_c, 2, value)
        if not rep.passed:
            failures.append(f"(b) 2C dual fails optimality at w={wv}")
        simp = lp.solve_simplex(
            lp.LPInstance(w, region.build_layer_region(prof_c, 2), 2))
        if abs(simp.value - value) > 1e-9:
            failures.append(f"(b) 2C value {value} is not the optimum {simp.value}")

    chain = symmetric.build_chain(lp.as_weights([1, 1, 1]), 3)
    lvl2 = chain[1]
    want_top = {p: F(1, 2) for p in k3.PAIRS}
    if dict(lvl2.top) != want_top or lvl2.prefix:
        failures.append(f"(c) uniform-weight recursion level 2 gave {dict(lvl2.top)}, "
                        "expected 1/2 on each pair")
    return CriterionResult("5 hand-checkable anchors", not failures, 3 + 3 * 3,
                           time.time() - t0, "", tuple(failures[:5]))


# ---------------------------------------------------------------------------
# Criterion 6: prover soundness and the extended subset-average inequality
# ---------------------------------------------------------------------------

def extended_han_functional(K: int, V: int, i: int) -> prover.EntropyFunctional:
    """Drop-one-rank sum minus its lower bound; nonnegative for all sources.

    sum_{tau=i+1}^{|V|} H(X at ranks [1:|V|] minus tau)
      - (|V|-1-i) H(X_V) - H(X at ranks [1:i]).
    """
    size = core.subset_size(V)
    if not 0 <= i <= size - 1:
        raise core.DomainError(f"rank split {i} outside [0:{size - 1}]")
    coeffs: dict[int, Fraction] = {}
    for tau in range(i + 1, size + 1):
        sub = core.ranked_subset(V, [t for t in range(1, size + 1) if t != tau])
        if sub:
            coeffs[sub] = coeffs.get(sub, F(0)) + 1
    coeffs[V] = coeffs.get(V, F(0)) - (size - 1 - i)
    prefix = core.ranked_subset(V, range(1, i + 1))
    if prefix:
        coeffs[prefix] = coeffs.get(prefix, F(0)) - 1
    return prover.EntropyFunctional(K, coeffs)


def criterion_6(seed: int = 0, n_functionals: int = 40, max_han_K: int = 5,
                spot_trials: int = 2000) -> CriterionResult:
    t0 = time.time()
    rng = _rng(seed, 6)
    failures: list[str] = []
    checks = 0

    for t in range(n_functionals):
        K = int(rng.integers(2, 4))
        coeffs = {}
        for V in core.subsets(K):
            num = int(rng.integers(-2, 3))
            if num:
                coeffs[V] = F(num, int(rng.integers(1, 4)))
        if not coeffs:
            continue
        f = prover.EntropyFunctional(K, coeffs)
        cert = prover.prove_nonneg(f)
        checks += 1
        if cert.proved:
            if cert.replay().coeffs != f.coeffs:
                failures.append(f"functional {t}: replay mismatch")
            mn = prover.numeric_spotcheck(f, spot_trials, seed=seed, K=K)
            if mn < -SPOT_TOL:
                failures.append(f"functional {t}: proved but sampled min {mn:.3g}")
        else:
            h = cert.counterexample
            if core.set_function_violations(h, K, tol=0):
                failures.append(f"functional {t}: counterexample outside the cone")
            if float(f.evaluate(h)) >= -1e-12:
                failures.append(f"functional {t}: counterexample not negative enough")

    for K in range(2, max_han_K + 1):
        for V in core.subsets(K):
            size = core.subset_size(V)
            for i in range(size):
                f = extended_han_functional(K, V, i)
                cert = prover.prove_nonneg(f)
                checks += 1
                if not cert.proved:
                    failures.append(
                        f"extended-average instance K={K}, V={core.members(V)}, i={i} "
                        "not provable")
    return CriterionResult("6 prover soundness + extended subset-average family",
                           not failures, checks, time.time() - t0,
                           f"{n_functionals} random functionals, ranks up to K={max_han_K}",
                           tuple(failures[:5]))


# ---------------------------------------------------------------------------
# Criterion 7: mutation sensitivity of the dual-row catalogue
# ---------------------------------------------------------------------------

def mutation_detected(label: str, col: int, w: Sequence[Fraction]) -> bool:
    """True when flipping the sign of one row coefficient breaks a check."""
    fam = k3.dual_from_row(label, w, mutate=col)
    sums = fam.per_component_sums()
    if [F(x) for x in sums] != list(lp.as_weights(w)):
        return True
    if fam.min_entry() < 0:
        return True
    chain = [bottom_family(w, 3), fam, top_family(w, 3)]
    rep = prover.verify_star_chain(chain)
    return not rep.ok


def criterion_7(seed: int = 0, samples: int = 3) -> CriterionResult:
    t0 = time.time()
    rng = _rng(seed, 7)
    failures: list[str] = []
    checks = 0
    interior = {"W0": (F(5), F(4), F(2)), "W1": (F(8), F(3), F(2))}
    for label in k3.FEASIBLE_LABELS:
        kind = k3.weight_region_of_label(label)
        kinds = ("W0", "W1") if kind == "any" else (kind,)
        cols = [j for j, form in enumerate(k3._DUAL_ROWS[label]) if any(form)]
        for col in cols:
            checks += 1
            witnesses = [interior[k] for k in kinds]
            witnesses += [weights_in_region(rng, kinds[0]) for _ in range(samples - 1)]
            if not any(mutation_detected(label, col, w) for w in witnesses):
                failures.append(f"sign flip of column {col} in row {label} undetected")
    return CriterionResult("7 mutation sensitivity of the dual rows",
                           not failures, checks, time.time() - t0, "",
                           tuple(failures[:5]))


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

CRITERIA: dict[str, Callable[..., CriterionResult]] = {
    "1": criterion_1,
    "2": criterion_2,
    "3": criterion_3,
    "4": criterion_4,
    "5": criterion_5,
    "6": criterion_6,
    "7": criterion_7,
}

QUICK_KWARGS = {
    "1": dict(n_sources=30, n_weights=10),
    "2": dict(samples_per_label=2),
    "3": dict(n_sources=60),
    "4": dict(n_weights=5, Ks=(2, 3, 4), spot_trials=2000),
    "5": dict(),
    "6": dict(n_functionals=10, max_han_K=4, spot_trials=500),
    "7": dict(samples=1),
}


def _run_criterion(name: str, seed: int, quick: bool) -> CriterionResult:
    kwargs = dict(QUICK_KWARGS[name]) if quick else {}
    return CRITERIA[name](seed=seed, **kwargs)


def run_selftest(seed: int = 0, quick: bool = False,
                 only: Optional[Sequence[str]] = None,
                 report: Optional[Callable[[str], None]] = print,
                 jobs: int = 1) -> list[CriterionResult]:
    names = list(CRITERIA) if not only else [str(n) for n in only]
    for name in names:
        if name not in CRITERIA:
            raise core.DomainError(f"unknown criterion {name!r}")
    results: list[CriterionResult] = []
    if jobs > 1:
        # Criteria are independent; results are reported in canonical order.
        # Criterion 2 recomputes its own label census in this mode.
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_criterion, name, seed, quick) for name in names]
            for fut in futures:
                res = fut.result()
                results.append(res)
                if report:
                    report(res.line())
        return results
    census: Counter = Counter()
    for name in names:
        kwargs = dict(QUICK_KWARGS[name]) if quick else {}
        if name == "1":
            kwargs["census"] = census
        if name == "2" and "1" in names[:names.index("2")]:
            kwargs["census"] = census
        res = CRITERIA[name](seed=seed, **kwargs)
        results.append(res)
        if report:
            report(res.line())
    return results
