"""Closed forms and multiplier chains for entropy-symmetric sources.

When every subset entropy depends only on subset cardinality, the layer LP
collapses: one constraint per nonempty subset up to size alpha, with a
right-hand side that is a conditional prefix entropy.  The optimal rates
split at the weight-cone index l: the first l components pay chain-rule
increments, the rest share the remaining conditional entropy evenly.  The
matching multiplier families put fixed values on the prefix sets [1:k] and
spread a tail average over the size-alpha sets containing [1:l]; a recursive
construction transports a valid family at level alpha to one at alpha - 1
while provably not increasing the induced entropy functional on any joint
distribution.  This module builds those chains for arbitrary K, checks every
family identity in exact rationals, and certifies the level-to-level
inequalities through the prover.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from . import lp, prover
from .core import (ENTROPY_TOL, DomainError, SymmetricProfile, VerificationError,
                   full_mask, mask_from_members, members, ranked_subset,
                   relabel_mask, subset_size, subsets)


class CanonicalMemberError(RuntimeError):
    """The standalone feasibility construction found no admissible family."""


def prefix_mask(k: int) -> int:
    return (1 << k) - 1


def top_support(K: int, alpha: int, split: int) -> list[int]:
    """Size-alpha subsets of [1:K] containing the first ``split`` components."""
    base = prefix_mask(split)
    rest = [k for k in range(split + 1, K + 1)]
    return [base | mask_from_members(c)
            for c in itertools.combinations(rest, alpha - split)]


@dataclass(frozen=True)
class SymMultiplierFamily:
    """Multiplier family of one level for a symmetric source.

    ``prefix[k]`` rides on the set [1:k] for k in [1:split]; ``top[V]`` on
    the size-alpha sets containing [1:split]; every other set carries zero.
    ``perm`` records the relabelling into the sorted weight space (identity
    when the weights were already sorted).
    """

    K: int
    alpha: int
    split: int
    tail_average: Fraction
    prefix: dict[int, Fraction]
    top: dict[int, Fraction]
    perm: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.split <= self.alpha - 1:
            raise DomainError(f"split {self.split} outside [0:{self.alpha - 1}]")
        object.__setattr__(self, "prefix",
                           {int(k): Fraction(v) for k, v in dict(self.prefix).items()})
        object.__setattr__(self, "top",
                           {int(V): Fraction(v) for V, v in dict(self.top).items()})
        if set(self.prefix) != set(range(1, self.split + 1)):
            raise DomainError("prefix must cover exactly [1:split]")
        allowed = set(top_support(self.K, self.alpha, self.split))
        if not set(self.top) <= allowed:
            raise DomainError("top support outside the admissible size-alpha sets")
        if not self.perm:
            object.__setattr__(self, "perm", tuple(range(1, self.K + 1)))

    def entry(self, V: int) -> Fraction:
        for k, v in self.prefix.items():
            if V == prefix_mask(k):
                return v
        return self.top.get(V, Fraction(0))

    def entries(self) -> dict[int, Fraction]:
        out = {prefix_mask(k): v for k, v in self.prefix.items() if v != 0}
        for V, v in self.top.items():
            if v != 0:
                out[V] = out.get(V, Fraction(0)) + v
        return out

    def per_component_sums(self) -> list[Fraction]:
        sums = [Fraction(0)] * self.K
        for V, c in self.entries().items():
            for k in members(V):
                sums[k - 1] += c
        return sums

    def as_functional(self, original_labels: bool = False) -> prover.EntropyFunctional:
        coeffs = self.entries()
        if original_labels:
            coeffs = {relabel_mask(V, self.perm): c for V, c in coeffs.items()}
        return prover.EntropyFunctional(self.K, coeffs)


def level_stats(w: Sequence[Fraction], K: int) -> list[tuple[int, Fraction]]:
    """(split index, tail average) for every level of a sorted weight vector."""
    return [lp.weight_class(w, alpha) for alpha in range(1, K + 1)]


def top_level_family(w: Sequence[Fraction]) -> SymMultiplierFamily:
    """The level-K family: chain-rule differences on the prefix sets.

    Beyond the split index the sorted weights are forced constant, equal to
    the tail average, so the only possibly nonzero top entry is the full set
    at that constant.
    """
    K = len(w)
    l, lam = lp.weight_class(w, K)
    prefix = {}
    for k in range(1, l + 1):
        prefix[k] = (w[k - 1] - w[k]) if k < l else (w[l - 1] - lam)
    top = {full_mask(K): lam} if lam != 0 else {}
    return SymMultiplierFamily(K, K, l, lam, prefix, top)


@dataclass(frozen=True)
class StepStats:
    """Bookkeeping of one recursion step from level alpha to alpha - 1."""

    alpha: int
    split_lower: int
    tail_average_lower: Fraction
    transfer: Fraction        # the slack moved between prefix levels; >= 0


def transfer_stats(fam: SymMultiplierFamily, w: Sequence[Fraction]) -> StepStats:
    alpha = fam.alpha
    if alpha < 2:
        raise DomainError("no step below level 1")
    l_b, lam_b = lp.weight_class(w, alpha - 1)
    acc = Fraction(0)
    for k in range(l_b + 1, fam.split + 1):
        acc += (alpha - 1 - k) * fam.prefix[k]
    transfer = (fam.tail_average - acc) / (alpha - 1 - l_b)
    return StepStats(alpha, l_b, lam_b, transfer)


def recurse_multiplier(fam: SymMultiplierFamily,
                       w: Sequence[Fraction]) -> SymMultiplierFamily:
    """Transport a valid family one level down (exact rationals).

    Each top set of the lower level collects the transfer share of the upper
    sets containing it plus the drop-one-rank redistribution driven by the
    upper prefix values.  Requires a strictly positive tail average; the
    all-zero-tail situation is handled by the trailing-zero reduction in
    ``build_chain`` instead.
    """
    if fam.tail_average <= 0:
        raise DomainError("recursion needs a positive tail average; "
                          "use the trailing-zero reduction")
    w = lp.as_weights(w)
    if len(w) != fam.K or not lp.is_sorted_desc(w):
        raise DomainError("recursion requires the sorted weight vector of the family")
    alpha, K = fam.alpha, fam.K
    stats = transfer_stats(fam, w)
    l_b, lam_b, theta = stats.split_lower, stats.tail_average_lower, stats.transfer
    lam_a = fam.tail_average

    prefix = {}
    for k in range(1, l_b + 1):
        prefix[k] = (w[k - 1] - w[k]) if k < l_b else (w[l_b - 1] - lam_b)

    top: dict[int, Fraction] = {V: Fraction(0) for V in top_support(K, alpha - 1, l_b)}
    ratio = theta / lam_a
    if ratio != 0:
        for V, c in fam.top.items():
            if c == 0:
                continue
            for drop in members(V):
                Vp = V & ~(1 << (drop - 1))
                if Vp in top:
                    top[Vp] += ratio * c
    for V, c in fam.top.items():
        if c == 0:
            continue
        for k in range(l_b + 1, fam.split + 1):
            ck = fam.prefix[k]
            if ck == 0:
                continue
            for tau in range(k + 1, alpha + 1):
                Vp = ranked_subset(V, [t for t in range(1, alpha + 1) if t != tau])
                if Vp in top:
                    top[Vp] += (c * ck) / lam_a

    out = SymMultiplierFamily(K, alpha - 1, l_b, lam_b, prefix,
                              {V: v for V, v in top.items() if v != 0}, fam.perm)
    report = verify_family(out, w)
    if not report.ok:
        raise VerificationError(
            f"recursed family at level {alpha - 1} failed membership: {report.failures}")
    return out


def _embed(fam: SymMultiplierFamily, K: int,
           w: Sequence[Fraction]) -> SymMultiplierFamily:
    """Lift a family over [1:K-1] to ground set [1:K] (extra component idle)."""
    l, lam = lp.weight_class(w, fam.alpha)
    if (l, lam) != (fam.split, fam.tail_average):
        raise VerificationError("embedding changed the weight-class data")
    return SymMultiplierFamily(K, fam.alpha, fam.split, fam.tail_average,
                               dict(fam.prefix), dict(fam.top))


def _build_chain_sorted(w: tuple[Fraction, ...]) -> list[SymMultiplierFamily]:
    K = len(w)
    if all(v == 0 for v in w):
        return [SymMultiplierFamily(K, alpha, 0, Fraction(0), {}, {})
                for alpha in range(1, K + 1)]
    if w[-1] > 0:
        fams: list[Optional[SymMultiplierFamily]] = [None] * K
        fams[K - 1] = top_level_family(w)
        for alpha in range(K, 1, -1):
            fams[alpha - 2] = recurse_multiplier(fams[alpha - 1], w)
        return fams
    inner = _build_chain_sorted(w[:-1])
    fams = [_embed(f, K, w) for f in inner]
    fams.append(top_level_family(w))
    return fams


def build_chain(w: Sequence[Fraction], K: int) -> list[SymMultiplierFamily]:
    """Families for every level, built top-down by the recursion.

    Entry i of the result is the level-(i+1) family.  Unsorted weights are
    relabelled into the sorted cone; ``perm`` on each family maps sorted
    positions back to the original components.  Weights whose tail is zero
    route through the one-component reduction instead of the recursion.
    Every returned family passes the full identity check.
    """
    w = lp.as_weights(w)
    if len(w) != K:
        raise DomainError(f"expected {K} weights, got {len(w)}")
    ws, perm = lp.sort_weights(w)
    fams = _build_chain_sorted(ws)
    out = []
    for fam in fams:
        fam = SymMultiplierFamily(fam.K, fam.alpha, fam.split, fam.tail_average,
                                  dict(fam.prefix), dict(fam.top), perm)
        report = verify_family(fam, ws)
        if not report.ok:
            raise VerificationError(
                f"chain level {fam.alpha} failed membership: {report.failures}")
        out.append(fam)
    return out


# ---------------------------------------------------------------------------
# Family verification (all identities exact)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FamilyReport:
    failures: tuple[str, ...]
    stats: Optional[StepStats]

    @property
    def ok(self) -> bool:
        return not self.failures


def verify_family(fam: SymMultiplierFamily, w: Sequence[Fraction],
                  prev: Optional[SymMultiplierFamily] = None) -> FamilyReport:
    """Exact check of every family identity at one level.

    Verifies the weight-class data, the pinned prefix values, nonnegativity,
    the top-sum identity (top entries total the tail average), the
    per-component sums against the weights, the total-mass dichotomy, and,
    for levels above 1, that the transfer to the next level down is
    nonnegative and matches its closed forms (cross-checked against ``prev``
    when supplied).
    """
    w = lp.as_weights(w)
    failures: list[str] = []
    if len(w) != fam.K or not lp.is_sorted_desc(w):
        raise DomainError("verify_family requires the sorted weight vector")
    alpha = fam.alpha
    l, lam = lp.weight_class(w, alpha)
    if (l, lam) != (fam.split, fam.tail_average):
        failures.append(f"weight-class data mismatch: family says "
                        f"({fam.split}, {fam.tail_average}), weights say ({l}, {lam})")

    for k in range(1, fam.split + 1):
        want = (w[k - 1] - w[k]) if k < fam.split else (w[fam.split - 1] - lam)
        if fam.prefix[k] != want:
            failures.append(f"prefix[{k}] = {fam.prefix[k]}, expected {want}")

    negative = [V for V, c in fam.entries().items() if c < 0]
    if negative:
        failures.append(f"negative entries on {[members(V) for V in negative]}")

    top_sum = sum(fam.top.values(), Fraction(0))
    if top_sum != lam:
        failures.append(f"top entries sum to {top_sum}, expected the tail average {lam}")

    sums = fam.per_component_sums()
    for k in range(1, fam.K + 1):
        if sums[k - 1] != w[k - 1]:
            failures.append(f"component {k} sum {sums[k - 1]} != weight {w[k - 1]}")

    total = sum(fam.entries().values(), Fraction(0))
    want_total = (sum(w, Fraction(0)) / alpha) if fam.split == 0 else w[0]
    if total != want_total:
        failures.append(f"total mass {total}, expected {want_total}")

    stats = None
    if alpha >= 2 and not failures:
        stats = transfer_stats(fam, w)
        l_b, lam_b, theta = stats.split_lower, stats.tail_average_lower, stats.transfer
        if theta < 0:
            failures.append(f"negative transfer {theta}")
        want_theta = (lam_b - lam) if l_b == fam.split else (lam_b - w[l_b])
        if theta != want_theta:
            failures.append(f"transfer {theta} != closed form {want_theta}")
        if l_b == fam.split and theta != lam / (alpha - 1 - l_b):
            failures.append("transfer != tail average spread over the remaining slots")
        if prev is not None:
            if prev.alpha != alpha - 1:
                raise DomainError("prev must sit one level below")
            if l_b >= 1:
                gap = fam.entry(prefix_mask(l_b)) - prev.entry(prefix_mask(l_b))
                if gap != theta:
                    failures.append(f"prefix gap {gap} at [1:{l_b}] != transfer {theta}")
    return FamilyReport(tuple(failures), stats)


# ---------------------------------------------------------------------------
# Closed-form LP solution under symmetry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymSolution:
    primal: tuple[float, ...]
    value: float
    split: int
    tail_average: Fraction
    family: Optional[SymMultiplierFamily]
    perm: tuple[int, ...]


def split_rates(H: SymmetricProfile, alpha: int, split: int) -> tuple[float, ...]:
    """The candidate optimum: chain-rule increments up to the split, then an
    even share of what remains of the level's conditional entropy."""
    if not 0 <= split <= alpha - 1:
        raise DomainError(f"split {split} outside [0:{alpha - 1}]")
    out = []
    share = (H.cond(alpha, alpha) - H.cond(split, alpha)) / (alpha - split)
    for k in range(1, H.K + 1):
        if k <= split:
            out.append(H.cond(k, alpha) - H.cond(k - 1, alpha))
        else:
            out.append(share)
    return tuple(out)


def closed_form_sym(w: Sequence[Fraction], H: SymmetricProfile, alpha: int,
                    *, with_family: bool = True,
                    check_feasibility: bool = True) -> SymSolution:
    """Closed-form optimum of the symmetric layer LP at one level.

    Weights may arrive unsorted; the rates are mapped back through the
    sorting relabelling (the profile itself is permutation-invariant).  With
    ``check_feasibility`` the candidate rates are swept against every subset
    constraint first, which is mandatory for abstract profiles.
    """
    w = lp.as_weights(w)
    if len(w) != H.K:
        raise DomainError("weight length must equal K")
    if not 1 <= alpha <= H.K:
        raise DomainError(f"alpha={alpha} outside [1:{H.K}]")
    ws, perm = lp.sort_weights(w)
    l, lam = lp.weight_class(ws, alpha)
    rates = split_rates(H, alpha, l)
    if check_feasibility:
        rep = feasibility_check_rl(H, alpha, l)
        if not rep.ok:
            raise VerificationError(
                f"candidate rates infeasible on this profile: {rep.failures[0]}")
    value = 0.0
    for k in range(1, l + 1):
        coef = (ws[k - 1] - ws[k]) if k < l else (ws[l - 1] - lam)
        value += float(coef) * H.cond(k, alpha)
    value += float(lam) * H.cond(alpha, alpha)
    dot = sum(float(c) * r for c, r in zip(ws, rates))
    if abs(dot - value) > 1e-9 * (1.0 + abs(value)):
        raise VerificationError("value identity broke; closed form inconsistent")
    primal = [0.0] * H.K
    for i, r in enumerate(rates, start=1):
        primal[perm[i - 1] - 1] = r
    family = canonical_member(ws, H.K, alpha, perm=perm) if with_family else None
    return SymSolution(tuple(primal), value, l, lam, family, perm)


def canonical_member(w: Sequence[Fraction], K: int, alpha: int,
                     perm: tuple[int, ...] = ()) -> SymMultiplierFamily:
    """Deterministic standalone family: prefix pinned by the closed forms,
    top entries chosen lexicographically smallest among feasible ones.

    The chains never use this; it exists so a single level has one canonical
    certificate.  Infeasibility raises ``CanonicalMemberError`` (it is not
    expected to occur, but we refuse to guess).
    """
    w = lp.as_weights(w)
    if not lp.is_sorted_desc(w):
        raise DomainError("canonical_member requires sorted weights")
    l, lam = lp.weight_class(w, alpha)
    support = top_support(K, alpha, l)
    fixed: dict[int, Fraction] = {}
    for idx, target in enumerate(support):
        rows, senses, rhs = [], [], []
        for k in range(l + 1, K + 1):
            rows.append([1 if V & (1 << (k - 1)) else 0 for V in support])
            senses.append(lp.EQ)
            rhs.append(w[k - 1])
        for j, val in fixed.items():
            rows.append([1 if jj == j else 0 for jj in range(len(support))])
            senses.append(lp.EQ)
            rhs.append(val)
        obj = [Fraction(1) if j == idx else Fraction(0) for j in range(len(support))]
        res = lp.solve_lp(obj, rows, senses, rhs, free_vars=False, exact=True)
        if res.status != lp.OPTIMAL:
            raise CanonicalMemberError(
                f"no admissible family at level {alpha} for these weights "
                f"(status {res.status})")
        fixed[idx] = res.x[idx]
    prefix = {}
    for k in range(1, l + 1):
        prefix[k] = (w[k - 1] - w[k]) if k < l else (w[l - 1] - lam)
    top = {support[j]: v for j, v in fixed.items() if v != 0}
    return SymMultiplierFamily(K, alpha, l, lam, prefix, top,
                               perm or tuple(range(1, K + 1)))


# ---------------------------------------------------------------------------
# Feasibility of the candidate rates (direct sweep + ratio inequalities)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RlFeasibilityReport:
    failures: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def feasibility_check_rl(H: SymmetricProfile, alpha: int, split: int,
                         tol: float = ENTROPY_TOL) -> RlFeasibilityReport:
    """Sweep the candidate rates against every subset constraint of the level
    and check the prefix-ratio inequalities the feasibility argument leans on.

    The ratio family says the per-component share of a conditional prefix
    entropy grows with the prefix length:
    H([1:i1] | [i1+1:j]) / i1 <= H([1:i2] | [i2+1:j]) / i2 for i1 <= i2 <= j.
    Genuine symmetric sources satisfy it; abstract profiles may not, which is
    exactly what this gate is for.
    """
    rates = split_rates(H, alpha, split)
    failures: list[str] = []
    for V in subsets(H.K, max_size=alpha):
        lhs = sum(rates[k - 1] for k in members(V))
        rhs = H.cond(subset_size(V), alpha)
        if lhs < rhs - tol:
            failures.append(
                f"subset {list(members(V))}: rate sum {lhs:.9g} below bound {rhs:.9g}")
    for j in range(1, alpha + 1):
        for i2 in range(1, j + 1):
            for i1 in range(1, i2):
                lhs = (H.marginal(j, alpha) - H.marginal(j - i1, alpha)) / i1
                rhs = (H.marginal(j, alpha) - H.marginal(j - i2, alpha)) / i2
                if lhs > rhs + tol:
                    failures.append(
                        f"ratio inequality fails at (i1={i1}, i2={i2}, j={j}): "
                        f"{lhs:.9g} > {rhs:.9g}")
    return RlFeasibilityReport(tuple(failures))


# ---------------------------------------------------------------------------
# Chain inequality certification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymChainReport:
    steps: tuple[prover.ChainStep, ...]

    @property
    def ok(self) -> bool:
        return all(s.certificate.proved for s in self.steps)


def verify_sym_chain_inequality(chain: Sequence[SymMultiplierFamily]) -> SymChainReport:
    """Prove every consecutive functional difference along a chain.

    Success for all steps is exactly the hypothesis the matching converse
    needs: the level-1 functional dominates every later level on all joint
    distributions.
    """
    by_alpha = {fam.alpha: fam for fam in chain}
    alphas = sorted(by_alpha)
    steps = []
    for lo, hi in zip(alphas, alphas[1:]):
        f = by_alpha[lo].as_functional() - by_alpha[hi].as_functional()
        cert = prover.prove_nonneg(f)
        steps.append(prover.ChainStep(lo, hi, cert))
    return SymChainReport(tuple(steps))
