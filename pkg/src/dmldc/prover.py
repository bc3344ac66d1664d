"""Shannon-type inequality prover over the polymatroid cone.

A linear entropy functional sum_V c_V H(X_V) is "provable" here when it is
an exact nonnegative rational combination of the elemental generators of the
polymatroid cone (the K conditional-entropy monotonicity functionals and the
C(K,2) * 2^(K-2) conditional mutual informations).  The prover returns that
combination as a replayable certificate, or a rational polymatroid point on
which the functional goes negative.  For up to three variables the cone
coincides with the closure of the entropic region, so a refutation there is
a genuine counterexample; for four or more it only shows the functional is
not provable this way, which the caller must surface as an open observation
rather than a falsity.

Numeric spot checks against randomly sampled joint pmfs back the exact layer
for regimes the certificates do not reach.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from . import lp
from .core import (DomainError, VerificationError, full_mask, mask_from_members,
                   members, relabel_mask, set_function_violations)

MAX_VARIABLES = 8


@dataclass(frozen=True)
class EntropyFunctional:
    """Finitely supported rational coefficients over nonempty subsets."""

    K: int
    coeffs: Mapping[int, Fraction]

    def __post_init__(self):
        if not 1 <= self.K <= MAX_VARIABLES:
            raise DomainError(f"K={self.K} outside [1:{MAX_VARIABLES}]")
        clean = {}
        for V, c in dict(self.coeffs).items():
            if V == 0 or V >> self.K:
                raise DomainError(f"bad subset key {V:#x} for K={self.K}")
            if isinstance(c, float):
                raise DomainError("functional coefficients must be rational; "
                                  "floats would make certificates meaningless")
            c = Fraction(c)
            if c != 0:
                clean[V] = c
        object.__setattr__(self, "coeffs", clean)

    def __add__(self, other: "EntropyFunctional") -> "EntropyFunctional":
        if other.K != self.K:
            raise DomainError("functional arity mismatch")
        out = dict(self.coeffs)
        for V, c in other.coeffs.items():
            out[V] = out.get(V, Fraction(0)) + c
        return EntropyFunctional(self.K, out)

    def __sub__(self, other: "EntropyFunctional") -> "EntropyFunctional":
        return self + other.scaled(-1)

    def scaled(self, factor) -> "EntropyFunctional":
        f = Fraction(factor)
        return EntropyFunctional(self.K, {V: c * f for V, c in self.coeffs.items()})

    def evaluate(self, h: Mapping[int, object]):
        return sum((c * Fraction(h[V]) if isinstance(h[V], (int, Fraction))
                    else float(c) * float(h[V]))
                   for V, c in self.coeffs.items())

    def evaluate_float(self, vector: np.ndarray) -> np.ndarray:
        """Evaluate against rows of a (trials, 2^K - 1) entropy-vector bank."""
        out = np.zeros(vector.shape[0])
        for V, c in self.coeffs.items():
            out += float(c) * vector[:, V - 1]
        return out

    def symmetrized(self) -> "EntropyFunctional":
        """Exact average over all coordinate permutations."""
        K = self.K
        total: dict[int, Fraction] = {}
        perms = list(itertools.permutations(range(1, K + 1)))
        for perm in perms:
            for V, c in self.coeffs.items():
                W = relabel_mask(V, perm)
                total[W] = total.get(W, Fraction(0)) + c
        n = Fraction(len(perms))
        return EntropyFunctional(K, {V: c / n for V, c in total.items()})

    def is_zero(self) -> bool:
        return not self.coeffs


def functional_from_multipliers(c: lp.MultiplierFamily) -> EntropyFunctional:
    """Expand sum c_{V|V'} H(V|V') into unconditional subset coefficients."""
    coeffs: dict[int, Fraction] = {}
    for (V, Vp), weight in c.entries.items():
        w = Fraction(weight)
        u = V | Vp
        coeffs[u] = coeffs.get(u, Fraction(0)) + w
        if Vp:
            coeffs[Vp] = coeffs.get(Vp, Fraction(0)) - w
    return EntropyFunctional(c.K, coeffs)


# ---------------------------------------------------------------------------
# Elemental generators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Elemental:
    name: str
    functional: EntropyFunctional


def elemental_count(K: int) -> int:
    return K + math.comb(K, 2) * (2 ** (K - 2) if K >= 2 else 0)


@functools.lru_cache(maxsize=None)
def elemental_inequalities(K: int) -> tuple[Elemental, ...]:
    """The irredundant generators of the K-variable polymatroid cone.

    K functionals H(full) - H(full minus i) and, for every unordered pair
    i < j and every context W disjoint from it, the conditional mutual
    information H(iW) + H(jW) - H(ijW) - H(W).
    """
    if not 1 <= K <= MAX_VARIABLES:
        raise DomainError(f"K={K} outside [1:{MAX_VARIABLES}]")
    out: list[Elemental] = []
    full = full_mask(K)
    for i in range(1, K + 1):
        coeffs = {full: Fraction(1)}
        rest = full & ~(1 << (i - 1))
        if rest:
            coeffs[rest] = Fraction(-1)
        out.append(Elemental(f"mono:{i}", EntropyFunctional(K, coeffs)))
    for i in range(1, K + 1):
        for j in range(i + 1, K + 1):
            bi, bj = 1 << (i - 1), 1 << (j - 1)
            context = [k for k in range(1, K + 1) if k not in (i, j)]
            for size in range(len(context) + 1):
                for combo in itertools.combinations(context, size):
                    W = mask_from_members(combo)
                    coeffs = {W | bi: Fraction(1), W | bj: Fraction(1)}
                    coeffs[W | bi | bj] = coeffs.get(W | bi | bj, Fraction(0)) - 1
                    if W:
                        coeffs[W] = coeffs.get(W, Fraction(0)) - 1
                    name = f"mi:{i},{j}|{','.join(map(str, combo))}"
                    out.append(Elemental(name, EntropyFunctional(K, coeffs)))
    assert len(out) == elemental_count(K)
    return tuple(out)


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

PROVED = "proved"
NOT_PROVABLE = "not_shannon_provable"


@dataclass(frozen=True)
class Certificate:
    status: str
    functional: EntropyFunctional
    lambdas: Optional[Mapping[str, Fraction]] = None
    counterexample: Optional[Mapping[int, Fraction]] = None

    @property
    def proved(self) -> bool:
        return self.status == PROVED

    def replay(self) -> EntropyFunctional:
        """Reassemble the functional from the certificate weights."""
        if not self.proved:
            raise VerificationError("only proved certificates replay")
        by_name = {e.name: e.functional for e in elemental_inequalities(self.functional.K)}
        total = EntropyFunctional(self.functional.K, {})
        for name, lam in (self.lambdas or {}).items():
            total = total + by_name[name].scaled(lam)
        return total


def _coeff_vector(f: EntropyFunctional) -> list[Fraction]:
    return [f.coeffs.get(V, Fraction(0)) for V in range(1, 2 ** f.K)]


def prove_nonneg(f: EntropyFunctional, symmetrize: bool = False) -> Certificate:
    """Certify a functional nonnegative over the polymatroid cone, or refute.

    With ``symmetrize`` the functional is first averaged over all coordinate
    permutations (claims that are only true for permutation-invariant
    entropies are restated at the level where they hold literally).  A
    proved certificate is replayed against the generators before being
    returned; a refutation carries a rational cone point, normalized to unit
    grand entropy, that is itself validated against the cone and must
    evaluate strictly negative.
    """
    if symmetrize:
        f = f.symmetrized()
    K = f.K
    gens = elemental_inequalities(K)
    nsub = 2 ** K - 1

    target = _coeff_vector(f)
    scale = math.lcm(*(c.denominator for c in target)) if target else 1
    target = [c * scale for c in target]

    if f.is_zero():
        return Certificate(PROVED, f, lambdas={})

    rows = []
    for V in range(1, nsub + 1):
        rows.append([g.functional.coeffs.get(V, Fraction(0)) for g in gens])
    res = lp.solve_lp([Fraction(0)] * len(gens), rows, [lp.EQ] * nsub, target,
                      free_vars=False, exact=True)
    if res.status == lp.OPTIMAL:
        lambdas = {gens[i].name: x / scale for i, x in enumerate(res.x) if x != 0}
        cert = Certificate(PROVED, f, lambdas=lambdas)
        if cert.replay().coeffs != f.coeffs:
            raise VerificationError("certificate replay does not reproduce the functional")
        return cert

    # No conic combination exists; exhibit the most negative direction on the
    # cone base {grand entropy = 1}.
    ineq_rows = []
    for g in gens:
        ineq_rows.append([g.functional.coeffs.get(V, Fraction(0))
                          for V in range(1, nsub + 1)])
    norm_row = [Fraction(1) if V == nsub else Fraction(0) for V in range(1, nsub + 1)]
    obj = [f.coeffs.get(V, Fraction(0)) for V in range(1, nsub + 1)]
    res2 = lp.solve_lp(obj, ineq_rows + [norm_row],
                       [lp.GE] * len(ineq_rows) + [lp.EQ],
                       [Fraction(0)] * len(ineq_rows) + [Fraction(1)],
                       free_vars=True, exact=True)
    if res2.status != lp.OPTIMAL or res2.value >= 0:
        raise VerificationError(
            "feasibility and separation disagree; the exact LP layer is inconsistent")
    h = {V: res2.x[V - 1] for V in range(1, nsub + 1)}
    if set_function_violations(h, K, tol=0):
        raise VerificationError("counterexample point escaped the cone")
    if f.evaluate(h) >= 0:
        raise VerificationError("counterexample does not make the functional negative")
    return Certificate(NOT_PROVABLE, f, counterexample=h)


# ---------------------------------------------------------------------------
# Chains of multiplier families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainStep:
    lower_alpha: int
    upper_alpha: int
    certificate: Certificate


@dataclass(frozen=True)
class ChainReport:
    steps: tuple[ChainStep, ...]

    @property
    def ok(self) -> bool:
        return all(s.certificate.proved for s in self.steps)


def verify_star_chain(chain: Sequence[lp.MultiplierFamily],
                      pairs: Optional[Sequence[tuple[int, int]]] = None) -> ChainReport:
    """Prove the level-to-level inequality between multiplier functionals.

    ``chain[i]`` is the family for level i+1.  For each requested pair
    (lower, upper) the difference functional(lower) - functional(upper) is
    sent to the prover; consecutive levels are checked by default.
    """
    levels = {fam.alpha: functional_from_multipliers(fam) for fam in chain}
    if pairs is None:
        alphas = sorted(levels)
        pairs = list(zip(alphas, alphas[1:]))
    steps = []
    for lo, hi in pairs:
        if lo >= hi:
            raise DomainError(f"chain pair ({lo}, {hi}) must be increasing")
        cert = prove_nonneg(levels[lo] - levels[hi])
        steps.append(ChainStep(lo, hi, cert))
    return ChainReport(tuple(steps))


# ---------------------------------------------------------------------------
# Numeric spot checks
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=16)
def _entropy_vector_bank(K: int, trials: int, seed: int, alphabet: int) -> np.ndarray:
    """Entropy vectors of ``trials`` random joint pmfs, one row per trial."""
    rng = np.random.default_rng(seed)
    cells = alphabet ** K
    pmf = rng.random((trials, cells))
    pmf /= pmf.sum(axis=1, keepdims=True)
    shaped = pmf.reshape((trials,) + (alphabet,) * K)
    bank = np.empty((trials, 2 ** K - 1))
    for V in range(1, 2 ** K):
        axes = tuple(ax + 1 for ax in range(K) if not V & (1 << ax))
        marg = shaped.sum(axis=axes) if axes else shaped
        flat = marg.reshape(trials, -1)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(flat > 0, flat * np.log2(flat), 0.0)
        bank[:, V - 1] = -terms.sum(axis=1)
    return bank


def numeric_spotcheck(f: EntropyFunctional, trials: int, seed: int = 0,
                      K: Optional[int] = None, symmetrize: bool = False,
                      alphabet: int = 2) -> float:
    """Minimum of a functional over entropy vectors of random joint pmfs."""
    if trials < 1:
        raise DomainError("trials must be >= 1")
    K = K or f.K
    if K != f.K:
        raise DomainError("K must match the functional arity")
    if symmetrize:
        f = f.symmetrized()
    bank = _entropy_vector_bank(K, trials, seed, alphabet)
    return float(f.evaluate_float(bank).min())


# ---------------------------------------------------------------------------
# JSON forms
# ---------------------------------------------------------------------------

def _subset_key(V: int) -> str:
    return ",".join(str(k) for k in members(V))


def functional_to_json(f: EntropyFunctional) -> dict:
    return {"K": f.K, "coeffs": {_subset_key(V): str(c) for V, c in sorted(f.coeffs.items())}}


def functional_from_json(doc: Mapping) -> EntropyFunctional:
    try:
        K = int(doc["K"])
        raw = doc["coeffs"]
    except KeyError as exc:
        raise DomainError(f"functional file missing field {exc}") from None
    coeffs = {}
    for key, num in raw.items():
        V = mask_from_members(int(tok) for tok in key.split(",") if tok)
        # decimal literals read as exact decimals, not binary floats
        coeffs[V] = Fraction(str(num))
    return EntropyFunctional(K, coeffs)


def certificate_to_json(cert: Certificate) -> dict:
    doc: dict = {"status": "proved" if cert.proved else "refuted",
                 "functional": functional_to_json(cert.functional)}
    if cert.proved:
        doc["lambdas"] = {name: str(lam) for name, lam in sorted((cert.lambdas or {}).items())}
    else:
        doc["counterexample"] = {_subset_key(V): str(x)
                                 for V, x in sorted((cert.counterexample or {}).items())}
        if cert.functional.K >= 4:
            doc["note"] = ("counterexample is a polymatroid point; with four or more "
                           "variables it need not be entropic, so this refutes "
                           "provability, not the inequality itself")
    return doc
