"""Complete treatment of the middle level for three encoders.

The layer-2 LP over three encoders reduces to a six-constraint program once
each component's rate floor (its worst conditional entropy given a single
peer) and each pair's joint surplus are extracted.  Five weight/surplus
cases give closed-form primals; crossed with the four ways the pair sums can
realize (joint entropy vs. conditional form), seventeen feasible joint
labels remain and each carries an explicit dual row.  Three combinations
are provably void and are rejected with a witness.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from . import lp, region
from .core import (ENTROPY_TOL, DomainError, EntropyProfile, VerificationError,
                   mask_from_members, members)

HALF = Fraction(1, 2)

PAIRS = (mask_from_members([1, 2]), mask_from_members([1, 3]), mask_from_members([2, 3]))
P12, P13, P23 = PAIRS

VOID_LABELS = frozenset({"2D", "3C", "4B"})
FEASIBLE_LABELS = tuple(f"{n}{letter}" for n in range(1, 6) for letter in "ABCD"
                        if f"{n}{letter}" not in VOID_LABELS)


class VoidCaseError(VerificationError):
    """A weight/surplus combination that genuine sources cannot realize."""

    def __init__(self, label: str, witness: str):
        super().__init__(f"void case {label}: {witness}")
        self.label = label
        self.witness = witness


@dataclass(frozen=True)
class RateFloors:
    """Reduced parameters of the three-encoder layer-2 region.

    ``single[k]`` is the largest conditional entropy of component k given one
    peer, ``peer[k]`` the smallest peer index attaining it, ``pair[p]`` the
    nonnegative joint surplus of pair p, and ``pair_entropy[p]`` the plain
    joint entropy (kept for case classification).
    """

    single: Mapping[int, float]
    peer: Mapping[int, int]
    pair: Mapping[int, float]
    pair_entropy: Mapping[int, float]

    def pair_sum(self, p: int) -> float:
        i, j = members(p)
        return self.single[i] + self.pair[p] + self.single[j]


@dataclass(frozen=True)
class CaseLabel:
    w_case: int
    form_case: str

    @property
    def label(self) -> str:
        return f"{self.w_case}{self.form_case}"

    @property
    def void(self) -> bool:
        return self.label in VOID_LABELS


def compute_rate_floors(profile: EntropyProfile, alpha: int = 2) -> RateFloors:
    """Rate floors and pair surpluses of a three-encoder profile.

    Peer ties break to the smallest index; the floor values themselves are
    tie-invariant but the recorded peer feeds the dual's conditioning sets,
    so certificates always state which peer was chosen.
    """
    if profile.K != 3:
        raise DomainError("rate floors are defined for exactly three encoders")
    single, peer = {}, {}
    for k in (1, 2, 3):
        best, best_nu = None, None
        for nu in (1, 2, 3):
            if nu == k:
                continue
            h = float(profile.cond(alpha, 1 << (k - 1), 1 << (nu - 1)))
            if best is None or h > best:
                best, best_nu = h, nu
        single[k], peer[k] = best, best_nu
    pair, pair_entropy = {}, {}
    for p in PAIRS:
        i, j = members(p)
        joint = float(profile.H(alpha, p))
        pair_entropy[p] = joint
        pair[p] = max(joint - single[i] - single[j], 0.0)
    return RateFloors(single, peer, pair, pair_entropy)


def floors_region(floors: RateFloors) -> region.LayerRegion:
    """The six-halfspace region the floors define (equal to the layer region)."""
    halfspaces = []
    for k in (1, 2, 3):
        coeffs = tuple(1 if k == t else 0 for t in (1, 2, 3))
        halfspaces.append(region.Halfspace(coeffs, floors.single[k],
                                           1 << (k - 1), 1 << (floors.peer[k] - 1)))
    for p in PAIRS:
        coeffs = tuple(1 if p & (1 << (t - 1)) else 0 for t in (1, 2, 3))
        halfspaces.append(region.Halfspace(coeffs, floors.pair_sum(p), p, 0))
    return region.LayerRegion(3, 2, tuple(halfspaces))


# ---------------------------------------------------------------------------
# Case classification
# ---------------------------------------------------------------------------

def _conditional_pairs(floors: RateFloors, tol: float) -> list[int]:
    """Pairs realizing the conditional form: joint entropy below the floors."""
    out = []
    for p in PAIRS:
        i, j = members(p)
        if floors.single[i] + floors.single[j] > floors.pair_entropy[p] + tol:
            out.append(p)
    return out


def classify_case(floors: RateFloors, w: Sequence[Fraction],
                  tol: float = ENTROPY_TOL) -> CaseLabel:
    """Joint (weight case, pair-form case) label for sorted weights.

    Strict inequalities in the case conditions mean "beyond tol"; boundary
    configurations land in the non-strict rows (1 or 5), whose primal agrees
    in value with any overlapping row.  Void combinations raise with the
    witness inequality.
    """
    w = lp.as_weights(w)
    if len(w) != 3:
        raise DomainError("classification needs exactly three weights")
    if not lp.is_sorted_desc(w):
        raise DomainError("classification requires sorted weights")
    l, _ = lp.weight_class(w, 2)
    s12, s13, s23 = (floors.pair[p] for p in PAIRS)
    if l == 1:
        w_case = 4 if s23 > s12 + s13 + tol else 5
    else:
        if s12 > s13 + s23 + tol:
            w_case = 2
        elif s13 > s12 + s23 + tol:
            w_case = 3
        elif s23 > s12 + s13 + tol:
            w_case = 4
        else:
            w_case = 1

    conditional = _conditional_pairs(floors, tol)
    if len(conditional) > 1:
        raise VerificationError(
            f"more than one pair in conditional form ({[members(p) for p in conditional]}); "
            "impossible for genuine sources")
    form_case = {(): "A", (P23,): "B", (P13,): "C", (P12,): "D"}[tuple(conditional)]

    label = CaseLabel(w_case, form_case)
    if label.void:
        dominant = {2: P12, 3: P13, 4: P23}[w_case]
        i, j = members(dominant)
        witness = (f"pair {{{i},{j}}} surplus strictly dominates, forcing its sum to the "
                   f"joint entropy, but the pair is classified conditional "
                   f"(sum {floors.pair_sum(dominant):.6g} > joint "
                   f"{floors.pair_entropy[dominant]:.6g})")
        raise VoidCaseError(label.label, witness)
    return label


# ---------------------------------------------------------------------------
# Table rows: primal in the floors, dual as linear forms of the weights
# ---------------------------------------------------------------------------

# Primal rows: r_k = single_k + sum over pairs of coef * pair_surplus.
_PRIMAL_ROWS: dict[int, dict[int, dict[int, Fraction]]] = {
    1: {1: {P12: HALF, P13: HALF, P23: -HALF},
        2: {P12: HALF, P13: -HALF, P23: HALF},
        3: {P12: -HALF, P13: HALF, P23: HALF}},
    2: {1: {P13: Fraction(1)},
        2: {P12: Fraction(1), P13: Fraction(-1)},
        3: {}},
    3: {1: {P12: Fraction(1)},
        2: {},
        3: {P13: Fraction(1), P12: Fraction(-1)}},
    4: {1: {},
        2: {P12: Fraction(1)},
        3: {P23: Fraction(1), P12: Fraction(-1)}},
    5: {1: {},
        2: {P12: Fraction(1)},
        3: {P13: Fraction(1)}},
}

# Dual rows: six columns (c_1, c_2, c_3, c_12, c_13, c_23), each a linear
# form a.w over (w1, w2, w3).  Singleton columns condition on the case's
# peer pattern.
_Z = (0, 0, 0)
_DUAL_ROWS: dict[str, tuple[tuple[int, ...], ...]] = {
    "1A": (_Z, _Z, _Z, (HALF, HALF, -HALF), (HALF, -HALF, HALF), (-HALF, HALF, HALF)),
    "1B": (_Z, (-HALF, HALF, HALF), (-HALF, HALF, HALF),
           (HALF, HALF, -HALF), (HALF, -HALF, HALF), _Z),
    "1C": ((HALF, -HALF, HALF), _Z, (HALF, -HALF, HALF),
           (HALF, HALF, -HALF), _Z, (-HALF, HALF, HALF)),
    "1D": ((HALF, HALF, -HALF), (HALF, HALF, -HALF), _Z,
           _Z, (HALF, -HALF, HALF), (-HALF, HALF, HALF)),
    "2A": (_Z, _Z, (-1, 1, 1), (0, 1, 0), (1, -1, 0), _Z),
    "2B": (_Z, _Z, (-1, 1, 1), (0, 1, 0), (1, -1, 0), _Z),
    "2C": ((1, -1, 0), _Z, (0, 0, 1), (0, 1, 0), _Z, _Z),
    "3A": (_Z, (-1, 1, 1), _Z, (1, 0, -1), (0, 0, 1), _Z),
    "3B": (_Z, (-1, 1, 1), _Z, (1, 0, -1), (0, 0, 1), _Z),
    "3D": ((1, 0, -1), (0, 1, 0), _Z, _Z, (0, 0, 1), _Z),
    "4A": ((1, -1, 1), _Z, _Z, (0, 1, -1), _Z, (0, 0, 1)),
    "4C": ((1, -1, 1), _Z, _Z, (0, 1, -1), _Z, (0, 0, 1)),
    "4D": ((1, 0, 0), (0, 1, -1), _Z, _Z, _Z, (0, 0, 1)),
    "5A": ((1, -1, -1), _Z, _Z, (0, 1, 0), (0, 0, 1), _Z),
    # 5B carries no surplus on pair {2,3} (its sum is conditional), so the
    # weight above w2 + w3 rides on the singleton; 5C redistributes the
    # pair-{1,3} weight onto the two singletons conditioned on component 2.
    "5B": ((1, -1, -1), _Z, _Z, (0, 1, 0), (0, 0, 1), _Z),
    "5C": ((1, -1, 0), _Z, (0, 0, 1), (0, 1, 0), _Z, _Z),
    "5D": ((1, 0, -1), (0, 1, 0), _Z, _Z, (0, 0, 1), _Z),
}

# Peer indices pinned by each pair-form case; unpinned slots may take any
# maximizing peer.
_PEER_PATTERN: dict[str, dict[int, int]] = {
    "A": {},
    "B": {2: 1, 3: 1},
    "C": {1: 2, 3: 2},
    "D": {1: 3, 2: 3},
}

def primal_from_row(w_case: int, floors: RateFloors) -> tuple[float, float, float]:
    """Evaluate one primal row on a set of floors."""
    row = _PRIMAL_ROWS[w_case]
    out = []
    for k in (1, 2, 3):
        r = floors.single[k]
        for p, coef in row[k].items():
            r += float(coef) * floors.pair[p]
        out.append(r)
    return tuple(out)


def default_peers(form_case: str) -> dict[int, int]:
    peers = {}
    for k in (1, 2, 3):
        pinned = _PEER_PATTERN[form_case].get(k)
        peers[k] = pinned if pinned is not None else min(t for t in (1, 2, 3) if t != k)
    return peers


def dual_from_row(label: str, w: Sequence[Fraction],
                  peers: Optional[Mapping[int, int]] = None,
                  mutate: Optional[int] = None) -> lp.MultiplierFamily:
    """Instantiate one dual row at a weight vector.

    ``peers`` supplies the conditioning index of each singleton column; slots
    pinned by the row's pair-form case must agree with it.  ``mutate`` flips
    the sign of one column (0..5) and exists only for transcription-drift
    harnesses.
    """
    if label not in _DUAL_ROWS:
        raise DomainError(f"unknown case label {label!r}")
    w = lp.as_weights(w)
    if len(w) != 3:
        raise DomainError("dual rows are over three weights")
    form_case = label[1]
    peers = dict(peers) if peers is not None else default_peers(form_case)
    for k, pinned in _PEER_PATTERN[form_case].items():
        if peers.get(k, pinned) != pinned:
            raise VerificationError(
                f"case {label} pins the peer of component {k} to {pinned}, "
                f"got {peers.get(k)}")
        peers[k] = pinned
    forms = list(_DUAL_ROWS[label])
    if mutate is not None:
        forms[mutate] = tuple(-a for a in forms[mutate])
    keys = [
        (1 << 0, 1 << (peers[1] - 1)),
        (1 << 1, 1 << (peers[2] - 1)),
        (1 << 2, 1 << (peers[3] - 1)),
        (P12, 0),
        (P13, 0),
        (P23, 0),
    ]
    entries = {}
    for key, form in zip(keys, forms):
        c = sum(Fraction(a) * wk for a, wk in zip(form, w))
        if c != 0:
            entries[key] = c
    return lp.MultiplierFamily(3, 2, entries)


def weight_region_of_label(label: str) -> str:
    """Which part of the sorted cone a row's weight condition allows."""
    n = int(label[0])
    if n in (1, 2, 3):
        return "W0"     # w1 <= w2 + w3
    if n == 5:
        return "W1"     # w1 >  w2 + w3
    return "any"


# ---------------------------------------------------------------------------
# Solving and region equality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class K3Solution:
    label: CaseLabel
    solution: lp.LPSolution
    floors: RateFloors
    perm: tuple[int, ...]
    report: lp.MultiplierReport


def solve_layer2(w: Sequence[Fraction], profile: EntropyProfile,
                 tol: float = ENTROPY_TOL) -> K3Solution:
    """Closed-form solve of the three-encoder layer-2 LP with certificate.

    Unsorted weights are relabelled to the sorted cone and mapped back; the
    returned label and floors live in the sorted space (``perm`` records the
    relabelling).  The instantiated dual must pass the three-part optimality
    check against the closed-form value, otherwise the tables would have
    drifted and we refuse to answer.
    """
    if profile.K != 3:
        raise DomainError("solve_layer2 requires exactly three encoders")
    w = lp.as_weights(w)
    ws, perm = lp.sort_weights(w)
    prof = profile.relabel(perm)
    floors = compute_rate_floors(prof)
    label = classify_case(floors, ws, tol)
    primal_s = primal_from_row(label.w_case, floors)
    value = sum(float(c) * r for c, r in zip(ws, primal_s))
    dual_s = dual_from_row(label.label, ws, peers=floors.peer)
    report = lp.verify_multiplier(dual_s, ws, prof, 2, value, tol=max(tol, 1e-8))
    if not report.passed:
        raise VerificationError(
            f"case {label.label} multipliers failed optimality verification: "
            f"value gap {report.value_gap:.3g}, weight gaps {report.weight_gaps}, "
            f"min entry {report.min_entry}")
    primal = [0.0] * 3
    for i, r in enumerate(primal_s, start=1):
        primal[perm[i - 1] - 1] = r
    dual = dual_s.relabel(perm)
    sol = lp.LPSolution(lp.OPTIMAL, tuple(primal), value, dual)
    return K3Solution(label, sol, floors, perm, report)


@dataclass(frozen=True)
class RegionEqualityReport:
    vertices_match: bool
    region_vertices: tuple
    floors_vertices: tuple
    clause_failures: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return self.vertices_match and not self.clause_failures


def check_region_equality(profile: EntropyProfile, tol: float = 1e-8) -> RegionEqualityReport:
    """Vertex-set equality of the layer region and the floors region, plus
    the pair-sum dichotomy and its two consequences, all on one profile."""
    if profile.K != 3:
        raise DomainError("region equality check requires exactly three encoders")
    floors = compute_rate_floors(profile)
    true_region = region.build_layer_region(profile, 2)
    tilde_region = floors_region(floors)
    v_true = region.enumerate_vertices(true_region)
    v_tilde = region.enumerate_vertices(tilde_region)

    def match(a, b):
        return (len(a) == len(b)
                and all(any(max(abs(x - y) for x, y in zip(p, q)) <= tol for q in b)
                        for p in a)
                and all(any(max(abs(x - y) for x, y in zip(p, q)) <= tol for q in a)
                        for p in b))

    failures: list[str] = []
    etol = max(tol, ENTROPY_TOL)
    sums = {p: floors.pair_sum(p) for p in PAIRS}
    cond_form = {}
    for p in PAIRS:
        i, j = members(p)
        k = next(t for t in (1, 2, 3) if t not in (i, j))
        cond_form[p] = (float(profile.cond(2, 1 << (i - 1), 1 << (k - 1)))
                        + float(profile.cond(2, 1 << (j - 1), 1 << (k - 1))))
        joint = floors.pair_entropy[p]
        if joint >= floors.single[i] + floors.single[j] - etol:
            if abs(sums[p] - joint) > etol:
                failures.append(
                    f"pair {{{i},{j}}}: expected entropic sum {joint:.9g}, got {sums[p]:.9g}")
        else:
            if abs(sums[p] - cond_form[p]) > etol or sums[p] < joint - etol:
                failures.append(
                    f"pair {{{i},{j}}}: expected conditional sum {cond_form[p]:.9g} "
                    f"above joint {joint:.9g}, got {sums[p]:.9g}")

    for p in PAIRS:
        others = [q for q in PAIRS if q != p]
        if floors.pair[p] > floors.pair[others[0]] + floors.pair[others[1]] + etol:
            i, j = members(p)
            if abs(sums[p] - floors.pair_entropy[p]) > etol:
                failures.append(
                    f"dominant pair {{{i},{j}}} must realize its joint entropy; "
                    f"sum {sums[p]:.9g} vs joint {floors.pair_entropy[p]:.9g}")

    for p in PAIRS:
        i, j = members(p)
        k = next(t for t in (1, 2, 3) if t not in (i, j))
        genuinely_conditional = (abs(sums[p] - cond_form[p]) <= etol
                                 and sums[p] > floors.pair_entropy[p] + etol)
        if genuinely_conditional:
            for (a, b) in ((i, k), (j, k)):
                q = mask_from_members([a, b])
                if abs(sums[q] - floors.pair_entropy[q]) > etol:
                    failures.append(
                        f"pair {{{i},{j}}} conditional forces pair {{{a},{b}}} entropic; "
                        f"sum {sums[q]:.9g} vs joint {floors.pair_entropy[q]:.9g}")

    return RegionEqualityReport(match(v_true, v_tilde), tuple(v_true), tuple(v_tilde),
                                tuple(failures))
