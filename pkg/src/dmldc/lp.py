"""Supporting-hyperplane linear programs and their duals.

The per-layer program minimizes w . r over the layer region; its optimal
Lagrange multipliers are nonnegative weights on the (V, V') constraints that
reproduce the optimal value and sum to w_k over constraints containing each
component k.  This module provides

* a dense two-phase simplex (Bland's rule, exact-rational or float) with
  dual extraction for arbitrary small LPs,
* the closed forms for the bottom level (alpha = 1) and the top level
  (alpha = K, chain rule after sorting the weights),
* the weight-cone split index and tail average that drive the closed forms,
* the three-part optimality check for multiplier families.

Variables of the layer LPs are treated as free so that the extracted dual
solves the asymmetric dual (equality constraints A'y = w), matching the
multiplier conditions exactly; the layer constraints themselves already
bound every rate from below.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .core import (DomainError, EntropyProfile, VerificationError,
                   mask_from_members, members, relabel_mask, subset_size, subsets)

if TYPE_CHECKING:  # pragma: no cover
    from .region import LayerRegion

GE, LE, EQ = ">=", "<=", "="

FEAS_TOL = 1e-9
CS_TOL = 1e-7

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class SimplexError(RuntimeError):
    """The solver hit a state that the calling contract rules out."""


# ---------------------------------------------------------------------------
# Generic two-phase tableau simplex
# ---------------------------------------------------------------------------

@dataclass
class SimplexResult:
    status: str
    x: Optional[list]
    value: Optional[object]
    duals: Optional[list]    # one per input row; >= 0 for GE rows, <= 0 for LE
    pivots: int


def _pivot_exact(T, basis, cost, ncols, forbid):
    pivots = 0
    m = len(T)
    while True:
        cb = [cost[basis[i]] for i in range(m)]
        enter = -1
        for j in range(ncols):
            if j in forbid or j in basis:
                continue
            d = cost[j] - sum(cb[i] * T[i][j] for i in range(m) if T[i][j])
            if d < 0:
                enter = j
                break
        if enter < 0:
            return OPTIMAL, pivots
        leave, best = -1, None
        for i in range(m):
            a = T[i][enter]
            if a > 0:
                ratio = T[i][-1] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    leave, best = i, ratio
        if leave < 0:
            return UNBOUNDED, pivots
        piv = T[leave][enter]
        row = T[leave]
        T[leave] = [v / piv for v in row]
        for i in range(m):
            if i != leave and T[i][enter]:
                f = T[i][enter]
                ref = T[leave]
                T[i] = [a - f * b for a, b in zip(T[i], ref)]
        basis[leave] = enter
        pivots += 1


def _pivot_float(T, basis, cost, ncols, forbid, tol):
    pivots = 0
    m = T.shape[0]
    forbidden = np.zeros(T.shape[1] - 1, dtype=bool)
    for j in forbid:
        forbidden[j] = True
    while True:
        cb = cost[basis]
        d = cost[:ncols] - cb @ T[:, :ncols]
        d[forbidden[:ncols]] = 0.0
        candidates = np.flatnonzero(d < -tol)
        if candidates.size == 0:
            return OPTIMAL, pivots
        enter = int(candidates[0])          # Bland: smallest eligible index
        col = T[:, enter]
        pos = col > tol
        if not pos.any():
            return UNBOUNDED, pivots
        ratios = np.full(m, np.inf)
        ratios[pos] = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * (1 + abs(best)))
        leave = int(min(ties, key=lambda i: basis[i]))
        piv = T[leave, enter]
        T[leave] /= piv
        factors = T[:, enter].copy()
        factors[leave] = 0.0
        T -= np.outer(factors, T[leave])
        basis[leave] = enter
        pivots += 1


def solve_lp(objective: Sequence, rows: Sequence[Sequence], senses: Sequence[str],
             rhs: Sequence, *, free_vars: bool = False, exact: bool = True,
             tol: float = FEAS_TOL) -> SimplexResult:
    """Minimize objective . x subject to rows[i] . x  (senses[i])  rhs[i].

    Variables are nonnegative unless ``free_vars`` (then x = x+ - x-).
    In exact mode every input must be rational and all comparisons are exact;
    in float mode ``tol`` guards pivoting and feasibility.  The returned
    duals satisfy value == duals . rhs at optimality.
    """
    m, n0 = len(rows), len(objective)
    if any(len(r) != n0 for r in rows):
        raise DomainError("constraint row length mismatch")
    if exact:
        conv = Fraction
        objective = [Fraction(v) for v in objective]
        rows = [[Fraction(v) for v in r] for r in rows]
        rhs = [Fraction(v) for v in rhs]
        zero, one = Fraction(0), Fraction(1)
    else:
        conv = float
        zero, one = 0.0, 1.0

    ncols_x = 2 * n0 if free_vars else n0
    slack_col: dict[int, int] = {}
    next_col = ncols_x
    for i, s in enumerate(senses):
        if s not in (GE, LE, EQ):
            raise DomainError(f"unknown constraint sense {s!r}")
        if s != EQ:
            slack_col[i] = next_col
            next_col += 1
    art_col = {i: next_col + i for i in range(m)}
    ncols = next_col + m

    flips = []
    tableau = []
    for i in range(m):
        b = conv(rhs[i])
        coeff = [conv(v) for v in rows[i]]
        sense = senses[i]
        flip = b < 0
        if flip:
            coeff = [-v for v in coeff]
            b = -b
            sense = {GE: LE, LE: GE, EQ: EQ}[sense]
        flips.append(-1 if flip else 1)
        row = [zero] * (ncols + 1)
        for j, v in enumerate(coeff):
            row[j] = row[j] + v
            if free_vars:
                row[n0 + j] = row[n0 + j] - v
        if i in slack_col:
            row[slack_col[i]] = -one if sense == GE else one
        row[art_col[i]] = one
        row[-1] = b
        tableau.append(row)

    basis = [art_col[i] for i in range(m)]
    art_set = set(art_col.values())

    cost1 = [zero] * ncols
    for j in art_set:
        cost1[j] = one

    if exact:
        status, p1 = _pivot_exact(tableau, basis, cost1, ncols, forbid=set())
        infeas = sum(tableau[i][-1] for i in range(m) if basis[i] in art_set)
    else:
        tableau = np.array(tableau, dtype=float)
        basis = np.array(basis, dtype=int)
        cost1 = np.array(cost1, dtype=float)
        status, p1 = _pivot_float(tableau, basis, cost1, ncols, forbid=set(), tol=tol)
        infeas = float(sum(tableau[i][-1] for i in range(m)
                           if int(basis[i]) in art_set))
    if status == UNBOUNDED:  # phase 1 is bounded below by 0; defensive only
        raise SimplexError("phase-1 reported unbounded")
    if (infeas > 0) if exact else (infeas > max(tol, 1e-7)):
        return SimplexResult(INFEASIBLE, None, None, None, p1)

    # Drive leftover artificials out of the basis; drop genuinely redundant rows.
    live = list(range(m))
    i = 0
    while i < len(live):
        bi = int(basis[i])
        if bi in art_set:
            pivot_j = -1
            for j in range(ncols):
                if j in art_set:
                    continue
                a = tableau[i][j]
                if (a != 0) if exact else (abs(a) > tol):
                    pivot_j = j
                    break
            if pivot_j < 0:
                if exact:
                    tableau.pop(i)
                    basis.pop(i)
                else:
                    tableau = np.delete(tableau, i, axis=0)
                    basis = np.delete(basis, i)
                live.pop(i)
                continue
            if exact:
                piv = tableau[i][pivot_j]
                tableau[i] = [v / piv for v in tableau[i]]
                for r in range(len(tableau)):
                    if r != i and tableau[r][pivot_j]:
                        f = tableau[r][pivot_j]
                        tableau[r] = [a - f * b for a, b in zip(tableau[r], tableau[i])]
                basis[i] = pivot_j
            else:
                piv = tableau[i, pivot_j]
                tableau[i] /= piv
                factors = tableau[:, pivot_j].copy()
                factors[i] = 0.0
                tableau -= np.outer(factors, tableau[i])
                basis[i] = pivot_j
        i += 1

    cost2 = [zero] * ncols
    for j in range(n0):
        cost2[j] = conv(objective[j])
        if free_vars:
            cost2[n0 + j] = -conv(objective[j])
    if not exact:
        cost2 = np.array(cost2, dtype=float)
    if exact:
        status, p2 = _pivot_exact(tableau, basis, cost2, ncols, forbid=art_set)
    else:
        status, p2 = _pivot_float(tableau, basis, cost2, ncols, forbid=art_set, tol=tol)
    if status == UNBOUNDED:
        return SimplexResult(UNBOUNDED, None, None, None, p1 + p2)

    nrows = len(tableau)
    xfull = [zero] * ncols
    for i in range(nrows):
        xfull[int(basis[i])] = tableau[i][-1]
    if free_vars:
        x = [xfull[j] - xfull[n0 + j] for j in range(n0)]
    else:
        x = [xfull[j] for j in range(n0)]
    value = sum(objective[j] * x[j] for j in range(n0))

    pos_of_row = {orig: pos for pos, orig in enumerate(live)}
    duals = []
    for orig in range(m):
        if orig not in pos_of_row:
            duals.append(zero)
            continue
        col = art_col[orig]
        y = sum(cost2[int(basis[i])] * tableau[i][col] for i in range(nrows))
        duals.append(y * flips[orig])
    if not exact:
        x = [float(v) for v in x]
        value = float(value)
        duals = [float(v) for v in duals]
    return SimplexResult(OPTIMAL, x, value, duals, p1 + p2)


# ---------------------------------------------------------------------------
# Weight vectors and the ordered-cone partition
# ---------------------------------------------------------------------------

def as_weights(values: Iterable) -> tuple[Fraction, ...]:
    w = tuple(Fraction(v) for v in values)
    if any(v < 0 for v in w):
        raise DomainError("weights must be nonnegative")
    return w


def parse_weights(text: str, K: Optional[int] = None) -> tuple[Fraction, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        w = as_weights(Fraction(p) for p in parts)
    except (ValueError, ZeroDivisionError):
        raise DomainError(f"cannot parse weight vector {text!r}") from None
    if K is not None and len(w) != K:
        raise DomainError(f"expected {K} weights, got {len(w)}")
    return w


def is_sorted_desc(w: Sequence[Fraction]) -> bool:
    return all(w[i] >= w[i + 1] for i in range(len(w) - 1))


def sort_weights(w: Sequence[Fraction]) -> tuple[tuple[Fraction, ...], tuple[int, ...]]:
    """Stable descending sort; perm[i-1] is the original index shown at slot i."""
    order = sorted(range(len(w)), key=lambda i: (-w[i], i))
    return tuple(w[i] for i in order), tuple(i + 1 for i in order)


def weight_class(w: Sequence[Fraction], alpha: int) -> tuple[int, Fraction]:
    """Split index l and tail average for a sorted weight vector at one level.

    l is the largest index in [1:alpha-1] whose weight strictly exceeds the
    average of all later weights spread over alpha - l slots (0 when none);
    the tail average is that average at l.  Exact rational comparisons; ties
    fall to the non-strict side.
    """
    K = len(w)
    if not 1 <= alpha <= K:
        raise DomainError(f"alpha={alpha} outside [1:{K}]")
    if not is_sorted_desc(w):
        raise DomainError("weight_class requires weights sorted nonincreasing")
    l = 0
    for cand in range(alpha - 1, 0, -1):
        tail = sum(w[cand:], Fraction(0))
        if w[cand - 1] * (alpha - cand) > tail:
            l = cand
            break
    lam = sum(w[l:], Fraction(0)) / (alpha - l)
    return l, lam


# ---------------------------------------------------------------------------
# Multiplier families
# ---------------------------------------------------------------------------

def constraint_pairs(K: int, alpha: int) -> Iterator[tuple[int, int]]:
    """All (V, V') pairs indexing the layer constraints, deterministic order."""
    for V in subsets(K, max_size=alpha):
        need = alpha - subset_size(V)
        rest = [k for k in range(1, K + 1) if not V & (1 << (k - 1))]
        for combo in itertools.combinations(rest, need):
            yield V, mask_from_members(combo)


@dataclass(frozen=True)
class MultiplierFamily:
    """Weights c on the (V, V') constraints of one level; absent keys are 0."""

    K: int
    alpha: int
    entries: Mapping[tuple[int, int], object]

    def __post_init__(self):
        ent = {}
        for (V, Vp), c in dict(self.entries).items():
            if V == 0 or V & Vp or subset_size(V) + subset_size(Vp) != self.alpha:
                raise DomainError(f"bad multiplier key ({members(V)}, {members(Vp)}) "
                                  f"for alpha={self.alpha}")
            if (V | Vp) >> self.K:
                raise DomainError("multiplier key mentions components beyond K")
            ent[(V, Vp)] = c
        object.__setattr__(self, "entries", ent)

    def get(self, V: int, Vp: int):
        return self.entries.get((V, Vp), 0)

    def support(self):
        return sorted(self.entries.items(), key=lambda kv: (kv[0][0], kv[0][1]))

    def per_component_sums(self) -> list:
        sums = [0] * self.K
        for (V, _), c in self.entries.items():
            for k in members(V):
                sums[k - 1] = sums[k - 1] + c
        return sums

    def min_entry(self):
        return min((c for c in self.entries.values()), default=0)

    def relabel(self, perm: Sequence[int]) -> "MultiplierFamily":
        ent = {(relabel_mask(V, perm), relabel_mask(Vp, perm)): c
               for (V, Vp), c in self.entries.items()}
        return MultiplierFamily(self.K, self.alpha, ent)


@dataclass(frozen=True)
class LPInstance:
    objective: tuple[Fraction, ...]
    region: "LayerRegion"
    alpha: int


@dataclass(frozen=True)
class LPSolution:
    status: str
    primal: Optional[tuple]
    value: Optional[object]
    dual: Optional[MultiplierFamily]
    pivots: int = 0


def solve_simplex(instance: LPInstance, *, exact: bool = False,
                  tol: float = FEAS_TOL) -> LPSolution:
    """Solve one layer LP; the dual is keyed back to (V, V') constraints.

    Exact mode requires every constraint rhs to be rational (abstract
    profiles); pmf-derived entropies run in float mode.
    """
    region = instance.region
    rows = [list(h.coeffs) for h in region.halfspaces]
    rhs = [h.rhs for h in region.halfspaces]
    if exact:
        bad = [h for h in rhs if isinstance(h, float)]
        if bad:
            raise DomainError("exact mode requires rational constraint rhs")
    res = solve_lp(list(instance.objective), rows, [GE] * len(rows), rhs,
                   free_vars=True, exact=exact, tol=tol)
    if res.status != OPTIMAL:
        raise SimplexError(f"layer LP reported {res.status}; the layer region "
                           "is nonempty and bounded below, so this indicates bad input")
    entries = {}
    for h, y in zip(region.halfspaces, res.duals):
        keep = (y != 0) if exact else (abs(y) > 1e-13)
        if keep:
            entries[(h.V, h.Vp)] = y
    dual = MultiplierFamily(region.K, instance.alpha, entries)
    if not exact:
        _check_float_solution(instance, res, tol)
    return LPSolution(OPTIMAL, tuple(res.x), res.value, dual, res.pivots)


def _check_float_solution(instance: LPInstance, res: SimplexResult, tol: float):
    region = instance.region
    scale = 1.0 + max((abs(float(h.rhs)) for h in region.halfspaces), default=0.0)
    for h, y in zip(region.halfspaces, res.duals):
        slack = sum(float(c) * x for c, x in zip(h.coeffs, res.x)) - float(h.rhs)
        if slack < -tol * scale:
            raise VerificationError(f"primal infeasibility {slack:.3g} on {h}")
        if y < -tol * scale:
            raise VerificationError(f"negative dual {y:.3g} on {h}")
        if abs(y * slack) > CS_TOL * scale:
            raise VerificationError(f"complementary slackness broken on {h}")


# ---------------------------------------------------------------------------
# Closed forms for the extreme levels
# ---------------------------------------------------------------------------

def closed_form_alpha1(w: Sequence[Fraction], profile: EntropyProfile) -> LPSolution:
    """Bottom level: each rate sits at its own marginal entropy.

    The dual is the unique one: weight w_k on the singleton constraint of
    component k.
    """
    w = as_weights(w)
    K = profile.K
    if len(w) != K:
        raise DomainError("weight length must equal K")
    primal = tuple(float(profile.H(1, 1 << (k - 1))) for k in range(1, K + 1))
    value = sum(float(wk) * r for wk, r in zip(w, primal))
    entries = {(1 << (k - 1), 0): w[k - 1] for k in range(1, K + 1) if w[k - 1] != 0}
    return LPSolution(OPTIMAL, primal, value, MultiplierFamily(K, 1, entries))


def closed_form_alphaK(w: Sequence[Fraction], profile: EntropyProfile) -> LPSolution:
    """Top level: chain-rule rates under a weight-sorted relabelling.

    After sorting w descending (stably), component k pays
    H(U_k | U_{k+1..K}) and the multiplier w_k - w_{k+1} rides on the prefix
    constraint ([1:k] given its complement); everything is mapped back to the
    original labels.
    """
    w = as_weights(w)
    K = profile.K
    if len(w) != K:
        raise DomainError("weight length must equal K")
    ws, perm = sort_weights(w)
    prof = profile.relabel(perm)
    alpha = K

    def tail(k: int) -> int:
        return mask_from_members(range(k + 1, K + 1))

    primal_s = [float(prof.cond(alpha, 1 << (k - 1), tail(k))) for k in range(1, K + 1)]
    entries_s = {}
    value = 0.0
    for k in range(1, K + 1):
        c = ws[k - 1] - (ws[k] if k < K else Fraction(0))
        if c != 0:
            prefix = mask_from_members(range(1, k + 1))
            entries_s[(prefix, tail(k))] = c
            value += float(c) * float(prof.cond(alpha, prefix, tail(k)))
    # Map back: sorted-space component i is original component perm[i-1].
    primal = [0.0] * K
    for i, r in enumerate(primal_s, start=1):
        primal[perm[i - 1] - 1] = r
    dual = MultiplierFamily(K, alpha, entries_s).relabel(perm)
    return LPSolution(OPTIMAL, tuple(primal), value, dual)


# ---------------------------------------------------------------------------
# Multiplier verification (the three optimality conditions)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiplierReport:
    value_ok: bool
    weight_ok: bool
    nonneg_ok: bool
    value_gap: float
    weight_gaps: tuple
    min_entry: object

    @property
    def passed(self) -> bool:
        return self.value_ok and self.weight_ok and self.nonneg_ok


def multiplier_value(c: MultiplierFamily, profile: EntropyProfile, alpha: int) -> float:
    return float(sum(float(coef) * float(profile.cond(alpha, V, Vp))
                     for (V, Vp), coef in c.entries.items()))


def verify_multiplier(c: MultiplierFamily, w: Sequence[Fraction],
                      profile: EntropyProfile, alpha: int, claimed_value,
                      tol: float = 1e-9) -> MultiplierReport:
    """Check the value identity, the per-component weight identity, and
    nonnegativity of a multiplier family against a claimed optimal value.

    The weight identity is exact when the entries and weights are rational;
    otherwise it is checked within ``tol``.
    """
    w = as_weights(w)
    if len(w) != c.K or alpha != c.alpha:
        raise DomainError("multiplier family does not match (w, alpha)")
    val = multiplier_value(c, profile, alpha)
    value_gap = abs(val - float(claimed_value))
    value_ok = value_gap <= tol

    sums = c.per_component_sums()
    exact = all(isinstance(s, (int, Fraction)) for s in sums)
    gaps = []
    weight_ok = True
    for k in range(c.K):
        if exact:
            ok = Fraction(sums[k]) == w[k]
            gaps.append(float(Fraction(sums[k]) - w[k]))
        else:
            ok = abs(float(sums[k]) - float(w[k])) <= tol
            gaps.append(float(sums[k]) - float(w[k]))
        weight_ok = weight_ok and ok

    me = c.min_entry()
    nonneg_ok = (me >= 0) if isinstance(me, (int, Fraction)) else (float(me) >= -tol)
    return MultiplierReport(value_ok, weight_ok, nonneg_ok, value_gap,
                            tuple(gaps), me)
