"""Per-layer rate regions and the superposed region over all layers.

A layer region is the set of per-encoder binning rates under which every
decoder subset can recover its components: one halfspace per (V, V') pair,
``sum_{k in V} r_k >= H(V | V')``.  The superposed region is kept implicit
(per-layer constraint lists plus a decomposition LP) because support values
add across layers while explicit Minkowski sums blow up.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import lp
from .core import DomainError, EntropyProfile, members

VERTEX_DEDUP_TOL = 1e-8


@dataclass(frozen=True)
class Halfspace:
    """Constraint coeffs . r >= rhs, tagged with its (V, V') origin."""

    coeffs: tuple
    rhs: object
    V: int
    Vp: int

    def __post_init__(self):
        if not any(c != 0 for c in self.coeffs):
            raise DomainError("halfspace with all-zero coefficients")

    def slack(self, point: Sequence[float]) -> float:
        return sum(float(c) * float(x) for c, x in zip(self.coeffs, point)) - float(self.rhs)


@dataclass(frozen=True)
class LayerRegion:
    K: int
    alpha: int
    halfspaces: tuple[Halfspace, ...]


def expected_constraint_count(K: int, alpha: int) -> int:
    return sum(_comb(K, v) * _comb(K - v, alpha - v) for v in range(1, alpha + 1))


def _comb(n: int, k: int) -> int:
    return math.comb(n, k) if 0 <= k <= n else 0


def build_layer_region(profile: EntropyProfile, alpha: int) -> LayerRegion:
    """One halfspace per admissible (V, V'); incidence vector indicates V."""
    K = profile.K
    if not 1 <= alpha <= K:
        raise DomainError(f"alpha={alpha} outside [1:{K}]")
    halfspaces = []
    for V, Vp in lp.constraint_pairs(K, alpha):
        coeffs = tuple(1 if V & (1 << (k - 1)) else 0 for k in range(1, K + 1))
        halfspaces.append(Halfspace(coeffs, profile.cond(alpha, V, Vp), V, Vp))
    region = LayerRegion(K, alpha, tuple(halfspaces))
    count = expected_constraint_count(K, alpha)
    if len(region.halfspaces) != count:
        raise AssertionError(f"built {len(region.halfspaces)} constraints, "
                             f"formula says {count}")
    return region


def enumerate_vertices(region: LayerRegion, tol: float = 1e-9,
                       dedup_tol: float = VERTEX_DEDUP_TOL) -> list[tuple[float, ...]]:
    """All basic feasible points of a layer region (combinatorial, K <= 4).

    Solves every K-subset of constraints as equalities, keeps the feasible
    solutions, and deduplicates within ``dedup_tol`` in the infinity norm.
    Unbounded directions are implicit (the region is upward closed), so only
    minimal-face basic points come back, sorted lexicographically.
    """
    K = region.K
    if K > 4:
        raise DomainError("vertex enumeration is limited to K <= 4")
    A = np.array([[float(c) for c in h.coeffs] for h in region.halfspaces])
    b = np.array([float(h.rhs) for h in region.halfspaces])
    m = len(region.halfspaces)
    combos = list(itertools.combinations(range(m), K))
    mats = A[[list(c) for c in combos], :]
    rhss = b[[list(c) for c in combos]]
    dets = np.linalg.det(mats)
    keep = np.abs(dets) > 1e-12
    vertices: list[np.ndarray] = []
    if keep.any():
        sols = np.linalg.solve(mats[keep], rhss[keep][..., None])[..., 0]
        scale = 1.0 + np.abs(b).max(initial=0.0)
        for x in sols:
            if np.all(A @ x >= b - tol * scale):
                vertices.append(x)
    unique: list[np.ndarray] = []
    for x in vertices:
        if not any(np.max(np.abs(x - u)) <= dedup_tol for u in unique):
            unique.append(x)
    return sorted(tuple(float(v) for v in x) for x in unique)


@dataclass(frozen=True)
class MembershipResult:
    status: str                     # "member" | "non_member" | "error"
    split: Optional[dict]           # (k, alpha) -> rate, when member
    detail: str = ""

    @property
    def member(self) -> bool:
        return self.status == "member"


def region_membership(profile: EntropyProfile, point: Sequence[float],
                      tol: float = 1e-9) -> MembershipResult:
    """Decide whether a rate tuple decomposes into per-layer region points.

    One feasibility LP over the K*K per-layer rates: every layer vector must
    satisfy its region and the layer sums must stay below the point plus
    ``tol`` componentwise.  The witness split comes back on success.
    """
    K = profile.K
    if len(point) != K:
        raise DomainError("rate point length must equal K")
    nvar = K * K

    def var(k: int, alpha: int) -> int:
        return (alpha - 1) * K + (k - 1)

    rows, senses, rhs = [], [], []
    for alpha in range(1, K + 1):
        for h in build_layer_region(profile, alpha).halfspaces:
            row = [0.0] * nvar
            for k in members(h.V):
                row[var(k, alpha)] = 1.0
            rows.append(row)
            senses.append(lp.GE)
            rhs.append(float(h.rhs))
    for k in range(1, K + 1):
        row = [0.0] * nvar
        for alpha in range(1, K + 1):
            row[var(k, alpha)] = 1.0
        rows.append(row)
        senses.append(lp.LE)
        rhs.append(float(point[k - 1]) + tol)

    try:
        res = lp.solve_lp([0.0] * nvar, rows, senses, rhs,
                          free_vars=False, exact=False, tol=tol)
    except lp.SimplexError as exc:  # pragma: no cover - defensive
        return MembershipResult("error", None, str(exc))
    if res.status == lp.INFEASIBLE:
        return MembershipResult("non_member", None)
    if res.status != lp.OPTIMAL:
        return MembershipResult("error", None, f"LP status {res.status}")
    split = {(k, alpha): res.x[var(k, alpha)]
             for alpha in range(1, K + 1) for k in range(1, K + 1)}
    return MembershipResult("member", split)


def support_value(profile: EntropyProfile, w: Sequence[Fraction], *,
                  exact: bool = False) -> float:
    """Sum over layers of the optimal layer-LP values for one weight vector."""
    w = lp.as_weights(w)
    if any(v < 0 for v in w):
        raise DomainError("support_value requires nonnegative weights")
    total = 0.0
    for alpha in range(1, profile.K + 1):
        region = build_layer_region(profile, alpha)
        sol = lp.solve_simplex(lp.LPInstance(w, region, alpha), exact=exact)
        total += float(sol.value)
    return total


def region_to_json(profile: EntropyProfile, alphas: Optional[Sequence[int]] = None) -> dict:
    K = profile.K
    if alphas is None:
        alphas = range(1, K + 1)
    layers = []
    for alpha in alphas:
        region = build_layer_region(profile, alpha)
        layers.append({
            "alpha": alpha,
            "halfspaces": [
                {"coeffs": [int(c) for c in h.coeffs], "rhs": float(h.rhs)}
                for h in region.halfspaces
            ],
        })
    return {"K": K, "layers": layers}
