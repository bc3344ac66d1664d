"""Layered-source model and subset-entropy engine.

A source has K encoders and K importance levels ("layers").  Layer ``alpha``
is a joint pmf over K finite-alphabet components; layers are mutually
independent.  Everything downstream (regions, LPs, multiplier certificates)
consumes subset entropies of these layers, so this module owns:

* bitmask subset utilities over the component index set [1:K],
* exact-or-float pmf containers with marginal entropy evaluation,
* entropy profiles (the full table of H over layers x nonempty subsets),
* symmetry detection and the collapsed per-cardinality profile,
* the polymatroid sanity gate used on user-supplied abstract profiles.

Entropies are always reported in bits (log base 2) as floats; exact rational
arithmetic is reserved for weight-vector algebra elsewhere.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

ENTROPY_TOL = 1e-9
POLYMATROID_TOL = 1e-12
MAX_CELLS = 1 << 20


class DomainError(ValueError):
    """An operation was called outside its stated domain."""


class VerificationError(RuntimeError):
    """An internal consistency check that must hold failed."""


# ---------------------------------------------------------------------------
# Subset (bitmask) utilities.  Component k in [1:K] corresponds to bit k-1.
# ---------------------------------------------------------------------------

def mask_from_members(items: Iterable[int]) -> int:
    mask = 0
    for k in items:
        if k < 1:
            raise DomainError(f"component indices are 1-based, got {k}")
        mask |= 1 << (k - 1)
    return mask


def members(mask: int) -> tuple[int, ...]:
    out = []
    k = 1
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return tuple(out)


def subset_size(mask: int) -> int:
    return mask.bit_count()


def full_mask(K: int) -> int:
    return (1 << K) - 1


def subsets(K: int, min_size: int = 1, max_size: Optional[int] = None) -> Iterator[int]:
    """Nonempty subsets of [1:K] ordered by (cardinality, bitmask)."""
    if max_size is None:
        max_size = K
    for size in range(min_size, max_size + 1):
        for combo in itertools.combinations(range(1, K + 1), size):
            yield mask_from_members(combo)


def ranked_subset(mask: int, ranks: Iterable[int]) -> int:
    """Elements of the subset sitting at the given ascending-order ranks.

    Ranks are 1-based positions within the sorted member list, so
    ``ranked_subset({2,5,7}, {1,3}) == {2,7}``.
    """
    elems = members(mask)
    out = 0
    for r in ranks:
        if not 1 <= r <= len(elems):
            raise DomainError(f"rank {r} out of range for a {len(elems)}-element subset")
        out |= 1 << (elems[r - 1] - 1)
    return out


def relabel_mask(mask: int, perm: Sequence[int]) -> int:
    """Map a subset through a component relabelling.

    ``perm[i-1]`` is the old component shown at new position i; the returned
    mask collects ``perm[i-1]`` for every new-position member i of ``mask``.
    """
    return mask_from_members(perm[i - 1] for i in members(mask))


# ---------------------------------------------------------------------------
# Pmf containers
# ---------------------------------------------------------------------------

def _is_rational(x) -> bool:
    return isinstance(x, (int, Fraction))


@dataclass(frozen=True)
class LayerPmf:
    """Joint pmf of the K components of one layer.

    ``probs`` is flat in row-major order with the last component fastest and
    holds either exact rationals or floats.  Exact pmfs must sum to 1
    exactly; float pmfs within ``ENTROPY_TOL``.
    """

    alphabet_sizes: tuple[int, ...]
    probs: tuple

    def __post_init__(self):
        sizes = tuple(int(a) for a in self.alphabet_sizes)
        object.__setattr__(self, "alphabet_sizes", sizes)
        if any(a < 1 for a in sizes):
            raise DomainError("every alphabet size must be >= 1")
        cells = math.prod(sizes)
        if cells > MAX_CELLS:
            raise DomainError(f"layer has {cells} cells, above the {MAX_CELLS} cap")
        probs = tuple(self.probs)
        object.__setattr__(self, "probs", probs)
        if len(probs) != cells:
            raise DomainError(f"expected {cells} probabilities, got {len(probs)}")
        if any((p < 0) for p in probs):
            raise DomainError("probabilities must be nonnegative")
        if all(_is_rational(p) for p in probs):
            if sum(Fraction(p) for p in probs) != 1:
                raise DomainError("rational pmf must sum to exactly 1")
        else:
            total = float(sum(float(p) for p in probs))
            if abs(total - 1.0) > 1e-9:
                raise DomainError(f"pmf sums to {total}, expected 1")

    @property
    def K(self) -> int:
        return len(self.alphabet_sizes)

    def _array(self) -> np.ndarray:
        cached = self.__dict__.get("_arr")
        if cached is None:
            cached = np.array([float(p) for p in self.probs]).reshape(self.alphabet_sizes)
            object.__setattr__(self, "_arr", cached)
        return cached

    def marginal(self, V: int) -> np.ndarray:
        keep = [k - 1 for k in members(V)]
        drop = tuple(ax for ax in range(self.K) if ax not in keep)
        return self._array().sum(axis=drop) if drop else self._array()

    def permuted(self, perm: Sequence[int]) -> "LayerPmf":
        """Pmf after relabelling; new component i is old component perm[i-1]."""
        axes = [p - 1 for p in perm]
        arr = np.array([float(p) for p in self.probs]).reshape(self.alphabet_sizes)
        arr = np.transpose(arr, axes)
        sizes = tuple(self.alphabet_sizes[a] for a in axes)
        return LayerPmf(sizes, tuple(arr.reshape(-1).tolist()))


def entropy_bits(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float).reshape(-1)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum()) if nz.size else 0.0


def entropy_of_subset(layer: LayerPmf, V: int) -> float:
    """Marginal entropy H of the components of ``V`` within one layer."""
    if V == 0:
        raise DomainError("entropy_of_subset requires a nonempty subset")
    if V >> layer.K:
        raise DomainError("subset mentions components beyond K")
    return entropy_bits(layer.marginal(V))


@dataclass(frozen=True)
class LayeredSource:
    """K mutually independent layers, each a joint pmf of K components."""

    K: int
    layers: tuple[LayerPmf, ...]

    def __post_init__(self):
        if self.K < 1:
            raise DomainError("K must be >= 1")
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if len(layers) != self.K:
            raise DomainError(f"expected {self.K} layers, got {len(layers)}")
        for i, layer in enumerate(layers, start=1):
            if layer.K != self.K:
                raise DomainError(f"layer {i} has {layer.K} components, expected {self.K}")

    def permuted(self, perm: Sequence[int]) -> "LayeredSource":
        return LayeredSource(self.K, tuple(l.permuted(perm) for l in self.layers))


# ---------------------------------------------------------------------------
# Entropy profiles
# ---------------------------------------------------------------------------

FROM_PMF = "pmf"
ABSTRACT = "abstract"


@dataclass(frozen=True)
class EntropyProfile:
    """Entropies H(layer alpha, subset V) for every nonempty V and layer.

    Values may be floats or exact rationals (abstract profiles); the empty
    subset is always 0 and is not stored.
    """

    K: int
    values: Mapping[tuple[int, int], object]
    origin: str = FROM_PMF

    def __post_init__(self):
        object.__setattr__(self, "values", dict(self.values))
        needed = (2 ** self.K - 1) * self.K
        if len(self.values) != needed:
            raise DomainError(f"profile must hold {needed} entries, got {len(self.values)}")
        for (alpha, V), h in self.values.items():
            if not 1 <= alpha <= self.K or V == 0 or V >> self.K:
                raise DomainError(f"bad profile key ({alpha}, {V:#x})")
            if float(h) < -ENTROPY_TOL:
                raise DomainError(f"negative entropy {h} at ({alpha}, {members(V)})")

    def H(self, alpha: int, V: int):
        if V == 0:
            return 0
        return self.values[(alpha, V)]

    def cond(self, alpha: int, V: int, Vp: int):
        """H(V | Vp) = H(V u Vp) - H(Vp) within layer ``alpha``."""
        if V == 0:
            raise DomainError("conditional entropy requires nonempty V")
        if V & Vp:
            raise DomainError("V and V' must be disjoint")
        return self.H(alpha, V | Vp) - self.H(alpha, Vp)

    def relabel(self, perm: Sequence[int]) -> "EntropyProfile":
        vals = {
            (alpha, V): self.values[(alpha, relabel_mask(V, perm))]
            for alpha in range(1, self.K + 1)
            for V in subsets(self.K)
        }
        return EntropyProfile(self.K, vals, self.origin)


def build_profile(src: LayeredSource) -> EntropyProfile:
    """Evaluate every subset entropy of every layer of a source."""
    vals: dict[tuple[int, int], float] = {}
    for alpha, layer in enumerate(src.layers, start=1):
        for V in subsets(src.K):
            vals[(alpha, V)] = entropy_of_subset(layer, V)
    return EntropyProfile(src.K, vals, FROM_PMF)


# ---------------------------------------------------------------------------
# Symmetric profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymmetricProfile:
    """Profile of a source whose entropies depend only on subset cardinality.

    ``subset_entropy[(m, alpha)]`` is the (unconditional) entropy of any
    m-subset of layer ``alpha``; m = 0 maps to 0.  The conditional quantities
    used by the closed forms condition an m-subset on a disjoint complement
    filling the layer index up to alpha:

        cond(m, alpha) = H(alpha-subset) - H((alpha-m)-subset).
    """

    K: int
    subset_entropy: Mapping[tuple[int, int], float]

    def __post_init__(self):
        vals = {key: float(v) for key, v in dict(self.subset_entropy).items()}
        for alpha in range(1, self.K + 1):
            vals.setdefault((0, alpha), 0.0)
            if abs(vals[(0, alpha)]) > 1e-15:
                raise DomainError("the empty-subset entropy must be exactly 0")
            for m in range(1, self.K + 1):
                if (m, alpha) not in vals:
                    raise DomainError(f"missing subset entropy for (m={m}, alpha={alpha})")
                if vals[(m, alpha)] < vals[(m - 1, alpha)] - ENTROPY_TOL:
                    raise DomainError(
                        f"subset entropy decreasing in m at (m={m}, alpha={alpha})")
        object.__setattr__(self, "subset_entropy", vals)

    def marginal(self, m: int, alpha: int) -> float:
        return self.subset_entropy[(m, alpha)]

    def cond(self, m: int, alpha: int) -> float:
        if not 0 <= m <= alpha:
            raise DomainError(f"conditional index m={m} outside [0:{alpha}]")
        return self.marginal(alpha, alpha) - self.marginal(alpha - m, alpha)


def is_symmetric_entropywise(profile: EntropyProfile,
                             tol: float = ENTROPY_TOL) -> Optional[SymmetricProfile]:
    """Collapse a profile to per-cardinality values, or None if asymmetric.

    The profile qualifies when, per layer, all subsets of equal cardinality
    carry the same entropy within ``tol``; the collapsed value is their mean.
    """
    vals: dict[tuple[int, int], float] = {}
    for alpha in range(1, profile.K + 1):
        for m in range(1, profile.K + 1):
            group = [float(profile.H(alpha, V))
                     for V in subsets(profile.K, min_size=m, max_size=m)]
            if max(group) - min(group) > tol:
                return None
            vals[(m, alpha)] = sum(group) / len(group)
    return SymmetricProfile(profile.K, vals)


# ---------------------------------------------------------------------------
# Polymatroid gate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    alpha: Optional[int]
    kind: str          # "nonnegativity" | "monotonicity" | "submodularity"
    sets: tuple
    amount: float

    def describe(self) -> str:
        sets = "/".join(str(list(members(m))) for m in self.sets)
        where = f"layer {self.alpha}, " if self.alpha is not None else ""
        return f"{self.kind} violated ({where}sets {sets}) by {self.amount:.3g}"


@dataclass(frozen=True)
class PolymatroidReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def set_function_violations(h: Mapping[int, object], K: int,
                            tol: float = POLYMATROID_TOL,
                            alpha: Optional[int] = None) -> list[Violation]:
    """Polymatroid check of one set function given as {subset mask: value}.

    Checks the elemental family: nonnegativity of singletons, monotonicity
    H(full) >= H(full minus i), and submodularity
    H(A+i) + H(A+j) >= H(A+i+j) + H(A).  These generate every inequality of
    the general monotone-submodular family, so an empty report certifies the
    whole cone membership.
    """
    def val(mask: int) -> float:
        return 0.0 if mask == 0 else float(h[mask])

    out: list[Violation] = []
    for V in subsets(K):
        if val(V) < -tol:
            out.append(Violation(alpha, "nonnegativity", (V,), -val(V)))
    full = full_mask(K)
    for i in range(1, K + 1):
        gap = val(full) - val(full & ~(1 << (i - 1)))
        if gap < -tol:
            out.append(Violation(alpha, "monotonicity",
                                 (full & ~(1 << (i - 1)), full), -gap))
    for i in range(1, K + 1):
        for j in range(i + 1, K + 1):
            ij = (1 << (i - 1)) | (1 << (j - 1))
            rest = [k for k in range(1, K + 1) if not ij & (1 << (k - 1))]
            for size in range(len(rest) + 1):
                for combo in itertools.combinations(rest, size):
                    A = mask_from_members(combo)
                    gap = (val(A | (1 << (i - 1))) + val(A | (1 << (j - 1)))
                           - val(A | ij) - val(A))
                    if gap < -tol:
                        out.append(Violation(alpha, "submodularity",
                                             (A | (1 << (i - 1)), A | (1 << (j - 1))), -gap))
    return out


def validate_polymatroid(profile: EntropyProfile,
                         tol: float = POLYMATROID_TOL) -> PolymatroidReport:
    """Run the polymatroid gate on every layer of a profile."""
    out: list[Violation] = []
    for alpha in range(1, profile.K + 1):
        h = {V: profile.H(alpha, V) for V in subsets(profile.K)}
        out.extend(set_function_violations(h, profile.K, tol, alpha))
    return PolymatroidReport(tuple(out))


# ---------------------------------------------------------------------------
# JSON wire formats (fixed field names)
# ---------------------------------------------------------------------------

def parse_number(x):
    """Accept JSON numbers, ints, or exact 'p/q' strings."""
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, bool):
        raise DomainError("booleans are not numbers here")
    if isinstance(x, int):
        return Fraction(x)
    return float(x)


def source_from_json(doc: Mapping) -> LayeredSource:
    try:
        K = int(doc["K"])
        raw_layers = doc["layers"]
    except KeyError as exc:
        raise DomainError(f"source file missing field {exc}") from None
    if len(raw_layers) != K:
        raise DomainError(f"source declares K={K} but has {len(raw_layers)} layers")
    layers = []
    for idx, entry in enumerate(raw_layers, start=1):
        try:
            alphabets = [int(a) for a in entry["alphabets"]]
            probs = [parse_number(p) for p in entry["probs"]]
        except KeyError as exc:
            raise DomainError(f"layer {idx} missing field {exc}") from None
        try:
            layers.append(LayerPmf(tuple(alphabets), tuple(probs)))
        except DomainError as exc:
            raise DomainError(f"layer {idx}: {exc}") from None
    return LayeredSource(K, tuple(layers))


def source_to_json(src: LayeredSource) -> dict:
    return {
        "K": src.K,
        "layers": [
            {"alphabets": list(l.alphabet_sizes),
             "probs": [float(p) for p in l.probs]}
            for l in src.layers
        ],
    }


def _profile_key(alpha: int, V: int) -> str:
    return f"{alpha}:{','.join(str(k) for k in members(V))}"


def profile_to_json(profile: EntropyProfile) -> dict:
    ent = {}
    for alpha in range(1, profile.K + 1):
        for V in subsets(profile.K):
            h = profile.values[(alpha, V)]
            ent[_profile_key(alpha, V)] = str(h) if _is_rational(h) else float(h)
    return {"K": profile.K, "entropies": ent}


def profile_from_json(doc: Mapping, *, validate: bool = True,
                      tol: float = POLYMATROID_TOL) -> EntropyProfile:
    """Load an abstract profile; the polymatroid gate runs unless disabled."""
    try:
        K = int(doc["K"])
        raw = doc["entropies"]
    except KeyError as exc:
        raise DomainError(f"profile file missing field {exc}") from None
    vals: dict[tuple[int, int], object] = {}
    for key, num in raw.items():
        try:
            alpha_text, members_text = key.split(":")
            alpha = int(alpha_text)
            V = mask_from_members(int(tok) for tok in members_text.split(",") if tok)
        except Exception:
            raise DomainError(f"bad profile key {key!r}; expected 'alpha:k1,k2,...'") from None
        vals[(alpha, V)] = parse_number(num)
    profile = EntropyProfile(K, vals, ABSTRACT)
    if validate:
        report = validate_polymatroid(profile)
        if not report.ok:
            first = report.violations[0]
            raise DomainError(
                f"abstract profile fails the polymatroid gate: {first.describe()} "
                f"({len(report.violations)} violations; pass validate=False to bypass)")
    return profile
