"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the package's own marginalization,
region, and LP code paths: entropies are summed cell by cell from dicts,
vertex values come from a standalone basic-solution scan, and pmf
symmetrization is done by explicit permutation averaging.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from dmldc import core

F = Fraction


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def oracle_entropy(layer: core.LayerPmf, components) -> float:
    """Direct -sum p log2 p over a dict-accumulated marginal."""
    sizes = layer.alphabet_sizes
    marg: dict[tuple, float] = {}
    for idx, p in enumerate(layer.probs):
        cell = []
        rem = idx
        for size in reversed(sizes):
            cell.append(rem % size)
            rem //= size
        cell.reverse()
        key = tuple(cell[k - 1] for k in sorted(components))
        marg[key] = marg.get(key, 0.0) + float(p)
    return -sum(p * math.log2(p) for p in marg.values() if p > 0)


def oracle_vertices(rows: np.ndarray, rhs: np.ndarray, tol: float = 1e-9):
    """All basic feasible points of {x : rows @ x >= rhs}, deduplicated."""
    n = rows.shape[1]
    points = []
    for combo in itertools.combinations(range(len(rows)), n):
        A = rows[list(combo)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, rhs[list(combo)])
        if np.all(rows @ x >= rhs - tol * (1 + np.abs(rhs).max())):
            points.append(x)
    out = []
    for x in points:
        if not any(np.max(np.abs(x - y)) <= 1e-8 for y in out):
            out.append(x)
    return out


def symmetrize_pmf(layer: core.LayerPmf) -> core.LayerPmf:
    """Average the pmf over all component permutations (exact when rational)."""
    K = layer.K
    assert len(set(layer.alphabet_sizes)) == 1, "symmetrization needs equal alphabets"
    size = layer.alphabet_sizes[0]
    perms = list(itertools.permutations(range(K)))
    cells = [F(0)] * len(layer.probs)

    def index_of(cell):
        idx = 0
        for v in cell:
            idx = idx * size + v
        return idx

    for idx, p in enumerate(layer.probs):
        cell = []
        rem = idx
        for _ in range(K):
            cell.append(rem % size)
            rem //= size
        cell.reverse()
        for perm in perms:
            permuted = tuple(cell[perm[i]] for i in range(K))
            cells[index_of(permuted)] += F(p) / len(perms)
    return core.LayerPmf(layer.alphabet_sizes, tuple(cells))


# ---------------------------------------------------------------------------
# Canonical sources
# ---------------------------------------------------------------------------

def iid_bits_layer(K: int) -> core.LayerPmf:
    return core.LayerPmf((2,) * K, tuple(F(1, 2 ** K) for _ in range(2 ** K)))


def iid_bits_source(K: int = 3) -> core.LayeredSource:
    layer = iid_bits_layer(K)
    return core.LayeredSource(K, tuple(layer for _ in range(K)))


def duplicated_pair_layer() -> core.LayerPmf:
    """Components 1 and 2 are one shared fair bit; component 3 independent."""
    probs = [F(0)] * 8
    for a in (0, 1):
        for b in (0, 1):
            probs[a * 4 + a * 2 + b] = F(1, 4)
    return core.LayerPmf((2, 2, 2), tuple(probs))


def all_equal_layer() -> core.LayerPmf:
    probs = [F(0)] * 8
    probs[0] = F(1, 2)
    probs[7] = F(1, 2)
    return core.LayerPmf((2, 2, 2), tuple(probs))


def random_layer(rng: np.random.Generator, sizes=(2, 2, 2)) -> core.LayerPmf:
    p = rng.random(int(np.prod(sizes)))
    p /= p.sum()
    return core.LayerPmf(tuple(sizes), tuple(float(x) for x in p))


def random_rational_layer(rng: np.random.Generator, sizes=(2, 2, 2),
                          den: int = 64) -> core.LayerPmf:
    n = int(np.prod(sizes))
    raw = [int(rng.integers(1, den)) for _ in range(n)]
    tot = sum(raw)
    return core.LayerPmf(tuple(sizes), tuple(F(x, tot) for x in raw))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def iid3_profile():
    return core.build_profile(iid_bits_source(3))


@pytest.fixture
def db_source():
    """Layers 1 and 3 are iid fair bits; layer 2 duplicates a bit across
    the first two components."""
    iid = iid_bits_layer(3)
    return core.LayeredSource(3, (iid, duplicated_pair_layer(), iid))


@pytest.fixture
def db_profile(db_source):
    return core.build_profile(db_source)
