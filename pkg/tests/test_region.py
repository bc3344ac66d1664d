import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmldc import core, lp, region
from conftest import iid_bits_source, oracle_vertices, random_layer

F = Fraction
m = core.mask_from_members


def brute_force_pairs(K, alpha):
    """Independent enumeration of the (V, V') constraint index pairs."""
    out = []
    universe = list(range(1, K + 1))
    for v in range(1, alpha + 1):
        for V in itertools.combinations(universe, v):
            rest = [k for k in universe if k not in V]
            for Vp in itertools.combinations(rest, alpha - v):
                out.append((frozenset(V), frozenset(Vp)))
    return out


class TestBuildRegion:
    @pytest.mark.parametrize("K,alpha,count", [(3, 1, 3), (3, 2, 9), (3, 3, 7),
                                               (4, 2, 18), (2, 2, 3)])
    def test_counts_match_formula_and_bruteforce(self, K, alpha, count, rng):
        layer = random_layer(rng, sizes=(2,) * K)
        prof = core.build_profile(core.LayeredSource(K, (layer,) * K))
        reg = region.build_layer_region(prof, alpha)
        assert len(reg.halfspaces) == count
        assert region.expected_constraint_count(K, alpha) == count
        got = {(frozenset(core.members(h.V)), frozenset(core.members(h.Vp)))
               for h in reg.halfspaces}
        assert got == set(brute_force_pairs(K, alpha))

    def test_incidence_and_rhs(self, db_profile):
        reg = region.build_layer_region(db_profile, 2)
        for h in reg.halfspaces:
            assert h.coeffs == tuple(1 if k in core.members(h.V) else 0
                                     for k in (1, 2, 3))
            assert float(h.rhs) == pytest.approx(
                float(db_profile.cond(2, h.V, h.Vp)), abs=1e-12)

    def test_iid_rhs_is_cardinality(self, iid3_profile):
        for alpha in (1, 2, 3):
            reg = region.build_layer_region(iid3_profile, alpha)
            for h in reg.halfspaces:
                assert float(h.rhs) == pytest.approx(core.subset_size(h.V), abs=1e-12)


class TestVertices:
    def test_orthant_corner(self, iid3_profile):
        reg = region.build_layer_region(iid3_profile, 1)
        assert region.enumerate_vertices(reg) == [(1.0, 1.0, 1.0)]

    def test_db_layer2_single_vertex(self, db_profile):
        reg = region.build_layer_region(db_profile, 2)
        verts = region.enumerate_vertices(reg)
        assert len(verts) == 1
        assert verts[0] == pytest.approx((1.0, 1.0, 1.0), abs=1e-9)

    def test_alpha1_unique_vertex_is_marginal_point(self, rng):
        layer = random_layer(rng)
        prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
        reg = region.build_layer_region(prof, 1)
        verts = region.enumerate_vertices(reg)
        assert len(verts) == 1
        want = tuple(float(prof.H(1, m([k]))) for k in (1, 2, 3))
        assert verts[0] == pytest.approx(want, abs=1e-9)

    def test_vertices_feasible_and_support_consistent(self, rng):
        for _ in range(5):
            layer = random_layer(rng)
            prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
            for alpha in (2, 3):
                reg = region.build_layer_region(prof, alpha)
                verts = region.enumerate_vertices(reg)
                rows = np.array([[float(c) for c in h.coeffs] for h in reg.halfspaces])
                rhs = np.array([float(h.rhs) for h in reg.halfspaces])
                for v in verts:
                    assert np.all(rows @ np.array(v) >= rhs - 1e-9)
                # matches the independent oracle
                want = sorted(tuple(float(x) for x in p)
                              for p in oracle_vertices(rows, rhs))
                assert len(want) == len(verts)
                for a, b in zip(want, verts):
                    assert a == pytest.approx(b, abs=1e-8)
                # min over vertices equals the LP value for random weights
                for _ in range(25):
                    w = tuple(F(int(rng.integers(0, 9)), 1) for _ in range(3))
                    sol = lp.solve_simplex(lp.LPInstance(w, reg, alpha))
                    best = min(sum(float(wk) * x for wk, x in zip(w, v))
                               for v in verts)
                    assert sol.value == pytest.approx(best, abs=1e-8)

    def test_k_cap(self):
        prof = core.build_profile(iid_bits_source(5))
        reg = region.build_layer_region(prof, 1)
        with pytest.raises(core.DomainError):
            region.enumerate_vertices(reg)


class TestMembership:
    def test_iid_corner(self, iid3_profile):
        res = region.region_membership(iid3_profile, (3, 3, 3))
        assert res.member
        for alpha in (1, 2, 3):
            for k in (1, 2, 3):
                assert res.split[(k, alpha)] == pytest.approx(1.0, abs=1e-6)

    def test_iid_below_corner(self, iid3_profile):
        assert not region.region_membership(iid3_profile, (2.9, 3.0, 3.0)).member

    def test_db_closed_form_point_with_witness(self, db_profile):
        # per-layer optima summed across layers; the witness split must be a
        # genuine decomposition (checked directly against every constraint)
        per_layer = []
        for alpha in (1, 2, 3):
            reg = region.build_layer_region(db_profile, alpha)
            per_layer.append(lp.solve_simplex(
                lp.LPInstance(lp.as_weights([1, 1, 1]), reg, alpha)).primal)
        point = tuple(sum(layer[k] for layer in per_layer) for k in range(3))
        res = region.region_membership(db_profile, point)
        assert res.member
        for alpha in (1, 2, 3):
            reg = region.build_layer_region(db_profile, alpha)
            for h in reg.halfspaces:
                got = sum(res.split[(k, alpha)] for k in core.members(h.V))
                assert got >= float(h.rhs) - 1e-6
        for k in (1, 2, 3):
            total = sum(res.split[(k, alpha)] for alpha in (1, 2, 3))
            assert total <= point[k - 1] + 1e-6

    @settings(max_examples=15, deadline=None)
    @given(st.tuples(*(st.floats(0, 2) for _ in range(3))))
    def test_upward_closed(self, bump):
        prof = core.build_profile(iid_bits_source(3))
        assert region.region_membership(prof, tuple(3 + b for b in bump)).member

    def test_k1(self):
        src = core.LayeredSource(1, (core.LayerPmf((2,), (F(1, 4), F(3, 4))),))
        prof = core.build_profile(src)
        h = float(prof.H(1, m([1])))
        assert region.region_membership(prof, (h + 1e-6,)).member
        assert not region.region_membership(prof, (h - 1e-3,)).member


class TestSupportValue:
    def test_iid_uniform_weights(self, iid3_profile):
        assert region.support_value(iid3_profile, lp.as_weights([1, 1, 1])) == \
            pytest.approx(9.0, abs=1e-12)

    def test_k1(self):
        src = core.LayeredSource(1, (core.LayerPmf((2,), (F(1, 4), F(3, 4))),))
        prof = core.build_profile(src)
        want = 2 * float(prof.H(1, m([1])))
        assert region.support_value(prof, lp.as_weights([2])) == \
            pytest.approx(want, abs=1e-12)

    def test_db_source_layers_sum(self, db_profile):
        # layer 2 duplicates one bit: its minimum sum is 3 at uniform weights
        assert region.support_value(db_profile, lp.as_weights([1, 1, 1])) == \
            pytest.approx(9.0, abs=1e-9)

    def test_membership_of_support_minimizers(self, rng):
        for _ in range(5):
            layer = random_layer(rng)
            prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
            w = tuple(F(int(rng.integers(1, 6))) for _ in range(3))
            point = [0.0] * 3
            for alpha in (1, 2, 3):
                reg = region.build_layer_region(prof, alpha)
                sol = lp.solve_simplex(lp.LPInstance(w, reg, alpha))
                for k in range(3):
                    point[k] += sol.primal[k]
            assert region.region_membership(prof, tuple(point)).member


class TestJson:
    def test_region_dump_shape(self, db_profile):
        doc = region.region_to_json(db_profile, [2])
        assert doc["K"] == 3
        layer = doc["layers"][0]
        assert layer["alpha"] == 2
        assert len(layer["halfspaces"]) == 9
        first = layer["halfspaces"][0]
        assert set(first) == {"coeffs", "rhs"}
