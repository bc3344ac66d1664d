from fractions import Fraction

import numpy as np
import pytest

from dmldc import core, lp, region
from conftest import (oracle_entropy, oracle_vertices, random_layer,
                      random_rational_layer)

F = Fraction
m = core.mask_from_members


def rand_sorted_w(rng, K=3, positive=False):
    while True:
        vals = sorted((F(int(rng.integers(0, 32)), int(rng.integers(1, 8)))
                       for _ in range(K)), reverse=True)
        if positive and vals[-1] == 0:
            continue
        if any(v != 0 for v in vals):
            return tuple(vals)


class TestSolveLp:
    def test_basic_ge_lp(self):
        # min x + y s.t. x + y >= 2, x >= 1 -> value 2, e.g. (1, 1) or (2, 0)
        res = lp.solve_lp([1, 1], [[1, 1], [1, 0]], [lp.GE, lp.GE], [2, 1])
        assert res.status == lp.OPTIMAL
        assert res.value == 2
        assert sum(d * b for d, b in zip(res.duals, [2, 1])) == res.value

    def test_infeasible(self):
        res = lp.solve_lp([1], [[1], [-1]], [lp.GE, lp.GE], [2, -1])
        assert res.status == lp.INFEASIBLE

    def test_unbounded(self):
        res = lp.solve_lp([-1], [[1]], [lp.GE], [0])
        assert res.status == lp.UNBOUNDED

    def test_equality_rows(self):
        res = lp.solve_lp([1, 2], [[1, 1]], [lp.EQ], [3])
        assert res.status == lp.OPTIMAL and res.value == 3 and res.x == [3, 0]

    def test_free_variables(self):
        # min x s.t. x >= -5 with free x -> -5
        res = lp.solve_lp([1], [[1]], [lp.GE], [-5], free_vars=True)
        assert res.status == lp.OPTIMAL and res.value == -5

    def test_strong_duality_random(self, rng):
        for _ in range(25):
            n, mm = 3, 5
            A = rng.integers(-3, 4, size=(mm, n)).tolist()
            b = [F(int(x)) for x in rng.integers(-4, 5, size=mm)]
            c = [F(int(x)) for x in rng.integers(1, 5, size=n)]
            res = lp.solve_lp(c, A, [lp.GE] * mm, b, exact=True)
            if res.status != lp.OPTIMAL:
                continue
            assert sum(d * bi for d, bi in zip(res.duals, b)) == res.value
            assert all(d >= 0 for d in res.duals)

    def test_float_matches_exact(self, rng):
        for _ in range(15):
            n, mm = 3, 6
            A = rng.integers(0, 2, size=(mm, n))
            A[A.sum(axis=1) == 0, 0] = 1
            b = [F(int(x)) for x in rng.integers(0, 8, size=mm)]
            c = [F(int(x)) for x in rng.integers(0, 5, size=n)]
            ex = lp.solve_lp(c, A.tolist(), [lp.GE] * mm, b, exact=True, free_vars=True)
            fl = lp.solve_lp([float(x) for x in c], A.tolist(), [lp.GE] * mm,
                             [float(x) for x in b], exact=False, free_vars=True)
            assert ex.status == fl.status
            if ex.status == lp.OPTIMAL:
                assert fl.value == pytest.approx(float(ex.value), abs=1e-9)


class TestSolveSimplex:
    def test_alpha1_unique_dual(self, rng):
        layer = random_rational_layer(rng)
        prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
        w = lp.as_weights([F(2), F(1), F(3)])
        reg = region.build_layer_region(prof, 1)
        sol = lp.solve_simplex(lp.LPInstance(w, reg, 1))
        for k in (1, 2, 3):
            assert sol.primal[k - 1] == pytest.approx(float(prof.H(1, m([k]))), abs=1e-9)
            assert float(sol.dual.get(m([k]), 0)) == pytest.approx(float(w[k - 1]), abs=1e-9)

    def test_iid_alpha2_value(self, iid3_profile):
        reg = region.build_layer_region(iid3_profile, 2)
        sol = lp.solve_simplex(lp.LPInstance(lp.as_weights([1, 1, 1]), reg, 2))
        assert sol.value == pytest.approx(3.0, abs=1e-12)

    def test_random_rational_instance_vs_vertex_oracle(self, rng):
        # synthetic rational-rhs regions solved exactly; the oracle scans all
        # basic feasible points independently
        for _ in range(10):
            layer = random_rational_layer(rng)
            prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
            # rationalize by rounding entropies to a small grid (still a valid LP)
            vals = {k: F(round(float(v) * 64), 64) for k, v in prof.values.items()}
            rprof = core.EntropyProfile(3, vals, core.ABSTRACT)
            alpha = int(rng.integers(1, 4))
            reg = region.build_layer_region(rprof, alpha)
            w = rand_sorted_w(rng)
            sol = lp.solve_simplex(lp.LPInstance(w, reg, alpha), exact=True)
            rows = np.array([[float(c) for c in h.coeffs] for h in reg.halfspaces])
            rhs = np.array([float(h.rhs) for h in reg.halfspaces])
            verts = oracle_vertices(rows, rhs)
            want = min(sum(float(wk) * v for wk, v in zip(w, x)) for x in verts)
            assert float(sol.value) == pytest.approx(want, abs=1e-8)

    def test_exact_duals_self_consistent(self, rng):
        for _ in range(10):
            vals = {}
            layer = random_rational_layer(rng)
            prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
            vals = {k: F(round(float(v) * 32), 32) for k, v in prof.values.items()}
            rprof = core.EntropyProfile(3, vals, core.ABSTRACT)
            alpha = int(rng.integers(1, 4))
            reg = region.build_layer_region(rprof, alpha)
            w = rand_sorted_w(rng)
            sol = lp.solve_simplex(lp.LPInstance(w, reg, alpha), exact=True)
            rep = lp.verify_multiplier(sol.dual, w, rprof, alpha, sol.value)
            assert rep.passed

    def test_exact_mode_requires_rational_rhs(self, iid3_profile, rng):
        layer = random_layer(rng)
        prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
        reg = region.build_layer_region(prof, 2)
        with pytest.raises(core.DomainError):
            lp.solve_simplex(lp.LPInstance(lp.as_weights([1, 1, 1]), reg, 2), exact=True)


class TestClosedForms:
    def test_alpha1_iid(self, iid3_profile):
        sol = lp.closed_form_alpha1(lp.as_weights([1, 2, 3]), iid3_profile)
        assert sol.value == pytest.approx(6.0, abs=1e-12)

    def test_alpha1_k1(self):
        src = core.LayeredSource(1, (core.LayerPmf((2,), (F(1, 4), F(3, 4))),))
        prof = core.build_profile(src)
        sol = lp.closed_form_alpha1(lp.as_weights([2]), prof)
        assert sol.value == pytest.approx(2 * oracle_entropy(src.layers[0], (1,)),
                                          abs=1e-12)

    def test_alpha1_matches_simplex(self, rng):
        for _ in range(25):
            layer = random_layer(rng)
            prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
            w = rand_sorted_w(rng)
            reg = region.build_layer_region(prof, 1)
            simp = lp.solve_simplex(lp.LPInstance(w, reg, 1))
            assert lp.closed_form_alpha1(w, prof).value == \
                pytest.approx(simp.value, abs=1e-9)

    def test_alphaK_iid_uniform(self, iid3_profile):
        sol = lp.closed_form_alphaK(lp.as_weights([1, 1, 1]), iid3_profile)
        assert sol.primal == pytest.approx((1.0, 1.0, 1.0))
        assert sol.value == pytest.approx(3.0, abs=1e-12)
        assert dict(sol.dual.entries) == {(m([1, 2, 3]), 0): F(1)}

    def test_alphaK_all_equal_chain(self):
        from conftest import all_equal_layer
        prof = core.build_profile(core.LayeredSource(3, (all_equal_layer(),) * 3))
        sol = lp.closed_form_alphaK(lp.as_weights([3, 2, 1]), prof)
        assert sol.primal == pytest.approx((0.0, 0.0, 1.0), abs=1e-12)
        assert sol.value == pytest.approx(1.0, abs=1e-12)

    def test_alphaK_unsorted_relabelling(self, rng):
        layer = random_layer(rng)
        prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
        w = lp.as_weights([F(1), F(3), F(2)])
        sol = lp.closed_form_alphaK(w, prof)
        reg = region.build_layer_region(prof, 3)
        simp = lp.solve_simplex(lp.LPInstance(w, reg, 3))
        assert sol.value == pytest.approx(simp.value, abs=1e-9)
        rep = lp.verify_multiplier(sol.dual, w, prof, 3, sol.value)
        assert rep.passed

    def test_alphaK_matches_simplex(self, rng):
        for _ in range(25):
            layer = random_layer(rng)
            prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
            w = rand_sorted_w(rng)
            reg = region.build_layer_region(prof, 3)
            simp = lp.solve_simplex(lp.LPInstance(w, reg, 3))
            assert lp.closed_form_alphaK(w, prof).value == \
                pytest.approx(simp.value, abs=1e-9)


class TestWeightClass:
    @pytest.mark.parametrize("w,alpha,want", [
        ((1, 1, 1), 2, (0, F(3, 2))),
        ((3, 1, 1), 2, (1, F(2))),
        ((1, 1, 1), 3, (0, F(1))),
        ((5, 1, 1), 3, (1, F(1))),
        ((5, 4, 1), 3, (2, F(1))),
        ((1, 0, 0), 1, (0, F(1))),
    ])
    def test_examples(self, w, alpha, want):
        assert lp.weight_class(lp.as_weights(w), alpha) == want

    def test_unsorted_rejected(self):
        with pytest.raises(core.DomainError):
            lp.weight_class(lp.as_weights([1, 2, 1]), 2)

    def test_split_nondecreasing_in_alpha(self, rng):
        for _ in range(50):
            K = int(rng.integers(2, 7))
            w = rand_sorted_w(rng, K)
            splits = [lp.weight_class(w, a)[0] for a in range(1, K + 1)]
            assert splits[0] == 0
            assert all(a <= b for a, b in zip(splits, splits[1:]))


class TestVerifyMultiplier:
    def test_weight_identity_of_middle_row(self):
        # the (w1 - w2) + w2 = w1 cancellation
        w = lp.as_weights([5, 3, 2])
        fam = lp.MultiplierFamily(3, 2, {
            (m([1]), m([2])): w[0] - w[1],
            (m([3]), m([2])): w[2],
            (m([1, 2]), 0): w[1],
        })
        assert fam.per_component_sums() == [F(5), F(3), F(2)]

    def test_all_zero_with_zero_weights(self, iid3_profile):
        fam = lp.MultiplierFamily(3, 2, {})
        rep = lp.verify_multiplier(fam, lp.as_weights([0, 0, 0]), iid3_profile, 2, 0.0)
        assert rep.passed

    def test_chain_rule_dual_against_simplex_value(self, rng):
        layer = random_layer(rng)
        prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
        w = rand_sorted_w(rng)
        reg = region.build_layer_region(prof, 3)
        simp = lp.solve_simplex(lp.LPInstance(w, reg, 3))
        sol = lp.closed_form_alphaK(w, prof)
        rep = lp.verify_multiplier(sol.dual, w, prof, 3, simp.value)
        assert rep.passed

    def test_failure_reported_per_condition(self, iid3_profile):
        fam = lp.MultiplierFamily(3, 2, {(m([1, 2]), 0): F(1)})
        rep = lp.verify_multiplier(fam, lp.as_weights([1, 1, 1]), iid3_profile, 2, 3.0)
        assert not rep.passed
        assert not rep.value_ok      # value is 2, claimed 3
        assert not rep.weight_ok     # component 3 sums to 0
        assert rep.nonneg_ok


class TestParsing:
    def test_parse_weights(self):
        assert lp.parse_weights("3,1,1") == (F(3), F(1), F(1))
        assert lp.parse_weights("1/2, 1/3, 0", K=3) == (F(1, 2), F(1, 3), F(0))
        with pytest.raises(core.DomainError):
            lp.parse_weights("1,2", K=3)
        with pytest.raises(core.DomainError):
            lp.parse_weights("a,b,c")
        with pytest.raises(core.DomainError):
            lp.parse_weights("-1,2,3")
