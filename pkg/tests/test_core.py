from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmldc import core
from conftest import (duplicated_pair_layer, iid_bits_layer, oracle_entropy,
                      random_rational_layer, symmetrize_pmf)

F = Fraction
m = core.mask_from_members


class TestSubsets:
    def test_members_roundtrip(self):
        assert core.members(m([2, 5, 7])) == (2, 5, 7)
        assert core.subset_size(m([2, 5, 7])) == 3

    def test_subsets_order(self):
        got = list(core.subsets(3))
        assert got == [m([1]), m([2]), m([3]), m([1, 2]), m([1, 3]), m([2, 3]),
                       m([1, 2, 3])]

    def test_ranked_subset(self):
        assert core.ranked_subset(m([2, 5, 7]), {1, 3}) == m([2, 7])
        assert core.ranked_subset(m([1, 2, 3, 4]), [1, 3, 4]) == m([1, 3, 4])
        assert core.ranked_subset(m([4]), {1}) == m([4])

    def test_ranked_subset_out_of_range(self):
        with pytest.raises(core.DomainError):
            core.ranked_subset(m([1, 2]), {3})

    def test_relabel_mask(self):
        # new position 1 shows old component 3
        assert core.relabel_mask(m([1]), (3, 1, 2)) == m([3])
        assert core.relabel_mask(m([1, 2]), (3, 1, 2)) == m([1, 3])


class TestEntropy:
    def test_iid_bits_additivity(self):
        layer = iid_bits_layer(3)
        assert core.entropy_of_subset(layer, m([1, 3])) == pytest.approx(2.0, abs=1e-12)

    def test_duplicated_variable(self):
        assert core.entropy_of_subset(duplicated_pair_layer(), m([1, 2])) == \
            pytest.approx(1.0, abs=1e-12)

    def test_empty_subset_rejected(self):
        with pytest.raises(core.DomainError):
            core.entropy_of_subset(iid_bits_layer(2), 0)

    def test_matches_bruteforce_on_random_rational_pmf(self, rng):
        for _ in range(10):
            layer = random_rational_layer(rng)
            for V in core.subsets(3):
                want = oracle_entropy(layer, core.members(V))
                assert core.entropy_of_subset(layer, V) == pytest.approx(want, abs=1e-12)

    def test_mixed_alphabets_against_oracle(self, rng):
        layer = random_rational_layer(rng, sizes=(2, 3, 4))
        for V in core.subsets(3):
            want = oracle_entropy(layer, core.members(V))
            assert core.entropy_of_subset(layer, V) == pytest.approx(want, abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.permutations([1, 2, 3]))
    def test_permutation_invariance(self, seed, perm):
        layer = random_rational_layer(np.random.default_rng(seed))
        permuted = layer.permuted(tuple(perm))
        for V in core.subsets(3):
            old = core.relabel_mask(V, tuple(perm))
            assert core.entropy_of_subset(permuted, V) == \
                pytest.approx(core.entropy_of_subset(layer, old), abs=1e-12)


class TestConditional:
    def test_independent(self, iid3_profile):
        assert iid3_profile.cond(1, m([1]), m([2])) == pytest.approx(1.0, abs=1e-12)

    def test_deterministic(self, db_profile):
        assert db_profile.cond(2, m([1]), m([2])) == pytest.approx(0.0, abs=1e-12)

    def test_empty_given(self, db_profile):
        for V in core.subsets(3):
            assert db_profile.cond(2, V, 0) == db_profile.H(2, V)

    def test_overlap_rejected(self, iid3_profile):
        with pytest.raises(core.DomainError):
            iid3_profile.cond(1, m([1, 2]), m([2]))

    def test_never_exceeds_unconditional(self, rng):
        layer = random_rational_layer(rng, sizes=(2, 2, 3))
        prof = core.build_profile(core.LayeredSource(3, (layer, layer, layer)))
        for V in core.subsets(3):
            rest = [k for k in (1, 2, 3) if not V & (1 << (k - 1))]
            for r in range(len(rest) + 1):
                import itertools
                for combo in itertools.combinations(rest, r):
                    Vp = m(combo)
                    assert float(prof.cond(1, V, Vp)) <= float(prof.H(1, V)) + 1e-9


class TestBuildProfile:
    def test_iid_sizes(self, iid3_profile):
        assert len(iid3_profile.values) == 7 * 3
        for alpha in (1, 2, 3):
            for V in core.subsets(3):
                assert iid3_profile.H(alpha, V) == pytest.approx(core.subset_size(V))

    def test_single_binary_component(self):
        src = core.LayeredSource(
            1, (core.LayerPmf((2,), (F(1, 4), F(3, 4))),))
        prof = core.build_profile(src)
        want = oracle_entropy(src.layers[0], (1,))
        assert prof.H(1, m([1])) == pytest.approx(want, abs=1e-12)
        assert prof.H(1, m([1])) == pytest.approx(0.8112781244591328, abs=1e-12)

    def test_deterministic_source_all_zero(self):
        probs = tuple([F(1)] + [F(0)] * 7)
        layer = core.LayerPmf((2, 2, 2), probs)
        prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
        assert all(v == 0 for v in prof.values.values())


class TestSymmetryDetection:
    def test_iid_symmetric(self, iid3_profile):
        sym = core.is_symmetric_entropywise(iid3_profile)
        assert sym is not None
        for alpha in (1, 2, 3):
            for mm in (1, 2, 3):
                assert sym.marginal(mm, alpha) == pytest.approx(mm)

    def test_pair_copy_not_symmetric(self):
        layer = duplicated_pair_layer()
        prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
        # H({1,2}) = 1 while H({1,3}) = 2
        assert core.is_symmetric_entropywise(prof) is None

    def test_symmetrized_pmf_is_symmetric(self, rng):
        layer = symmetrize_pmf(random_rational_layer(rng))
        prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
        sym = core.is_symmetric_entropywise(prof, tol=1e-12)
        assert sym is not None
        # reconstruction reproduces the input within tolerance
        for (alpha, V), h in prof.values.items():
            assert sym.marginal(core.subset_size(V), alpha) == \
                pytest.approx(float(h), abs=1e-12)

    def test_cond_values(self):
        vals = {(0, a): 0.0 for a in (1, 2)}
        vals.update({(1, 1): 1.0, (2, 1): 1.0, (1, 2): 1.0, (2, 2): 2.0})
        sym = core.SymmetricProfile(2, vals)
        assert sym.cond(2, 2) == pytest.approx(2.0)
        assert sym.cond(1, 2) == pytest.approx(1.0)
        with pytest.raises(core.DomainError):
            sym.cond(3, 2)

    def test_monotonicity_enforced(self):
        vals = {(0, 1): 0.0, (1, 1): 1.0, (2, 1): 0.5}
        with pytest.raises(core.DomainError):
            core.SymmetricProfile(2, vals)


class TestPolymatroidGate:
    def test_pmf_profiles_pass(self, rng):
        for _ in range(5):
            layer = random_rational_layer(rng)
            prof = core.build_profile(core.LayeredSource(3, (layer,) * 3))
            assert core.validate_polymatroid(prof, tol=1e-12).ok

    def test_monotonicity_violation_flagged(self):
        vals = {(1, m([1])): 1.0, (1, m([2])): 1.0, (1, m([1, 2])): 0.5,
                (2, m([1])): 1.0, (2, m([2])): 1.0, (2, m([1, 2])): 2.0}
        prof = core.EntropyProfile(2, vals, core.ABSTRACT)
        rep = core.validate_polymatroid(prof)
        assert not rep.ok
        assert any(v.kind == "monotonicity" and v.alpha == 1 for v in rep.violations)

    def test_submodularity_violation_flagged(self):
        vals = {(1, m([1])): 1.0, (1, m([2])): 1.0, (1, m([1, 2])): 2.5,
                (2, m([1])): 1.0, (2, m([2])): 1.0, (2, m([1, 2])): 2.0}
        prof = core.EntropyProfile(2, vals, core.ABSTRACT)
        rep = core.validate_polymatroid(prof)
        assert not rep.ok
        assert any(v.kind in ("submodularity", "monotonicity") for v in rep.violations)
        assert any(v.kind == "submodularity" for v in rep.violations)


class TestValidationAndJson:
    def test_bad_pmf_rejected(self):
        with pytest.raises(core.DomainError):
            core.LayerPmf((2,), (F(1, 2), F(1, 4)))
        with pytest.raises(core.DomainError):
            core.LayerPmf((2,), (0.5, 0.4))
        with pytest.raises(core.DomainError):
            core.LayerPmf((2,), (F(3, 2), F(-1, 2)))
        with pytest.raises(core.DomainError):
            core.LayerPmf((2, 2), (F(1, 2), F(1, 2)))

    def test_cell_cap(self):
        with pytest.raises(core.DomainError):
            core.LayerPmf((2,) * 21, (0.0,) * (2 ** 21))

    def test_source_json_roundtrip(self, db_source):
        doc = core.source_to_json(db_source)
        back = core.source_from_json(doc)
        assert back.K == 3
        p1 = core.build_profile(db_source)
        p2 = core.build_profile(back)
        for key, v in p1.values.items():
            assert float(p2.values[key]) == pytest.approx(float(v), abs=1e-12)

    def test_source_json_field_errors(self):
        with pytest.raises(core.DomainError, match="layers"):
            core.source_from_json({"K": 1})
        with pytest.raises(core.DomainError, match="layer 1"):
            core.source_from_json(
                {"K": 1, "layers": [{"alphabets": [2], "probs": [0.2, 0.2]}]})

    def test_profile_json_roundtrip(self, iid3_profile):
        doc = core.profile_to_json(iid3_profile)
        back = core.profile_from_json(doc)
        for key, v in iid3_profile.values.items():
            assert float(back.values[key]) == pytest.approx(float(v), abs=1e-12)

    def test_profile_gate_and_bypass(self):
        doc = {"K": 2, "entropies": {"1:1": 1.0, "1:2": 1.0, "1:1,2": 2.5,
                                     "2:1": 1.0, "2:2": 1.0, "2:1,2": 2.0}}
        with pytest.raises(core.DomainError, match="polymatroid"):
            core.profile_from_json(doc)
        prof = core.profile_from_json(doc, validate=False)
        assert prof.origin == core.ABSTRACT

    def test_profile_rational_values(self):
        doc = {"K": 1, "entropies": {"1:1": "3/2"}}
        prof = core.profile_from_json(doc)
        assert prof.H(1, m([1])) == F(3, 2)
