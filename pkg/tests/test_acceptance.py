"""Acceptance suite: every criterion at full scale, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s`` (or ``dmldc selftest``,
which executes the same functions).  The criteria are ordered so the label
census collected by the duality sweep feeds the void-label clause of the
certificate sweep, exactly as in the CLI runner.
"""

from collections import Counter

from dmldc import selftest

_census = Counter()
_results = {}


def _run(name, **kwargs):
    res = selftest.CRITERIA[name](seed=0, **kwargs)
    _results[name] = res
    print()
    print(res.line())
    assert res.ok, res.failures
    return res


def test_criterion_1_duality_sweep():
    """200 sources x 50 sorted rational weights; closed forms vs simplex at
    every level within 1e-8."""
    res = _run("1", n_sources=200, n_weights=50, census=_census)
    assert res.checks == 200 * 50 * 3


def test_criterion_2_certificate_sweep():
    """Both chain steps proved with exact replayable certificates for all 17
    labels, >= 5 weights each; no void label in the criterion-1 census."""
    res = _run("2", samples_per_label=5, census=_census)
    assert sum(_census.values()) == 200 * 50  # fed by criterion 1
    assert res.checks >= 17 * 5 * 2


def test_criterion_3_region_equality():
    """500 random layer-2 sources: vertex sets agree within 1e-8 and every
    pair-form clause holds."""
    _run("3", n_sources=500)


def test_criterion_4_symmetric_chains():
    """K = 2..6, 50 positive sorted rational weights each: chains build, all
    identities exact; certificates for K <= 5, numeric floor for K = 6;
    trailing-zero weights exercised explicitly."""
    _run("4", n_weights=50, Ks=(2, 3, 4, 5, 6), spot_trials=10_000)


def test_criterion_5_hand_anchors():
    """(a) iid support value 9.0 within 1e-12; (b) the middle-level row whose
    value is w1 H(U1|U2) + w2 H(U2) + w3 H(U3|U2); (c) the uniform-weight
    recursion putting 1/2 on every pair."""
    _run("5")


def test_criterion_6_prover_soundness():
    """Certificates replay exactly; counterexamples are cone points strictly
    negative on the functional; the ranked-drop averaging family is proved
    for every subset and split up to five variables."""
    _run("6", n_functionals=40, max_han_K=5)


def test_criterion_7_mutation_sensitivity():
    """Flipping any single dual-row coefficient sign is detected."""
    _run("7")
