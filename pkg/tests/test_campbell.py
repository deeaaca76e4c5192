import math
from collections import Counter, defaultdict

import numpy as np
import pytest
from scipy.stats import chisquare

from contactlab.campbell import (CAMPBELL_EMPIRICAL, DUAL_SURVIVAL_MOEBIUS, CampbellSample, EmptyEnsemble,
                                 TrivialInvariantLaw, WindowDistribution, campbell_vs_invariant,
                                 campbell_window_distribution, clip_distribution, exact_campbell_laws,
                                 invariant_window_distribution, law_distance, moebius_patterns, recenter_at_typical,
                                 sample_campbell, sample_size_biased, total_variation)
from contactlab.groups import parse_group
from contactlab.kernel import ProcessParams, parse_kernel


def params(group, kernel="nn(1)", delta=1.0):
    g = parse_group(group)
    return ProcessParams(parse_kernel(g, kernel), delta)


def test_size_biased_examples():
    rng = np.random.default_rng(1)
    draws = sample_size_biased([("x", 3.0), ("y", 3.0)], size=20_000, rng=rng)
    assert abs(draws.count("x") / 20_000 - 0.5) < 3 * math.sqrt(0.25 / 20_000)
    n = 100_000
    draws = sample_size_biased([("one", 1.0), ("two", 2.0)], size=n, rng=rng)
    f = draws.count("two") / n
    assert abs(f - 2 / 3) <= 3 * math.sqrt(2 / 9 / n)
    assert sample_size_biased([("only", 0.0), ("this", 1.0)], rng=rng) == "this"
    with pytest.raises(ValueError):
        sample_size_biased([("a", 0.0), ("b", 0.0)])
    with pytest.raises(ValueError):
        sample_size_biased([("a", -1.0)])


def test_campbell_time_zero_and_no_recovery():
    p = params("Z")
    e = p.group.identity
    ens = sample_campbell(p, 100, t=0.0, seed=1)
    assert all(s.configuration == {e} and s.typical_site == e and s.weight == 1.0 for s in ens.samples)
    tiny = sample_campbell(p, 100, gamma=1e-12, seed=1)
    assert all(s.configuration == {e} for s in tiny.samples)
    c1 = params("C1", "none", 0.0)
    ens = sample_campbell(c1, 50, t=3.0, seed=2)
    assert len(ens.samples) == 50
    assert all(s.configuration == {c1.group.identity} for s in ens.samples)


def test_campbell_sample_invariants():
    p = params("Z", "nn(1.5)")
    ens = sample_campbell(p, 2000, gamma=2.0, seed=4)
    assert ens.mode == "exponential"
    assert len(ens.samples) + ens.extinct + ens.flagged == 2000
    for s in ens.samples:
        assert s.typical_site in s.configuration
        assert s.weight == len(s.configuration)
        assert p.group.identity in recenter_at_typical(s)
    assert 0 < ens.effective_sample_size <= len(ens.samples)
    law = ens.recentered_law()
    assert sum(law.values()) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        CampbellSample(frozenset({p.group.identity}), p.group.parse_element("a"), 1.0, 0.0)


def test_empty_ensemble():
    p = params("Z", "none", 5.0)
    ens = sample_campbell(p, 50, t=20.0, seed=1)
    assert ens.empty and ens.extinct == 50
    with pytest.raises(EmptyEnsemble):
        campbell_window_distribution(p, [p.group.identity], 50, t=20.0, seed=1)


def test_typical_site_uniform_given_configuration():
    p = params("Z", "nn(1.5)")
    ens = sample_campbell(p, 40_000, t=1.5, seed=7)
    by_config = defaultdict(Counter)
    for s in ens.samples:
        if len(s.configuration) in (2, 3):
            by_config[s.configuration][s.typical_site] += 1
    pvals = []
    for config, counts in by_config.items():
        obs = np.array([counts[x] for x in sorted(config, key=p.group.sort_key)])
        if obs.sum() >= 50:
            pvals.append(chisquare(obs).pvalue)
    assert len(pvals) >= 3
    # Bonferroni over the tested configurations
    assert min(pvals) > 0.01 / len(pvals)


def test_recenter_examples():
    Z = parse_group("Z")
    e = Z.identity
    two, three = Z.parse_element("2"), Z.parse_element("3")
    assert recenter_at_typical((frozenset({e, two}), e)) == {e, two}
    assert recenter_at_typical((frozenset({two, three}), two)) == {e, Z.parse_element("1")}
    F2 = parse_group("F2")
    a = F2.parse_element("a")
    assert recenter_at_typical((frozenset({F2.identity, a}), a)) == {F2.parse_element("A"), F2.identity}
    with pytest.raises(ValueError):
        recenter_at_typical((frozenset({two}), three))


def test_moebius_synthetic():
    rng = np.random.default_rng(3)
    for n in (1, 2, 3, 4):
        p = rng.dirichlet(np.ones(2 ** n))
        q = {T: float(sum(p[S] for S in range(2 ** n) if not S & T)) for T in range(2 ** n)}
        assert np.max(np.abs(moebius_patterns(q, n) - p)) < 1e-12


def test_clip_distribution():
    p, neg = clip_distribution(np.array([0.5, 0.503, -0.003]))
    assert neg == pytest.approx(0.003) and p.sum() == pytest.approx(1.0) and p.min() >= 0
    with pytest.raises(ValueError):
        clip_distribution(np.array([0.6, 0.45, -0.05]))


def test_invariant_window_trivial_cases():
    p = params("Z", "nn(1)", 0.0)
    g = p.group
    window = [g.identity, g.parse_element("a")]
    w = invariant_window_distribution(p, window, 5.0, 200, seed=1)
    assert w.provenance == DUAL_SURVIVAL_MOEBIUS
    assert w.probabilities[3] == pytest.approx(1.0)
    p = params("Z", "none", 1.0)
    w = invariant_window_distribution(p, window, 30.0, 500, seed=1)
    assert w.probabilities[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        invariant_window_distribution(p, [g.identity] * 2, 1.0, 10)
    with pytest.raises(ValueError):
        invariant_window_distribution(p, list(g.ball_enumerate(3)), 1.0, 10)


def test_window_distribution_validation():
    Z = parse_group("Z")
    w = WindowDistribution((Z.identity,), np.array([0.25, 0.75]), CAMPBELL_EMPIRICAL)
    assert w.pattern_sites(1) == {Z.identity}
    assert w.conditioned_on(Z.identity).probabilities[1] == 1.0
    with pytest.raises(ValueError):
        WindowDistribution((Z.identity,), np.array([0.5, 0.6]), CAMPBELL_EMPIRICAL)
    with pytest.raises(ValueError):
        WindowDistribution((Z.identity,), np.array([0.5, 0.25, 0.25]), CAMPBELL_EMPIRICAL)


def test_total_variation_examples():
    a = np.array([0.1, 0.2, 0.3, 0.4])
    assert total_variation(a, a) == 0.0
    assert total_variation(np.eye(4)[0], np.eye(4)[3]) == 1.0


def test_exact_campbell_identity():
    for g in ("C2", "C3"):
        left, right = exact_campbell_laws(params(g), 0.4)
        assert law_distance(left, right) < 1e-9
        assert sum(left.values()) == pytest.approx(1.0)


def test_campbell_window_matches_exact_on_c2():
    p = params("C2")
    g = p.group
    _, right = exact_campbell_laws(p, 0.4)
    window = g.elements()
    emp = campbell_window_distribution(p, window, 200_000, t=0.4, seed=3)
    exact = np.zeros(4)
    for A, v in right.items():
        exact[sum(1 << b for b, x in enumerate(window) if x in A)] = v
    assert total_variation(emp.probabilities, exact) < 0.01
    assert np.all(np.abs(emp.probabilities - exact) <= 4 * emp.std_errors + 1e-12)


def test_campbell_vs_invariant_refuses_trivial_law():
    p = params("Z", "nn(0.2)", 1.0)
    g = p.group
    with pytest.raises(TrivialInvariantLaw):
        campbell_vs_invariant(p, [g.identity, g.parse_element("a")], 200, gammas=[1.0], horizon=50.0, seed=1)


def test_campbell_vs_invariant_decreases_near_criticality():
    p = params("Z", "nn(1.65)", 1.0)
    g = p.group
    target, series = campbell_vs_invariant(p, [g.identity, g.parse_element("a")], 20_000, gammas=[5.0, 10.0, 20.0],
                                           horizon=100.0, seed=2)
    tv = [pt.tv for pt in series]
    assert tv[0] > tv[-1]
    assert target.clip_mass < 1e-2
    assert all(pt.tv_se >= 0 for pt in series)
