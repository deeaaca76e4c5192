import math

import numpy as np
import pytest

from contactlab.bounds import (EXPONENTIAL, POLYNOMIAL, BranchingState, WalkPath, ball_growth_profile,
                               branching_batch, campbell_overlap_ensemble, rate_walk_endpoints, rw_overlap_decay,
                               simulate_branching, simulate_rate_walk, split_bound)
from contactlab.oracle import build_generator, exact_expected_infected
from contactlab.groups import parse_group
from contactlab.kernel import ProcessParams, parse_kernel


def params(group, kernel="nn(1)", delta=1.0):
    g = parse_group(group)
    return ProcessParams(parse_kernel(g, kernel), delta)


def test_branching_without_events_is_one_particle():
    p = params("Z", "none", 0.0)
    s = simulate_branching(p, 3.0, replica=0, seed=1)
    assert s.population == 1 and s.counts == {p.group.identity: 1}
    assert s.leaders == {p.group.identity}
    with pytest.raises(ValueError):
        from collections import Counter
        BranchingState(Counter({p.group.identity: 0}), frozenset())


def test_branching_mean_population():
    # each particle branches at rate |a| = 2 and dies at rate 1
    p = params("Z", "nn(1)", 1.0)
    b = branching_batch(p, [1.0], 20_000, seed=3)
    pop = b.population[:, 0]
    assert not b.flagged.any()
    assert abs(pop.mean() - math.e) < 4 * pop.std() / math.sqrt(pop.size)


def test_branching_dominates_contact_process():
    p = params("F2", "nn(1)", 0.5)
    b = branching_batch(p, [0.5, 1.0, 2.0], 10_000, seed=4)
    assert b.all_dominated()
    ok = ~b.flagged
    assert np.all(b.population[ok] >= b.contact_size[ok])


def test_branching_marginals_match_rate_walk():
    p = params("Z", "a:1.5,A:0.5", 1.0)
    g = p.group
    sites = [g.identity, g.parse_element("a"), g.parse_element("A")]
    t = 1.0
    b = branching_batch(p, [t], 40_000, seed=5, queries=sites)
    w = rate_walk_endpoints(p, t, 200_000, seed=6)
    growth = math.exp((2.0 - 1.0) * t)
    for k, x in enumerate(sites):
        c = b.counts[:, 0, k]
        f, fse = w.frequency(x)
        se = math.hypot(c.std() / math.sqrt(c.size), fse * growth)
        assert abs(c.mean() - f * growth) < 4 * se


def test_rate_walk_jumps_and_start():
    p = params("Z", "nn(1)")
    path = simulate_rate_walk(p, 0.0, replica=0, seed=1)
    assert path.end == p.group.identity and path.times.size == 0
    w = rate_walk_endpoints(p, 3.0, 50_000, seed=2)
    assert abs(w.jumps.mean() - 6.0) < 4 * math.sqrt(6.0 / 50_000)
    w = rate_walk_endpoints(p, 4.0, 50_000, seed=3)
    g = p.group
    x = np.array([g.decode(c).form[0] for c in w.ends[:5000]] +
                 [g.decode(c).form[0] for c in w.ends[5000:]], dtype=float)
    # variance of a rate-2 symmetric walk at time 4 is 8
    assert abs(x.var() - 8.0) < 0.3
    with pytest.raises(ValueError):
        WalkPath([g.identity], np.array([0.5]))


def test_ball_profiles():
    z = ball_growth_profile(parse_group("Z"), 6)
    assert [s for _, s in z.counts] == [1, 3, 5, 7, 9, 11, 13]
    assert z.classification == POLYNOMIAL
    f2 = ball_growth_profile(parse_group("F2"), 6)
    assert f2.counts[2] == (2, 17)
    assert f2.classification == EXPONENTIAL
    assert f2.growth_rate == pytest.approx(math.log(3), abs=0.05)
    ll = ball_growth_profile(parse_group("lamplighter"), 12)
    assert ll.classification == EXPONENTIAL
    z2 = ball_growth_profile(parse_group("Z^2"), 8)
    assert z2.classification == POLYNOMIAL
    part = ball_growth_profile(parse_group("F2"), 10, cap=1000)
    assert not part.complete and part.classification is None
    assert part.counts[-1][1] <= 1000


def test_split_bound_dominates_expected_size():
    p = params("C3", "nn(1)", 1.0)
    t = 1.0
    bound, ball, se = split_bound(p, t, 1.0, 20_000, seed=1)
    assert ball == 3.0
    exact = exact_expected_infected(build_generator(p), [p.group.identity], t)
    assert bound + 3 * se >= exact
    p = params("Z", "nn(1)", 1.0)
    bound, ball, se = split_bound(p, 2.0, 1.5, 20_000, seed=2)
    assert ball == 7.0 and bound >= ball


def test_rw_overlap_decay_basics():
    g = parse_group("Z")
    R = 8
    ball = g.ball_enumerate(R)
    dec = rw_overlap_decay(g, [(ball, g.identity)] * 10, m_max=R, walks=5, seed=1)
    assert dec.series[0] == 1.0
    assert np.all(dec.series == 1.0)
    single = [(frozenset({g.identity}), g.identity)] * 50
    dec = rw_overlap_decay(g, single, m_max=6, walks=10, seed=2)
    assert dec.series[0] == 1.0
    assert np.all((dec.series >= 0) & (dec.series <= 1))
    assert np.all(dec.series[1::2] == 0.0)
    with pytest.raises(ValueError):
        rw_overlap_decay(g, [], m_max=4)
    with pytest.raises(ValueError):
        rw_overlap_decay(g, single, m_max=0)


def test_overlap_decays_on_free_group():
    p = params("F2", "nn(1)", 0.5)
    ens, _ = campbell_overlap_ensemble(p, 1000, t=3.0, seed=11)
    dec = rw_overlap_decay(p.group, ens, m_max=20, walks=20, seed=12)
    assert dec.series[0] == 1.0
    assert dec.theta_hat + 2 * dec.theta_se < 1.0
