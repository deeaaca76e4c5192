import math

import numpy as np
import pytest

from contactlab.engine import run_contact
from contactlab.graphical import (GraphicalWindow, coupled_duality_check, path_exists, sample_window, simulate_dual,
                                  simulate_forward)
from contactlab.groups import parse_group
from contactlab.kernel import ProcessParams, parse_kernel
from contactlab.oracle import build_generator, transition_distribution


def params(group, kernel="nn(1)", delta=1.0):
    g = parse_group(group)
    return ProcessParams(parse_kernel(g, kernel), delta)


def test_recovery_and_arrow_counts():
    p = params("Z", "nn(1)", 1.0)
    e = p.group.identity
    rec = np.array([sample_window(p, [e], 10.0, r, seed=3).marks(e).recoveries.size for r in range(1000)])
    assert abs(rec.mean() - 10.0) <= 4 * math.sqrt(10.0 / 1000)
    arr = np.array([len(sample_window(p, [e], 5.0, r, seed=4).marks(e).arrows) for r in range(1000)])
    assert abs(arr.mean() - 10.0) <= 4 * math.sqrt(10.0 / 1000)
    m = sample_window(p, [e], 0.0, 0).marks(e)
    assert m.recoveries.size == 0 and not m.arrows


def test_marks_well_formed():
    p = params("F2", "a:1,b:2", 0.7)
    w = sample_window(p, p.group.ball_enumerate(1), 3.0, 5, seed=1)
    for site in w.sites:
        m = w.marks(site)
        assert np.all(np.diff(m.recoveries) > 0)
        assert all(0 <= t <= 3.0 for t, _ in m.arrows)
        assert all(site.inverse() * tgt in p.kernel.support for _, tgt in m.arrows)


def test_recovery_counts_on_disjoint_intervals_uncorrelated():
    p = params("Z", "none", 1.0)
    e = p.group.identity
    first, second = [], []
    for r in range(4000):
        rec = sample_window(p, [e], 2.0, r, seed=9).marks(e).recoveries
        first.append(np.sum(rec < 1.0))
        second.append(np.sum(rec >= 1.0))
    c = np.corrcoef(first, second)[0, 1]
    assert abs(c) < 4 / math.sqrt(4000)


def test_lazy_marks_reproducible_in_any_order():
    p = params("Z^2", "nn(1)", 1.0)
    sites = sorted(p.group.ball_enumerate(2), key=p.group.sort_key)
    a = sample_window(p, sites, 2.0, 7, seed=11)
    b = sample_window(p, reversed(sites), 2.0, 7, seed=11)
    for s in sites:
        ma, mb = a.marks(s), b.marks(s)
        assert np.array_equal(ma.recoveries, mb.recoveries)
        assert ma.arrows == mb.arrows
    assert a.marks(sites[0]) is a.marks(sites[0])


def test_path_fixtures():
    p = params("Z")
    g = p.group
    i, j = g.identity, g.parse_element("a")
    empty = GraphicalWindow.from_events(p, 1.0)
    assert path_exists(empty, (i, 0.0), (i, 1.0))
    assert not path_exists(empty, (i, 0.0), (j, 1.0))
    assert path_exists(empty, (i, 0.5), (i, 0.5))
    one = GraphicalWindow.from_events(p, 1.0, arrows=[(0.5, i, j)])
    assert path_exists(one, (i, 0.0), (j, 1.0))
    blocked = GraphicalWindow.from_events(p, 1.0, recoveries={i: [0.3]}, arrows=[(0.5, i, j)])
    assert not path_exists(blocked, (i, 0.0), (j, 1.0))
    with pytest.raises(ValueError):
        path_exists(empty, (i, 0.8), (i, 0.2))


def test_forward_backward_on_fixture():
    p = params("Z")
    g = p.group
    i, j = g.identity, g.parse_element("a")
    w = GraphicalWindow.from_events(p, 1.0, recoveries={j: [0.9]}, arrows=[(0.5, i, j)])
    assert w.forward([i], 0.0, 0.7) == {i, j}
    assert w.forward([i], 0.0, 1.0) == {i}
    assert w.backward([j], 0.8, 0.0) == {i, j}
    assert w.backward([j], 1.0, 0.0) == set()


def test_coupled_duality_examples():
    p = params("Z")
    e = p.group.identity
    assert coupled_duality_check(p, [e], [e], 0.5, 0.5, 0.5, 0) is False
    empty = GraphicalWindow.from_events(p, 1.0)
    a = p.group.parse_element("a")
    assert coupled_duality_check(p, [e], [a], 0.0, 0.4, 1.0, 0, window=empty) is True
    assert coupled_duality_check(p, [e], [e], 0.0, 0.4, 1.0, 0, window=empty) is False
    with pytest.raises(ValueError):
        coupled_duality_check(p, [e], [e], 0.5, 0.2, 1.0, 0)


def test_coupled_duality_independent_of_u():
    p = params("Z", "a:2,A:1")
    e = p.group.identity
    B = [e, p.group.parse_element("a")]
    for r in range(10_000):
        w = GraphicalWindow(p, 1.0, seed=5, replica=r)
        vals = {coupled_duality_check(p, [e], B, 0.0, u, 1.0, r, window=w) for u in (0.0, 0.37, 1.0)}
        assert len(vals) == 1


def test_window_paths_match_oracle():
    p = params("C2")
    g = p.group
    gen = build_generator(p)
    n = 100_000
    counts = np.zeros(gen.n_states)
    for r in range(n):
        counts[gen.state(GraphicalWindow(p, 0.5, seed=2, replica=r).forward([g.identity], 0.0, 0.5))] += 1
    exact = transition_distribution(gen, [g.identity], 0.5)
    se = np.sqrt(exact * (1 - exact) / n)
    assert np.all(np.abs(counts / n - exact) <= 3 * se)


def test_monotone_and_additive_couplings():
    p = params("Z", "a:2,A:1", 1.0)
    g = p.group
    A = {g.identity}
    B = {g.parse_element("a^3"), g.parse_element("A")}
    for r in range(300):
        w = GraphicalWindow(p, 2.0, seed=8, replica=r)
        for t in (0.5, 1.0, 2.0):
            a, ab, b = w.forward(A, 0.0, t), w.forward(A | B, 0.0, t), w.forward(B, 0.0, t)
            assert a <= ab
            assert ab == a | b


def test_simulate_forward_basic():
    p = params("Z", "nn(1)", 0.0)
    e = p.group.identity
    s = simulate_forward(p, [e], 2.0, [0.0, 0.5, 1.0, 2.0], replica=3, seed=1)
    assert s.configurations[0] == {e}
    for x, y in zip(s.configurations, s.configurations[1:]):
        assert x <= y
    assert s.extinction_time is None and s.direction == "forward"
    s0 = simulate_forward(p, [e], 0.0, [0.0], replica=0)
    assert s0.configurations == [frozenset({e})]


def test_simulate_forward_extinction_recorded():
    p = params("Z", "none", 1.0)
    e = p.group.identity
    s = simulate_forward(p, [e], 50.0, [0.0, 25.0, 50.0], replica=0, seed=1)
    assert s.extinction_time is not None
    assert all(len(c) == 0 for t, c in zip(s.times, s.configurations) if t >= s.extinction_time)


def test_simulate_forward_matches_batch():
    p = params("F2", "nn(0.5)", 1.0)
    e = p.group.identity
    res = run_contact(p, [e], [1.0], 5, 17, store_cap=4096)
    for r in range(5):
        s = simulate_forward(p, [e], 1.0, [1.0], replica=r, seed=17)
        assert s.configurations[0] == res.configs(r, 0, p.group)


def test_size_cap_flags():
    p = params("F2", "nn(2)", 0.1)
    s = simulate_forward(p, [p.group.identity], 10.0, [10.0], replica=0, seed=1, size_cap=50)
    assert s.flagged and s.configurations == [None]


def test_c1_survival_frequency():
    p = params("C1", "none", 1.0)
    res = run_contact(p, [p.group.identity], [1.0], 100_000, 4)
    alive = (res.sizes[:, 0] > 0).mean()
    assert abs(alive - math.exp(-1)) <= 3 * math.sqrt(math.exp(-1) * (1 - math.exp(-1)) / 100_000)


def test_dual_examples():
    p = params("Z", "nn(1)", 0.0)
    e = p.group.identity
    s = simulate_dual(p, [e], 1.0, [0.0, 0.5, 1.0], replica=1)
    assert s.direction == "dual"
    assert s.configurations[0] <= s.configurations[1] <= s.configurations[2]
    # symmetric kernel: dual and forward mean sizes agree
    p = params("Z", "nn(1)", 1.0)
    f = run_contact(p, [e], [1.5], 50_000, 1).sizes[:, 0].astype(float)
    d = run_contact(p, [e], [1.5], 50_000, 2, dual=True).sizes[:, 0].astype(float)
    assert abs(f.mean() - d.mean()) <= 3 * math.sqrt(f.var() / f.size + d.var() / d.size)


def test_dual_matches_reversed_oracle():
    p = params("C2", "a:2")
    g = p.group
    rev = build_generator(p.reversed())
    n = 100_000
    res = run_contact(p, [g.identity], [0.5], n, 6, dual=True, store_cap=2)
    from contactlab.engine import state_masks

    states = state_masks(res, rev.elements, g)[:, 0]
    emp = np.bincount(states, minlength=4) / n
    exact = transition_distribution(rev, [g.identity], 0.5)
    assert np.all(np.abs(emp - exact) <= 3 * np.sqrt(exact * (1 - exact) / n))
