import math

import numpy as np
import pytest
from scipy.linalg import expm

from contactlab.groups import GroupError, parse_group
from contactlab.kernel import ProcessParams, parse_kernel
from contactlab.oracle import (OracleTooLarge, apply_generator, build_generator, covariance_sides, duality_residual,
                               exact_expected_infected, gamma_bracket, gamma_form, moment_bound, nonintersection_probability,
                               rising_factorial, rising_factorial_moment, transition_distribution,
                               verify_covariance_formula)


def params(group, kernel="nn(1)", delta=1.0):
    g = parse_group(group)
    return ProcessParams(parse_kernel(g, kernel), delta)


def test_c1_generator():
    gen = build_generator(params("C1", "none"))
    assert gen.Q.shape == (2, 2)
    assert np.allclose(gen.Q, [[0, 0], [1, -1]])


def test_c2_generator_rows():
    p = params("C2")
    gen = build_generator(p)
    e, one = p.group.elements()
    s0 = gen.state([e])
    assert gen.Q[s0, gen.state([e, one])] == 1.0
    assert gen.Q[s0, gen.state([])] == 1.0


@pytest.mark.parametrize("group,kernel", [("C3", "nn(1)"), ("C3", "a:2"), ("C4", "a:1,A:0.5")])
def test_generator_invariants(group, kernel):
    p = params(group, kernel)
    gen = build_generator(p)
    Q = gen.Q
    assert np.allclose(Q.sum(axis=1), 0.0)
    off = Q - np.diag(np.diag(Q))
    assert np.all(off >= 0)
    assert np.all(Q[0] == 0)
    els = gen.elements
    for s in range(gen.n_states):
        A = gen.config(s)
        for j in els:
            if j not in A:
                want = sum(p.kernel.rate(i, j) for i in A)
                assert Q[s, gen.state(A | {j})] == pytest.approx(want)
        for i in A:
            assert Q[s, gen.state(A - {i})] == pytest.approx(p.delta)


def test_reversed_generator_transposes_infection():
    p = params("C3", "a:2")
    fwd = build_generator(p)
    rev = build_generator(p.reversed())
    for s in range(fwd.n_states):
        A = fwd.config(s)
        for j in fwd.elements:
            if j in A:
                continue
            want = sum(p.kernel.rate(j, i) for i in A)
            assert rev.Q[s, rev.state(A | {j})] == pytest.approx(want)


def test_oracle_size_cap():
    with pytest.raises(OracleTooLarge):
        build_generator(params("C5"))
    with pytest.raises(GroupError):
        build_generator(params("Z"))


def test_pure_death_transition():
    gen = build_generator(params("C1", "none"))
    p = transition_distribution(gen, [gen.elements[0]], 1.0)
    assert p[1] == pytest.approx(math.exp(-1), abs=1e-12)
    assert exact_expected_infected(gen, [gen.elements[0]], 1.0) == pytest.approx(math.exp(-1), abs=1e-12)


def test_transition_matches_expm():
    gen = build_generator(params("C2"))
    p0 = gen.point_mass([gen.elements[0]])
    p = transition_distribution(gen, p0, 0.5)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(p, p0 @ expm(0.5 * gen.Q), atol=1e-10)


def test_t_zero_point_mass():
    gen = build_generator(params("C3"))
    A = gen.elements[:2]
    assert np.array_equal(transition_distribution(gen, A, 0.0), gen.point_mass(A))
    assert exact_expected_infected(gen, [gen.elements[0]], 0.0) == 1.0


def test_semigroup_property():
    gen = build_generator(params("C3", "a:2,A:0.5"))
    p0 = gen.point_mass([gen.elements[0]])
    a = transition_distribution(gen, transition_distribution(gen, p0, 0.3), 0.4)
    b = transition_distribution(gen, p0, 0.7)
    assert np.max(np.abs(a - b)) < 1e-9


def test_monotone_in_initial_state():
    for group in ("C2", "C3"):
        gen = build_generator(params(group))
        for s in range(gen.n_states):
            for sup in range(gen.n_states):
                if s & sup == s:
                    lo = exact_expected_infected(gen, gen.config(s), 0.8)
                    hi = exact_expected_infected(gen, gen.config(sup), 0.8)
                    assert lo <= hi + 1e-12


@pytest.mark.parametrize("group,kernel", [("C2", "a:2"), ("C3", "a:2,A:0.5"), ("C3", "nn(1)")])
def test_exact_duality_all_pairs(group, kernel):
    p = params(group, kernel)
    gen = build_generator(p)
    for sa in range(1, gen.n_states):
        for sb in range(1, gen.n_states):
            r = duality_residual(p, gen.config(sa), gen.config(sb), 0.6)
            assert r < 1e-9


def test_nonintersection_at_zero():
    gen = build_generator(params("C3"))
    e, x, y = gen.elements
    assert nonintersection_probability(gen, [e], [x], 0.0) == 1.0
    assert nonintersection_probability(gen, [e], [e, y], 0.0) == 0.0


def test_gamma_examples():
    p = params("C2")
    gen = build_generator(p)
    card = lambda A: float(len(A))
    e = gen.elements[0]
    assert gamma_form(gen, card, card, [e]) == pytest.approx(1.0)
    assert gamma_form(gen, lambda A: 3.0, card, [e]) == 0.0


def test_gamma_bracket_equals_explicit_sum():
    gen = build_generator(params("C3", "a:2,A:0.5"))
    rng = np.random.default_rng(1)
    f, g = rng.normal(size=gen.n_states), rng.normal(size=gen.n_states)
    bracket = gamma_bracket(gen, f, g)
    for s in range(gen.n_states):
        assert gamma_form(gen, f, g, gen.config(s)) == pytest.approx(bracket[s], abs=1e-12)


def test_covariance_pure_death():
    gen = build_generator(params("C1", "none"))
    card = lambda A: float(len(A))
    for t in (0.3, 1.0, 2.5):
        lhs, rhs = covariance_sides(gen, card, card, [gen.elements[0]], t)
        assert lhs == pytest.approx(math.exp(-t) * (1 - math.exp(-t)), abs=1e-12)
        assert abs(lhs - rhs) < 1e-8


def test_covariance_constant_and_random():
    gen = build_generator(params("C2"))
    rng = np.random.default_rng(2)
    f, g = rng.normal(size=gen.n_states), rng.normal(size=gen.n_states)
    lhs, rhs = covariance_sides(gen, np.ones(gen.n_states), g, [gen.elements[0]], 1.0)
    assert abs(lhs) < 1e-12 and abs(rhs) < 1e-8
    mu = rng.dirichlet(np.ones(gen.n_states))
    assert verify_covariance_formula(gen, f, g, mu, 0.7) < 1e-6


def test_rising_factorial_and_moments():
    assert rising_factorial(2, 3) == 24
    p = params("C3")
    gen = build_generator(p)
    e = gen.elements[0]
    val, ok = rising_factorial_moment(gen, [e], 0.0, 3)
    assert val == 6 and ok
    assert moment_bound(p, 1, 0.0, 3) == 6
    val, ok = rising_factorial_moment(gen, [e], 1.0, 2)
    assert ok and val <= 2 * math.exp(2 * 2 * 1.0)
    with pytest.raises(ValueError):
        rising_factorial_moment(gen, [e], 1.0, 0)


def test_generator_kills_constants():
    gen = build_generator(params("C3"))
    assert np.allclose(apply_generator(gen, lambda A: 1.0), 0.0)
