"""Exact finite-state oracle for contact processes on small finite groups.

States are subsets of the group, stored as bitmasks over the element order
returned by :meth:`GroupDescriptor.elements`.  Transition laws come from
uniformization of the dense generator; everything here is deterministic and
serves as ground truth for the Monte Carlo code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Union

import numpy as np
from scipy.stats import poisson

from .groups import GroupElement, GroupError
from .kernel import ProcessParams, total_rate

DEFAULT_SITE_CAP = 4
TRUNCATION_EPS = 1e-12  # Poisson tail mass dropped by uniformization

Functional = Union[Callable[[frozenset], float], np.ndarray]


class OracleTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorMatrix:
    params: ProcessParams
    elements: tuple[GroupElement, ...]
    Q: np.ndarray

    @property
    def n_sites(self) -> int:
        return len(self.elements)

    @property
    def n_states(self) -> int:
        return self.Q.shape[0]

    def index(self, g: GroupElement) -> int:
        return self.elements.index(g)

    def state(self, config: Iterable[GroupElement]) -> int:
        mask = 0
        for g in config:
            mask |= 1 << self.index(g)
        return mask

    def config(self, state: int) -> frozenset:
        return frozenset(g for b, g in enumerate(self.elements) if state >> b & 1)

    def sizes(self) -> np.ndarray:
        return np.array([bin(s).count("1") for s in range(self.n_states)], dtype=float)

    def vector(self, f: Functional) -> np.ndarray:
        if isinstance(f, np.ndarray):
            return f.astype(float)
        return np.array([f(self.config(s)) for s in range(self.n_states)], dtype=float)

    def point_mass(self, config: Iterable[GroupElement]) -> np.ndarray:
        p = np.zeros(self.n_states)
        p[self.state(config)] = 1.0
        return p


def build_generator(params: ProcessParams, site_cap: int = DEFAULT_SITE_CAP) -> GeneratorMatrix:
    group = params.group
    if group.finite_order is None:
        raise GroupError(f"{group.name} is not finite; the oracle needs a finite group")
    if group.finite_order > site_cap:
        raise OracleTooLarge(f"|group| = {group.finite_order} exceeds oracle site cap {site_cap}")
    elements = tuple(group.elements())
    n = len(elements)
    idx = {g: b for b, g in enumerate(elements)}
    # a[i, j] = a(i, j)
    a = np.zeros((n, n))
    for i, gi in enumerate(elements):
        for k, rate in params.kernel.support.items():
            a[i, idx[gi * k]] += rate
    Q = np.zeros((2**n, 2**n))
    for s in range(2**n):
        for j in range(n):
            if s >> j & 1:
                Q[s, s & ~(1 << j)] += params.delta
            else:
                inf = sum(a[i, j] for i in range(n) if s >> i & 1)
                if inf > 0:
                    Q[s, s | (1 << j)] += inf
        Q[s, s] = -Q[s].sum()
    return GeneratorMatrix(params, elements, Q)


def _uniformized(gen: GeneratorMatrix, t: float, vec: np.ndarray, left: bool) -> np.ndarray:
    """``vec @ exp(tQ)`` (left) or ``exp(tQ) @ vec`` (right) by uniformization."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    q = float(np.max(-np.diag(gen.Q)))
    if t == 0 or q == 0:
        return vec.astype(float).copy()
    P = np.eye(gen.n_states) + gen.Q / q
    # split long horizons so Poisson weights stay well scaled
    pieces = max(1, math.ceil(q * t / 50.0))
    h = t / pieces
    mean = q * h
    nmax = int(poisson.isf(TRUNCATION_EPS, mean)) + 1
    w = poisson.pmf(np.arange(nmax + 1), mean)
    out = vec.astype(float)
    for _ in range(pieces):
        term = out
        acc = w[0] * term
        for n in range(1, nmax + 1):
            term = term @ P if left else P @ term
            acc = acc + w[n] * term
        out = acc
    return out


def transition_distribution(gen: GeneratorMatrix, initial, t: float) -> np.ndarray:
    """Law of ``eta_t`` given ``eta_0 = initial`` (a configuration or a law vector)."""
    p0 = initial if isinstance(initial, np.ndarray) else gen.point_mass(initial)
    return _uniformized(gen, t, p0, left=True)


def semigroup_apply(gen: GeneratorMatrix, f: Functional, t: float) -> np.ndarray:
    """``S_t f(A) = E[f(eta^A_t)]`` for every state ``A``."""
    return _uniformized(gen, t, gen.vector(f), left=False)


def exact_expected_infected(gen: GeneratorMatrix, initial, t: float) -> float:
    return float(transition_distribution(gen, initial, t) @ gen.sizes())


def apply_generator(gen: GeneratorMatrix, f: Functional) -> np.ndarray:
    return gen.Q @ gen.vector(f)


def gamma_bracket(gen: GeneratorMatrix, f: Functional, g: Functional) -> np.ndarray:
    """``(G(fg) - (Gf)g - f(Gg)) / 2`` as a vector over states."""
    fv, gv = gen.vector(f), gen.vector(g)
    Q = gen.Q
    return 0.5 * (Q @ (fv * gv) - (Q @ fv) * gv - fv * (Q @ gv))


def gamma_form(gen: GeneratorMatrix, f: Functional, g: Functional, A: Iterable[GroupElement]) -> float:
    """Carre du champ at ``A`` from the explicit sum over infection and recovery moves."""
    fv, gv = gen.vector(f), gen.vector(g)
    params = gen.params
    s = gen.state(A)
    infected = [b for b in range(gen.n_sites) if s >> b & 1]
    total = 0.0
    for i in infected:
        gi = gen.elements[i]
        for k, rate in params.kernel.support.items():
            j = gen.index(gi * k)
            if s >> j & 1:
                continue
            t = s | (1 << j)
            total += rate * (fv[t] - fv[s]) * (gv[t] - gv[s])
        t = s & ~(1 << i)
        total += params.delta * (fv[t] - fv[s]) * (gv[t] - gv[s])
    return 0.5 * total


def _gamma_vec(gen: GeneratorMatrix, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    Q = gen.Q
    du = u[None, :] - u[:, None]
    dv = v[None, :] - v[:, None]
    off = Q - np.diag(np.diag(Q))
    return 0.5 * np.sum(off * du * dv, axis=1)


def adaptive_simpson(fun: Callable[[float], float], a: float, b: float, tol: float = 1e-8,
                     max_depth: int = 40) -> float:
    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fun(lm), fun(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        if depth <= 0 or abs(left + right - whole) <= 15 * tol:
            return left + right + (left + right - whole) / 15.0
        return rec(a, m, fa, flm, fm, left, tol / 2, depth - 1) + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1)

    if b == a:
        return 0.0
    fa, fb, fm = fun(a), fun(b), fun(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def _cov(p: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    return float(p @ (u * v) - (p @ u) * (p @ v))


def covariance_sides(gen: GeneratorMatrix, f: Functional, g: Functional, mu, t: float,
                     tol: float = 1e-8) -> tuple[float, float]:
    """Both sides of the covariance formula for the law ``mu S_t``."""
    p0 = mu if isinstance(mu, np.ndarray) else gen.point_mass(mu)
    fv, gv = gen.vector(f), gen.vector(g)
    pt = transition_distribution(gen, p0, t)
    lhs = _cov(pt, fv, gv)
    Stf, Stg = semigroup_apply(gen, fv, t), semigroup_apply(gen, gv, t)

    def integrand(s):
        ps = transition_distribution(gen, p0, t - s)
        return float(ps @ _gamma_vec(gen, semigroup_apply(gen, fv, s), semigroup_apply(gen, gv, s)))

    rhs = _cov(p0, Stf, Stg) + 2.0 * adaptive_simpson(integrand, 0.0, t, tol=tol)
    return lhs, rhs


def verify_covariance_formula(gen: GeneratorMatrix, f: Functional, g: Functional, mu, t: float) -> float:
    lhs, rhs = covariance_sides(gen, f, g, mu, t)
    return abs(lhs - rhs)


def rising_factorial(z: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= z + i
    return out


def moment_bound(params: ProcessParams, n_initial: int, t: float, k: int) -> float:
    """``|A|^<k> exp(k(|a| + (k-2) delta) t)``."""
    return rising_factorial(n_initial, k) * math.exp(k * (total_rate(params.kernel) + (k - 2) * params.delta) * t)


def rising_factorial_moment(gen: GeneratorMatrix, initial, t: float, k: int) -> tuple[float, bool]:
    if k < 1:
        raise ValueError("k must be a positive integer")
    p = transition_distribution(gen, initial, t)
    values = np.array([rising_factorial(z, k) for z in gen.sizes()])
    exact = float(p @ values)
    bound = moment_bound(gen.params, len(frozenset(initial)), t, k)
    return exact, exact <= bound * (1 + 1e-12)


def nonintersection_probability(gen: GeneratorMatrix, A, B, t: float) -> float:
    """``P[eta^A_t cap B = empty]`` under ``gen``."""
    p = transition_distribution(gen, A, t)
    bmask = gen.state(B)
    return float(sum(p[s] for s in range(gen.n_states) if not s & bmask))


def duality_residual(params: ProcessParams, A, B, t: float, site_cap: int = DEFAULT_SITE_CAP) -> float:
    fwd = build_generator(params, site_cap)
    dual = build_generator(params.reversed(), site_cap)
    return abs(nonintersection_probability(fwd, A, B, t) - nonintersection_probability(dual, B, A, t))
