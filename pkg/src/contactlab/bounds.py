"""Comparison objects: a dominating branching walk, the rate-a walk, ball growth,
and overlap decay of uniform walks started at a typical infected site.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _fastcore as fc
from .engine import CoreKernel, _pad, seed_from
from .groups import BallTooLarge, DEFAULT_BALL_CAP, GroupDescriptor, GroupElement
from .kernel import ProcessParams, total_rate

DEFAULT_POP_CAP = 2_000_000
GROWTH_THRESHOLD = 0.1
POLYNOMIAL = "polynomial-like"
EXPONENTIAL = "exponential-like"


@dataclass
class BranchingState:
    """Particle counts by site."""

    counts: Counter
    leaders: frozenset  # sites of the contact process riding along
    status: str = "alive"

    def __post_init__(self):
        if any(c < 1 for c in self.counts.values()):
            raise ValueError("stored counts must be positive")

    @property
    def population(self) -> int:
        return int(sum(self.counts.values()))

    def dominates(self, config: Iterable[GroupElement]) -> bool:
        return all(self.counts.get(x, 0) >= 1 for x in config)


def _core(params: ProcessParams):
    ck = CoreKernel.from_kernel(params.kernel)
    width = max(ck.group.operand_width, ck.rows.shape[1] if ck.rows.size else 1)
    srows = _pad(ck.rows, width) if ck.rows.size else np.zeros((0, width), np.int64)
    return ck, srows


def _obs_grid(times) -> np.ndarray:
    obs = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(obs < 0) or np.any(np.diff(obs) < 0):
        raise ValueError("times must be nonnegative and sorted")
    return obs


def simulate_branching(params: ProcessParams, t: float, replica: int, seed: int = 0,
                       pop_cap: int = DEFAULT_POP_CAP) -> BranchingState:
    """One branching walk at time ``t``, with its coupled contact process."""
    obs = _obs_grid([t])
    ck, srows = _core(params)
    g = ck.group
    pop = np.zeros(1, np.int64)
    dom = np.zeros(1, np.bool_)
    rng = fc.rng_new(np.uint64(seed), replica, 2)
    st, pos, lead = fc.branching_replica(ck.kind, ck.kp, srows, ck.cum, ck.arate, float(params.delta),
                                         g.encode(g.identity), obs, rng, pop_cap, np.zeros(0, np.int64),
                                         pop, np.zeros((1, 0), np.int64), np.zeros(1, np.int64), dom)
    counts = Counter(g.decode(c) for c in pos)
    leaders = frozenset(g.decode(c) for c, l in zip(pos, lead) if l)
    names = {fc.ST_ALIVE: "alive", fc.ST_CAPPED: "capped", fc.ST_OVERFLOW: "overflow"}
    return BranchingState(counts, leaders, names.get(int(st), "alive"))


@dataclass
class BranchingBatch:
    times: np.ndarray
    population: np.ndarray  # (replicas, times)
    contact_size: np.ndarray
    counts: np.ndarray  # (replicas, times, queries)
    dominated: np.ndarray
    status: np.ndarray
    queries: tuple

    @property
    def flagged(self) -> np.ndarray:
        return self.status != fc.ST_ALIVE

    def all_dominated(self) -> bool:
        ok = ~self.flagged
        return bool(self.dominated[ok].all())


def branching_batch(params: ProcessParams, times: Sequence[float], replicas: int, seed: int = 0,
                    queries: Sequence[GroupElement] = (), pop_cap: int = DEFAULT_POP_CAP, rep0: int = 0) -> BranchingBatch:
    """Many coupled branching replicas; ``counts`` holds ``B_t(i)`` for ``i`` in ``queries``."""
    obs = _obs_grid(times)
    ck, srows = _core(params)
    g = ck.group
    q = np.array([g.encode(x) for x in queries], dtype=np.int64)
    n, m = replicas, obs.size
    pop = np.zeros((n, m), np.int64)
    counts = np.zeros((n, m, q.size), np.int64)
    cp = np.zeros((n, m), np.int64)
    dom = np.zeros((n, m), np.bool_)
    st = np.zeros(n, np.int64)
    fc.branching_batch(ck.kind, ck.kp, srows, ck.cum, ck.arate, float(params.delta), g.encode(g.identity),
                       obs, np.uint64(seed), rep0, pop_cap, q, pop, counts, cp, dom, st)
    return BranchingBatch(obs, pop, cp, counts, dom, st, tuple(queries))


@dataclass
class WalkPath:
    positions: list
    times: np.ndarray

    def __post_init__(self):
        if len(self.positions) != len(self.times) + 1:
            raise ValueError("need one more position than jump times")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("jump times must be strictly increasing")

    @property
    def end(self) -> GroupElement:
        return self.positions[-1]


def simulate_rate_walk(params: ProcessParams, t: float, replica: int, seed: int = 0) -> WalkPath:
    """Continuous-time walk from the identity jumping by ``k`` at rate ``a(0, k)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    g = params.group
    support = list(params.kernel.support.items())
    a = total_rate(params.kernel)
    rng = np.random.default_rng([int(seed) & (2**64 - 1), int(replica), 3])
    n = rng.poisson(a * t) if a > 0 else 0
    times = np.sort(rng.uniform(0.0, t, n))
    pos = [g.identity]
    if n:
        probs = np.array([r for _, r in support]) / a
        for k in rng.choice(len(support), size=n, p=probs):
            pos.append(pos[-1] * support[k][0])
    return WalkPath(pos, times)


@dataclass
class WalkEndpoints:
    ends: np.ndarray  # codes
    jumps: np.ndarray
    ok: np.ndarray
    group: GroupDescriptor

    def frequency(self, site: GroupElement) -> tuple[float, float]:
        """``P[xi_t = site]`` and its standard error."""
        hit = (self.ends[self.ok] == self.group.encode(site))
        p = float(hit.mean())
        return p, math.sqrt(p * (1 - p) / hit.size)


def rate_walk_endpoints(params: ProcessParams, t: float, replicas: int, seed: int = 0, rep0: int = 0) -> WalkEndpoints:
    if t < 0:
        raise ValueError("t must be nonnegative")
    ck, srows = _core(params)
    g = ck.group
    ends = np.zeros(replicas, np.int64)
    jumps = np.zeros(replicas, np.int64)
    ok = np.zeros(replicas, np.bool_)
    fc.rate_walk_batch(ck.kind, ck.kp, srows, ck.cum, ck.arate, float(t), np.uint64(seed), rep0,
                       g.encode(g.identity), ends, jumps, ok)
    return WalkEndpoints(ends, jumps, ok, g)


# --- ball growth --------------------------------------------------------------------------

@dataclass
class GrowthProfile:
    counts: list  # (n, |ball(n)|)
    classification: str | None
    growth_rate: float | None
    complete: bool = True


def ball_growth_profile(group: GroupDescriptor, max_radius: int, threshold: float = GROWTH_THRESHOLD,
                        cap: int = DEFAULT_BALL_CAP) -> GrowthProfile:
    """Exact ball sizes and a finite-radius growth classification.

    On the last three radii ``log |ball(n)|`` is fitted both as linear in
    ``n`` and as linear in ``log n``.  The profile is exponential-like when
    the linear-in-``n`` fit is the better one and its slope, the local value
    of ``log |ball(n)| / n``, is at least ``threshold``.  Needs a radius of
    at least 3.  If the ball cap is hit, the partial profile is returned
    unclassified with ``complete=False``.
    """
    if max_radius < 0:
        raise ValueError("radius must be nonnegative")
    complete = True
    try:
        layers = group.ball_layers(max_radius, cap=cap)
        R = max_radius
    except BallTooLarge:
        complete = False
        R = max_radius
        while R > 0:
            R -= 1
            try:
                layers = group.ball_layers(R, cap=cap)
                break
            except BallTooLarge:
                continue
        else:
            layers = {group.identity: 0}
    per = np.bincount(np.fromiter(layers.values(), dtype=np.int64), minlength=R + 1)
    sizes = np.cumsum(per)
    counts = [(n, int(sizes[n])) for n in range(R + 1)]
    if not complete or R < 3:
        return GrowthProfile(counts, None, None, complete)
    n = np.arange(R - 2, R + 1, dtype=float)
    y = np.log(sizes[R - 2:].astype(float))
    res_exp = float(np.sum((np.polyval(np.polyfit(n, y, 1), n) - y) ** 2))
    res_pol = float(np.sum((np.polyval(np.polyfit(np.log(n), y, 1), np.log(n)) - y) ** 2))
    rate = float((y[-1] - y[0]) / 2)
    cls = EXPONENTIAL if res_exp < res_pol and rate >= threshold else POLYNOMIAL
    return GrowthProfile(counts, cls, rate, complete)


def split_bound(params: ProcessParams, t: float, h: float, replicas: int, seed: int = 0,
                cap: int = DEFAULT_BALL_CAP) -> tuple[float, float, float]:
    """Right side of ``E|eta_t| <= |ball(h t)| + P[|xi_t| > h t] e^{(|a| - delta) t}``.

    Returns ``(bound, ball_term, tail_term_standard_error)``.
    """
    radius = int(math.floor(h * t))
    ball = len(params.group.ball_enumerate(radius, cap=cap))
    w = rate_walk_endpoints(params, t, replicas, seed)
    g = params.group
    far = np.array([g.word_norm(g.decode(c)) > h * t for c in w.ends[w.ok]])
    p = float(far.mean())
    growth = math.exp((total_rate(params.kernel) - params.delta) * t)
    return ball + p * growth, float(ball), math.sqrt(p * (1 - p) / far.size) * growth


# --- overlap decay ---------------------------------------------------------------------------

@dataclass
class OverlapDecay:
    series: np.ndarray  # P[iota xi_m in B], m = 0..m_max
    std_errors: np.ndarray
    theta_hat: float
    theta_se: float
    fit_range: tuple
    lost_walks: int = 0
    samples: int = 0
    meta: dict = field(default_factory=dict)


def _theta(series: np.ndarray, lo: int, hi: int) -> float:
    m = np.arange(lo, hi + 1)
    y = series[lo:hi + 1]
    if np.any(y <= 0):
        return float("nan")
    return float(math.exp(np.polyfit(m, np.log(y), 1)[0]))


def rw_overlap_decay(group: GroupDescriptor, ensemble: Sequence[tuple[Iterable[GroupElement], GroupElement]],
                     m_max: int, walks: int = 1, seed: int = 0, fit_from: int | None = None,
                     blocks: int = 20) -> OverlapDecay:
    """Average of ``1{iota_n xi_m in B_n}`` over samples ``(B_n, iota_n)`` and uniform walks ``xi``.

    ``xi`` steps uniformly over the group's symmetric generating set.
    ``theta_hat`` is ``exp`` of the slope of ``log`` series over
    ``m in [fit_from, m_max]`` (default: the second half) with a block
    jackknife error over samples.
    """
    samples = [(frozenset(B), iota) for B, iota in ensemble]
    if not samples:
        raise ValueError("empty ensemble")
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    gens = list(group.generators)
    if not gens:
        raise ValueError(f"{group.name} has no generators to walk on")
    width = group.operand_width
    grows = _pad(group.operand_rows(gens), width)
    codes, off = [], [0]
    for B, _ in samples:
        codes.extend(group.encode(x) for x in B)
        off.append(len(codes))
    iotas = np.array([group.encode(i) for _, i in samples], dtype=np.int64)
    out = np.zeros((len(samples), m_max + 1))
    lost = np.zeros(len(samples), np.int64)
    fc.overlap_walks(group.kind_id, group.core_params(), grows, np.array(codes, dtype=np.int64),
                     np.array(off, dtype=np.int64), iotas, m_max, walks, np.uint64(seed), out, lost)
    series = out.mean(axis=0)
    se = out.std(axis=0, ddof=1) / math.sqrt(len(samples)) if len(samples) > 1 else np.zeros(m_max + 1)
    lo = fit_from if fit_from is not None else max(1, m_max // 2)
    theta = _theta(series, lo, m_max)
    n = len(samples)
    nb = max(2, min(blocks, n))
    edges = np.linspace(0, n, nb + 1).astype(int)
    jack = []
    for b in range(nb):
        keep = np.ones(n, dtype=bool)
        keep[edges[b]:edges[b + 1]] = False
        jack.append(_theta(out[keep].mean(axis=0), lo, m_max))
    jack = np.array(jack)
    stat = float(math.sqrt((nb - 1) / nb * np.sum((jack - jack.mean()) ** 2))) if np.isfinite(jack).all() else float("inf")
    mid = lo + (m_max - lo) // 2
    trunc = abs(_theta(series, mid, m_max) - theta) if m_max - mid >= 2 else 0.0
    theta_se = math.hypot(stat, trunc) if math.isfinite(trunc) else float("inf")
    return OverlapDecay(series, se, theta, theta_se, (lo, m_max), int(lost.sum()), n,
                        meta={"statistical": stat, "truncation": trunc})


def campbell_overlap_ensemble(params: ProcessParams, replicas: int, *, t: float | None = None,
                              gamma: float | None = None, seed: int = 0):
    """Campbell samples resampled to equal weight, as ``(B_n, iota_n)`` pairs.

    Each surviving replica is kept with multiplicity drawn by size-biased
    resampling, which turns the weighted ensemble into an unweighted one
    suitable for :func:`rw_overlap_decay`.
    """
    from .campbell import EmptyEnsemble, sample_campbell, sample_size_biased

    ens = sample_campbell(params, replicas, t=t, gamma=gamma, seed=seed)
    if ens.empty:
        raise EmptyEnsemble("every replica died out")
    rng = np.random.default_rng(seed_from(seed, "resample"))
    picks = sample_size_biased([(s, s.weight) for s in ens.samples], size=len(ens.samples), rng=rng)
    return [(s.configuration, s.typical_site) for s in picks], ens
