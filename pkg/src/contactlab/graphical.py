"""Graphical representation: recovery marks, infection arrows and paths.

:class:`GraphicalWindow` realizes the Poisson marks on a space-time box
lazily, one site at a time.  Each site's marks come from a substream keyed
by ``(seed, replica, site)``, so the realization doesn't depend on the
order in which sites are queried.  Forward and dual processes can then be
read off one shared window, which is what coupling arguments need.

For plain sampling of trajectories the compiled event-driven simulator is
used instead (see :func:`simulate_forward`); the two agree in law.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .engine import DEFAULT_SIZE_CAP, STATUS_NAMES, run_contact
from .groups import GroupElement
from .kernel import ProcessParams
from . import _fastcore as fc

Configuration = frozenset  # finite set of GroupElement

_REC = 0
_ARROW = 1


@dataclass
class SiteMarks:
    recoveries: np.ndarray  # sorted times
    arrows: list  # sorted (time, target) pairs


class GraphicalWindow:
    """Poisson recovery marks (rate ``delta``) and arrows (rate ``a(i, j)``) on ``[0, T]``."""

    def __init__(self, params: ProcessParams, T: float, seed: int = 0, replica: int = 0):
        if T < 0:
            raise ValueError("horizon must be nonnegative")
        self.params = params
        self.T = float(T)
        self.seed = int(seed)
        self.replica = int(replica)
        self._marks: dict[GroupElement, SiteMarks] = {}
        self._frozen = False
        self._support = list(params.kernel.support.items())

    @classmethod
    def from_events(cls, params: ProcessParams, T: float, recoveries: dict | None = None,
                    arrows: Iterable[tuple[float, GroupElement, GroupElement]] = ()) -> "GraphicalWindow":
        """A window with exactly the given marks and nothing else."""
        w = cls(params, T)
        w._frozen = True
        recoveries = recoveries or {}
        for site, times in recoveries.items():
            w._marks.setdefault(site, SiteMarks(np.sort(np.asarray(times, float)), []))
        for time, src, dst in arrows:
            m = w._marks.setdefault(src, SiteMarks(np.zeros(0), []))
            m.arrows.append((float(time), dst))
            w._marks.setdefault(dst, SiteMarks(np.zeros(0), []))
        for m in w._marks.values():
            m.arrows.sort(key=lambda e: e[0])
        return w

    @property
    def sites(self) -> list[GroupElement]:
        return list(self._marks)

    def marks(self, site: GroupElement) -> SiteMarks:
        m = self._marks.get(site)
        if m is None:
            m = SiteMarks(np.zeros(0), []) if self._frozen else self._sample(site)
            self._marks[site] = m
        return m

    def _sample(self, site: GroupElement) -> SiteMarks:
        code = site.group.encode(site) & (2**64 - 1)
        rng = np.random.default_rng([self.seed & (2**64 - 1), self.replica, code >> 32, code & 0xFFFFFFFF])
        T = self.T
        nrec = rng.poisson(self.params.delta * T) if self.params.delta > 0 else 0
        rec = np.sort(rng.uniform(0.0, T, nrec))
        arrows = []
        for k, rate in self._support:
            n = rng.poisson(rate * T)
            target = site * k
            arrows.extend((float(x), target) for x in rng.uniform(0.0, T, n))
        arrows.sort(key=lambda e: e[0])
        return SiteMarks(rec, arrows)

    def sample_sites(self, sites: Iterable[GroupElement]) -> "GraphicalWindow":
        for s in sites:
            self.marks(s)
        return self

    # --- queries ---------------------------------------------------------------
    def _check_times(self, *times: float) -> None:
        for t in times:
            if not 0.0 <= t <= self.T:
                raise ValueError(f"time {t} outside the window [0, {self.T}]")

    def forward(self, A: Iterable[GroupElement], s: float, u: float) -> Configuration:
        """``{i : A x {s} ~> (i, u)}``."""
        self._check_times(s, u)
        if u < s:
            raise ValueError("forward query needs s <= u")
        infected = set(A)
        heap: list = []
        pushed = set()

        def push(x, after):
            pushed.add(x)
            m = self.marks(x)
            for t in m.recoveries:
                if after < t <= u:
                    heap.append((float(t), _REC, x, None))
            for t, y in m.arrows:
                if after < t <= u:
                    heap.append((t, _ARROW, x, y))

        for x in list(infected):
            push(x, s)
        heapq.heapify(heap)
        while heap:
            t, kind, x, y = heapq.heappop(heap)
            if kind == _REC:
                infected.discard(x)
            elif x in infected and y not in infected:
                infected.add(y)
                if y not in pushed:
                    push(y, t)
                    heapq.heapify(heap)
        return frozenset(infected)

    def backward(self, B: Iterable[GroupElement], t: float, u: float) -> Configuration:
        """``{i : (i, u) ~> B x {t}}``, the dual process started from ``B`` at time ``t``."""
        self._check_times(t, u)
        if u > t:
            raise ValueError("backward query needs u <= t")
        inv_support = [k.inverse() for k, _ in self._support]
        alive = set(B)
        heap: list = []
        pushed = set()

        def push(y, before):
            # recoveries at y and arrows into y, strictly below `before` and at or above u
            pushed.add(y)
            for tr in self.marks(y).recoveries:
                if u <= tr < before:
                    heap.append((-float(tr), _REC, y, None))
            for kinv in inv_support:
                x = y * kinv
                for ta, dst in self.marks(x).arrows:
                    if dst == y and u <= ta < before:
                        heap.append((-ta, _ARROW, x, y))

        for y in list(alive):
            push(y, t)
        heapq.heapify(heap)
        while heap:
            negt, kind, x, y = heapq.heappop(heap)
            if kind == _REC:
                alive.discard(x)
            elif y in alive and x not in alive:
                alive.add(x)
                if x not in pushed:
                    push(x, -negt)
                    heapq.heapify(heap)
        return frozenset(alive)


def sample_window(params: ProcessParams, sites: Iterable[GroupElement], T: float, replica: int,
                  seed: int = 0) -> GraphicalWindow:
    return GraphicalWindow(params, T, seed=seed, replica=replica).sample_sites(sites)


def path_exists(window: GraphicalWindow, start: tuple[GroupElement, float], end: tuple[GroupElement, float]) -> bool:
    (i, s), (j, t) = start, end
    if s > t:
        raise ValueError("paths go upward in time: need start time <= end time")
    return j in window.forward([i], s, t)


def coupled_duality_check(params: ProcessParams, A: Iterable[GroupElement], B: Iterable[GroupElement],
                          s: float, u: float, t: float, replica: int, seed: int = 0,
                          window: GraphicalWindow | None = None) -> bool:
    """Whether ``eta^{A x {s}}_{u-s}`` and ``eta_dagger^{B x {t}}_{t-u}`` are disjoint on one window."""
    if not s <= u <= t:
        raise ValueError("need s <= u <= t")
    w = window if window is not None else GraphicalWindow(params, t, seed=seed, replica=replica)
    fwd = w.forward(A, s, u)
    bwd = w.backward(B, t, u)
    return fwd.isdisjoint(bwd)


@dataclass
class TrajectorySample:
    initial: Configuration
    times: np.ndarray
    configurations: list[Configuration]
    extinction_time: float | None
    replica: int
    direction: str  # "forward" or "dual"
    flagged: bool = False
    status: str = "alive"

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.configurations])


def _simulate(params: ProcessParams, initial, T, observation_times, replica, seed, dual, size_cap):
    initial = frozenset(initial)
    obs = sorted(float(x) for x in observation_times)
    if T < 0 or any(x < 0 or x > T for x in obs):
        raise ValueError("observation times must lie in [0, T]")
    grid = sorted(set(obs) | {float(T)})
    cap = 256
    group = params.group
    while True:
        res = run_contact(params, initial, grid, 1, seed, rep0=replica, dual=dual,
                          size_cap=size_cap, store_cap=cap)
        if np.all(res.slen[0] >= 0) or res.status[0] in (fc.ST_CAPPED, fc.ST_OVERFLOW) or cap > size_cap:
            break
        cap *= 4
    status = int(res.status[0])
    flagged = status in (fc.ST_CAPPED, fc.ST_OVERFLOW)
    configs = []
    for o, t in enumerate(grid):
        if t in obs:
            if res.slen[0, o] < 0 or res.sizes[0, o] < 0:
                configs.append(None)
            else:
                configs.append(res.configs(0, o, group))
    ext = float(res.ext_time[0]) if status == fc.ST_EXTINCT else None
    return TrajectorySample(initial, np.array(obs), configs, ext, replica,
                            "dual" if dual else "forward", flagged, STATUS_NAMES[status])


def simulate_forward(params: ProcessParams, initial: Iterable[GroupElement], T: float,
                     observation_times: Sequence[float], replica: int, seed: int = 0,
                     size_cap: int = DEFAULT_SIZE_CAP) -> TrajectorySample:
    """One trajectory of ``eta^A``, recorded at ``observation_times``.

    If the size cap is hit the sample is returned with ``flagged=True`` and
    ``None`` in place of the configurations that could not be observed.
    """
    return _simulate(params, initial, T, observation_times, replica, seed, False, size_cap)


def simulate_dual(params: ProcessParams, initial: Iterable[GroupElement], T: float,
                  observation_times: Sequence[float], replica: int, seed: int = 0,
                  size_cap: int = DEFAULT_SIZE_CAP) -> TrajectorySample:
    """One trajectory of the dual process (reversed kernel)."""
    return _simulate(params, initial, T, observation_times, replica, seed, True, size_cap)
