"""Bridge between :class:`ProcessParams` and the compiled kernels."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _fastcore as fc
from .groups import GroupDescriptor, GroupElement
from .kernel import ProcessParams, RateKernel, total_rate

log = logging.getLogger(__name__)

DEFAULT_SIZE_CAP = 1_000_000
CHUNK = 50_000

STATUS_NAMES = {
    fc.ST_ALIVE: "alive",
    fc.ST_EXTINCT: "extinct",
    fc.ST_ESCAPED: "escaped",
    fc.ST_CAPPED: "capped",
    fc.ST_OVERFLOW: "overflow",
}


class CapExceeded(RuntimeError):
    """Raised by callers that refuse to continue with cap-flagged replicas."""


@dataclass(frozen=True)
class CoreKernel:
    """Arrays describing a kernel to the compiled code."""

    group: GroupDescriptor
    kind: int
    kp: np.ndarray
    rows: np.ndarray
    rates: np.ndarray
    cum: np.ndarray
    arate: float

    @classmethod
    def from_kernel(cls, kernel: RateKernel) -> "CoreKernel":
        g = kernel.group
        rows, rates = kernel.core_arrays()
        a = total_rate(kernel)
        cum = np.cumsum(rates) / a if a > 0 else np.zeros(0)
        if cum.size:
            cum[-1] = 1.0
        return cls(g, g.kind_id, g.core_params(), rows, rates, cum, a)

    def codes(self, elements: Iterable[GroupElement]) -> np.ndarray:
        elements = list(elements)
        self.group._check(*elements)
        return np.array([self.group.encode(x) for x in elements], dtype=np.int64)

    def operands(self, elements: Iterable[GroupElement]) -> np.ndarray:
        elements = list(elements)
        if not elements:
            return np.zeros((0, max(self.group.operand_width, self.rows.shape[1] if self.rows.size else 1)),
                            np.int64)
        return self.group.operand_rows(elements)


def _pad(rows: np.ndarray, width: int) -> np.ndarray:
    if rows.shape[1] >= width:
        return rows
    out = np.zeros((rows.shape[0], width), np.int64)
    out[:, : rows.shape[1]] = rows
    return out


@dataclass
class BatchResult:
    obs_times: np.ndarray
    sizes: np.ndarray
    status: np.ndarray
    ext_time: np.ndarray
    events: np.ndarray
    obs_used: np.ndarray
    hits: np.ndarray
    wpat: np.ndarray
    cpat: np.ndarray
    ciota: np.ndarray
    dom: np.ndarray
    gcard: np.ndarray
    store: np.ndarray
    slen: np.ndarray
    seed: int = 0
    rep0: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return self.sizes.shape[0]

    @property
    def flagged(self) -> np.ndarray:
        return (self.status == fc.ST_CAPPED) | (self.status == fc.ST_OVERFLOW)

    @property
    def n_flagged(self) -> int:
        return int(self.flagged.sum())

    def configs(self, r: int, o: int, group: GroupDescriptor) -> frozenset:
        n = int(self.slen[r, o])
        if n < 0:
            raise CapExceeded("configuration did not fit the store buffer")
        return frozenset(group.decode(c) for c in self.store[r, o, :n])


def run_contact(params: ProcessParams, initial: Iterable[GroupElement], obs_times: Sequence[float],
                replicas: int, seed: int, *, rep0: int = 0, dual: bool = False, exp_mean: float = 0.0,
                size_cap: int = DEFAULT_SIZE_CAP, escape: int = 0,
                queries: Sequence[Iterable[GroupElement]] = (), window: Sequence[GroupElement] = (),
                campbell_window: Sequence[GroupElement] = (), domination: Sequence[GroupElement] | None = None,
                want_gcard: bool = False, store_cap: int = 0) -> BatchResult:
    """Run ``replicas`` independent replicas of the forward (or dual) process.

    Replica ``r`` always uses stream ``rep0 + r`` of ``seed``, whatever the
    chunking or thread count.
    """
    kern = params.kernel.reversed() if dual else params.kernel
    ck = CoreKernel.from_kernel(kern)
    group = ck.group
    obs = np.asarray(obs_times, dtype=np.float64)
    if exp_mean > 0:
        obs = np.zeros(1)
    if obs.ndim != 1 or obs.size == 0:
        raise ValueError("need at least one observation time")
    if np.any(np.diff(obs) < 0) or np.any(obs < 0):
        raise ValueError("observation times must be nonnegative and sorted")
    init = ck.codes(initial)
    width = max(group.operand_width, ck.rows.shape[1] if ck.rows.size else 1)
    srows = _pad(ck.rows, width) if ck.rows.size else np.zeros((0, width), np.int64)

    qlist = [ck.codes(q) for q in queries]
    qcodes = np.concatenate(qlist) if qlist else np.zeros(0, np.int64)
    qoff = np.zeros(len(qlist) + 1, np.int64)
    qoff[1:] = np.cumsum([len(q) for q in qlist]) if qlist else []
    wcodes = ck.codes(window) if len(window) else np.zeros(0, np.int64)
    if wcodes.size > 62 or len(campbell_window) > 62:
        raise ValueError("windows are limited to 62 sites")
    crows = _pad(ck.operands(campbell_window), width) if len(campbell_window) else np.zeros((0, width), np.int64)
    if domination is not None and len(domination):
        dom_list = list(domination)
        drows = _pad(ck.operands([dom_list[0].inverse()] + dom_list), width)
    else:
        drows = np.zeros((0, width), np.int64)

    nobs = obs.size
    nq = len(qlist)
    parts = []
    # keep the per-chunk store buffer near 160 MB
    chunk = max(1000, min(CHUNK, 20_000_000 // max(1, nobs * store_cap)))
    for start in range(0, replicas, chunk):
        m = min(chunk, replicas - start)
        out = dict(
            sizes=np.zeros((m, nobs), np.int64),
            status=np.zeros(m, np.int64),
            ext_time=np.zeros(m),
            events=np.zeros(m, np.int64),
            obs_used=np.zeros(m),
            hits=np.zeros((m, nobs, nq), np.bool_),
            wpat=np.zeros((m, nobs if wcodes.size else 0), np.int64),
            cpat=np.zeros((m, nobs if crows.shape[0] else 0), np.int64),
            ciota=np.zeros((m, nobs if crows.shape[0] else 0), np.int64),
            dom=np.zeros((m, nobs if drows.shape[0] else 0), np.bool_),
            gcard=np.zeros((m, nobs if want_gcard else 0)),
            store=np.zeros((m, nobs, store_cap), np.int64),
            slen=np.zeros((m, nobs), np.int64),
        )
        fc.run_batch(ck.kind, ck.kp, srows, ck.rates, ck.cum, ck.arate, float(params.delta),
                     init, obs, float(exp_mean), np.uint64(seed), rep0 + start, size_cap, escape,
                     out["sizes"], out["status"], out["ext_time"], out["events"], out["obs_used"],
                     qcodes, qoff, out["hits"], wcodes, out["wpat"], crows, out["cpat"], out["ciota"],
                     drows, out["dom"], out["gcard"], out["store"], out["slen"])
        parts.append(out)
    merged = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    res = BatchResult(obs_times=obs, seed=int(seed), rep0=rep0, **merged)
    if res.n_flagged:
        log.warning("%d of %d replicas hit a size/encoding cap", res.n_flagged, replicas)
    return res


def seed_from(seed: int, *labels) -> int:
    """Derive a 64-bit seed for a named sub-experiment, deterministically."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1)] + [abs(hash_label(x)) for x in labels])
    return int(ss.generate_state(1, np.uint64)[0])


def hash_label(x) -> int:
    # stable across processes, unlike hash()
    import zlib

    return zlib.crc32(repr(x).encode())


def state_masks(res: BatchResult, elements: Sequence[GroupElement], group: GroupDescriptor) -> np.ndarray:
    """Stored configurations as bit masks over ``elements``, shape ``(replicas, times)``.

    Needs a run with ``store_cap`` at least the number of elements.
    """
    valid = np.arange(res.store.shape[2])[None, None, :] < res.slen[:, :, None]
    out = np.zeros(res.slen.shape, np.int64)
    for b, x in enumerate(elements):
        out |= np.any((res.store == group.encode(x)) & valid, axis=2).astype(np.int64) << b
    return out
