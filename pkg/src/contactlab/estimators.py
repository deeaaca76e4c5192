"""Monte Carlo estimators built on the compiled simulator.

Every estimator takes a master ``seed``; replica ``r`` always uses the same
substream, so results do not change with the thread count.  Replicas that
hit the size cap are excluded from means and counted in
``flagged_replicas``; any estimate with flagged replicas is biased low and
says so through :attr:`EstimateWithError.bias_warning`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import _fastcore as fc
from .engine import DEFAULT_SIZE_CAP, run_contact, seed_from
from .groups import GroupElement
from .kernel import ProcessParams, RateKernel, total_rate

log = logging.getLogger(__name__)

DEFAULT_ESCAPE = 1000
JACKKNIFE_BLOCKS = 20
CONFIDENCE_Z = 1.96  # growth-rate half-widths are 95% intervals

REGRESSION = "regression"
REGRESSION_LOG = "regression_log"
SUBADDITIVE = "subadditive_bound"
GROWTH_METHODS = (REGRESSION, REGRESSION_LOG, SUBADDITIVE)


@dataclass(frozen=True)
class EstimateWithError:
    mean: float
    std_error: float
    replicas: int
    flagged_replicas: int = 0

    def __post_init__(self):
        if not self.std_error >= 0 and not math.isnan(self.std_error):
            raise ValueError("std_error must be nonnegative")
        if self.flagged_replicas > self.replicas:
            raise ValueError("more flagged replicas than replicas")

    @property
    def bias_warning(self) -> bool:
        return self.flagged_replicas > 0

    def within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.mean - target) <= n_se * self.std_error

    @classmethod
    def from_samples(cls, x: np.ndarray, flagged: int = 0) -> "EstimateWithError":
        x = np.asarray(x, dtype=float)
        n = x.size
        if n == 0:
            return cls(float("nan"), float("nan"), flagged, flagged)
        se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(x.mean()), se, n + flagged, flagged)


class GrowthRateUndefined(RuntimeError):
    """No replica alive at some grid time, so ``log pi_t`` is undefined."""

    def __init__(self, time: float):
        super().__init__(f"no survivors at t={time:g}; log pi_t is undefined")
        self.time = time


@dataclass(frozen=True)
class GrowthRateEstimate:
    r_hat: float
    half_width: float
    method: str
    times: np.ndarray
    log_pi: np.ndarray
    replicas: int
    flagged_replicas: int = 0
    extra: dict = field(default_factory=dict)

    def within_bounds(self, delta: float, a_total: float) -> bool:
        hw = self.half_width
        return -delta - hw <= self.r_hat <= a_total - delta + hw


@dataclass(frozen=True)
class SurvivalEstimate:
    rho_hat: float
    std_error: float
    replicas: int
    horizon: float
    escape_threshold: int
    escaped: int
    alive_at_horizon: int
    flagged_replicas: int = 0

    @property
    def positive(self) -> bool:
        """Positive by 3 standard errors."""
        return self.rho_hat > 3 * self.std_error

    @property
    def undecided_fraction(self) -> float:
        """Replicas counted as survivors only because the horizon ran out.

        These are the source of the upward bias of a finite horizon.
        """
        return self.alive_at_horizon / self.replicas if self.replicas else 0.0


# --- pi_t --------------------------------------------------------------------------

def _sizes(params, initial, times, replicas, seed, size_cap):
    res = run_contact(params, initial, times, replicas, seed, size_cap=size_cap)
    return res.sizes, res.flagged


def estimate_pi(params: ProcessParams, initial: Iterable[GroupElement], t: float, replicas: int,
                seed: int = 0, size_cap: int = DEFAULT_SIZE_CAP) -> EstimateWithError:
    """Mean and standard error of ``|eta^A_t|``."""
    initial = frozenset(initial)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if replicas < 2:
        raise ValueError("need at least two replicas")
    if t == 0:
        return EstimateWithError(float(len(initial)), 0.0, replicas)
    return estimate_pi_series(params, initial, [t], replicas, seed, size_cap)[0]


def estimate_pi_series(params: ProcessParams, initial: Iterable[GroupElement], times: Sequence[float],
                       replicas: int, seed: int = 0, size_cap: int = DEFAULT_SIZE_CAP) -> list[EstimateWithError]:
    """:func:`estimate_pi` at several times from one set of trajectories."""
    sizes, flagged = _sizes(params, frozenset(initial), times, replicas, seed, size_cap)
    good = sizes[~flagged]
    nf = int(flagged.sum())
    return [EstimateWithError.from_samples(good[:, o], nf) for o in range(len(times))]


def rising_factorial_moments(params: ProcessParams, initial: Iterable[GroupElement], times: Sequence[float],
                             k: int, replicas: int, seed: int = 0,
                             size_cap: int = DEFAULT_SIZE_CAP) -> list[EstimateWithError]:
    """Estimates of ``E[|eta_t| (|eta_t| + 1) ... (|eta_t| + k - 1)]``."""
    sizes, flagged = _sizes(params, frozenset(initial), times, replicas, seed, size_cap)
    z = sizes[~flagged].astype(float)
    vals = np.ones_like(z)
    for i in range(k):
        vals *= z + i
    nf = int(flagged.sum())
    return [EstimateWithError.from_samples(vals[:, o], nf) for o in range(len(times))]


# --- growth rate ----------------------------------------------------------------------

def _fit(method: str, t: np.ndarray, y: np.ndarray) -> float:
    if method == REGRESSION:
        return float(np.polyfit(t, y, 1)[0])
    if method == REGRESSION_LOG:
        X = np.column_stack([t, np.log(t), np.ones_like(t)])
        return float(np.linalg.lstsq(X, y, rcond=None)[0][0])
    if method == SUBADDITIVE:
        return float(np.min(y / t))
    raise ValueError(f"unknown growth-rate method {method!r}; choose from {GROWTH_METHODS}")


def _jackknife(method, sizes, times, sel, blocks):
    n = sizes.shape[0]
    blocks = max(2, min(blocks, n))
    edges = np.linspace(0, n, blocks + 1).astype(int)
    sums = np.array([sizes[edges[b]:edges[b + 1]].sum(axis=0) for b in range(blocks)], dtype=float)
    counts = np.diff(edges)
    total = sums.sum(axis=0)
    jack = []
    for b in range(blocks):
        pj = (total - sums[b]) / (n - counts[b])
        if np.any(pj[sel] <= 0):
            # one block carries all the survivors; the jackknife cannot see the spread
            return float("inf")
        jack.append(_fit(method, times[sel], np.log(pj[sel])))
    jack = np.array(jack)
    return float(math.sqrt((blocks - 1) / blocks * np.sum((jack - jack.mean()) ** 2)))


def growth_rate_from_sizes(sizes: np.ndarray, times: np.ndarray, method: str = REGRESSION,
                           blocks: int = JACKKNIFE_BLOCKS, flagged: int = 0) -> GrowthRateEstimate:
    """Growth-rate fit from a ``(replicas, times)`` matrix of cluster sizes.

    The regression methods drop the first grid point as burn-in.  The
    half-width is ``CONFIDENCE_Z`` times the quadrature sum of

    * the statistical error, a delete-one-block jackknife over replicas, and
    * a truncation term: how far the fit moves when only the later half of
      the grid is used.  ``pi_t`` approaches its exponential regime at an
      unknown rate, and a fit over a finite window is biased by an amount
      the replica noise alone does not show.

    Both parts are kept in ``extra``.
    """
    times = np.asarray(times, dtype=float)
    if method not in GROWTH_METHODS:
        raise ValueError(f"unknown growth-rate method {method!r}; choose from {GROWTH_METHODS}")
    n = sizes.shape[0]
    pi = sizes.mean(axis=0)
    if np.any(pi <= 0):
        raise GrowthRateUndefined(float(times[np.argmax(pi <= 0)]))
    start = 0 if method == SUBADDITIVE else 1
    need = 3 if method == REGRESSION_LOG else 2
    idx = np.arange(start, times.size)
    if idx.size < need:
        raise ValueError(f"method {method} needs a longer time grid")
    log_pi = np.log(pi)
    r_hat = _fit(method, times[idx], log_pi[idx])
    stat = _jackknife(method, sizes, times, idx, blocks)

    late = idx[idx.size // 2:] if method != SUBADDITIVE else idx
    if late.size >= need and late.size < idx.size:
        trunc = abs(_fit(method, times[late], log_pi[late]) - r_hat)
    else:
        trunc = 0.0
    hw = CONFIDENCE_Z * math.hypot(stat, trunc)
    return GrowthRateEstimate(r_hat, hw, method, times, log_pi, n + flagged, flagged,
                              extra={"statistical": stat, "truncation": trunc})


def estimate_growth_rate(params: ProcessParams, times: Sequence[float], replicas: int,
                         method: str = REGRESSION, seed: int = 0, min_survivors: int = 0,
                         size_cap: int = DEFAULT_SIZE_CAP) -> GrowthRateEstimate:
    """Exponential growth rate of ``pi_t = E|eta^{0}_t|`` over a time grid.

    ``regression`` fits ``log pi_t = r t + b``; ``regression_log`` fits
    ``log pi_t = r t + c log t + b``, which absorbs polynomial prefactors
    such as the linear growth of a surviving process on ``Z``;
    ``subadditive_bound`` is ``min_t log(pi_t) / t``, an upper bound on
    ``r`` up to noise.

    With ``min_survivors > 0`` the grid is cut before the first time at
    which fewer replicas than that are alive, so subcritical runs can share
    a long grid with supercritical ones.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 3 or np.any(np.diff(times) <= 0) or times[0] <= 0:
        raise ValueError("need at least three strictly increasing positive times")
    sizes, flagged = _sizes(params, [params.group.identity], times, replicas, seed, size_cap)
    if flagged.any():
        log.warning("growth rate: %d replicas hit the size cap and were dropped", int(flagged.sum()))
    sizes = sizes[~flagged]
    used = times
    if min_survivors > 0:
        alive = (sizes > 0).sum(axis=0)
        short = np.nonzero(alive < min_survivors)[0]
        if short.size:
            keep = int(short[0])
            if keep < 3:
                raise GrowthRateUndefined(float(times[keep]))
            sizes, used = sizes[:, :keep], times[:keep]
    return growth_rate_from_sizes(sizes, used, method, flagged=int(flagged.sum()))


# --- survival ---------------------------------------------------------------------------

def estimate_survival(params: ProcessParams, initial: Iterable[GroupElement], horizon: float, replicas: int,
                      seed: int = 0, escape: int = DEFAULT_ESCAPE,
                      size_cap: int = DEFAULT_SIZE_CAP) -> SurvivalEstimate:
    """Fraction of replicas that neither die out before ``horizon`` nor fail to escape.

    A replica counts as surviving once it reaches ``escape`` infected sites,
    or if it is still alive at the horizon.  Both rules err upward.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    initial = frozenset(initial)
    if not initial:
        return SurvivalEstimate(0.0, 0.0, replicas, horizon, escape, 0, 0)
    res = run_contact(params, initial, [horizon], replicas, seed, escape=escape, size_cap=size_cap)
    st = res.status
    escaped = int(np.sum(st == fc.ST_ESCAPED))
    flagged = int(res.n_flagged)
    alive = int(np.sum((st == fc.ST_ALIVE) & (res.sizes[:, 0] > 0)))
    k = escaped + alive + flagged  # capped replicas were certainly large
    p = k / replicas
    se = math.sqrt(p * (1 - p) / replicas)
    return SurvivalEstimate(p, se, replicas, float(horizon), escape, escaped, alive, flagged)


@dataclass(frozen=True)
class DeltaCInterval:
    lo: float
    hi: float
    inconclusive: bool
    steps: list

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


def estimate_delta_c(kernel: RateKernel, depth: int, replicas: int, horizon: float = 100.0,
                     seed: int = 0, escape: int = DEFAULT_ESCAPE) -> DeltaCInterval:
    """Bisection for the critical recovery rate on ``[0, |a|]``.

    At each midpoint the process from ``{0}`` "survives" when its survival
    estimate is positive by 2 standard errors and "dies" when no replica
    survives.  Anything in between stops the bisection and the current
    bracket is returned with ``inconclusive=True``.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    a = total_rate(kernel)
    lo, hi = 0.0, a
    steps = []
    if a == 0:
        return DeltaCInterval(0.0, 0.0, False, steps)
    origin = [kernel.group.identity]
    for d in range(depth):
        mid = 0.5 * (lo + hi)
        est = estimate_survival(ProcessParams(kernel, mid), origin, horizon, replicas,
                                seed=seed_from(seed, "delta_c", d), escape=escape)
        if est.rho_hat > 2 * est.std_error:
            verdict = "survives"
            lo = mid
        elif est.rho_hat == 0:
            verdict = "dies"
            hi = mid
        else:
            verdict = "inconclusive"
        steps.append((mid, est.rho_hat, est.std_error, verdict))
        if verdict == "inconclusive":
            return DeltaCInterval(lo, hi, True, steps)
    return DeltaCInterval(lo, hi, False, steps)


# --- martingale drift ----------------------------------------------------------------------

FUNCTIONALS = ("cardinality", "indicator-nonempty")


def check_martingale_drift(params: ProcessParams, functional: str, initial: Iterable[GroupElement], t: float,
                           replicas: int, seed: int = 0, grid_points: int = 201,
                           size_cap: int = DEFAULT_SIZE_CAP) -> EstimateWithError:
    """Estimate of ``E f(eta_t) - f(A) - int_0^t E Gf(eta_s) ds``, which should vanish.

    The time integral is a trapezoid rule over ``grid_points`` times, applied
    per replica; ``Gf`` is evaluated in closed form.
    """
    if functional not in FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}; choose from {FUNCTIONALS}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    initial = frozenset(initial)
    if t == 0:
        return EstimateWithError(0.0, 0.0, replicas)
    grid = np.linspace(0.0, t, grid_points)
    res = run_contact(params, initial, grid, replicas, seed, size_cap=size_cap,
                      want_gcard=functional == "cardinality")
    ok = ~res.flagged
    sizes = res.sizes[ok].astype(float)
    if functional == "cardinality":
        f_end, f0 = sizes[:, -1], float(len(initial))
        gf = res.gcard[ok] - params.delta * sizes
    else:
        f_end, f0 = (sizes[:, -1] > 0).astype(float), float(bool(initial))
        gf = -params.delta * (sizes == 1)
    integral = trapezoid(gf, grid, axis=1)
    return EstimateWithError.from_samples(f_end - f0 - integral, res.n_flagged)


# --- eventual domination ---------------------------------------------------------------------

@dataclass(frozen=True)
class DominationSeries:
    times: np.ndarray
    estimates: list
    alive: np.ndarray

    @property
    def trend(self) -> float:
        """Fraction of consecutive time pairs along which the estimate does not drop."""
        m = np.array([e.mean for e in self.estimates])
        if m.size < 2:
            return 1.0
        d = np.diff(m)
        return float(np.mean(d >= 0))


def estimate_domination(params: ProcessParams, A: Iterable[GroupElement], B: Iterable[GroupElement],
                        times: float | Sequence[float], replicas: int, seed: int = 0,
                        size_cap: int = DEFAULT_SIZE_CAP):
    """Estimate ``P[exists i: i B subset of eta^A_t | eta^A_t nonempty]``.

    With a scalar ``times`` an :class:`EstimateWithError` is returned, with a
    grid a :class:`DominationSeries`.  Translates are searched losslessly:
    ``i B`` inside ``eta`` forces ``i b_0`` in ``eta`` for the first element
    ``b_0``, so only ``i`` in ``eta b_0^-1`` are tried.  When no replica is
    alive the estimate is ``nan`` with zero replicas.
    """
    A = frozenset(A)
    B = list(dict.fromkeys(B))
    if not A:
        raise ValueError("A must be nonempty")
    scalar = np.isscalar(times)
    grid = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(grid <= 0):
        raise ValueError("times must be positive")
    res = run_contact(params, A, grid, replicas, seed, size_cap=size_cap, domination=B if B else None)
    ok = ~res.flagged
    out = []
    alive = []
    for o in range(grid.size):
        live = ok & (res.sizes[:, o] > 0)
        alive.append(int(live.sum()))
        if not live.any():
            out.append(EstimateWithError(float("nan"), float("nan"), 0, 0))
            continue
        x = np.ones(int(live.sum())) if not B else res.dom[live, o].astype(float)
        p = float(x.mean())
        n = x.size
        out.append(EstimateWithError(p, math.sqrt(p * (1 - p) / n), n + res.n_flagged, res.n_flagged))
    if scalar:
        return out[0]
    return DominationSeries(grid, out, np.array(alive))
