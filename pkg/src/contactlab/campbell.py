"""Size-biased and Campbell sampling, and window laws of the upper invariant law.

A Campbell sample is a pair ``(eta_t, iota)`` where ``eta_t`` is drawn with
weight ``|eta_t|`` and ``iota`` is a uniform point of ``eta_t``.  Recentering
at ``iota`` gives the process seen from a typical infected site.

Window laws are stored as probability vectors indexed by bit patterns:
bit ``b`` of pattern ``S`` is set when ``window[b]`` is infected.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import DEFAULT_SIZE_CAP, run_contact, seed_from
from .estimators import DEFAULT_ESCAPE, estimate_survival
from .groups import GroupElement
from .kernel import ProcessParams
from .oracle import DEFAULT_SITE_CAP, build_generator, transition_distribution

log = logging.getLogger(__name__)

CAMPBELL_EMPIRICAL = "campbell_empirical"
DUAL_SURVIVAL_MOEBIUS = "dual_survival_moebius"
MAX_WINDOW = 5
CLIP_TOLERANCE = 1e-2


class EmptyEnsemble(RuntimeError):
    """Every replica died out, so there is nothing to weight."""


class TrivialInvariantLaw(RuntimeError):
    """The dual process dies out, so the upper invariant law is the empty set."""


def sample_size_biased(weights: Sequence[tuple[object, float]], size: int | None = None,
                       rng: np.random.Generator | None = None):
    """Draw outcomes with probability proportional to their ``R``-values."""
    if not weights:
        raise ValueError("no outcomes")
    outcomes = [w[0] for w in weights]
    R = np.array([w[1] for w in weights], dtype=float)
    if np.any(R < 0) or not np.isfinite(R).all():
        raise ValueError("R-values must be finite and nonnegative")
    if R.sum() <= 0:
        raise ValueError("all R-values are zero; the size-biased law is undefined")
    rng = rng if rng is not None else np.random.default_rng()
    idx = rng.choice(len(outcomes), size=size, p=R / R.sum())
    if size is None:
        return outcomes[int(idx)]
    return [outcomes[int(i)] for i in idx]


@dataclass(frozen=True)
class CampbellSample:
    configuration: frozenset
    typical_site: GroupElement
    weight: float
    time: float

    def __post_init__(self):
        if self.typical_site not in self.configuration:
            raise ValueError("typical site must belong to the configuration")


def recenter_at_typical(sample: CampbellSample | tuple) -> frozenset:
    """``iota^-1 eta``, which contains the identity."""
    if isinstance(sample, CampbellSample):
        config, iota = sample.configuration, sample.typical_site
    else:
        config, iota = sample
    if iota not in config:
        raise ValueError(f"{iota} is not in the configuration")
    inv = iota.inverse()
    return frozenset(inv * x for x in config)


@dataclass
class CampbellEnsemble:
    samples: list
    replicas: int
    extinct: int
    flagged: int
    mode: str

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.samples], dtype=float)

    @property
    def empty(self) -> bool:
        """True when no replica survived: the ensemble represents nothing."""
        return not self.samples

    @property
    def effective_sample_size(self) -> float:
        w = self.weights
        return float(w.sum() ** 2 / np.sum(w * w)) if w.size else 0.0

    def recentered_law(self) -> dict:
        """Self-normalized weighted law of the recentered configurations."""
        w = self.weights
        out: dict = {}
        for s, wi in zip(self.samples, w):
            key = recenter_at_typical(s)
            out[key] = out.get(key, 0.0) + wi
        tot = w.sum()
        return {k: v / tot for k, v in out.items()}


def _check_mode(t, gamma):
    if (t is None) == (gamma is None):
        raise ValueError("give exactly one of t (fixed time) or gamma (exponential mean)")
    if t is not None and t < 0:
        raise ValueError("t must be nonnegative")
    if gamma is not None and not gamma > 0:
        raise ValueError("gamma must be positive")


def sample_campbell(params: ProcessParams, replicas: int, *, t: float | None = None, gamma: float | None = None,
                    seed: int = 0, size_cap: int = DEFAULT_SIZE_CAP, store_cap: int = 256) -> CampbellEnsemble:
    """Campbell ensemble from ``replicas`` runs of ``eta^{0}``.

    Runs stop at ``t`` or at an independent exponential time of mean
    ``gamma``.  Extinct runs get weight zero and are left out of
    ``samples``; survivors carry weight ``|eta|`` and a uniform site.
    """
    _check_mode(t, gamma)
    if replicas < 1:
        raise ValueError("need at least one replica")
    group = params.group
    e = group.identity
    kw = dict(size_cap=size_cap, campbell_window=[e])
    obs = [t] if t is not None else [0.0]
    exp_mean = gamma or 0.0
    res = run_contact(params, [e], obs, replicas, seed, exp_mean=exp_mean, store_cap=store_cap, **kw)
    samples = []
    extinct = flagged = 0
    for r in range(replicas):
        n = int(res.sizes[r, 0])
        if res.flagged[r]:
            flagged += 1
            continue
        if n == 0:
            extinct += 1
            continue
        if res.slen[r, 0] < 0:
            # too big for the shared buffer; rerun just this replica
            big = run_contact(params, [e], obs, 1, seed, rep0=r, exp_mean=exp_mean, store_cap=n, **kw)
            config, iota = big.configs(0, 0, group), group.decode(big.ciota[0, 0])
        else:
            config, iota = res.configs(r, 0, group), group.decode(res.ciota[r, 0])
        samples.append(CampbellSample(config, iota, float(n), float(res.obs_used[r])))
    if flagged:
        log.warning("campbell: %d replicas hit the size cap and were dropped", flagged)
    return CampbellEnsemble(samples, replicas, extinct, flagged, "fixed" if t is not None else "exponential")


# --- window laws ---------------------------------------------------------------------------

def _pattern_of(config: frozenset, window: Sequence[GroupElement]) -> int:
    return sum(1 << b for b, x in enumerate(window) if x in config)


@dataclass
class WindowDistribution:
    window: tuple
    probabilities: np.ndarray
    provenance: str
    clip_mass: float = 0.0
    std_errors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.size != 2 ** len(self.window):
            raise ValueError("need one probability per window pattern")
        if np.any(p < -1e-10) or abs(p.sum() - 1) > 1e-9:
            raise ValueError("not a probability vector")
        self.probabilities = p

    def pattern_sites(self, pattern: int) -> frozenset:
        return frozenset(x for b, x in enumerate(self.window) if pattern >> b & 1)

    def conditioned_on(self, site: GroupElement) -> "WindowDistribution":
        """Law given ``site`` infected, at the window level."""
        b = list(self.window).index(site)
        mask = np.array([(s >> b) & 1 for s in range(self.probabilities.size)], dtype=bool)
        mass = self.probabilities[mask].sum()
        if mass <= 0:
            raise ValueError(f"{site} is never infected; cannot condition on it")
        q = np.where(mask, self.probabilities, 0.0) / mass
        return WindowDistribution(self.window, q, self.provenance, self.clip_mass, meta=dict(self.meta))


def total_variation(p: WindowDistribution | np.ndarray, q: WindowDistribution | np.ndarray) -> float:
    pv = p.probabilities if isinstance(p, WindowDistribution) else np.asarray(p, float)
    qv = q.probabilities if isinstance(q, WindowDistribution) else np.asarray(q, float)
    if pv.shape != qv.shape:
        raise ValueError("distributions are on different windows")
    return float(0.5 * np.abs(pv - qv).sum())


def moebius_patterns(nonintersection: dict | Sequence[float], n: int) -> np.ndarray:
    """Pattern vector from ``q(T) = P[eta cap T = empty]`` on an ``n``-site window.

    ``nonintersection`` maps subset bitmasks to ``q``; ``q(0)`` must be 1.
    ``P[eta cap B = S] = sum_{T subset S} (-1)^|T| q((B minus S) union T)``.
    """
    q = np.asarray([nonintersection[m] for m in range(2 ** n)], dtype=float)
    full = 2 ** n - 1
    out = np.zeros(2 ** n)
    for S in range(2 ** n):
        comp = full & ~S
        acc = 0.0
        T = S
        while True:
            acc += (-1) ** bin(T).count("1") * q[comp | T]
            if T == 0:
                break
            T = (T - 1) & S
        out[S] = acc
    return out


def clip_distribution(p: np.ndarray, tol: float = CLIP_TOLERANCE) -> tuple[np.ndarray, float]:
    """Clip negatives to zero and renormalize; refuse if they exceed ``tol``."""
    neg = float(-p[p < 0].sum())
    if neg > tol:
        raise ValueError(f"pattern estimates have negative mass {neg:.3g} > {tol}; raise the replica count")
    c = np.clip(p, 0.0, None)
    return c / c.sum(), neg


def invariant_window_distribution(params: ProcessParams, window: Sequence[GroupElement], horizon: float,
                                  replicas: int, seed: int = 0, escape: int = DEFAULT_ESCAPE) -> WindowDistribution:
    """Window law of the upper invariant law from dual survival probabilities.

    ``P[eta cap A nonempty] = rho_dagger(A)`` for every nonempty ``A`` in
    the window, each estimated by :func:`estimate_survival` on the
    reversed kernel with the same seed, then Möbius inversion.
    """
    window = tuple(window)
    n = len(window)
    if n > MAX_WINDOW:
        raise ValueError(f"windows are limited to {MAX_WINDOW} sites")
    if len(set(window)) != n:
        raise ValueError("window elements must be distinct")
    dual = params.reversed()
    q = {0: 1.0}
    rho = {}
    for m in range(1, 2 ** n):
        A = [window[b] for b in range(n) if m >> b & 1]
        est = estimate_survival(dual, A, horizon, replicas, seed=seed, escape=escape)
        rho[m] = (est.rho_hat, est.std_error)
        q[m] = 1.0 - est.rho_hat
    p, clip = clip_distribution(moebius_patterns(q, n))
    return WindowDistribution(window, p, DUAL_SURVIVAL_MOEBIUS, clip, meta={"rho_dagger": rho})


def campbell_window_distribution(params: ProcessParams, window: Sequence[GroupElement], replicas: int, *,
                                 t: float | None = None, gamma: float | None = None, seed: int = 0,
                                 size_cap: int = DEFAULT_SIZE_CAP, blocks: int = 10) -> WindowDistribution:
    """Weighted window law of ``iota^-1 eta ∩ window`` over a Campbell ensemble.

    Computed in the compiled core without storing configurations.  Per
    pattern standard errors come from a block jackknife.
    """
    _check_mode(t, gamma)
    window = tuple(window)
    if len(window) > MAX_WINDOW:
        raise ValueError(f"windows are limited to {MAX_WINDOW} sites")
    e = params.group.identity
    obs = [t] if t is not None else [0.0]
    res = run_contact(params, [e], obs, replicas, seed, exp_mean=gamma or 0.0, size_cap=size_cap,
                      campbell_window=list(window))
    ok = (~res.flagged) & (res.sizes[:, 0] > 0)
    if not ok.any():
        raise EmptyEnsemble("every replica died out")
    w = res.sizes[ok, 0].astype(float)
    pat = res.cpat[ok, 0]
    k = 2 ** len(window)

    def law(wts, pats):
        return np.bincount(pats, weights=wts, minlength=k) / wts.sum()

    p = law(w, pat)
    nb = max(2, min(blocks, w.size))
    edges = np.linspace(0, w.size, nb + 1).astype(int)
    jack = []
    for b in range(nb):
        keep = np.ones(w.size, dtype=bool)
        keep[edges[b]:edges[b + 1]] = False
        if w[keep].sum() > 0:
            jack.append(law(w[keep], pat[keep]))
    jack = np.array(jack)
    se = np.sqrt((len(jack) - 1) / len(jack) * ((jack - jack.mean(0)) ** 2).sum(0))
    ess = float(w.sum() ** 2 / np.sum(w * w))
    return WindowDistribution(window, p, CAMPBELL_EMPIRICAL, 0.0, std_errors=se,
                              meta={"effective_sample_size": ess, "survivors": int(ok.sum()),
                                    "replicas": replicas, "flagged": res.n_flagged})


@dataclass
class ComparisonPoint:
    parameter: float
    tv: float
    tv_se: float
    campbell: WindowDistribution


def campbell_vs_invariant(params: ProcessParams, window: Sequence[GroupElement], replicas: int, *,
                          gammas: Sequence[float] | None = None, times: Sequence[float] | None = None,
                          horizon: float = 100.0, invariant_replicas: int | None = None, seed: int = 0,
                          escape: int = DEFAULT_ESCAPE) -> tuple[WindowDistribution, list[ComparisonPoint]]:
    """TV distance between the recentered Campbell window law and ``nu_bar(. | 0 in A)``.

    The identity must belong to the window.  Refuses when the dual from the
    origin does not survive by 2 standard errors.
    """
    if (gammas is None) == (times is None):
        raise ValueError("give exactly one of gammas or times")
    window = tuple(window)
    e = params.group.identity
    if e not in window:
        raise ValueError("the window must contain the identity")
    inv_reps = invariant_replicas or replicas
    check = estimate_survival(params.reversed(), [e], horizon, inv_reps, seed=seed, escape=escape)
    if not check.rho_hat > 2 * check.std_error:
        raise TrivialInvariantLaw(
            f"dual survival {check.rho_hat:.3g} +- {check.std_error:.2g} is not positive; "
            "the upper invariant law is trivial and cannot be conditioned on 0 being infected")
    inv = invariant_window_distribution(params, window, horizon, inv_reps, seed=seed, escape=escape)
    target = inv.conditioned_on(e)
    series = []
    params_list = gammas if gammas is not None else times
    for j, x in enumerate(params_list):
        kw = {"gamma": x} if gammas is not None else {"t": x}
        camp = campbell_window_distribution(params, window, replicas, seed=seed_from(seed, "campbell", j), **kw)
        tv = total_variation(camp, target)
        # first-order error of the TV from the Campbell side only
        sign = np.sign(camp.probabilities - target.probabilities)
        tv_se = float(0.5 * math.sqrt(np.sum((sign * camp.std_errors) ** 2)))
        series.append(ComparisonPoint(float(x), tv, tv_se, camp))
    return target, series


# --- exact Campbell identity on finite groups -----------------------------------------------------

def exact_campbell_laws(params: ProcessParams, t: float, site_cap: int = DEFAULT_SITE_CAP) -> tuple[dict, dict]:
    """Both sides of the Campbell identity on a finite group, exactly.

    Left: ``mu_t(. | 0 in A)`` with ``mu_t = sum_i P[eta^{i}_t in .]``.
    Right: the law of ``iota^-1 eta^{0}_t`` under the Campbell law.
    Both are dicts from configurations to probabilities.
    """
    gen = build_generator(params, site_cap)
    group = params.group
    e = group.identity
    mu: dict = {}
    for i in gen.elements:
        p = transition_distribution(gen, [i], t)
        for s in range(gen.n_states):
            A = gen.config(s)
            if p[s] and e in A:
                mu[A] = mu.get(A, 0.0) + p[s]
    tot = sum(mu.values())
    left = {A: v / tot for A, v in mu.items()}

    p0 = transition_distribution(gen, [e], t)
    right: dict = {}
    norm = 0.0
    for s in range(gen.n_states):
        A = gen.config(s)
        if not A or not p0[s]:
            continue
        norm += p0[s] * len(A)
        for x in A:
            key = recenter_at_typical((A, x))
            right[key] = right.get(key, 0.0) + p0[s]  # weight |A| times 1/|A|
    right = {A: v / norm for A, v in right.items()}
    return left, right


def law_distance(p: dict, q: dict) -> float:
    """Total variation between two laws given as dicts."""
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
