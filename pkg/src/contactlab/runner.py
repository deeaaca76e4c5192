"""Dispatch of configured experiments and the CSV/JSON reports they produce."""
from __future__ import annotations

import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig

CSV_SCHEMA = "contactlab-csv v1"


@dataclass
class RunReport:
    config: dict
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)
    flagged: int = 0
    wall_clock: float = 0.0
    version: str = __version__
    passed: bool = True  # only the acceptance run can fail

    def to_csv(self) -> str:
        """CSV text; a pure function of the config, so wall-clock time is left out."""
        c = self.config
        buf = io.StringIO()
        buf.write(f"# {CSV_SCHEMA} kind={c['kind']} group={c['group']} kernel={c['kernel']} "
                  f"delta={_fmt(c['delta'])} seed={c['seed']} replicas={c['replicas']}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "schema": CSV_SCHEMA, "version": self.version, "config": self.config, "summary": self.summary,
            "flagged_replicas": self.flagged, "passed": self.passed, "rows": len(self.rows),
            "wall_clock_seconds": round(self.wall_clock, 3),
        }, indent=2, default=_jsonable)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    s = str(v)
    return f'"{s}"' if ("," in s or '"' in s) else s


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def _words(group, elements) -> str:
    return " ".join(str(x) for x in sorted(elements, key=group.sort_key)) or "{}"


# --- experiments -------------------------------------------------------------------------

def _simulate(cfg: ExperimentConfig) -> RunReport:
    """One row per (replica, observation time); means and SEs go to the summary."""
    from .config import ConfigError
    from .engine import run_contact

    p, q = cfg.parsed_params(), cfg.params
    A = cfg.elements("initial")
    T = q["horizon"]
    times = sorted(set(q["obs"]) | {T})
    if T < 0 or times[0] < 0 or times[-1] > T:
        raise ConfigError("params.obs", f"observation times must lie in [0, {T}]")
    res = run_contact(p, A, times, cfg.replicas, cfg.seed, dual=q["dual"], size_cap=q["size_cap"])
    flagged = res.flagged
    rows = []
    for r in range(cfg.replicas):
        for o, t in enumerate(times):
            size = int(res.sizes[r, o])
            rows.append((r, t, size, size == 0, bool(flagged[r]), cfg.seed, cfg.replicas))
    ok = ~flagged
    means = []
    for o, t in enumerate(times):
        s = res.sizes[ok, o].astype(float)
        n = s.size
        se = float(s.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        surv = float((s > 0).mean()) if n else float("nan")
        means.append({"t": t, "mean_size": float(s.mean()) if n else float("nan"), "mean_size_se": se,
                      "alive": surv, "alive_se": math.sqrt(surv * (1 - surv) / n) if n else float("nan")})
    return RunReport(cfg.echo(), ["replica", "t", "size", "extinct", "flagged", "seed", "replicas"], rows,
                     {"direction": "dual" if q["dual"] else "forward", "events": int(res.events.sum()),
                      "by_time": means}, flagged=res.n_flagged)


def _growth_rate(cfg: ExperimentConfig) -> RunReport:
    from .estimators import estimate_growth_rate

    p, q = cfg.parsed_params(), cfg.params
    deltas = q["deltas"] or [cfg.delta]
    rows, flagged = [], 0
    for d in deltas:
        g = estimate_growth_rate(p.with_delta(d), q["grid"], cfg.replicas, method=q["method"], seed=cfg.seed,
                                 min_survivors=q["min_survivors"], size_cap=q["size_cap"])
        flagged += g.flagged_replicas
        rows.append((d, cfg.seed, cfg.replicas, g.r_hat, g.half_width, g.extra["statistical"],
                     g.extra["truncation"], g.method, float(g.times[-1])))
    return RunReport(cfg.echo(), ["delta", "seed", "replicas", "r_hat", "half_width", "statistical_se",
                                  "truncation", "method", "t_max"], rows, flagged=flagged)


def _survival(cfg: ExperimentConfig) -> RunReport:
    from .estimators import estimate_survival

    p, q = cfg.parsed_params(), cfg.params
    s = estimate_survival(p, cfg.elements("initial"), q["horizon"], cfg.replicas, seed=cfg.seed,
                          escape=q["escape"], size_cap=q["size_cap"])
    row = (q["horizon"], cfg.seed, cfg.replicas, s.rho_hat, s.std_error, s.escaped, s.alive_at_horizon,
           s.flagged_replicas, s.escape_threshold)
    return RunReport(cfg.echo(), ["horizon", "seed", "replicas", "rho_hat", "rho_se", "escaped",
                                  "alive_at_horizon", "flagged", "escape_threshold"], [row],
                     {"positive_by_3se": s.positive, "undecided_fraction": s.undecided_fraction},
                     flagged=s.flagged_replicas)


def _delta_c(cfg: ExperimentConfig) -> RunReport:
    from .estimators import estimate_delta_c

    p, q = cfg.parsed_params(), cfg.params
    iv = estimate_delta_c(p.kernel, q["depth"], cfg.replicas, q["horizon"], seed=cfg.seed, escape=q["escape"])
    rows = [(i, cfg.seed, cfg.replicas, mid, rho, se, verdict) for i, (mid, rho, se, verdict) in enumerate(iv.steps)]
    return RunReport(cfg.echo(), ["step", "seed", "replicas", "delta", "rho_hat", "rho_se", "verdict"], rows,
                     {"lo": iv.lo, "hi": iv.hi, "inconclusive": iv.inconclusive})


def _duality(cfg: ExperimentConfig) -> RunReport:
    from .engine import run_contact, seed_from

    p, q = cfg.parsed_params(), cfg.params
    A, B = cfg.elements("A"), cfg.elements("B")
    times = sorted(q["times"])
    n = cfg.replicas
    f = run_contact(p, A, times, n, seed_from(cfg.seed, "forward"), queries=[B])
    d = run_contact(p, B, times, n, seed_from(cfg.seed, "dual"), dual=True, queries=[A])
    rows = []
    for o, t in enumerate(times):
        mf = 1.0 - f.hits[~f.flagged, o, 0].astype(float)
        md = 1.0 - d.hits[~d.flagged, o, 0].astype(float)
        sf, sd = mf.std(ddof=1) / math.sqrt(mf.size), md.std(ddof=1) / math.sqrt(md.size)
        comb = math.hypot(sf, sd)
        rows.append((t, cfg.seed, n, float(mf.mean()), sf, float(md.mean()), sd, float(mf.mean() - md.mean()), comb))
    ok = all(abs(r[7]) <= 3 * r[8] for r in rows)
    return RunReport(cfg.echo(), ["t", "seed", "replicas", "p_forward", "p_forward_se", "p_dual", "p_dual_se",
                                  "difference", "combined_se"], rows, {"within_3se": ok},
                     flagged=f.n_flagged + d.n_flagged)


def _martingale(cfg: ExperimentConfig) -> RunReport:
    from .estimators import check_martingale_drift

    p, q = cfg.parsed_params(), cfg.params
    e = check_martingale_drift(p, q["functional"], cfg.elements("initial"), q["t"], cfg.replicas, seed=cfg.seed,
                               grid_points=q["grid_points"])
    row = (q["t"], cfg.seed, cfg.replicas, q["functional"], e.mean, e.std_error)
    return RunReport(cfg.echo(), ["t", "seed", "replicas", "functional", "residual", "residual_se"], [row],
                     {"within_3se": e.within(0.0)}, flagged=e.flagged_replicas)


def _domination(cfg: ExperimentConfig) -> RunReport:
    from .estimators import estimate_domination

    p, q = cfg.parsed_params(), cfg.params
    times = sorted(q["times"])
    s = estimate_domination(p, cfg.elements("A"), cfg.elements("B"), times, cfg.replicas, seed=cfg.seed)
    rows = [(t, cfg.seed, cfg.replicas, e.mean, e.std_error, int(a)) for t, e, a in zip(times, s.estimates, s.alive)]
    return RunReport(cfg.echo(), ["t", "seed", "replicas", "dominated", "dominated_se", "alive"], rows,
                     {"trend": s.trend}, flagged=max((e.flagged_replicas for e in s.estimates), default=0))


def _campbell(cfg: ExperimentConfig) -> RunReport:
    from .campbell import campbell_vs_invariant, campbell_window_distribution

    p, q = cfg.parsed_params(), cfg.params
    g = p.group
    window = cfg.elements("window")
    if q["gammas"]:
        target, series = campbell_vs_invariant(p, window, cfg.replicas, gammas=q["gammas"], horizon=q["horizon"],
                                               invariant_replicas=q["invariant_replicas"] or None, seed=cfg.seed,
                                               escape=q["escape"])
        rows = [(pt.parameter, cfg.seed, cfg.replicas, pt.tv, pt.tv_se) for pt in series]
        tvs = [pt.tv for pt in series]
        return RunReport(cfg.echo(), ["gamma", "seed", "replicas", "tv", "tv_se"], rows,
                         {"nonincreasing": bool(np.all(np.diff(tvs) <= 0)), "clip_mass": target.clip_mass})
    if (q["t"] is None) == (q["gamma"] is None):
        from .config import ConfigError

        raise ConfigError("params.gamma", "give exactly one of t, gamma, or a gammas list")
    w = campbell_window_distribution(p, window, cfg.replicas, t=q["t"], gamma=q["gamma"], seed=cfg.seed)
    rows = [(pat, _words(g, w.pattern_sites(pat)), cfg.seed, cfg.replicas, float(w.probabilities[pat]),
             float(w.std_errors[pat])) for pat in range(w.probabilities.size)]
    return RunReport(cfg.echo(), ["pattern", "sites", "seed", "replicas", "probability", "probability_se"], rows,
                     {k: v for k, v in w.meta.items() if np.isscalar(v)})


def _branching(cfg: ExperimentConfig) -> RunReport:
    from .bounds import branching_batch, rate_walk_endpoints
    from .engine import seed_from
    from .kernel import total_rate

    p, q = cfg.parsed_params(), cfg.params
    sites = cfg.elements("sites")
    t = q["t"]
    b = branching_batch(p, [t], cfg.replicas, seed=cfg.seed, queries=sites, pop_cap=q["pop_cap"])
    w = rate_walk_endpoints(p, t, cfg.replicas, seed=seed_from(cfg.seed, "walk"))
    growth = math.exp((total_rate(p.kernel) - p.delta) * t)
    ok = ~b.flagged
    rows = []
    for j, x in enumerate(sites):
        c = b.counts[ok, 0, j].astype(float)
        f, fse = w.frequency(x)
        rows.append((str(x), cfg.seed, cfg.replicas, float(c.mean()), float(c.std(ddof=1) / math.sqrt(c.size)),
                     f * growth, fse * growth))
    pop = b.population[ok, 0].astype(float)
    return RunReport(cfg.echo(), ["site", "seed", "replicas", "branching_mean", "branching_se", "walk_prediction",
                                  "walk_prediction_se"], rows,
                     {"all_dominated": b.all_dominated(), "mean_population": float(pop.mean()),
                      "mean_population_se": float(pop.std(ddof=1) / math.sqrt(pop.size)), "expected_population": growth},
                     flagged=int(b.flagged.sum()))


def _ball_profile(cfg: ExperimentConfig) -> RunReport:
    from .bounds import ball_growth_profile

    g, q = cfg.parsed_group(), cfg.params
    prof = ball_growth_profile(g, q["radius"], threshold=q["threshold"])
    rows = [(r, cfg.seed, cfg.replicas, c) for r, c in prof.counts]
    return RunReport(cfg.echo(), ["radius", "seed", "replicas", "ball_size"], rows,
                     {"classification": prof.classification, "growth_rate": prof.growth_rate, "complete": prof.complete})


def _rw_decay(cfg: ExperimentConfig) -> RunReport:
    from .bounds import campbell_overlap_ensemble, rw_overlap_decay
    from .engine import seed_from

    p, q = cfg.parsed_params(), cfg.params
    if (q["t"] is None) == (q["gamma"] is None):
        from .config import ConfigError

        raise ConfigError("params.t", "give exactly one of t or gamma")
    pairs, _ = campbell_overlap_ensemble(p, cfg.replicas, t=q["t"], gamma=q["gamma"], seed=cfg.seed)
    d = rw_overlap_decay(p.group, pairs, q["m_max"], walks=q["walks"], seed=seed_from(cfg.seed, "walks"))
    rows = [(m, cfg.seed, cfg.replicas, float(d.series[m]), float(d.std_errors[m])) for m in range(d.series.size)]
    return RunReport(cfg.echo(), ["m", "seed", "replicas", "overlap", "overlap_se"], rows,
                     {"theta_hat": d.theta_hat, "theta_se": d.theta_se, "fit_range": list(d.fit_range),
                      "samples": d.samples, "lost_walks": d.lost_walks})


def _oracle_check(cfg: ExperimentConfig) -> RunReport:
    from .engine import run_contact, state_masks
    from .oracle import build_generator, transition_distribution

    p, q = cfg.parsed_params(), cfg.params
    gen = build_generator(p)
    A = cfg.elements("initial")
    times = sorted(q["times"])
    res = run_contact(p, A, times, cfg.replicas, cfg.seed, store_cap=gen.n_sites)
    states = state_masks(res, gen.elements, p.group)
    rows = []
    worst = 0.0
    for o, t in enumerate(times):
        exact = transition_distribution(gen, A, t)
        emp = np.bincount(states[:, o], minlength=gen.n_states) / cfg.replicas
        for s in range(gen.n_states):
            se = math.sqrt(exact[s] * (1 - exact[s]) / cfg.replicas)
            if se > 0:
                worst = max(worst, abs(emp[s] - exact[s]) / se)
            rows.append((t, _words(p.group, gen.config(s)), cfg.seed, cfg.replicas, float(exact[s]),
                         float(emp[s]), se))
    return RunReport(cfg.echo(), ["t", "state", "seed", "replicas", "exact", "monte_carlo", "exact_se"], rows,
                     {"max_abs_z": worst}, flagged=res.n_flagged)


def _accept(cfg: ExperimentConfig) -> RunReport:
    from .acceptance import run_acceptance_suite

    only = [int(x) for x in cfg.params["only"]] or None
    results = run_acceptance_suite(cfg.params["tier"], only=only)
    rows = [(r.number, cfg.seed, cfg.replicas, r.name, r.passed, len(r.checks)) for r in results]
    rep = RunReport(cfg.echo(), ["criterion", "seed", "replicas", "name", "passed", "checks"], rows,
                    {"checks": {str(r.number): [[c, ok] for c, ok in r.checks] for r in results},
                     "seconds": {str(r.number): round(r.seconds, 2) for r in results}})
    rep.passed = all(r.passed for r in results)
    return rep


DISPATCH = {
    "simulate": _simulate, "growth-rate": _growth_rate, "survival": _survival, "delta-c": _delta_c,
    "duality-check": _duality, "martingale-check": _martingale, "domination": _domination,
    "campbell": _campbell, "branching-check": _branching, "ball-profile": _ball_profile,
    "rw-decay": _rw_decay, "oracle-check": _oracle_check, "accept": _accept,
}


def run_experiment(config: ExperimentConfig) -> RunReport:
    """Run the configured experiment.  The result depends only on the config and its seed."""
    t0 = time.perf_counter()
    report = DISPATCH[config.kind](config)
    report.wall_clock = time.perf_counter() - t0
    return report
