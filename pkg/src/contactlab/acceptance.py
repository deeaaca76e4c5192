"""The bundled acceptance suite.

Each criterion is a function returning a :class:`CriterionResult` with one
line of detail per individual check.  Seeds are fixed so every run is
reproducible; nothing here retries with a different seed.
"""
from __future__ import annotations

import json
import math
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SEED = 20240531

FAST = (1, 2, 3, 4, 5, 6, 9, 10, 11, 13)
FULL = FAST + (7, 8, 12)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    checks: list = field(default_factory=list)  # (description, passed)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [c for c, ok in self.checks if not ok]
        note = f"; first failure: {failed[0]}" if failed else ""
        return f"[{status}] criterion {self.number:2d} {self.name} ({len(self.checks)} checks, {self.seconds:.1f}s){note}"


class _Recorder:
    def __init__(self):
        self.checks = []

    def check(self, desc: str, ok: bool) -> bool:
        self.checks.append((desc, bool(ok)))
        return bool(ok)


def _params(group: str, kernel: str, delta: float):
    from .groups import parse_group
    from .kernel import ProcessParams, parse_kernel

    g = parse_group(group)
    return ProcessParams(parse_kernel(g, kernel), delta)


# --- 1 ------------------------------------------------------------------------------------------

def criterion_1(replicas: int = 100_000) -> _Recorder:
    """Monte Carlo transition laws and means against the exact chain on C2 and C3."""
    from .engine import run_contact, seed_from, state_masks
    from .oracle import build_generator, transition_distribution

    rec = _Recorder()
    times = [0.25, 0.5, 1.0]
    for gname in ("C2", "C3"):
        p = _params(gname, "nn(1)", 1.0)
        gen = build_generator(p)
        g = p.group
        for label, A in (("{0}", [g.identity]), ("all", g.elements())):
            res = run_contact(p, A, times, replicas, seed_from(SEED, 1, gname, label), store_cap=g.finite_order)
            states = state_masks(res, gen.elements, g)
            for o, t in enumerate(times):
                exact = transition_distribution(gen, A, t)
                emp = np.bincount(states[:, o], minlength=gen.n_states) / replicas
                for s in range(gen.n_states):
                    se = math.sqrt(exact[s] * (1 - exact[s]) / replicas)
                    rec.check(f"{gname} A={label} t={t} P[state {s}]: mc {emp[s]:.5f} exact {exact[s]:.5f}",
                              abs(emp[s] - exact[s]) <= 3 * se)
                m = res.sizes[:, o].astype(float)
                ex = float(exact @ gen.sizes())
                se = m.std(ddof=1) / math.sqrt(replicas)
                rec.check(f"{gname} A={label} t={t} E|eta|: mc {m.mean():.5f} exact {ex:.5f}",
                          abs(m.mean() - ex) <= 3 * se)
    return rec


# --- 2 and 3 ----------------------------------------------------------------------------------------

DUALITY_SETS = (("Z", "a:2,A:1"), ("F2", "nn(1)"))


def _disjoint_prob(p, A, B_list, times, replicas, seed, dual):
    from .engine import run_contact

    res = run_contact(p, A, times, replicas, seed, dual=dual, queries=B_list)
    out = {}
    for q in range(len(B_list)):
        for o, t in enumerate(times):
            miss = 1.0 - res.hits[:, o, q].astype(float)
            out[(q, t)] = (float(miss.mean()), float(miss.std(ddof=1) / math.sqrt(replicas)))
    return out


def criterion_2(replicas: int = 100_000) -> _Recorder:
    """Duality of forward and reversed processes, on Z and F2."""
    from .engine import seed_from

    rec = _Recorder()
    times = [0.5, 1.0, 2.0]
    for gname, kern in DUALITY_SETS:
        p = _params(gname, kern, 1.0)
        g = p.group
        e, a = g.identity, g.parse_element("a")
        pairs = [([e], [e]), ([e], [e, a]), ([e, a], [e])]
        for j, (A, B) in enumerate(pairs):
            fwd = _disjoint_prob(p, A, [B], times, replicas, seed_from(SEED, 2, gname, j, "f"), False)
            bwd = _disjoint_prob(p, B, [A], times, replicas, seed_from(SEED, 2, gname, j, "d"), True)
            for t in times:
                (pf, sf), (pd, sd) = fwd[(0, t)], bwd[(0, t)]
                comb = math.hypot(sf, sd)
                rec.check(f"{gname} A={[str(x) for x in A]} B={[str(x) for x in B]} t={t}: "
                          f"{pf:.4f} vs {pd:.4f} (3se {3 * comb:.4f})", abs(pf - pd) <= 3 * comb)
    return rec


def criterion_3(replicas: int = 100_000) -> _Recorder:
    """E|eta_t| equals E|eta_dagger_t| from the origin."""
    from .engine import run_contact, seed_from

    rec = _Recorder()
    times = [0.5, 1.0, 2.0]
    for gname, kern in DUALITY_SETS:
        p = _params(gname, kern, 1.0)
        e = p.group.identity
        f = run_contact(p, [e], times, replicas, seed_from(SEED, 3, gname, "f"))
        d = run_contact(p, [e], times, replicas, seed_from(SEED, 3, gname, "d"), dual=True)
        for o, t in enumerate(times):
            x, y = f.sizes[:, o].astype(float), d.sizes[:, o].astype(float)
            comb = math.sqrt(x.var(ddof=1) / x.size + y.var(ddof=1) / y.size)
            rec.check(f"{gname} t={t}: {x.mean():.4f} vs {y.mean():.4f} (3se {3 * comb:.4f})",
                      abs(x.mean() - y.mean()) <= 3 * comb)
    return rec


# --- 4 and 5 ----------------------------------------------------------------------------------------

def criterion_4(replicas: int = 100_000) -> _Recorder:
    """Rising-factorial moment bound on Z."""
    from .engine import seed_from
    from .estimators import rising_factorial_moments
    from .oracle import moment_bound

    rec = _Recorder()
    p = _params("Z", "nn(1)", 1.0)
    times = [0.5, 1.0, 2.0]
    for k in (1, 2, 3):
        ests = rising_factorial_moments(p, [p.group.identity], times, k, replicas, seed=seed_from(SEED, 4))
        for t, est in zip(times, ests):
            bound = moment_bound(p, 1, t, k)
            rec.check(f"k={k} t={t}: {est.mean:.4g} <= {bound:.4g} + 3se", est.mean <= bound + 3 * est.std_error)
    return rec


def criterion_5(replicas: int = 100_000) -> _Recorder:
    """Submultiplicativity of pi_t on Z."""
    from .engine import seed_from
    from .estimators import estimate_pi_series

    rec = _Recorder()
    for kern in ("nn(1)", "a:2,A:1"):
        p = _params("Z", kern, 1.0)
        times = [1.0, 2.0, 3.0, 4.0]
        est = dict(zip(times, estimate_pi_series(p, [p.group.identity], times, replicas, seed=seed_from(SEED, 5, kern))))
        for s, t in ((1, 1), (1, 2), (2, 2)):
            a, b, c = est[float(s)], est[float(t)], est[float(s + t)]
            prop = math.sqrt(c.std_error ** 2 + (b.mean * a.std_error) ** 2 + (a.mean * b.std_error) ** 2)
            rec.check(f"{kern} s={s} t={t}: {c.mean:.4f} <= {a.mean * b.mean:.4f} + {3 * prop:.4f}",
                      c.mean <= a.mean * b.mean + 3 * prop)
    return rec


# --- 6, 7, 8 --------------------------------------------------------------------------------------------

def criterion_6(replicas: int = 50_000) -> _Recorder:
    """Growth-rate bounds; pure death gives r = -1."""
    from .engine import seed_from
    from .estimators import estimate_growth_rate
    from .kernel import total_rate

    rec = _Recorder()
    runs = [
        ("Z", "nn(1)", 1.0, [1, 2, 3, 4, 6, 8]),
        ("Z", "a:2,A:1", 1.0, [1, 2, 3, 4, 6, 8]),
        ("Z", "nn(1)", 0.5, [1, 2, 3, 4, 6, 8]),
        ("F2", "nn(1)", 1.0, [0.5, 1.0, 1.5, 2.0, 2.5]),
        ("C3", "nn(1)", 1.0, [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]),
    ]
    for gname, kern, delta, grid in runs:
        p = _params(gname, kern, delta)
        g = estimate_growth_rate(p, grid, replicas, seed=seed_from(SEED, 6, gname, kern, delta), min_survivors=100)
        a = total_rate(p.kernel)
        rec.check(f"{gname} {kern} delta={delta}: r_hat {g.r_hat:.4f} +- {g.half_width:.4f} in "
                  f"[{-delta}, {a - delta}]", g.within_bounds(delta, a))
    p = _params("Z", "none", 1.0)
    g = estimate_growth_rate(p, [0.5, 1.0, 1.5, 2.0, 2.5, 3.0], 4 * replicas, seed=seed_from(SEED, 6, "death"))
    rec.check(f"pure death: r_hat {g.r_hat:.4f} within 0.02 of -1", abs(g.r_hat + 1) <= 0.02)
    rec.check("pure death: r_hat within bounds", g.within_bounds(1.0, 0.0))
    return rec


Z_GRID = [1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64]


def criterion_7(replicas: int = 20_000) -> _Recorder:
    """r(delta) on Z is nonincreasing and 1-Lipschitz up to the half-widths."""
    from .engine import seed_from
    from .estimators import REGRESSION_LOG, estimate_growth_rate

    rec = _Recorder()
    deltas = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4]
    est = []
    for d in deltas:
        p = _params("Z", "nn(1)", d)
        g = estimate_growth_rate(p, Z_GRID, replicas, method=REGRESSION_LOG, min_survivors=100,
                                 seed=seed_from(SEED, 7, d))
        est.append(g)
        rec.check(f"delta={d}: r_hat {g.r_hat:.4f} +- {g.half_width:.4f} (grid to t={g.times[-1]:g})", True)
    for i in range(len(deltas)):
        for j in range(i + 1, len(deltas)):
            a, b = est[i], est[j]
            comb = math.hypot(a.half_width, b.half_width)
            rec.check(f"monotone {deltas[i]} -> {deltas[j]}: {a.r_hat:.4f} >= {b.r_hat:.4f} - {2 * comb:.4f}",
                      b.r_hat <= a.r_hat + 2 * comb)
            rec.check(f"Lipschitz {deltas[i]} -> {deltas[j]}",
                      abs(a.r_hat - b.r_hat) <= abs(deltas[j] - deltas[i]) + 2 * comb)
    return rec


def criterion_8(replicas: int = 20_000) -> _Recorder:
    """Sign of r: nonpositive on Z, positive on F2 with survival."""
    from .engine import seed_from
    from .estimators import REGRESSION_LOG, estimate_growth_rate, estimate_survival

    rec = _Recorder()
    for lam in (0.5, 1.0, 2.0):
        p = _params("Z", f"nn({lam})", 1.0)
        g = estimate_growth_rate(p, Z_GRID, replicas, method=REGRESSION_LOG, min_survivors=100,
                                 seed=seed_from(SEED, 8, lam))
        rec.check(f"Z lambda={lam}: r_hat {g.r_hat:.4f} <= 3 * {g.half_width:.4f}", g.r_hat <= 3 * g.half_width)
    p = _params("F2", "nn(1)", 0.5)
    s = estimate_survival(p, [p.group.identity], 20.0, replicas, seed=seed_from(SEED, 8, "F2s"))
    rec.check(f"F2 survival {s.rho_hat:.4f} > 3 * {s.std_error:.4f}", s.positive)
    g = estimate_growth_rate(p, [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0], replicas // 2,
                             seed=seed_from(SEED, 8, "F2r"))
    rec.check(f"F2 r_hat {g.r_hat:.4f} > 3 * {g.half_width:.4f}", g.r_hat > 3 * g.half_width)
    return rec


# --- 9, 10, 11 -------------------------------------------------------------------------------------------

def criterion_9(replicas: int = 1_000_000) -> _Recorder:
    """Campbell identity: exact on C2 and C3, empirical on C2."""
    from .campbell import campbell_window_distribution, exact_campbell_laws, law_distance
    from .engine import seed_from

    rec = _Recorder()
    for gname in ("C2", "C3"):
        p = _params(gname, "nn(1)", 1.0)
        left, right = exact_campbell_laws(p, 0.4)
        r = law_distance(left, right)
        rec.check(f"{gname} exact residual {r:.2e} < 1e-9", r < 1e-9)
    p = _params("C2", "nn(1)", 1.0)
    g = p.group
    _, right = exact_campbell_laws(p, 0.4)
    window = g.elements()
    emp = campbell_window_distribution(p, window, replicas, t=0.4, seed=seed_from(SEED, 9))
    exact = np.zeros(2 ** len(window))
    for A, v in right.items():
        exact[sum(1 << b for b, x in enumerate(window) if x in A)] = v
    tv = 0.5 * float(np.abs(emp.probabilities - exact).sum())
    rec.check(f"C2 empirical TV {tv:.2e} < 0.01", tv < 0.01)
    return rec


def criterion_10() -> _Recorder:
    """Covariance formula on C1 (analytic) and on C2, C3 (exact chain)."""
    from .oracle import build_generator, covariance_sides

    rec = _Recorder()
    p = _params("C1", "none", 1.0)
    gen = build_generator(p)
    alive = lambda A: float(bool(A))
    for t in (0.5, 1.0, 2.0):
        lhs, rhs = covariance_sides(gen, alive, alive, [p.group.identity], t)
        analytic = math.exp(-t) * (1 - math.exp(-t))
        rec.check(f"C1 t={t}: formula {rhs:.10f} vs analytic {analytic:.10f}", abs(rhs - analytic) < 1e-6)
        rec.check(f"C1 t={t}: chain {lhs:.10f} vs analytic", abs(lhs - analytic) < 1e-6)
    for gname in ("C2", "C3"):
        p = _params(gname, "nn(1)", 1.0)
        gen = build_generator(p)
        e = p.group.identity
        card = lambda A: float(len(A))
        has0 = lambda A: float(e in A)
        mix = np.full(gen.n_states, 1.0 / gen.n_states)
        for mu_name, mu in (("{0}", [e]), ("uniform", mix)):
            for t in (0.5, 1.0):
                lhs, rhs = covariance_sides(gen, card, has0, mu, t)
                rec.check(f"{gname} mu={mu_name} t={t}: |{lhs:.10f} - {rhs:.10f}| < 1e-6", abs(lhs - rhs) < 1e-6)
    return rec


def criterion_11() -> _Recorder:
    """Möbius inversion recovers a synthetic 3-site pattern law."""
    from .campbell import moebius_patterns

    rec = _Recorder()
    rng = np.random.default_rng(SEED)
    for trial in range(5):
        p = rng.dirichlet(np.ones(8))
        q = {T: float(sum(p[S] for S in range(8) if not S & T)) for T in range(8)}
        err = float(np.max(np.abs(moebius_patterns(q, 3) - p)))
        rec.check(f"trial {trial}: max error {err:.1e} < 1e-12", err < 1e-12)
    return rec


# --- 12 ---------------------------------------------------------------------------------------------

def criterion_12(replicas: int = 2000) -> _Recorder:
    """Overlap decay of uniform walks from a typical infected site: F2 versus Z."""
    from .bounds import campbell_overlap_ensemble, rw_overlap_decay
    from .engine import seed_from

    rec = _Recorder()
    p = _params("F2", "nn(1)", 1.0)
    pairs, _ = campbell_overlap_ensemble(p, replicas, t=2.0, seed=seed_from(SEED, 12, "F2"))
    d = rw_overlap_decay(p.group, pairs, 20, walks=20, seed=seed_from(SEED, 12, "F2w"))
    rec.check(f"F2 theta {d.theta_hat:.4f} < 0.95", d.theta_hat < 0.95)
    rec.check(f"F2 1 - theta > 3 * {d.theta_se:.4f}", 1 - d.theta_hat > 3 * d.theta_se)
    p = _params("Z", "nn(2)", 1.0)
    pairs, _ = campbell_overlap_ensemble(p, replicas, t=20.0, seed=seed_from(SEED, 12, "Z"))
    d = rw_overlap_decay(p.group, pairs, 20, walks=20, seed=seed_from(SEED, 12, "Zw"))
    rec.check(f"Z theta {d.theta_hat:.4f} within 3 * {d.theta_se:.4f} of 1", abs(1 - d.theta_hat) <= 3 * d.theta_se)
    return rec


# --- 13 ---------------------------------------------------------------------------------------------

def cli_command() -> list[str]:
    return [sys.executable, "-m", "contactlab.cli"]


def criterion_13() -> _Recorder:
    """Byte-identical CSV output across thread counts and repeated runs."""
    rec = _Recorder()
    runs = [
        ["simulate", "--group", "Z", "--kernel", "a:2,A:1", "--delta", "1", "--initial", "0",
         "--obs", "0.5,1,2", "--replicas", "2000"],
        ["survival", "--group", "F2", "--kernel", "nn(1)", "--delta", "1", "--horizon", "3", "--replicas", "20000"],
        ["campbell", "--group", "Z", "--kernel", "nn(2)", "--delta", "1", "--window", "0,a", "--gamma", "3",
         "--replicas", "20000"],
    ]
    with tempfile.TemporaryDirectory() as tmp:
        for j, args in enumerate(runs):
            outputs = []
            for threads, rep in ((1, 0), (4, 0), (4, 1)):
                out = os.path.join(tmp, f"run{j}_{threads}_{rep}")
                cmd = cli_command() + ["--seed", "12345", "--threads", str(threads), "--out-dir", out] + args
                proc = subprocess.run(cmd, capture_output=True, text=True)
                if proc.returncode != 0:
                    rec.check(f"{args[0]} threads={threads}: exit {proc.returncode}: {proc.stderr.strip()[-200:]}", False)
                    outputs.append(None)
                    continue
                with open(os.path.join(out, f"{args[0]}.csv"), "rb") as fh:
                    outputs.append(fh.read())
            same = outputs[0] is not None and all(o == outputs[0] for o in outputs)
            rec.check(f"{args[0]}: identical CSV for threads 1, 4, 4 ({len(outputs[0] or b'')} bytes)", same)
    return rec


CRITERIA: dict[int, tuple[str, Callable[[], _Recorder]]] = {
    1: ("oracle equivalence", criterion_1),
    2: ("duality", criterion_2),
    3: ("symmetry of means", criterion_3),
    4: ("moment bound", criterion_4),
    5: ("submultiplicativity", criterion_5),
    6: ("growth-rate bounds", criterion_6),
    7: ("monotone Lipschitz growth rate", criterion_7),
    8: ("growth-rate sign pattern", criterion_8),
    9: ("Campbell identity", criterion_9),
    10: ("covariance formula", criterion_10),
    11: ("Moebius inversion", criterion_11),
    12: ("amenability contrast", criterion_12),
    13: ("determinism", criterion_13),
}


def run_criterion(number: int) -> CriterionResult:
    name, fn = CRITERIA[number]
    t0 = time.perf_counter()
    try:
        rec = fn()
        checks = rec.checks
    except Exception as exc:  # a crash is a failure, reported like one
        checks = [(f"raised {type(exc).__name__}: {exc}", False)]
    passed = bool(checks) and all(ok for _, ok in checks)
    return CriterionResult(number, name, passed, checks, time.perf_counter() - t0)


def run_acceptance_suite(tier: str = "fast", only=None, echo: Callable[[str], None] | None = print) -> list[CriterionResult]:
    if tier not in ("fast", "full"):
        raise ValueError("tier must be 'fast' or 'full'")
    numbers = FAST if tier == "fast" else FULL
    if only:
        numbers = [n for n in numbers if n in set(only)]
    results = []
    for n in sorted(numbers):
        r = run_criterion(n)
        results.append(r)
        if echo:
            echo(r.line())
    return results


def results_json(results: list[CriterionResult]) -> str:
    return json.dumps([
        {"criterion": r.number, "name": r.name, "passed": r.passed, "seconds": round(r.seconds, 2),
         "checks": [{"check": c, "passed": ok} for c, ok in r.checks]}
        for r in results], indent=2)
