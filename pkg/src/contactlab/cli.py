"""Command-line entry point: ``contactlab <experiment> [options]``.

Global flags (``--config``, ``--seed``, ``--threads``, ``--out-dir``) may go
before or after the subcommand.  Flags override keys from the config file.
Each run writes ``<experiment>.csv`` and ``<experiment>.json`` to the output
directory.

Exit codes: 0 success, 2 invalid input, 3 acceptance failure, 4 resource cap.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import KINDS, PARAMS, ConfigError, build_config, load_config_file

EXIT_OK, EXIT_INPUT, EXIT_ACCEPT, EXIT_CAP = 0, 2, 3, 4

HELP = {
    "simulate": "cluster size and survival at observation times",
    "growth-rate": "exponential growth rate of the expected cluster size, optionally over a delta list",
    "survival": "survival probability from a finite initial state",
    "delta-c": "bisection bracket for the critical recovery rate",
    "duality-check": "forward against dual nonintersection probabilities",
    "martingale-check": "Dynkin martingale residual for a functional",
    "domination": "probability that a translate of B sits inside the process",
    "campbell": "Campbell window law, or its distance to the invariant law over a gamma list",
    "branching-check": "branching-coupling means against the rate-walk prediction",
    "ball-profile": "word-metric ball sizes and a growth classification",
    "rw-decay": "overlap decay of uniform walks from a typical infected site",
    "oracle-check": "Monte Carlo state law against the exact chain on a finite group",
    "accept": "run the acceptance suite",
}


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON config file; flags override its keys")
    p.add_argument("--seed", default=d, help="master seed (64-bit unsigned)")
    p.add_argument("--threads", default=d, help="worker threads for the compiled kernels")
    p.add_argument("--out-dir", dest="out_dir", default=d, help="directory for the CSV and JSON outputs")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contactlab", description="Contact processes on countable groups.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="experiment")
    run = sub.add_parser("run", help="run the experiment named by 'kind' in the config file")
    _global_flags(run, suppress=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=HELP[kind], description=HELP[kind])
        _global_flags(sp, suppress=True)
        if kind != "accept":
            sp.add_argument("--group", help="Z, Z^d, Fk, Cn, lamplighter or trivial")
            sp.add_argument("--kernel", help='"nn(lambda)", "none" or word:rate pairs such as "a:2,A:1"')
            sp.add_argument("--delta", help="recovery rate")
            sp.add_argument("--replicas", help="number of replicas")
        for key, (typ, default) in PARAMS[kind].items():
            flags = ["--" + key.replace("_", "-")] + (["--time"] if key == "t" else [])
            if typ == "bool":
                sp.add_argument(*flags, dest=key, action="store_const", const=True, help=f"(default {default})")
            else:
                sp.add_argument(*flags, dest=key, help=f"{typ} (default {default})")
    return parser


def _set_threads(threads) -> None:
    """Thread count for numba; must happen before the compiled modules load."""
    if threads is None:
        return
    n = int(threads)
    if "numba" not in sys.modules:
        os.environ["NUMBA_NUM_THREADS"] = str(n)
        return
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    logging.basicConfig(level=logging.INFO if args.pop("verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = args.pop("command")
    out_dir = args.pop("out_dir", None) or "contactlab-out"
    path = args.pop("config", None)
    try:
        file_data, text = load_config_file(path) if path else ({}, "")
        if command != "run":
            args["kind"] = command
        cfg = build_config(file_data, args, text)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INPUT

    _set_threads(cfg.threads)
    from .campbell import EmptyEnsemble, TrivialInvariantLaw
    from .engine import CapExceeded
    from .groups import BallTooLarge
    from .oracle import OracleTooLarge
    from .runner import run_experiment

    try:
        report = run_experiment(cfg)
    except (CapExceeded, OracleTooLarge, BallTooLarge, MemoryError) as exc:
        print(f"error: resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (TrivialInvariantLaw, EmptyEnsemble) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, cfg.kind)
    with open(stem + ".csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_csv())
    with open(stem + ".json", "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    print(f"{cfg.kind}: {len(report.rows)} rows -> {stem}.csv")
    if not report.passed:
        return EXIT_ACCEPT
    if report.flagged:
        print(f"error: {report.flagged} replicas hit a size or population cap; outputs written",
              file=sys.stderr)
        return EXIT_CAP
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
