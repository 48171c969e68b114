"""Command-line front end: ``simulate``, ``estimate`` and ``selftest``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, Mode, ScenarioConfig, bundled_config, load_config
from .observables import realize, visibility_counts, write_observables_csv

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with the numerical code
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lunar-odts", description="Lunar orbit and clock determination from terrestrial GNSS.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", default="default",
                        help="YAML scenario file, or the name of a bundled one (default, desk, minimal)")
        sp.add_argument("--runs", type=_positive_int, help="number of Monte-Carlo runs (overrides config)")
        sp.add_argument("--seed", type=_nonneg_int, help="master seed (overrides config)")
        sp.add_argument("--out", help="output directory (overrides config)")
        sp.add_argument("--workers", type=_positive_int, help="worker processes (default: logical cores)")

    sim = sub.add_parser("simulate", help="write truth trajectory and simulated observables")
    common(sim)
    sim.add_argument("--every", type=_positive_int, default=1, help="write every n-th epoch of observables")

    est = sub.add_parser("estimate", help="run the filter and smoother Monte Carlo")
    common(est)
    est.add_argument("--mode", action="append", choices=[m.value for m in Mode],
                     help="measurement mode; repeat to run several modes on one scenario")
    est.add_argument("--smoother-iters", type=_nonneg_int, help="smoother iterations (0 disables smoothing)")

    st = sub.add_parser("selftest", help="run the factored-filter oracle suites")
    st.add_argument("--config", default=None, help="scenario whose gravity table is checked")
    st.add_argument("--seed", type=_nonneg_int, default=2024)
    st.add_argument("--timings", action="store_true", help="append wall-clock time per check")
    return p


def resolve_config(name: str) -> ScenarioConfig:
    path = Path(name)
    if not path.exists() and path.suffix == "" and os.sep not in name:
        path = bundled_config(name)
    return load_config(path)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _scenario(args) -> tuple[ScenarioConfig, Path]:
    cfg = resolve_config(args.config)
    updates = {}
    if args.runs is not None:
        updates["runs"] = args.runs
    if args.seed is not None:
        updates["seed"] = args.seed
    if updates:
        cfg = replace(cfg, **updates)
    out = Path(args.out) if args.out else cfg.resolve("output_dir")
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _workers(args, cfg: ScenarioConfig) -> int:
    return args.workers or cfg.workers or os.cpu_count() or 1


def cmd_simulate(args) -> int:
    from .pipeline import build_scenario, write_truth_csv

    cfg, out = _scenario(args)
    t0 = time.perf_counter()
    scn = build_scenario(cfg)
    _log(f"scenario: {scn.n_epochs} epochs, {len(scn.constellation.systems)} sources "
         f"({time.perf_counter() - t0:.1f} s)")
    write_truth_csv(out / "truth.csv", scn)
    geo = scn.geometry
    for run in range(cfg.runs):
        real = realize(geo, scn.constellation, cfg.receiver, cfg.clock, cfg.seed, run)
        n = write_observables_csv(out / f"observables_run{run:03d}.csv", geo, real, scn.constellation, args.every)
        _log(f"run {run}: {n} observables")
    counts = visibility_counts(geo, scn.constellation, cfg.receiver.threshold)
    keys = list(counts)
    with open(out / "visibility.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch_s"] + [f"n_{key}" for key in keys])
        for i, t in enumerate(scn.times):
            w.writerow([repr(float(t))] + [int(counts[key][i]) for key in keys])
    print(visibility_summary(counts), end="")
    return EXIT_OK


def visibility_summary(counts: dict) -> str:
    lines = [f"{'tracked':<10} {'mean':>7} {'min':>5} {'max':>5}"]
    for key, v in counts.items():
        lines.append(f"{key:<10} {np.mean(v):7.2f} {int(np.min(v)):5d} {int(np.max(v)):5d}")
    return "\n".join(lines) + "\n"


def cmd_estimate(args) -> int:
    from .pipeline import aggregate, build_scenario, run_monte_carlo, summary_table, write_aggregate_csv, write_run_csv

    cfg, out = _scenario(args)
    modes = [Mode(m) for m in args.mode] if args.mode else [cfg.filter.mode]
    modes = list(dict.fromkeys(modes))
    t0 = time.perf_counter()
    scn = build_scenario(cfg)
    _log(f"scenario: {scn.n_epochs} epochs, evaluation from epoch {scn.eval_start} "
         f"({time.perf_counter() - t0:.1f} s)")
    workers = _workers(args, cfg)
    stats = []
    for mode in modes:
        fc = replace(cfg.filter, mode=mode)
        t1 = time.perf_counter()
        results = run_monte_carlo(scn, fc, cfg.runs, cfg.seed, workers, args.smoother_iters)
        for res in results:
            write_run_csv(out / f"run_{mode.value}_{res.run:03d}.csv", res)
        stats += aggregate(results, scn.eval_start)
        _log(f"{mode.value}: {cfg.runs} runs ({time.perf_counter() - t1:.1f} s)")
    write_aggregate_csv(out / "aggregate.csv", stats)
    table = summary_table(stats)
    (out / "summary.txt").write_text(table)
    print(table, end="")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import format_checks, run_checks

    gravity = None
    if args.config:
        gravity = resolve_config(args.config).resolve("gravity_file")
    results = run_checks(args.seed, gravity)
    print(format_checks(results, args.timings), end="")
    failed = [r for r in results if not r.passed]
    if not failed:
        print("all checks passed")
        return EXIT_OK
    print(f"{len(failed)} check(s) failed")
    return EXIT_VALIDATION if any(r.error for r in failed) else EXIT_NUMERICAL


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "selftest": cmd_selftest}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        _log(str(exc))
        return EXIT_VALIDATION
    except ConfigError as exc:
        _log(f"configuration error: {exc}")
        return EXIT_VALIDATION
    except ArithmeticError as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except OSError as exc:
        _log(f"I/O error: {exc}")
        return EXIT_IO
    except ValueError as exc:
        _log(f"invalid input: {exc}")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
