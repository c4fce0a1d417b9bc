"""Command-line entry point.

Subcommands::

    synth    write a synthetic seasonal series to CSV
    ingest   validate a CSV column and print its summary
    run      run one experiment config
    grid     grid-search hyperparameters around a base config
    compare  run several methods on one dataset and reservoir
    report   tabulate the metric JSON files found in a directory

Failures exit with status 1 and a message of the form ``error: [stage] ...``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from . import data as dp
from .experiment import (
    ExperimentConfig,
    GridSpec,
    StageError,
    compare_methods,
    comparison_rows,
    grid_search,
    run_experiment,
)

logger = logging.getLogger("rcprob")


def _load_config(path: str, seed: Optional[int]) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.load(path)
    except Exception as e:
        raise StageError("config", e) from e
    return cfg if seed is None else replace(cfg, seed=seed)


def cmd_synth(args) -> int:
    series = dp.synth_seasonal(args.length, args.period, args.trend, args.noise_std, args.seed, args.amplitude)
    dp.save_csv(series, args.output)
    print(f"wrote {len(series)} values to {args.output}")
    return 0


def cmd_ingest(args) -> int:
    try:
        series = dp.load_csv(args.csv, args.column, header=not args.no_header)
        n_train, n_cal, n_test = dp.split_sizes(len(series), dp.SplitSpec())
    except Exception as e:
        raise StageError("ingest", e) from e
    v = series.values
    summary = {"name": series.name, "length": len(series), "step_seconds": series.step.total_seconds(),
               "mean": float(v.mean()), "std": float(v.std()), "min": float(v.min()), "max": float(v.max()),
               "split_sizes": [n_train, n_cal, n_test]}
    print(json.dumps(summary, indent=2))
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args.config, args.seed)
    if args.n_runs is not None:
        cfg = replace(cfg, n_runs=args.n_runs)
    report = run_experiment(cfg)
    out = report.write(args.out)
    agg = report.aggregate()["metrics"]
    print(" ".join(f"{k}={v['mean']:.4g}" for k, v in agg.items()))
    print(f"outputs in {out}")
    return 0


def cmd_grid(args) -> int:
    base = _load_config(args.config, args.seed)
    try:
        grid = GridSpec(json.loads(Path(args.grid).read_text())) if args.grid else GridSpec.default_for(base.method)
    except Exception as e:
        raise StageError("config", e) from e
    print(f"grid: {grid.size} candidates")
    res = grid_search(grid, base, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "leaderboard.json").write_text(json.dumps(res.leaderboard, indent=2, default=list))
    (out / "failures.json").write_text(json.dumps(res.failures, indent=2, default=list))
    res.best.save(out / "best_config.json")
    print(f"best: {res.leaderboard[0]['candidate']} (val mse {res.leaderboard[0]['val_mse']:.4g})")
    return 0


def cmd_compare(args) -> int:
    if args.methods:
        base = _load_config(args.config[0], args.seed)
        cfgs = []
        for m in args.methods:
            d = base.to_dict()
            keep = {"data", "seasonal", "split", "reservoir", "washout", "levels", "n_runs", "seed"}
            d = {k: v for k, v in d.items() if k in keep}
            d["method"] = m
            try:
                cfgs.append(ExperimentConfig.from_dict(d))
            except Exception as e:
                raise StageError("config", e) from e
    else:
        cfgs = [_load_config(p, args.seed) for p in args.config]
    try:
        reports = compare_methods(cfgs, args.out)
    except ValueError as e:
        if "different dataset" in str(e):
            raise StageError("config", e) from e
        raise
    for row in comparison_rows(reports):
        print(f"{row['method']:>9}: mse={row['mse']:.4g} cal={row['cal']:.4g} mcrps={row['mcrps']:.4g} "
              f"time={row['train_time']:.3g}s")
    return 0


def cmd_report(args) -> int:
    d = Path(args.dir)
    files = sorted(d.glob("*_metrics.json"))
    if not files:
        raise StageError("report", FileNotFoundError(f"no *_metrics.json files in {d}"))
    cols = ("mse", "cal", "width95", "coverage95", "mcrps")
    print(f"{'run':>12} " + " ".join(f"{c:>17}" for c in cols) + f" {'time [s]':>10}")
    for f in files:
        m = json.loads(f.read_text())
        agg = m["aggregate"]["metrics"]
        tag = f.name[: -len("_metrics.json")]
        tfile = d / f"{tag}_timing.json"
        t = json.loads(tfile.read_text())["train_time"]["mean"] if tfile.exists() else float("nan")
        cells = " ".join(f"{agg[c]['mean']:>8.4g}±{agg[c]['sd']:<8.2g}" for c in cols)
        print(f"{tag:>12} {cells} {t:>10.3g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rcprob", description="Probabilistic forecasting with echo state networks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic seasonal series")
    s.add_argument("output")
    s.add_argument("--length", type=int, default=2000)
    s.add_argument("--period", type=int, default=7)
    s.add_argument("--trend", type=float, default=0.001)
    s.add_argument("--noise-std", type=float, default=0.1)
    s.add_argument("--amplitude", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="validate and summarise a CSV column")
    s.add_argument("csv")
    s.add_argument("--column", default="0", help="column name or 0-based index")
    s.add_argument("--no-header", action="store_true")
    s.set_defaults(func=cmd_ingest)

    for name, fn, hlp in (("run", cmd_run, "run one experiment"), ("grid", cmd_grid, "grid search")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("config", help="experiment config (JSON)")
        s.add_argument("--seed", type=int, help="override the master seed")
        s.add_argument("--out", required=True, help="output directory")
        if name == "run":
            s.add_argument("--n-runs", type=int)
        else:
            s.add_argument("--grid", help="JSON object of value lists (default: the full default grid for the method)")
            s.add_argument("--workers", type=int, default=1)
        s.set_defaults(func=fn)

    s = sub.add_parser("compare", help="compare methods on one dataset and reservoir")
    s.add_argument("config", nargs="+", help="one config per method, or a single base config with --methods")
    s.add_argument("--methods", nargs="+")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("report", help="tabulate metrics written by run/compare")
    s.add_argument("dir")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "column", None) is not None and str(args.column).isdigit():
        args.column = int(args.column)
    try:
        return args.func(args)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # anything not tagged by the pipeline
        print(f"error: [{args.command}] {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
