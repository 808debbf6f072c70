"""Command-line experiment runner.

    sybilsim run            one simulation, timeseries + iteration CSVs
    sybilsim sweep          cost-vs-attack sweep across defenses
    sybilsim heuristics     the same sweep over the heuristic variants
    sybilsim assumptions    churn-assumption constants for a network
    sybilsim gmcom-failure  final-join cost vs. join proximity

All subcommands accept --config (flat key=value file), --seed, --out,
--jobs, --paper-scale, and --emit-plot-data where applicable.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import experiments
from .config import experiment_spec, parse_config, sim_config


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sybilsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "assumptions", "gmcom-failure", "heuristics"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int, help="base seed override")
        sp.add_argument("--out", help="output directory override")
        sp.add_argument("--paper-scale", action="store_true",
                        help="full-scale grid: all powers of two, 20 runs, 10^4 s")
        sp.add_argument("--emit-plot-data", action="store_true",
                        help="append log-log-ready columns to sweep CSVs")
        sp.add_argument("--jobs", type=int, help="parallel worker count")
        sp.add_argument("--network", help="network override")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = parse_config(args.config) if args.config else {}
    spec = experiment_spec(cfg)
    if args.paper_scale:
        spec = spec.at_paper_scale()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.out is not None:
        spec = replace(spec, out_dir=args.out)
    if args.jobs is not None:
        spec = replace(spec, jobs=args.jobs)
    if args.network is not None:
        spec = replace(spec, network=args.network)
    if args.emit_plot_data:
        spec = replace(spec, emit_plot=True)

    if args.command == "run":
        config = sim_config(cfg, spec)
        result, ts_path, it_path = experiments.single_run(spec, config)
        print(f"defense={config.defense} network={spec.network} seed={spec.seed}")
        print(f"alg_spend_rate={result.alg_spend_rate():.6g}")
        print(f"adv_work_rate={result.adv_work_rate():.6g}")
        print(f"good_joins={result.good_joins} bad_joins={result.bad_joins}")
        print(f"valid={result.valid} violations={len(result.violations)}")
        print(f"wrote {ts_path}")
        print(f"wrote {it_path}")
        return 0
    if args.command == "sweep":
        path = experiments.avt_sweep(spec)
    elif args.command == "heuristics":
        path = experiments.heuristic_sweep(spec)
    elif args.command == "assumptions":
        path = experiments.assumptions(spec)
    elif args.command == "gmcom-failure":
        path = experiments.gmcom_failure(spec)
    else:  # pragma: no cover - argparse enforces the choices
        raise AssertionError(args.command)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
