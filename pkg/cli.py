# cli.py
"""Batch entry point: one subcommand per lab task, plus `summary` over finished reports.

    python cli.py dim --group Z^d:d=2 --k 2
    python cli.py hitting --group Z --subgroup "sublattice:basis=[[2]]" --measure srw
    python cli.py poincare --config configs/poincare_z2.yaml --seed 7 --workers 4
    python cli.py summary reports/*.json --out reports/summary.csv

Exit codes: 0 ok, 2 config error, 3 resource error, 4 inconclusive result, 5 a gated check failed.
"""
import argparse
import sys
from typing import Dict, List, Optional

from setup_logging import setup_logging
from utils.errors import LabError
from utils.experiment import (
    EXIT_CONFIG,
    EXIT_OK,
    TASKS,
    ExperimentConfig,
    load_config_file,
    merge_overrides,
    run_experiment,
)
from utils.reports import emit_summary


def _radii(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"radii must be comma-separated integers: {text!r}") from e


def _names(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _task_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="YAML or JSON experiment config; flags override its values")
    p.add_argument("--group", help='group spec, e.g. "Z^d:d=2", "heisenberg", "lamplighter"')
    p.add_argument("--measure", dest="family", choices=["uniform", "srw", "geometric"], help="measure family")
    p.add_argument("--power", type=int, help="convolution power of the measure")
    p.add_argument("--decay", type=float, help="decay rate of the geometric measure")
    p.add_argument("--mass-tol", type=float, help="discarded-mass tolerance of the geometric measure")
    p.add_argument("--radii", type=_radii, help="comma-separated radii, e.g. 4,8,16")
    p.add_argument("--epsilon", help="cover scale, a decimal or a fraction like 1/4")
    p.add_argument("--k", type=int, help="growth degree")
    p.add_argument("--rank-tol", type=float, help="relative singular value tolerance")
    p.add_argument("--backend", choices=["poly_ansatz", "variational"])
    p.add_argument("--subgroup", help='finite-index subgroup, e.g. "sublattice:basis=[[2,0],[0,1]]"')
    p.add_argument("--mode", choices=["exact", "monte_carlo"], help="hitting measure mode")
    p.add_argument("--n-samples", type=int, help="Monte Carlo walks")
    p.add_argument("--trunc-radius", type=int, help="truncation radius of the exact hitting measure")
    p.add_argument("--n-functions", type=int, help="random functions per radius")
    p.add_argument("--variants", type=_names, help="Poincaré variants: inf,courteous,smoothing")
    p.add_argument("--functions", type=_names, help='polynomial expressions, e.g. "1,x,x*y"')
    p.add_argument("--word-cap", type=int, help="longest derivative word in the degree test")
    p.add_argument("--name", help="report file stem")
    p.add_argument("--seed", type=int, help="random seed (required by stochastic tasks)")
    p.add_argument("--out", help="report directory")
    p.add_argument("--format", choices=["json", "csv"], help="csv also writes the report tables")
    p.add_argument("--workers", type=int, help="worker threads")
    p.add_argument("--verbose", action="store_true", help="debug logging")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Harmonic functions lab on finitely generated groups")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _task_parser()
    for task in TASKS:
        sub.add_parser(task, parents=[common], help=f"run the {task} task")
    summary = sub.add_parser("summary", help="consolidate finished reports into one CSV table")
    summary.add_argument("reports", nargs="+", help="report JSON files")
    summary.add_argument("--out", help="CSV path for the table")
    summary.add_argument("--verbose", action="store_true")
    return parser


def _overrides(args: argparse.Namespace) -> Dict:
    measure = {"family": args.family, "power": args.power, "decay": args.decay, "mass_tol": args.mass_tol}
    return {
        "task": args.command,
        "group": args.group,
        "measure": measure,
        "radii": args.radii,
        "epsilon": args.epsilon,
        "k": args.k,
        "rank_tol": args.rank_tol,
        "backend": args.backend,
        "subgroup": args.subgroup,
        "mode": args.mode,
        "n_samples": args.n_samples,
        "trunc_radius": args.trunc_radius,
        "n_functions": args.n_functions,
        "variants": args.variants,
        "functions": args.functions,
        "word_cap": args.word_cap,
        "name": args.name,
        "seed": args.seed,
        "out": args.out,
        "format": args.format,
        "workers": args.workers,
    }


def _run_task(args: argparse.Namespace) -> int:
    try:
        base = load_config_file(args.config) if args.config else {}
        if base.get("task", args.command) != args.command:
            print(f"error=config reason=config file is for task {base['task']}, not {args.command}")
            return EXIT_CONFIG
        config = ExperimentConfig.from_mapping(merge_overrides(base, _overrides(args)))
    except LabError as e:
        print(f"error=config reason={' '.join(str(e).split())}")
        return EXIT_CONFIG
    result = run_experiment(config)
    print(result.status_line())
    return result.exit_code


def _run_summary(args: argparse.Namespace) -> int:
    try:
        frame = emit_summary(args.reports, args.out)
    except LabError as e:
        print(f"error=config reason={' '.join(str(e).split())}")
        return EXIT_CONFIG
    print(frame.to_string(index=False))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        setup_logging("DEBUG")
    if args.command == "summary":
        return _run_summary(args)
    return _run_task(args)


if __name__ == "__main__":
    sys.exit(main())
