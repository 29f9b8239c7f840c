"""Command-line entry points.

Subcommands: run (experiment config -> CSVs), allocate, mse-probe, huber1d,
bounds.  Results go to files or stdout as JSON; diagnostics go to stderr.
Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analysis, experiments
from .problem import ProblemError, instance_from_json
from .saa import mse_probe
from .sampling import AllocationError, SamplingError, allocate, parse_strategy
from .problem import build

CONFIG_ERROR = 1
RUNTIME_ERROR = 2

_SCHEME_ALIASES = {"cond": "conditional", "conditional": "conditional",
                   "indep": "independent", "independent": "independent"}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; this tool reserves 2 for runtime failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(CONFIG_ERROR)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, separators=(",", ":")))


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _cmd_allocate(args) -> int:
    alloc = allocate(args.budget, parse_strategy(args.alpha), _SCHEME_ALIASES[args.scheme])
    _emit({"n": alloc.n, "m": alloc.m, "leftover": alloc.leftover})
    return 0


def _cmd_huber1d(args) -> int:
    interval = analysis.huber1d_expected_error(args.gamma, args.sigma2, args.m)
    payload = interval.to_dict()
    if args.mc:
        study = experiments.huber1d_error_study(
            args.gamma, args.sigma2, args.m, replications=args.mc, seed=args.seed)
        payload["mc_mean"] = study.mean
        payload["mc_se"] = study.se
        payload["mc_replications"] = study.replications
    _emit(payload)
    return 0


def _cmd_bounds(args) -> int:
    config = _load_json(args.config)
    payload = {}
    if "sample_complexity" in config:
        inputs = analysis.BoundInputs.from_json(config["sample_complexity"])
        payload["sample_complexity"] = analysis.sample_complexity(inputs).to_dict()
    if "bias_variance" in config:
        section = dict(config["bias_variance"])
        n = int(section.pop("n"))
        m = int(section.pop("m"))
        smooth = bool(section.pop("smooth"))
        inputs = analysis.BoundInputs.from_json(section)
        payload["bias_variance"] = analysis.bias_variance_bounds(inputs, n, m, smooth).to_dict()
    if "large_deviation" in config:
        section = dict(config["large_deviation"])
        variant_name = section.pop("variant", "sub_gaussian")
        if variant_name == "sub_gaussian":
            variant = analysis.SubGaussian()
        elif variant_name == "rate_function":
            variant = analysis.RateFunction(slack=float(section.pop("slack", 1.0)))
        elif variant_name == "vector":
            variant = analysis.VectorBound(k=int(section.pop("k", 1)),
                                           slack=float(section.pop("slack", 1.0)))
        else:
            raise analysis.AnalysisError(f"unknown tail variant: {variant_name!r}")
        payload["large_deviation"] = large = {}
        large["probability"] = analysis.large_deviation_bound(
            n=int(section["n"]), eps=float(section["eps"]),
            sigma2=float(section["sigma2"]), variant=variant)
    if not payload:
        raise analysis.AnalysisError(
            "bounds config needs at least one of: sample_complexity, "
            "bias_variance, large_deviation")
    _emit(payload)
    return 0


def _cmd_mse_probe(args) -> int:
    config = _load_json(args.config)
    problem = build(instance_from_json(config["instance"]))
    report = mse_probe(
        problem,
        np.asarray(config["x"], dtype=float),
        n=int(config["n"]), m=int(config["m"]),
        scheme=_SCHEME_ALIASES[config.get("scheme", "cond")],
        replications=int(config.get("replications", 1000)),
        seed=int(config.get("seed", 0)),
    )
    print(report.to_json())
    return 0


def _cmd_run(args) -> int:
    config = experiments.ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        config = experiments.ExperimentConfig(
            instance=config.instance, schemes=config.schemes, budgets=config.budgets,
            strategies=config.strategies, replications=config.replications,
            master_seed=args.seed, solver=config.solver, oracle=config.oracle,
            mode=config.mode)
    report = experiments.run_experiment(config, cache_dir=args.out, threads=args.threads)
    paths = experiments.emit_csv(report, args.out, include_timings=args.timings)
    _emit({"raw_csv": paths["raw"], "summary_csv": paths["summary"],
           "f_star": report.f_star, "f_star_se": report.f_star_se,
           "oracle": report.oracle_label})
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="cso-saa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config and emit CSVs")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--timings", action="store_true",
                       help="write measured wall times (breaks byte-stable output)")
    p_run.set_defaults(fn=_cmd_run)

    p_alloc = sub.add_parser("allocate", help="split a budget into (n, m)")
    p_alloc.add_argument("--budget", type=int, required=True)
    p_alloc.add_argument("--alpha", required=True)
    p_alloc.add_argument("--scheme", choices=sorted(_SCHEME_ALIASES), required=True)
    p_alloc.set_defaults(fn=_cmd_allocate)

    p_probe = sub.add_parser("mse-probe", help="bias/variance/MSE probe from a config")
    p_probe.add_argument("--config", required=True)
    p_probe.set_defaults(fn=_cmd_mse_probe)

    p_h = sub.add_parser("huber1d", help="expected-error interval, optionally with MC")
    p_h.add_argument("--gamma", type=float, required=True)
    p_h.add_argument("--sigma2", type=float, required=True)
    p_h.add_argument("--m", type=int, required=True)
    p_h.add_argument("--mc", type=int, default=0, metavar="R",
                     help="also run R Monte Carlo replications")
    p_h.add_argument("--seed", type=int, default=0)
    p_h.set_defaults(fn=_cmd_huber1d)

    p_b = sub.add_parser("bounds", help="evaluate bound calculators from a config")
    p_b.add_argument("--config", required=True)
    p_b.set_defaults(fn=_cmd_bounds)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (ProblemError, SamplingError, AllocationError, analysis.AnalysisError,
            experiments.ExperimentError, FileNotFoundError, json.JSONDecodeError,
            KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except Exception as exc:  # runtime failures
        print(f"runtime failure: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
