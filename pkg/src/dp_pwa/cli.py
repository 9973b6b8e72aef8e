"""``dp-pwa`` command line: run sweeps, audit mechanisms, print bounds."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from . import analysis
from .core import AdjacencySpec, Box, Instance, PwaObjective, box_diameter
from .experiment import (
    ALL_MECHANISMS,
    BASELINE,
    ConfigError,
    ExperimentConfig,
    emit_outputs,
    run_experiment,
    run_iteration_study,
)
from .mechanisms import PRIVATE_MECHANISMS, run_mechanism_batch, solve_nonprivate
from .samplers import RandomSource
from .solver import brute_force_optimum

log = logging.getLogger("dp_pwa")


def adjacent_pair_1d(b_max: float = 0.5, half_width: float = 1.0) -> tuple[Instance, Instance]:
    """``f = |x|`` and its neighbour ``|x + b_max|`` on ``[-c, c]``; optima differ by ``b_max``."""
    A = np.array([[1.0], [-1.0]])
    box = Box.symmetric(1, half_width)
    adj = AdjacencySpec(b_max)
    D = Instance(PwaObjective(A, [0.0, 0.0]), box, adj)
    return D, D.with_offsets([b_max, -b_max])


def point_sampler(name: str):
    """``(instance, eps, rngs) -> points`` for a mechanism name, or the non-private solver."""
    if name == BASELINE:
        return lambda inst, eps, rngs: np.tile(solve_nonprivate(inst), (len(rngs), 1))
    if name not in PRIVATE_MECHANISMS:
        raise ConfigError("mechanism", f"unknown mechanism {name!r}")
    return lambda inst, eps, rngs: run_mechanism_batch(name, inst, eps, rngs).points


def cmd_run(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    if args.k_values:
        ks = [int(k) for k in args.k_values.split(",")]
        result = run_iteration_study(config, ks)
    else:
        result = run_experiment(config)
    for path in emit_outputs(result, args.out, formats):
        print(path)
    return 0


def cmd_audit(args) -> int:
    D, D_adj = adjacent_pair_1d(args.b_max)
    points = analysis.audit_detection(
        point_sampler(args.mechanism), D, D_adj, args.epsilon, args.samples, None,
        RandomSource(args.seed),
    )
    for p in points:
        print(json.dumps(p.to_dict()))
    failed = [p for p in points if not p.satisfied]
    verdict = "PASS" if not failed else f"FAIL ({len(failed)} of {len(points)} rules)"
    print(f"audit {args.mechanism} eps={args.epsilon}: {verdict}", file=sys.stderr)
    return 0 if not failed else 1


def bound_reports(config: ExperimentConfig, c_samples: int = 100_000) -> list[dict]:
    sweep_name, values = config.sweep
    rows = []
    for i, v in enumerate(values):
        inst = config.instance(**{sweep_name: v})
        R, G, d, m = box_diameter(inst.box), inst.objective.lipschitz, inst.d, inst.m
        f_opt = brute_force_optimum(inst)[0]
        C0 = analysis.estimate_C(
            inst, 0.0, config.epsilon, c_samples, RandomSource(config.seed).derive_child(i), f_opt
        )
        alphas = config.dp_schedule().steps(config.k)
        reports = [
            analysis.bound_solution_perturbation(G, d, R / math.sqrt(d), config.epsilon),
            analysis.bound_exponential_mean(inst.b_max, config.epsilon, C0.value),
            analysis.bound_dp_subgradient(R, G, alphas, config.epsilon, config.k, inst.b_max, m),
        ]
        for rep in reports:
            rows.append({"sweep_name": sweep_name, "sweep_value": v, "f_opt": f_opt, **rep.to_dict()})
        rows[-2]["C0_stderr"] = C0.stderr
    return rows


def cmd_bounds(args) -> int:
    config = ExperimentConfig.load(args.config)
    for row in bound_reports(config):
        print(json.dumps(row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dp-pwa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment sweep")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default="results")
    run.add_argument("--format", default="csv", help="comma list of csv,json,plotscript")
    run.add_argument("--seed", type=int)
    run.add_argument("--k-values", help="comma list of iteration counts: run the iteration study")
    run.set_defaults(func=cmd_run)

    audit = sub.add_parser("audit", help="detection audit on a pair of adjacent 1-d instances")
    audit.add_argument("--mechanism", required=True, choices=ALL_MECHANISMS)
    audit.add_argument("--epsilon", type=float, required=True)
    audit.add_argument("--samples", type=int, required=True)
    audit.add_argument("--b-max", type=float, default=0.5)
    audit.add_argument("--seed", type=int, default=0)
    audit.set_defaults(func=cmd_audit)

    bounds = sub.add_parser("bounds", help="theoretical bounds for a config's instances")
    bounds.add_argument("--config", required=True)
    bounds.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
