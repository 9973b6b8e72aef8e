"""Objective of every mechanism as the box half-width c grows."""
from _common import finish, parser

from dp_pwa.experiment import ExperimentConfig, run_experiment

if __name__ == "__main__":
    p = parser(__doc__, "results/box")
    p.add_argument("--values", default="0.5,1,2,4")
    args = p.parse_args()
    cs = [float(c) for c in args.values.split(",")]
    config = ExperimentConfig(half_width=cs, runs=args.runs, seed=args.seed, epsilon=args.epsilon)
    finish(run_experiment(config), args.out, args.verbose)
