"""Objective of every mechanism as pieces are added to a nested instance."""
from _common import finish, parser

from dp_pwa.experiment import ExperimentConfig, run_experiment

if __name__ == "__main__":
    p = parser(__doc__, "results/pieces")
    p.add_argument("--values", default="5,10,20,40")
    args = p.parse_args()
    ms = [int(m) for m in args.values.split(",")]
    config = ExperimentConfig(m=ms, runs=args.runs, seed=args.seed, epsilon=args.epsilon)
    finish(run_experiment(config), args.out, args.verbose)
