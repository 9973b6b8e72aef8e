"""Objective of DP and regular subgradient methods against the iteration count."""
from _common import finish, parser

from dp_pwa.experiment import ExperimentConfig, run_iteration_study

if __name__ == "__main__":
    p = parser(__doc__, "results/iterations")
    p.add_argument("--k-values", default="1,25,50,100,200,400")
    args = p.parse_args()
    config = ExperimentConfig(runs=args.runs, seed=args.seed, epsilon=args.epsilon)
    ks = [int(k) for k in args.k_values.split(",")]
    finish(run_iteration_study(config, ks), args.out, args.verbose)
