#!/usr/bin/env python3
"""Refinement study: minimax fold values across mesh sizes with warm starts.

Example:
    python scripts/run_refinement.py --q 0.5 --gamma 2 --sizes 8 16 32 64 128
"""

import argparse

from minimax_fold.harness import RunConfig, refinement_study
from minimax_fold.minimax_solver import SolverOptions


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--problem", default="scalar_power")
    parser.add_argument("--q", type=float, default=0.5)
    parser.add_argument("--gamma", type=float, default=2.0)
    parser.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 32, 64, 128])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    params = {} if args.problem == "linear_diagnostic" else {"q": args.q, "gamma": args.gamma}
    config = RunConfig(problem_name=args.problem, problem_params=params,
                       study="refine", mesh_sizes=tuple(args.sizes),
                       solver=SolverOptions(seed=args.seed))
    table = refinement_study(config)

    header = f"{'n':>6} {'h':>12} {'lambda_r*':>22} {'|delta|':>12} {'sigma_min':>12}"
    print(header)
    print("-" * len(header))
    for row in table.rows:
        delta = "" if row.delta_prev is None else f"{row.delta_prev:.4e}"
        print(f"{row.n:6d} {row.h:12.5e} {row.lambda_star:22.16f} "
              f"{delta:>12} {row.sigma_min:12.4e}")
    if table.fitted_order is not None:
        print(f"\nfitted convergence order: {table.fitted_order:.3f}")


if __name__ == "__main__":
    main()
