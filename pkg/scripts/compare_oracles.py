#!/usr/bin/env python3
"""Cross-check the minimax fold value against pseudo-arclength continuation.

The two routes are methodologically independent: the minimax solver never
traces a branch, the continuation oracle never maximizes the inner minimum.
"""

import argparse

from minimax_fold.harness import oracle_compare
from minimax_fold.mesh_fem import build_mesh
from minimax_fold.model import builtin_problem


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--problem", default="scalar_power")
    parser.add_argument("--q", type=float, default=0.5)
    parser.add_argument("--gamma", type=float, default=2.0)
    parser.add_argument("--n", type=int, default=64)
    args = parser.parse_args()

    params = {} if args.problem == "linear_diagnostic" else {"q": args.q, "gamma": args.gamma}
    spec = builtin_problem(args.problem, params)
    comparison = oracle_compare(spec, build_mesh(args.n))

    print(f"minimax      lambda* = {comparison.lambda_minimax:.12f} "
          f"({comparison.runtime_minimax:.2f}s)")
    if comparison.lambda_fold is None:
        print(f"continuation found no fold ({comparison.fold_status}); divergence "
              f"expected for problems without a turning point")
    else:
        print(f"continuation lambda  = {comparison.lambda_fold:.12f} "
              f"({comparison.runtime_fold:.2f}s)")
        print(f"relative gap = {comparison.rel_gap:.3e}")


if __name__ == "__main__":
    main()
