"""Command line entry point: ``minimax-fold <study> [--config ...] [flags]``.

Exit codes: 0 success, 2 configuration error, 3 solver failure (partial
artifacts are kept), 4 hypothesis-check failure under --strict.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .harness import EXIT_CONFIG, ConfigError, RunConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minimax-fold",
        description="Maximal fold values of cooperative elliptic systems by the "
                    "minimax Rayleigh-quotient method.",
    )
    sub = parser.add_subparsers(dest="study", required=True)
    for study in harness.STUDIES:
        p = sub.add_parser(study)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--problem", help="catalog problem name")
        p.add_argument("--q", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--gamma1", type=float)
        p.add_argument("--m", type=int, help="component count (system problems)")
        p.add_argument("--kappa", type=float, help="perturbation size(s)", nargs="+")
        p.add_argument("--n", type=int, help="mesh size (largest when several)")
        p.add_argument("--sizes", type=int, nargs="+", help="mesh size list")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--strict", action="store_true",
                       help="fail (exit 4) when a structural hypothesis is violated")
        p.add_argument("--svg", action="store_true", help="emit a static SVG chart")
    return parser


def config_from_args(args) -> RunConfig:
    overrides: dict = {"study": args.study}
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.sizes:
        overrides["mesh_sizes"] = tuple(args.sizes)
    elif args.n is not None:
        overrides["mesh_sizes"] = (args.n,)
    if args.strict:
        overrides["strict"] = True
    if args.svg:
        overrides["svg"] = True
    if args.kappa:
        overrides["perturb_kappas"] = tuple(args.kappa)
    if args.gamma1 is not None:
        overrides["perturb_gamma1"] = args.gamma1

    params: dict = {}
    for key in ("q", "gamma", "m"):
        value = getattr(args, key)
        if value is not None:
            params[key] = value

    if args.config:
        config = harness.load_config(args.config, overrides={})
        data = json.loads(json.dumps(config_to_dict(config)))
        data.update(overrides)
        if args.problem:
            data["problem"] = {"name": args.problem, "params": params}
        elif params:
            merged = dict(data.get("problem", {}).get("params", {}))
            merged.update(params)
            data["problem"] = {"name": data.get("problem", {}).get("name", "scalar_power"),
                               "params": merged}
        return RunConfig.from_dict(data)

    if args.problem:
        overrides["problem"] = {"name": args.problem, "params": params}
    elif params:
        overrides["problem"] = {"name": "scalar_power", "params": params}
    return RunConfig.from_dict(overrides)


def config_to_dict(config: RunConfig) -> dict:
    return {
        "problem": {"name": config.problem_name, "params": dict(config.problem_params)},
        "study": config.study,
        "mesh_sizes": list(config.mesh_sizes),
        "grading": config.grading,
        "ratio": config.ratio,
        "solver": vars(config.solver).copy(),
        "out_dir": config.out_dir,
        "seed": config.seed,
        "strict": config.strict,
        "svg": config.svg,
        "lambda_window": None if config.lambda_window is None else list(config.lambda_window),
        "perturb_kappas": list(config.perturb_kappas),
        "perturb_gamma1": config.perturb_gamma1,
    }


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code = harness.run(config)
    if code != 0:
        print(f"run finished with exit code {code}", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
