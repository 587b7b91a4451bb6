"""
Main entry point for the QAOA workbench.

Subcommands:
    instance   write a seeded random GMVP instance file
    landscape  scan the six pairwise cost grids of a two-layer circuit
    bench      run the optimizer benchmark and write summary.csv/report.json
    oracle     print the brute-force optimum of an instance

Exit codes: 0 success, 2 configuration or usage error, 3 I/O error.
"""
import sys
import json
import logging
import argparse
from pathlib import Path

from dotenv import load_dotenv
from pydantic import ValidationError

from bench import emit_report, render_scatter, run_bench
from errors import ConfigurationError, UsageError
from gmvp import (
    DEFAULT_INSTANCE_SEED,
    brute_force_optimum,
    decode,
    feasible_indices,
    load_instance,
    random_instance,
    save_instance,
)
from landscape import scan_all_pairs, write_activity, write_grid
from noise import PRESET_PROFILES
from qaoa import QaoaParams, optimal_state_probability, parameter_names
from run_config import load_run_config
from utils import configure_logging, default_jobs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

DEFAULT_CONFIG = Path(__file__).resolve().parent / "configs" / "default.json"


def _config_dir(path):
    return Path(path).resolve().parent


def _select_profiles(config, names):
    """Configured profiles by name, falling back to the presets."""
    configured = {profile.name: profile for profile in config.build_profiles()}
    selected = []
    for name in names:
        if name in configured:
            selected.append(configured[name])
        elif name in PRESET_PROFILES:
            selected.append(PRESET_PROFILES[name])
        else:
            known = sorted(set(configured) | set(PRESET_PROFILES))
            raise ConfigurationError(f"unknown profile {name!r}; known profiles: {', '.join(known)}")
    return selected


def cmd_instance(args):
    instance = random_instance(args.seed, args.n, args.l, args.m)
    path = save_instance(instance, args.out)
    print(f"Wrote instance n={instance.n} l={instance.l} m={instance.m} seed={args.seed} to {path}")
    return EXIT_OK


def cmd_landscape(args):
    config = load_run_config(args.config)
    instance = config.build_instance(_config_dir(args.config))
    geometry = config.build_geometry()
    scan = config.landscape
    names = args.profile or scan.profiles or ["noiseless"]
    resolution = scan.resolution if args.resolution is None else args.resolution
    seed = scan.seed if args.seed is None else args.seed
    jobs = args.jobs or default_jobs()
    labels = parameter_names(geometry.p)

    for profile in _select_profiles(config, names):
        logger.info(f"Scanning landscapes under {profile.name} at resolution {resolution}")
        grids = scan_all_pairs(geometry, instance, resolution, scan.theta_star, profile, seed, jobs)
        for grid in grids:
            write_grid(grid, args.out_dir, geometry.p, svg=args.svg)
            print(
                f"{profile.name} {labels[grid.param_i]}/{labels[grid.param_j]}: "
                f"roughness {grid.roughness():.6g}"
            )
        _, activity, inactive = write_activity(grids, args.out_dir, geometry.p, profile.name)
        for index, score in activity.items():
            print(f"{profile.name} activity {labels[index]}: {score:.6g}")
        if inactive:
            print(f"{profile.name} inactive parameters: {', '.join(labels[i] for i in inactive)}")
    return EXIT_OK


def cmd_bench(args):
    config = load_run_config(args.config)
    bench_config = config.build_bench(_config_dir(args.config), runs=args.runs, base_seed=args.seed)
    profiles = None
    if args.profile:
        wanted = set(args.profile)
        profiles = [profile for profile in bench_config.profiles if profile.name in wanted]
        missing = wanted - {profile.name for profile in profiles}
        if missing:
            raise ConfigurationError(f"profiles not in the configuration: {', '.join(sorted(missing))}")
    modes = [args.mode] if args.mode else None
    if args.mode and args.mode not in bench_config.modes:
        raise ConfigurationError(f"mode {args.mode!r} is not configured")

    report = run_bench(bench_config, profiles=profiles, modes=modes, jobs=args.jobs or default_jobs())
    emit_report(report, args.out_dir)
    if args.svg:
        render_scatter(report, args.out_dir)
    for cell in report.cells:
        print(
            f"{cell['optimizer']:>15} {cell['profile']:>12} {cell['mode']:>9}  "
            f"mean {cell['mean']:.6g}  CI [{cell['ci95_lo']:.6g}, {cell['ci95_hi']:.6g}]  "
            f"nfev {cell['mean_nfev']:.1f}"
        )
    return EXIT_OK


def cmd_oracle(args):
    config = None
    if args.instance:
        instance = load_instance(args.instance)
    else:
        config = load_run_config(args.config)
        instance = config.build_instance(_config_dir(args.config))

    index, value = brute_force_optimum(instance)
    weights = decode(index, instance.n, instance.l, instance.m)
    feasible = len(feasible_indices(instance.n, instance.l, instance.m))
    width = instance.num_qubits
    print(f"Feasible states: {feasible}")
    print(f"Optimal basis index: {index} ({index:0{width}b})")
    print(f"Optimal weights: {', '.join(f'{w:.6g}' for w in weights.weights)}")
    print(f"Optimal value: {value:.17g}")

    if config is not None:
        geometry = config.build_geometry()
        params = QaoaParams.from_flat(config.landscape.theta_star, geometry.p)
        probability = optimal_state_probability(geometry, instance, params)
        print(f"Optimal-state probability at theta_star: {probability:.6g}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qaoa-workbench",
        description="Hard-constrained QAOA workbench for the Generalized Mean-Variance Problem",
    )
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    subparsers = parser.add_subparsers(dest="command", required=True)

    instance = subparsers.add_parser("instance", help="Write a seeded random instance")
    instance.add_argument("--seed", type=int, default=DEFAULT_INSTANCE_SEED)
    instance.add_argument("--n", type=int, default=4, help="Assets")
    instance.add_argument("--l", type=int, default=3, help="Qubits per asset")
    instance.add_argument("--m", type=int, default=3, help="Excitation budget")
    instance.add_argument("--out", default="default.gmvp.json", help="Output file")
    instance.set_defaults(handler=cmd_instance)

    landscape = subparsers.add_parser("landscape", help="Scan the pairwise cost landscapes")
    landscape.add_argument("--config", default=str(DEFAULT_CONFIG))
    landscape.add_argument("--out-dir", default="out/landscape")
    landscape.add_argument("--profile", action="append", help="Profile name; repeatable")
    landscape.add_argument("--resolution", type=int)
    landscape.add_argument("--seed", type=int)
    landscape.add_argument("--jobs", type=int)
    landscape.add_argument("--svg", action="store_true", help="Also render SVG contour plots")
    landscape.set_defaults(handler=cmd_landscape)

    bench = subparsers.add_parser("bench", help="Run the optimizer benchmark")
    bench.add_argument("--config", default=str(DEFAULT_CONFIG))
    bench.add_argument("--out-dir", default="out/bench")
    bench.add_argument("--profile", action="append", help="Profile name; repeatable")
    bench.add_argument("--mode", choices=["standard", "filtered"])
    bench.add_argument("--runs", type=int)
    bench.add_argument("--seed", type=int, help="Base seed")
    bench.add_argument("--jobs", type=int)
    bench.add_argument("--svg", action="store_true", help="Also render scatter plots")
    bench.set_defaults(handler=cmd_bench)

    oracle = subparsers.add_parser("oracle", help="Print the brute-force optimum")
    source = oracle.add_mutually_exclusive_group()
    source.add_argument("--instance", help="Instance file")
    source.add_argument("--config", default=str(DEFAULT_CONFIG))
    oracle.set_defaults(handler=cmd_oracle)
    return parser


def main(argv=None):
    """
    Parse arguments, run a subcommand and return its exit code.

    Args:
        argv (list): Arguments without the program name; defaults to sys.argv

    Returns:
        int: Exit code
    """
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    configure_logging("DEBUG" if args.verbose else None)

    try:
        return args.handler(args)
    except (ConfigurationError, UsageError, ValidationError, json.JSONDecodeError) as e:
        logger.error(f"{args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"{args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
