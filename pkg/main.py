# main.py

import argparse
import json
import logging
import sys

from config import Config
from errors import ConfigError
from persistence.data_persistence import load_manifest
from runner.commands import COMMAND_NAMES, FORMATS, RunConfig, run


def build_parser():
    """
    Builds the command-line parser. Unset flags fall back to the RunConfig defaults.
    """
    parser = argparse.ArgumentParser(prog="roughcalc", description="Level-2 rough path calculus toolkit.")
    parser.add_argument("command", nargs="?", choices=COMMAND_NAMES, help="What to run.")
    parser.add_argument("--driver", help="Driver spec, e.g. fbm:H=0.4,d=2,N=4096,seed=7")
    parser.add_argument("--field", help="Field spec, e.g. tanh:A=2,scale=1.5")
    parser.add_argument("--p", type=float, help="Regularity index p.")
    parser.add_argument("--N", type=int, help="Grid size when the driver spec gives none.")
    parser.add_argument("--seed", type=int, help="Seed when the driver spec gives none.")
    parser.add_argument("--tol", type=float, help="Picard tolerance.")
    parser.add_argument("--out", help="Output path prefix.")
    parser.add_argument("--format", choices=FORMATS, help="Path file format.")
    parser.add_argument("--jobs", type=int, help="Worker threads for sweeps.")
    parser.add_argument("--deltas", help="Perturbation sizes, comma-separated.")
    parser.add_argument("--kind", help="Perturbation kind: initial, field, dilation or translation.")
    parser.add_argument("--a", help="Initial point, comma-separated.")
    parser.add_argument("--config", help="JSON file whose keys override the flags.")
    parser.add_argument("--from-manifest", dest="from_manifest", help="Re-run the configuration of a manifest.")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    return parser


def resolve_config(args):
    """
    Merges flags, an optional JSON config file and an optional manifest into a RunConfig.
    Precedence: manifest, then config file, then flags.
    """
    if args.from_manifest:
        manifest = load_manifest(args.from_manifest)
        if "config" not in manifest:
            raise ConfigError(f"Manifest {args.from_manifest} holds no run configuration.")
        return RunConfig.from_dict(manifest["config"])
    values = {key: value for key, value in vars(args).items()
              if value is not None and key not in ("config", "from_manifest", "verbose")}
    if "a" in values:
        try:
            values["a"] = [float(v) for v in values["a"].split(",")]
        except ValueError as e:
            raise ConfigError(f"Cannot parse initial point '{values['a']}': {e}") from e
    if args.config:
        try:
            with open(args.config, "r") as f:
                values.update(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config file {args.config}: {e}") from e
    if "command" not in values:
        raise ConfigError("No command given.")
    return RunConfig.from_dict(values)


def main(argv=None):
    """
    Parses the command line, runs the command and returns its exit status.
    """
    args = build_parser().parse_args(argv)
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else Config.LOG_LEVEL)
    try:
        config = resolve_config(args)
    except ConfigError as e:
        logging.error(f"Configuration error: {e}")
        return 2
    logging.info(f"Running '{config.command}' (version {Config.VERSION}).")
    return run(config)


if __name__ == "__main__":
    # Configure logging to include timestamp and log level
    logging.basicConfig(level=Config.LOG_LEVEL, format='%(asctime)s - %(levelname)s - %(message)s')
    sys.exit(main())
