"""Command-line entry point: ``qles {solve,sweep,ae,burnin,resources}``.

Each subcommand reads an optional JSON config, writes its outputs to
``--out`` and drops a ``manifest.json`` next to them echoing the config and
seed. Exit codes: 0 success, 1 computation failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .amplitude import AeConfig, QueryModelRangeWarning, model_query_complexity, run_trials
from .burnin import A_MAX_GRID, D_GRID, rebuild_slope_model, write_coefficients
from .noise import run_noisy_sweep, sweep_from_config
from .nozzle import case_from_config, run_outer_loop
from .resources import (FIXTURES, ErrorCorrectionParams, FactoryDescriptor, build_table,
                        load_fixture, load_fixture_file, write_table_csv)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            config = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    return config


def _seed(args, config: dict) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(config.get("seed", 0))


def write_manifest(out: Path, args, config: dict, seed: int, outputs: list, **extra) -> None:
    manifest = {
        "subcommand": args.command,
        "config_path": None if args.config is None else str(args.config),
        "config": config,
        "seed": seed,
        "output_dir": str(out),
        "outputs": outputs,
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))


def cmd_solve(args, config: dict, out: Path) -> int:
    case_cfg = config.get("case", config)
    case = case_from_config({k: v for k, v in case_cfg.items() if k != "seed"})
    report = run_outer_loop(case)
    report.write_csv(out / "history.csv")
    write_manifest(out, args, config, _seed(args, config), ["history.csv"],
                   converged=report.converged, iterations=report.iterations,
                   final_residual=report.final_residual)
    return EXIT_OK if report.converged else EXIT_FAILED


def cmd_sweep(args, config: dict, out: Path) -> int:
    kwargs = sweep_from_config(config)
    case = case_from_config(config.get("case", {"stations": 8}))
    kwargs["seed"] = _seed(args, config)
    try:
        result = run_noisy_sweep(case, n_jobs=args.threads, **kwargs)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    result.write_csv(out / "sweep.csv")
    write_manifest(out, args, config, kwargs["seed"], ["sweep.csv"])
    return EXIT_OK


AE_KEYS = {"a", "eps", "delta", "trials", "signed", "seed", "shots", "margin", "confint",
           "b0", "max_degree", "coarse_shots"}


def cmd_ae(args, config: dict, out: Path) -> int:
    unknown = set(config) - AE_KEYS
    if unknown:
        raise ConfigError(f"unknown ae keys: {sorted(unknown)}")
    a = float(config.get("a", 0.5))
    if not -1 <= a <= 1:
        raise ConfigError("a must lie in [-1, 1]")
    signed = bool(config.get("signed", True))
    cfg_keys = {"eps", "delta", "shots", "margin", "confint", "b0", "max_degree", "coarse_shots"}
    cfg = AeConfig(**{k: config[k] for k in cfg_keys if k in config})
    seed = _seed(args, config)
    summary = run_trials(a, cfg, int(config.get("trials", 200)), signed=signed, seed=seed)
    trials = [r.as_dict() for r in summary.results]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QueryModelRangeWarning)
        model = model_query_complexity(cfg.eps, signed=signed)
    aggregate = {"coverage": summary.coverage, "mean_queries": summary.mean_queries,
                 "model_queries": model}
    if signed and a != 0:
        aggregate["sign_accuracy"] = summary.sign_accuracy
    (out / "ae_trials.json").write_text(json.dumps(trials, indent=1))
    (out / "ae_summary.json").write_text(json.dumps(aggregate, indent=2))
    write_manifest(out, args, config, seed, ["ae_trials.json", "ae_summary.json"])
    return EXIT_OK


def cmd_burnin(args, config: dict, out: Path) -> int:
    unknown = set(config) - {"D_list", "a_max_list", "trials", "seed"}
    if unknown:
        raise ConfigError(f"unknown burnin keys: {sorted(unknown)}")
    seed = _seed(args, config)
    model, table = rebuild_slope_model(config.get("D_list", D_GRID),
                                       config.get("a_max_list", A_MAX_GRID),
                                       int(config.get("trials", 10)), seed, n_jobs=args.threads)
    table.write_csv(out / "slopes.csv")
    write_coefficients(model, out / "coefficients.json")
    write_manifest(out, args, config, seed, ["slopes.csv", "coefficients.json"])
    return EXIT_OK


def _params_from_config(config: dict) -> ErrorCorrectionParams:
    overrides = dict(config.get("error_correction", {}))
    factory = overrides.pop("factory", None)
    if factory is not None:
        overrides["factory"] = FactoryDescriptor(**factory)
    return ErrorCorrectionParams(**overrides)


def cmd_resources(args, config: dict, out: Path) -> int:
    unknown = set(config) - {"fixture", "source", "error_correction", "seed"}
    if unknown:
        raise ConfigError(f"unknown resources keys: {sorted(unknown)}")
    fixture = config.get("fixture", "nozzle")
    rows = load_fixture(fixture) if fixture in FIXTURES else load_fixture_file(fixture)
    table = build_table(rows, _params_from_config(config), config.get("source", "tabulated"))
    write_table_csv(table, out / "resources.csv")
    write_manifest(out, args, config, _seed(args, config), ["resources.csv"])
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "ae": cmd_ae,
            "burnin": cmd_burnin, "resources": cmd_resources}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qles", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        if args.command == "solve" and args.config is None:
            raise ConfigError("solve needs --config")
        args.out.mkdir(parents=True, exist_ok=True)
        with np.errstate(all="ignore"):
            return COMMANDS[args.command](args, config, args.out)
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
