"""Command-line interface for running and validating control scenarios.

Exit codes: 0 on success, 2 on divergence, 3 on configuration errors.
Angles are degrees at this boundary (config files, CSV, printed values);
internal computation is radians.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import aircraft as ac
from .controller import GainSet, pole_gains
from .errors import (
    ConfigurationError,
    DivergenceError,
    NadiError,
    OracleFailureError,
    SingularityError,
    TrimError,
)
from .plant import list_plants
from .sim import (
    AIRCRAFT,
    ScenarioConfig,
    load_config,
    oracle_deviation,
    run_scenario,
    write_trace,
)

EXIT_OK = 0
EXIT_DIVERGED = 2
EXIT_CONFIG = 3


def default_scenario_path() -> Path:
    """Path of the packaged level-route scenario."""
    return Path(
        str(resources.files("nadi").joinpath("scenarios/aircraft_level_route.json"))
    )


def _apply_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    if getattr(args, "mode", None):
        config.mode = args.mode
    if getattr(args, "no_integral", False):
        config.gains = GainSet(
            config.gains.k_blocks,
            config.gains.k_s,
            np.zeros(config.gains.m),
        )
    if getattr(args, "no_errors", False):
        config.errors = ac.NOMINAL
    return config


def _print_summary(name: str, summary) -> None:
    errs = ", ".join(f"{e:+.4g}" for e in summary.final_errors)
    means = ", ".join(f"{e:.4g}" for e in summary.steady_state_means)
    print(f"{name}: final output errors [{errs}]")
    print(f"{name}: last-5s mean |error| per output [{means}]")
    if math.isnan(summary.vs_settle_time):
        print(f"{name}: solve residual never settled below threshold")
    else:
        print(f"{name}: solve residual settled at t = {summary.vs_settle_time:.3f} s")
    if summary.diverged:
        print(f"{name}: DIVERGED at t = {summary.divergence_time:.4g} s")


def cmd_run(args) -> int:
    config = load_config(args.config or default_scenario_path())
    config = _apply_overrides(config, args)
    trace, summary = run_scenario(config)
    if args.out:
        write_trace(trace, args.out, plant=config.plant)
        print(f"wrote {len(trace)} records to {args.out}")
    _print_summary(config.plant, summary)
    return EXIT_DIVERGED if summary.diverged else EXIT_OK


def cmd_trim(args) -> int:
    if args.plant != AIRCRAFT:
        raise ConfigurationError(f"trim is only defined for {AIRCRAFT}")
    alpha, eta = ac.trim_level_flight(args.V, args.h, ac.AeroModel())
    print(f"alpha = {math.degrees(alpha):.6f} deg")
    print(f"eta   = {eta:.6f}")
    return EXIT_OK


def cmd_gains(args) -> int:
    poles = [complex(p) for p in args.poles.split(",")]
    (k,) = pole_gains([poles])
    terms = " ".join(f"k{j + 1} = {kj:.6g}," for j, kj in enumerate(k))
    print(f"{terms.rstrip(',')}".rstrip(","))
    print(
        "convention: z = -k1*e - k2*e' - ... + feedforward "
        "(positive gains give a stable error equation)"
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    config = load_config(args.config or default_scenario_path())
    trace, summary = run_scenario(config)
    if summary.diverged:
        print(f"run diverged at t = {summary.divergence_time:.4g} s")
        return EXIT_DIVERGED
    dev = oracle_deviation(trace, config)
    print(f"max |u - u_root| after residual settle: {dev:.6e}")
    return EXIT_OK


def cmd_batch(args) -> int:
    paths = sorted(Path(args.dir).glob("*.json"))
    if not paths:
        raise ConfigurationError(f"no *.json scenarios under {args.dir}")
    worst = EXIT_OK
    for path in paths:
        try:
            config = load_config(path)
            trace, summary = run_scenario(config)
        except (ConfigurationError, SingularityError) as exc:
            print(f"{path.name}: CONFIG ERROR: {exc}")
            worst = max(worst, EXIT_CONFIG)
            continue
        if args.out_dir:
            out = Path(args.out_dir) / (path.stem + ".csv")
            out.parent.mkdir(parents=True, exist_ok=True)
            write_trace(trace, out, plant=config.plant)
        status = "DIVERGED" if summary.diverged else "ok"
        errs = ", ".join(f"{e:.3g}" for e in summary.steady_state_means)
        print(f"{path.name}: {status}, last-5s mean |error| [{errs}]")
        if summary.diverged:
            worst = max(worst, EXIT_DIVERGED)
    return worst


def cmd_list_plants(_args) -> int:
    for name in list_plants():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nadi",
        description="Dynamic-inversion control scenarios for non-affine plants",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate a scenario and report tracking")
    p_run.add_argument("--config", help="scenario JSON (default: packaged level route)")
    p_run.add_argument("--out", help="write the trace CSV here")
    p_run.add_argument(
        "--mode", choices=("full", "inverse-free", "pure-inverse"), default=None
    )
    p_run.add_argument("--no-integral", action="store_true", help="zero integral gains")
    p_run.add_argument("--no-errors", action="store_true", help="nominal plant model")
    p_run.set_defaults(func=cmd_run)

    p_trim = sub.add_parser("trim", help="level-flight trim solution")
    p_trim.add_argument("--plant", default=AIRCRAFT)
    p_trim.add_argument("--V", type=float, required=True, help="airspeed (m/s)")
    p_trim.add_argument("--h", type=float, required=True, help="altitude (m)")
    p_trim.set_defaults(func=cmd_trim)

    p_gains = sub.add_parser("gains", help="error-feedback gains for desired poles")
    p_gains.add_argument(
        "--poles", required=True, help="comma-separated pole list, e.g. -1,-2 or -2+2j,-2-2j"
    )
    p_gains.set_defaults(func=cmd_gains)

    p_val = sub.add_parser(
        "validate", help="compare traced controls against the Newton-oracle roots"
    )
    p_val.add_argument("--config", help="scenario JSON (default: packaged level route)")
    p_val.set_defaults(func=cmd_validate)

    p_batch = sub.add_parser("batch", help="run every scenario JSON in a directory")
    p_batch.add_argument("--dir", required=True)
    p_batch.add_argument("--out-dir", help="write one CSV per scenario here")
    p_batch.set_defaults(func=cmd_batch)

    p_list = sub.add_parser("list-plants", help="registered plant names")
    p_list.set_defaults(func=cmd_list_plants)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, TrimError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, SingularityError, OracleFailureError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NadiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
