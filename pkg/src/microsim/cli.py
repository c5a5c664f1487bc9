"""Command-line scenario runner.

    microsim run <experiment> [--preset NAME | --topology FILE]
                 [--scenario FILE] [--seed N] [--duration-s N] [--out DIR]
                 [experiment-specific flags]

Scenario files are line-oriented `key = value` documents using the same
keys as the flags (see README). Command-line flags override file values.
The default output directory is $MICROSIM_OUT or ./out.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

from .errors import MicrosimError, ParseError
from .experiments import EXPERIMENTS, Scenario, run_experiment


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microsim",
        description="Deterministic microservice-graph simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a named experiment")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--preset", help="built-in topology name")
    run.add_argument("--topology", help="topology file path")
    run.add_argument("--scenario", help="scenario file path")
    run.add_argument("--seed", type=int)
    run.add_argument("--duration-s", type=float)
    run.add_argument("--warmup-s", type=float)
    run.add_argument("--out", help="output directory (default $MICROSIM_OUT or ./out)")
    run.add_argument("--rate", type=float, help="offered request rate (req/s)")
    run.add_argument("--rates", type=_parse_floats, help="comma-separated rate grid")
    run.add_argument("--skews", type=_parse_ints, help="comma-separated skew values")
    run.add_argument("--freqs", type=_parse_floats, help="comma-separated frequencies")
    run.add_argument("--loads", type=_parse_floats, help="comma-separated load grid")
    run.add_argument("--users", type=int, help="population size (default 100)")
    run.add_argument("--skew", type=int, help="population skew in [0, 99]")
    run.add_argument("--pool-k", type=int, help="HTTP1 connection pool size")
    run.add_argument("--autoscale", action="store_true", default=None)
    run.add_argument("--state-store", choices=("s3", "memory"))
    return parser


_SCENARIO_LISTS = {"skews": _parse_ints, "freqs": _parse_floats,
                   "loads": _parse_floats, "rates": _parse_floats}
_SCENARIO_SCALARS = {"experiment": str, "preset": str, "seed": int,
                     "duration_s": float, "warmup_s": float, "out": str,
                     "rate": float, "users": int, "skew": int,
                     "threshold": float, "window_s": float,
                     "startup_delay_s": float, "pool_k": int}


def load_scenario_file(path: str) -> dict:
    """Parse a `key = value` scenario document into Scenario field values."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip().replace("-", "_"), value.strip()
        try:
            if key in _SCENARIO_LISTS:
                values[key] = _SCENARIO_LISTS[key](value)
            elif key in _SCENARIO_SCALARS:
                name = "out_dir" if key == "out" else key
                values[name] = _SCENARIO_SCALARS[key](value)
            elif key == "topology":
                values["topology_file"] = value
            elif key == "arrivals":
                values["arrivals"] = value
            elif key in ("autoscale", "serverless"):
                values[key] = value in ("on", "yes", "true")
            elif key == "state_store":
                values["state_store"] = "s3_like" if value in ("s3", "s3_like") \
                    else "remote_memory"
            elif key == "rate_limit":
                rate, burst = value.split()
                values["rate_limit"] = (float(rate), int(burst))
            elif key == "fault.slow":
                frac, freq, start = value.split()
                values["fault_slow"] = (float(frac), float(freq), float(start))
            elif key == "fault.misroute":
                svc, idx, s0, s1 = value.split()
                values["fault_misroute"] = (svc, int(idx), float(s0), float(s1))
            elif key == "fault.hotspot":
                svc, factor, s0, s1 = value.split()
                values["fault_hotspot"] = (svc, float(factor), float(s0), float(s1))
            else:
                raise ParseError(f"{path}:{lineno}: unknown scenario key {key!r}")
        except (ValueError, TypeError) as err:
            raise ParseError(f"{path}:{lineno}: bad value {value!r} for {key!r}") from err
    return values


def scenario_from_args(args: argparse.Namespace) -> Scenario:
    values: dict = {"experiment": args.experiment}
    if args.scenario:
        file_values = load_scenario_file(args.scenario)
        file_values.pop("experiment", None)
        values.update(file_values)
    overrides = {
        "preset": args.preset, "topology_file": args.topology, "seed": args.seed,
        "duration_s": args.duration_s, "warmup_s": args.warmup_s,
        "rate": args.rate, "users": args.users, "skew": args.skew,
        "pool_k": args.pool_k, "autoscale": args.autoscale,
    }
    if args.rates:
        overrides["rates"] = args.rates
    if args.skews:
        overrides["skews"] = args.skews
    if args.freqs:
        overrides["freqs"] = args.freqs
    if args.loads:
        overrides["loads"] = args.loads
    if args.state_store:
        overrides["state_store"] = ("s3_like" if args.state_store == "s3"
                                    else "remote_memory")
    out = args.out or values.get("out_dir") or os.environ.get("MICROSIM_OUT") or "out"
    values["out_dir"] = out
    values.update({k: v for k, v in overrides.items() if v is not None})
    valid = {f.name for f in fields(Scenario)}
    unknown = set(values) - valid
    if unknown:
        raise ParseError(f"unknown scenario fields: {sorted(unknown)}")
    return Scenario(**values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        scenario = scenario_from_args(args)
    except MicrosimError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    try:
        run_experiment(scenario)
    except MicrosimError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
