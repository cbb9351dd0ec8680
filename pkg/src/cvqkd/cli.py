"""Command-line entry point: ``cvqkd {rate,sweep,simulate,selftest}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from cvqkd.config import ATTACKS, ScenarioConfig
from cvqkd.errors import ConfigError, CVQKDError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _json_default(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _dump_json(data) -> str:
    # infinities are written as the string "inf" rather than the non-standard literal
    def clean(x):
        if isinstance(x, float) and math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        return x

    return json.dumps(clean(data), indent=2, sort_keys=True, default=_json_default) + "\n"


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    overrides = {}
    if getattr(args, "attack", None):
        overrides["attack"] = args.attack
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "loss", None) is not None:
        overrides["loss"] = args.loss
    if getattr(args, "N", None) is not None and args.command != "simulate":
        overrides["N"] = int(args.N)
    try:
        cfg = cfg.with_overrides(**overrides) if overrides else cfg
        # re-run validation on the merged config
        return ScenarioConfig.from_dict(cfg.to_dict())
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_rate(args) -> int:
    from cvqkd.optimize import optimize_parameters

    cfg = _load_config(args)
    result = optimize_parameters(cfg.N, cfg)
    _write(_dump_json(result.to_dict()), args.out)
    if args.out:
        print(f"{cfg.attack}: N={result.N} ell={result.ell} rate={result.rate:.6g} {result.reason}".rstrip())
    return EXIT_OK


def cmd_sweep(args) -> int:
    from cvqkd.optimize import sweep, sweep_csv

    cfg = _load_config(args)
    if args.axis or args.values:
        axis = args.axis or cfg.sweep_axis
        values = tuple(float(v) for v in args.values.split(",")) if args.values else cfg.sweep_values
        cfg = ScenarioConfig.from_dict({**cfg.to_dict(), "sweep": {"axis": axis, "values": list(values)}})
    rows = sweep(cfg, workers=args.workers)
    _write(sweep_csv(rows, cfg.attack), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from cvqkd.harness import simulate

    cfg = _load_config(args)
    if args.d0 is not None:
        data = cfg.to_dict()
        data["simulation"]["d0"] = args.d0
        cfg = ScenarioConfig.from_dict(data)
    report = simulate(cfg, N=args.N, seed=args.seed, emit_key=args.emit_key)
    _write(_dump_json(report), args.out)
    if args.out:
        status = "pass" if report["passed"] else "abort"
        print(f"{status}: d_pe={report['statistics']['d_pe']:.6g} key_length={report['key_length']}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from cvqkd.harness import selftest

    results = selftest()
    for name, ok, msg, secs in results:
        print(f"{'PASS' if ok else 'FAIL'} {name:10s} {secs:6.2f}s  {msg}")
    return EXIT_OK if all(ok for _, ok, _, _ in results) else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvqkd", description="Finite-key CV-QKD rate calculator and protocol simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, attack=True):
        p.add_argument("--config", help="scenario JSON file (defaults to the headline scenario)")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--seed", type=int)
        p.add_argument("--loss", type=float, help="override channel loss fraction")
        if attack:
            p.add_argument("--attack", choices=ATTACKS)

    p = sub.add_parser("rate", help="optimized key length at one N")
    common(p)
    p.add_argument("--N", type=float, help="sifted rounds (default from config)")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("sweep", help="optimized key rate over an N or loss axis, as CSV")
    common(p)
    p.add_argument("--N", type=float, help="sifted rounds for loss sweeps")
    p.add_argument("--axis", choices=("N", "loss"))
    p.add_argument("--values", help="comma-separated axis values")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo run of the full protocol, JSON report")
    common(p, attack=False)
    p.add_argument("--N", type=int, help="sifted rounds (default from config)")
    p.add_argument("--d0", type=float, help="override the abort threshold")
    p.add_argument("--emit-key", action="store_true", help="include the key bits in the report")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("selftest", help="run the built-in oracle checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CVQKDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
