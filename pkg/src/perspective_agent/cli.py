"""Command-line entry point: train, test, analyze, and reproduce.

Exit codes: 0 on success, 2 for configuration or input problems, 3 for
numeric aborts during a run.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checks import (
    check_damping_algebra,
    check_directional_hysteresis,
    check_entropy_contrast,
    check_gradient_correctness,
    check_quantile_oracle,
    check_schedule_arithmetic,
    check_stop_gradient_separation,
    check_zone_preference,
    CheckResult,
)
from .config import QUICK_OVERRIDES, default_config_text, load_config
from .errors import AnalysisError, ConfigError, NumericError, QueryError
from .pipeline import run_analysis, run_test, run_train, sha256_file


def _common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seeds", help="space- or comma-separated seed list")


def _overrides(args) -> dict:
    overrides: dict[str, dict[str, str]] = {}
    if getattr(args, "out", None):
        overrides.setdefault("run", {})["out_dir"] = args.out
    if getattr(args, "seeds", None):
        overrides.setdefault("train", {})["seeds"] = args.seeds
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pagent",
        description="Train, test, and analyze the slow-latent grid-world agent.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one agent per seed")
    _common_options(p_train)

    p_test = sub.add_parser("test", help="regime-switching test runs from checkpoints")
    _common_options(p_test)
    p_test.add_argument("--logs", help="directory holding checkpoints (default: out dir)")
    p_test.add_argument("--period", type=int, choices=(20, 40, 80),
                        help="switching period (default from config)")
    p_test.add_argument("--freeze-learning", action="store_true",
                        help="disable online updates during the test run")

    p_an = sub.add_parser("analyze", help="hysteresis + occupancy analysis of a run dir")
    _common_options(p_an)
    p_an.add_argument("--logs", help="directory holding train/test CSVs (default: out dir)")
    p_an.add_argument("--period", type=int, choices=(20, 40, 80))
    p_an.add_argument("--no-plots", action="store_true", help="skip SVG figures")

    p_rep = sub.add_parser("reproduce", help="full train->test->analyze pipeline")
    _common_options(p_rep)
    p_rep.add_argument("--quick", action="store_true",
                       help="reduced-scale run (documented in README)")
    p_rep.add_argument("--periods", default="40",
                       help="switching periods to test, e.g. '20 40 80'")

    p_cfg = sub.add_parser("print-config", help="print every config key at its default")
    return parser


def cmd_train(args) -> int:
    config = load_config(args.config, _overrides(args))
    out = Path(config.out_dir)
    run_train(config, out)
    print(f"trained {len(config.train.seeds)} seed(s) into {out}")
    return 0


def cmd_test(args) -> int:
    config = load_config(args.config, _overrides(args))
    out = Path(config.out_dir)
    ckpt_dir = Path(args.logs) if args.logs else out
    learn = False if args.freeze_learning else None
    run_test(config, out, ckpt_dir=ckpt_dir, period=args.period, learn=learn)
    period = args.period or config.schedule.period
    print(f"test runs (P={period}) for {len(config.train.seeds)} seed(s) into {out}")
    return 0


def cmd_analyze(args) -> int:
    config = load_config(args.config, _overrides(args))
    out = Path(config.out_dir)
    log_dir = Path(args.logs) if args.logs else out
    plots = False if args.no_plots else None
    run_analysis(config, log_dir, out, period=args.period, plots=plots)
    print(f"analysis artifacts written to {out}")
    return 0


def _determinism_spot_check(config, out_dir) -> CheckResult:
    """Rerun the first seed's test stage into a scratch dir and compare bytes."""
    import tempfile

    period = config.schedule.period
    seed = config.train.seeds[0]
    reference = Path(out_dir) / f"test_P{period}_seed{seed}.csv"
    with tempfile.TemporaryDirectory() as scratch:
        run_test(config, scratch, ckpt_dir=out_dir, period=period)
        replay = Path(scratch) / reference.name
        identical = sha256_file(reference) == sha256_file(replay)
    return CheckResult(
        "C9", "determinism (seed-0 test replay)",
        identical,
        "replayed test CSV is bit-identical" if identical
        else "replayed test CSV differs",
    )


def cmd_reproduce(args) -> int:
    overrides = _overrides(args)
    config = load_config(args.config, overrides)
    if args.quick:
        quick = {s: dict(kv) for s, kv in QUICK_OVERRIDES.items()}
        for section, kv in overrides.items():
            quick.setdefault(section, {}).update(kv)
        config = load_config(args.config, quick)
    periods = [int(p) for p in args.periods.replace(",", " ").split()]
    out = Path(config.out_dir)

    print(f"[1/3] training {len(config.train.seeds)} seed(s) "
          f"({config.train.total_steps} steps each)")
    run_train(config, out)
    results = {}
    for period in periods:
        print(f"[2/3] regime-switching test, P={period}")
        run_test(config, out, period=period)
        print(f"[3/3] analysis, P={period}")
        results[period] = run_analysis(config, out, period=period)

    main_period = periods[0]
    result = results[main_period]
    checks = [
        check_gradient_correctness(),
        check_stop_gradient_separation(),
        check_damping_algebra(),
        check_zone_preference(result.occupancy),
        check_directional_hysteresis(result),
        check_entropy_contrast(result),
        check_quantile_oracle(),
        check_schedule_arithmetic(),
        _determinism_spot_check(config, out),
    ]
    print("\nacceptance checks:")
    for check in checks:
        print("  " + check.line())
    failed = [c.ident for c in checks if not c.passed]
    if failed:
        print(f"\n{len(failed)} check(s) failed: {', '.join(failed)}")
    else:
        print("\nall checks passed")
    print(f"artifacts in {out}")
    return 0


def cmd_print_config(_args) -> int:
    print(default_config_text(), end="")
    return 0


COMMANDS = {
    "train": cmd_train,
    "test": cmd_test,
    "analyze": cmd_analyze,
    "reproduce": cmd_reproduce,
    "print-config": cmd_print_config,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, QueryError, AnalysisError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"numeric abort: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
