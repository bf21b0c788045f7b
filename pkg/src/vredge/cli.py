"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .scenario import ConfigError, load_config
from .traffic import (CollisionModel, collision_probability_closed_form,
                      collision_probability_mc)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parse_flow_counts(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vredge",
        description="Simulate bursty cloud-VR flows over a 5G TDD bottleneck")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario")
    run_p.add_argument("--config", required=True,
                       help="scenario JSON path, or the name 'paper-default'")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")

    sweep_p = sub.add_parser("sweep", help="sweep flow counts x CC algorithms")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--flows", required=True,
                         help="counts, e.g. 2..7 or 2,4,6")
    sweep_p.add_argument("--cc", required=True,
                         help="comma list from cecc,cubic,bbr,udp")
    sweep_p.add_argument("--out", required=True)

    analyze_p = sub.add_parser("analyze", help="analysis utilities")
    analyze_sub = analyze_p.add_subparsers(dest="analysis", required=True)
    col_p = analyze_sub.add_parser(
        "collisions", help="burst collision probability: closed form vs Monte Carlo")
    col_p.add_argument("--n", type=int, required=True, help="number of flows")
    col_p.add_argument("--sigma-us", type=float, required=True)
    col_p.add_argument("--horizon", type=int, required=True,
                       help="bursts accumulated before the check")
    col_p.add_argument("--trials", type=int, default=1_000_000)
    col_p.add_argument("--mu-us", type=float, default=16_667.0)
    col_p.add_argument("--window-us", type=float, default=1000.0)
    col_p.add_argument("--seed", type=int, default=1)
    col_p.add_argument("--out", default=None, help="CSV path (default stdout)")

    plot_p = sub.add_parser("plot", help="render a metrics CSV as SVG")
    plot_p.add_argument("--kind", required=True, choices=["box", "bars", "cdf"])
    plot_p.add_argument("--in", dest="csv_in", required=True)
    plot_p.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    from .simulation import run_scenario

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    report = run_scenario(cfg, Path(args.out))
    s = report["summary"]
    print(f"run complete: digest={report['digest'][:12]} "
          f"satisfaction={s['satisfaction_rate']:.3f} "
          f"max_bin_bytes={s['max_bin_bytes']}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .simulation import run_sweep

    cfg = load_config(args.config)
    counts = _parse_flow_counts(args.flows)
    ccs = [c.strip() for c in args.cc.split(",") if c.strip()]
    if not counts:
        raise ConfigError("flows: empty sweep range")
    if not ccs:
        raise ConfigError("cc: empty algorithm list")
    rows = run_sweep(cfg, counts, ccs, Path(args.out))
    for row in rows:
        if "error" in row:
            print(f"{row['cc']},{row['flows']}: FAILED ({row['error']})")
        else:
            print(f"{row['cc']},{row['flows']}: "
                  f"satisfaction={row['satisfaction_rate']:.3f}")
    return EXIT_OK


def _cmd_collisions(args) -> int:
    closed = ""
    if args.n == 2:
        closed = f"{collision_probability_closed_form(args.sigma_us, args.horizon, args.window_us):.6f}"
    model = CollisionModel(args.n, args.mu_us, args.sigma_us, args.horizon,
                           args.window_us)
    est, err = collision_probability_mc(model, args.trials, args.seed)
    header = "n_flows,sigma_us,horizon_frames,closed_form,mc_estimate,mc_stderr"
    line = (f"{args.n},{args.sigma_us:g},{args.horizon},{closed},"
            f"{est:.6f},{err:.6f}")
    if args.out:
        Path(args.out).write_text(header + "\n" + line + "\n", encoding="utf-8")
    else:
        print(header)
        print(line)
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .plotting import plot

    plot(Path(args.csv_in), args.kind, Path(args.out))
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "analyze" and args.analysis == "collisions":
            return _cmd_collisions(args)
        if args.command == "plot":
            return _cmd_plot(args)
        parser.error(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
