"""Command-line entry point ``beamsim``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .constellation import qam
from .diversity import render_table_one, table_one, table_one_csv
from .precoder import design_phi1, design_phi2, design_phi3, save_precoder
from .simulator import (
    ConfigError,
    InsufficientDataError,
    estimate_slope,
    load_config,
    load_results,
    run_ber_sweep,
)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_path=Path(args.out))
    if cfg.output_path is None:
        cfg = replace(cfg, output_path=Path(args.config).with_suffix(".csv"))
    curve = run_ber_sweep(cfg, workers=args.workers)
    print(f"# {cfg.scheme.scheme} {cfg.scheme.m_rx}x{cfg.scheme.n_tx}, "
          f"{cfg.scheme.bits_per_use} bits/use -> {cfg.output_path}")
    print("snr_db  bit_errors        bits         ber    trials")
    for p in curve.points:
        print(f"{p.snr_db:6.2f} {p.bit_errors:11d} {p.bits:11d} {p.ber:11.3e} {p.trials:9d}")
    return 0


def _cmd_table1(args) -> int:
    rows = table_one(4, 4, 4)
    sys.stdout.write(table_one_csv(rows) if args.csv else render_table_one(rows))
    return 0


def _cmd_design(args) -> int:
    c = qam(args.qam)
    if args.criterion == "phi1":
        p = design_phi1(args.streams, c, starts=args.starts, seed=args.seed or 0)
    elif args.criterion == "phi2":
        p = design_phi2(args.streams, c)
    else:
        p = design_phi3(args.streams, c)
    save_precoder(p, args.out)
    print(f"{args.criterion}: S={p.s}, objective={p.objective:.6g} -> {args.out}")
    return 0


def _cmd_slope(args) -> int:
    curve = load_results(args.input)
    window = None
    if args.window:
        try:
            lo, hi = (float(x) for x in args.window.split(","))
        except ValueError:
            raise ConfigError("--window expects 'lo,hi' in dB") from None
        window = (lo, hi)
    print(f"{estimate_slope(curve, window=window):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="beamsim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--workers", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a BER sweep from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="results CSV (overrides output_path)")
    run.set_defaults(func=_cmd_run)

    t1 = sub.add_parser("table1", help="diversity orders of 4x4, S=4 partial precoding")
    t1.add_argument("--csv", action="store_true")
    t1.set_defaults(func=_cmd_table1)

    de = sub.add_parser("design", help="design a full precoder and save it as JSON")
    de.add_argument("--criterion", choices=("phi1", "phi2", "phi3"), required=True)
    de.add_argument("--streams", type=int, required=True)
    de.add_argument("--qam", type=int, default=2, help="bits per QAM symbol")
    de.add_argument("--starts", type=int, default=64, help="phi1 multi-starts")
    de.add_argument("--out", required=True)
    de.set_defaults(func=_cmd_design)

    sl = sub.add_parser("slope", help="diversity estimate from a results CSV")
    sl.add_argument("--input", required=True)
    sl.add_argument("--window", default=None, help="lo,hi in dB")
    sl.set_defaults(func=_cmd_slope)
    return ap


def main(argv=None) -> int:
    # Global options are accepted before or after the subcommand.
    argv = list(sys.argv[1:] if argv is None else argv)
    hoisted = []
    for flag in ("--workers", "--seed"):
        while flag in argv[1:]:
            i = argv.index(flag, 1)
            if argv[0] == flag:
                break
            hoisted += argv[i:i + 2]
            del argv[i:i + 2]
    args = build_parser().parse_args(hoisted + argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, InsufficientDataError, ValueError) as exc:
        print(f"beamsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
