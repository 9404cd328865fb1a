"""Command-line front end.

Subcommands: ``ber`` (single Monte Carlo point), ``sweep`` (parameter sweep),
``track`` (blind tracking experiment), ``validate`` (numerical cross-check
suite), ``config-print`` (effective configuration with defaults filled in).

Exit codes: 0 success, 2 configuration error, 3 validation failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import pathlib
import sys

from . import sim
from .config import (ConfigError, ExperimentConfig, SWEEP_AXES, config_to_text,
                     load_config)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="FILE", help="configuration file")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--frames", type=int, help="Monte Carlo frames per point")
    p.add_argument("--out", metavar="DIR", default=".",
                   help="output directory (default: current directory)")
    p.add_argument("--workers", type=int, help="worker threads")
    p.add_argument("--schemes", help="comma-separated scheme list")
    p.add_argument("--tx-power-db", type=float, metavar="DB",
                   help="transmit power on the configured dB scale (default dBm)")
    p.add_argument("--na", type=int, help="array side (na x na detectors)")
    p.add_argument("--window-l", type=int, help="observation window length")
    p.add_argument("--aoa-jitter-mrad", type=float,
                   help="arrival-angle jitter, both axes (mrad)")
    p.add_argument("--no-turbulence", action="store_true",
                   help="disable turbulence fading")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fsolink",
                                 description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, doc in [("ber", "run one Monte Carlo BER point"),
                      ("sweep", "run a parameter sweep"),
                      ("track", "run a blind-tracking experiment"),
                      ("validate", "run the numerical validation suite"),
                      ("config-print", "print the effective configuration")]:
        p = sub.add_parser(name, help=doc)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--axis", choices=SWEEP_AXES, help="sweep axis")
            p.add_argument("--values", help="comma-separated axis values")
    return ap


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.frames is not None:
        cfg = dataclasses.replace(cfg, n_frames=args.frames)
    if args.workers is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    if args.schemes is not None:
        schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
        cfg = dataclasses.replace(cfg, schemes=schemes)
    if args.tx_power_db is not None:
        elec = dataclasses.replace(
            cfg.electronics, tx_power_Pt=cfg.tx_power_from_db(args.tx_power_db))
        cfg = dataclasses.replace(cfg, electronics=elec)
    if args.na is not None:
        cfg = dataclasses.replace(
            cfg, array=dataclasses.replace(cfg.array, na=args.na))
    if args.window_l is not None:
        cfg = dataclasses.replace(
            cfg, glrt=dataclasses.replace(cfg.glrt, window_L=args.window_l))
    if args.aoa_jitter_mrad is not None:
        arr = dataclasses.replace(cfg.array,
                                  aoa_jitter_sigma_x=args.aoa_jitter_mrad * 1e-3,
                                  aoa_jitter_sigma_y=args.aoa_jitter_mrad * 1e-3)
        cfg = dataclasses.replace(cfg, array=arr)
    if args.no_turbulence:
        cfg = dataclasses.replace(cfg, turbulence_enabled=False)
    if getattr(args, "axis", None) is not None:
        cfg = dataclasses.replace(cfg, sweep_axis=args.axis)
    if getattr(args, "values", None) is not None:
        values = tuple(float(v) for v in args.values.split(",") if v.strip())
        cfg = dataclasses.replace(cfg, sweep_values=values)
    return cfg


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return _apply_overrides(cfg, args)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        out_dir = pathlib.Path(args.out)

        if args.command == "config-print":
            print(config_to_text(cfg), end="")
            return 0

        if args.command == "ber":
            results = sim.run_point(cfg)
            sim.write_results(out_dir, cfg, results)
            for r in results:
                print(f"{r.scheme}: ber={r.ber:.6g} "
                      f"[{r.ci95_lo:.3g}, {r.ci95_hi:.3g}] "
                      f"({r.bit_errors:g}/{r.bits_total} bits)")
            return 0

        if args.command == "sweep":
            results = sim.run_sweep(cfg)
            sim.write_results(out_dir, cfg, results)
            for r in results:
                print(f"{r.axis}={r.axis_value:g} {r.scheme}: "
                      f"ber={r.ber:.6g} [{r.ci95_lo:.3g}, {r.ci95_hi:.3g}]")
            return 0

        if args.command == "track":
            report = sim.run_track(cfg)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "track.json").write_text(
                json.dumps(report, indent=2) + "\n")
            s = report["summary"]
            rate = s["correct_cell_rate"]
            print(f"frames={s['frames']} eligible={s['eligible_frames']} "
                  f"correct_cell_rate="
                  f"{rate if rate is None else f'{rate:.4f}'}")
            return 0

        if args.command == "validate":
            report = sim.validate_analytics(cfg)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "validate.json").write_text(
                json.dumps(report, indent=2) + "\n")
            for c in report["checks"]:
                tag = "PASS" if c["passed"] else (
                    "INFO" if c.get("informational") else "FAIL")
                print(f"[{tag}] {c['name']}")
            print("overall:", "PASS" if report["passed"] else "FAIL")
            return 0 if report["passed"] else 3

        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
