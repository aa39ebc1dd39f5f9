"""Command-line front end.

Subcommands:
  run      simulate a config file or preset and write metrics
  presets  list or export the stock scenarios
  report   tabulate summary.json files from one or more run directories
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import PROTOCOLS, ScenarioConfig, make_preset, preset_names
from .metrics import read_summary, write_metrics
from .simulator import Simulation


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="v2vsim",
        description="Slot-level vehicle-to-vehicle network simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="scenario JSON file")
    src.add_argument("--preset", choices=preset_names(),
                     help="stock scenario name")
    run.add_argument("--out", type=Path, required=True,
                     help="output directory for metric files")
    run.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    run.add_argument("--protocol", choices=PROTOCOLS, default=None,
                     help="override the config protocol")
    run.add_argument("--duration", type=float, default=None, metavar="S",
                     help="override the run length in seconds")
    run.add_argument("--quiet", action="store_true",
                     help="suppress the summary printout")

    pre = sub.add_parser("presets", help="list or export stock scenarios")
    pre.add_argument("--export", choices=preset_names(), default=None,
                     help="print one preset as JSON instead of listing")

    rep = sub.add_parser("report", help="compare finished runs")
    rep.add_argument("--in", dest="indirs", type=Path, nargs="+",
                     required=True, help="run directories with summary.json")
    return p


def _cmd_run(args) -> int:
    if args.config is not None:
        cfg = ScenarioConfig.load(args.config)
    else:
        cfg = make_preset(args.preset)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.protocol is not None:
        overrides["protocol"] = args.protocol
    if args.duration is not None:
        overrides["duration_s"] = args.duration
        if cfg.warmup_s > args.duration:
            overrides["warmup_s"] = 0.0
    if overrides:
        cfg = replace(cfg, **overrides)
    cfg.validate()
    metrics = Simulation(cfg).run()
    summary = write_metrics(metrics, args.out)
    if not args.quiet:
        print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_presets(args) -> int:
    if args.export is not None:
        print(make_preset(args.export).to_json())
        return 0
    for name in preset_names():
        cfg = make_preset(name)
        print(f"{name:20s} {len(cfg.vehicles):4d} vehicles, "
              f"{cfg.duration_s:6.1f} s, protocol {cfg.protocol}")
    return 0


_REPORT_COLS = (
    ("protocol", "proto", "{}"),
    ("name", "scenario", "{}"),
    ("seed", "seed", "{}"),
    ("links_counted", "links", "{}"),
    ("mean_pdr", "mean_pdr", "{:.4f}"),
    ("frac_links_meeting_target", "frac>=T-0.02", "{:.3f}"),
    ("pdr_variance", "pdr_var", "{:.5f}"),
    ("mean_delay_s", "delay_s", "{:.4f}"),
    ("mean_concurrency", "conc", "{:.2f}"),
    ("control_bytes_per_s", "ctrl_B/s", "{:.0f}"),
)


def _cmd_report(args) -> int:
    rows = []
    for d in args.indirs:
        try:
            rows.append(read_summary(d))
        except FileNotFoundError:
            print(f"error: no summary.json under {d}", file=sys.stderr)
            return 1
    cells = [[fmt.format(s.get(key, "")) for key, _, fmt in _REPORT_COLS]
             for s in rows]
    heads = [h for _, h, _ in _REPORT_COLS]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h)
              for i, h in enumerate(heads)]
    print("  ".join(h.ljust(w) for h, w in zip(heads, widths)))
    for c in cells:
        print("  ".join(v.ljust(w) for v, w in zip(c, widths)))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "presets":
            return _cmd_presets(args)
        return _cmd_report(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
