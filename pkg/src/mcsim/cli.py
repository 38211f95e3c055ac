"""Command-line entry points: run, sweep, calibrate."""

import argparse
import sys

from . import metrics, run as runmod
from .config import ConfigError, RunConfig, apply_overrides, load_config, validate


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.run.seed = args.seed
    if getattr(args, "set", None):
        apply_overrides(cfg, args.set)
    validate(cfg)
    return cfg


def _add_common(p):
    p.add_argument("--config", help="INI run configuration (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override any config key (repeatable)")


def _write_rows(rows, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            metrics.write_csv(fh, rows)
    else:
        metrics.write_csv(sys.stdout, rows)


def cmd_run(args) -> int:
    cfg = _load(args)
    rows, result = runmod.run_rows(cfg, record_events=bool(args.event_log))
    _write_rows(rows, args.out)
    if args.event_log:
        with open(args.event_log, "w", encoding="utf-8", newline="\n") as fh:
            metrics.write_event_log(fh, result.events)
    return 0


def _parse_axes(items):
    axes = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(item, "axis must look like name=v1,v2,...")
        name, raw = item.split("=", 1)
        name = name.strip()
        values = [v.strip() for v in raw.split(",") if v.strip()]
        if not values:
            raise ConfigError(item, "axis needs at least one value")
        if name == "channels":
            values = [int(v) for v in values]
        axes[name] = values
    return axes


def cmd_sweep(args) -> int:
    cfg = _load(args)
    axes = _parse_axes(args.axis)
    rows, failures = runmod.sweep(cfg, axes, baseline=args.baseline or "",
                                  jobs=args.jobs)
    _write_rows(rows, args.out)
    runmod.print_failures(failures)
    return 0 if not failures else 1


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    locality, achieved = runmod.calibrate(
        cfg, args.target_single_access, tolerance=args.tolerance,
        probe_requests=args.probe_requests)
    print(f"row_locality={locality:.6f} achieved_single_access_fraction={achieved:.4f} "
          f"target={args.target_single_access:.4f}")
    if abs(achieved - args.target_single_access) > args.tolerance:
        print("warning: target not reached within tolerance; nearest point reported",
              file=sys.stderr)
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="mcsim",
        description="Cycle-level multi-channel DRAM memory controller simulator",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="execute one configuration and emit metrics CSV")
    _add_common(pr)
    pr.add_argument("--out", help="CSV output path (stdout when omitted)")
    pr.add_argument("--event-log", help="write the per-event log to this file")
    pr.set_defaults(func=cmd_run)

    ps = sub.add_parser("sweep", help="factorial sweep over scheduler/page_policy/channels/mapping")
    _add_common(ps)
    ps.add_argument("--axis", action="append", metavar="NAME=V1,V2,..",
                    help="sweep axis (repeatable); axes: scheduler, page_policy, channels, mapping")
    ps.add_argument("--baseline", help="cell name the norm_* columns divide by, "
                                       "e.g. fr_fcfs/open_adaptive/1/RoRaBaCoCh")
    ps.add_argument("--out", help="CSV output path (stdout when omitted)")
    ps.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    ps.set_defaults(func=cmd_sweep)

    pc = sub.add_parser("calibrate", help="find the synthetic row_locality for a "
                                          "target single-access activation fraction")
    _add_common(pc)
    pc.add_argument("--target-single-access", type=float, required=True)
    pc.add_argument("--tolerance", type=float, default=0.02)
    pc.add_argument("--probe-requests", type=int, default=30000)
    pc.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
