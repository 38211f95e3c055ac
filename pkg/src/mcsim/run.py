"""Run orchestration: single runs, factorial sweeps, calibration."""

import itertools
import multiprocessing
import sys

from . import addressing, metrics, workload
from .config import RunConfig, config_hash, copy_config, validate
from .engine import make_engine

AXIS_ORDER = ("scheduler", "page_policy", "channels", "mapping")


def simulate(cfg: RunConfig, record_commands=False, record_events=False,
             max_cycles=0, backend=""):
    """Run one configuration to completion and collect its metrics."""
    validate(cfg)
    streams = None
    if cfg.workload.kind == "trace":
        streams = workload.load_trace(
            cfg.workload.trace_path, cfg.workload.trace_format,
            cfg.workload.cores, addressing.total_capacity_bytes(cfg.geometry),
        )
    eng = make_engine(cfg, trace_streams=streams,
                      record_commands=record_commands,
                      record_events=record_events, max_cycles=max_cycles,
                      backend=backend)
    eng.run()
    result = metrics.RunResult(cfg, eng)
    result.commands = eng.cmd_log
    result.events = eng.event_log
    return result


def run_rows(cfg: RunConfig, record_events=False, backend=""):
    """Single-run CSV rows (aggregate + per channel) and the result."""
    result = simulate(cfg, record_events=record_events, backend=backend)
    return result.rows(), result


def apply_axis(cfg: RunConfig, axis: str, value) -> None:
    if axis == "scheduler":
        cfg.scheduler.name = value
    elif axis == "page_policy":
        cfg.page_policy.name = value
    elif axis == "channels":
        cfg.geometry.channels = int(value)
    elif axis == "mapping":
        cfg.mapping = value
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")


def _sweep_cell(args):
    index, cfg, backend = args
    try:
        result = simulate(cfg, backend=backend)
        return index, result.rows(aggregate_only=True), None
    except Exception as exc:  # noqa: BLE001 - cell isolation is the point
        return index, [], f"{cfg.cell_name()}: {exc}"


def sweep(base_cfg: RunConfig, axes: dict, baseline: str = "", jobs: int = 1,
          backend: str = ""):
    """Cartesian sweep over the given axes.

    Returns (rows, failures).  Rows carry normalized columns relative to
    the baseline cell when one is given; cells are executed isolated from
    each other, and results do not depend on `jobs`.
    """
    names = [a for a in AXIS_ORDER if a in axes]
    for a in axes:
        if a not in AXIS_ORDER:
            raise ValueError(f"unknown sweep axis {a!r}")
    combos = list(itertools.product(*(axes[a] for a in names))) if names else [()]
    cells = []
    for i, combo in enumerate(combos):
        cfg = copy_config(base_cfg)
        for a, v in zip(names, combo):
            apply_axis(cfg, a, v)
        validate(cfg)
        cells.append((i, cfg, backend))

    if jobs > 1 and len(cells) > 1:
        with multiprocessing.Pool(processes=jobs) as pool:
            outcomes = pool.map(_sweep_cell, cells)
    else:
        outcomes = [_sweep_cell(c) for c in cells]
    outcomes.sort(key=lambda x: x[0])

    rows = []
    failures = []
    for index, cell_rows, error in outcomes:
        if error is not None:
            failures.append(error)
            stub = dict.fromkeys(metrics.CSV_HEADER, None)
            cfg = cells[index][1]
            stub.update({
                "cell": cfg.cell_name(),
                "workload": cfg.workload.name,
                "scheduler": cfg.scheduler.name,
                "page_policy": cfg.page_policy.name,
                "channels": cfg.geometry.channels,
                "mapping": cfg.mapping,
                "seed": cfg.run.seed,
                "config_hash": config_hash(cfg),
                "channel": "all",
            })
            rows.append(stub)
        else:
            rows.extend(cell_rows)
    if baseline:
        metrics.add_normalized_columns(rows, baseline)
    return rows, failures


def calibrate(base_cfg: RunConfig, target: float, tolerance: float = 0.02,
              probe_requests: int = 30000):
    return workload.calibrate_row_locality(
        base_cfg, target, tolerance=tolerance, probe_requests=probe_requests)


def print_failures(failures, out=sys.stderr):
    for f in failures:
        print(f"sweep cell failed: {f}", file=out)
