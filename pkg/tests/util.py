"""Shared helpers for behavior tests: coordinate-addressed traces and
event-log digests.

Behavior traces run with cpu_mhz == mem_mhz, so a record with gap g issues
at cycle (sum of gaps so far) - 1; spacing between a core's requests equals
the gap when nothing blocks.
"""

from mcsim import addressing
from mcsim.engine import ACTIVATE, PRECHARGE, READ, WRITE, make_engine


def addr_of(cfg, ch=0, rank=0, bank=0, row=0, col=0):
    return addressing.encode(
        addressing.DramCoordinates(ch, rank, bank, row, col), cfg.mapping, cfg.geometry)


def behavior_cfg(make_cfg, cores=1, **kw):
    kw.setdefault("cpu__cpu_mhz", 800)   # 1 instruction per memory cycle
    kw.setdefault("cpu__mem_mhz", 800)
    kw.setdefault("cpu__max_outstanding_reads", 64)
    kw.setdefault("cpu__write_buffer_credits", 64)
    kw.setdefault("workload__cores", cores)
    kw.setdefault("workload__kind", "trace")
    kw.setdefault("workload__trace_path", "inline")
    kw.setdefault("run__warmup_requests", 0)
    kw.setdefault("run__measured_requests", 10**9)
    cfg = make_cfg(**kw)
    return cfg


def run_trace(cfg, streams, record_events=True, record_commands=True,
              max_cycles=2_000_000, backend=""):
    eng = make_engine(cfg, trace_streams=streams, record_events=record_events,
                      record_commands=record_commands, max_cycles=max_cycles,
                      backend=backend)
    eng.run()
    return eng


def retire_order(eng):
    return [ev[2] for ev in eng.event_log if ev[0] == "RET"]


def read_latencies(eng):
    return {ev[2]: ev[1] - ev[3] for ev in eng.event_log
            if ev[0] == "RET" and ev[4] == 0}


def commands_of_kind(eng, kind):
    return [c for c in eng.cmd_log if c[1] == kind]


def classify_requests(eng):
    """rid -> 'hit' | 'miss' | 'conflict' from each request's first command."""
    first = {}
    for ev in eng.event_log:
        if ev[0] == "CMD" and ev[8] >= 0 and ev[8] not in first:
            first[ev[8]] = ev[3]
    names = {READ: "hit", WRITE: "hit", ACTIVATE: "miss", PRECHARGE: "conflict"}
    return {rid: names[kind] for rid, kind in first.items()}
