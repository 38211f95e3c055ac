"""Trace file handling and the synthetic-locality calibrator.

Trace text format: one record per line, ``core,kind,hex_address,gap`` where
kind is R or W and gap is the number of instructions the core retires
before issuing the request.  Lines starting with ``#`` are comments.  The
binary format packs the same fields little-endian as u16 core, u8 kind
(0=read, 1=write), u64 address, u32 gap.
"""

import struct

_REC = struct.Struct("<HBQI")


def load_trace(path, fmt: str, cores: int, capacity: int):
    """Read a trace into per-core record lists [(is_write, addr, gap), ...]."""
    streams = [[] for _ in range(cores)]

    def add(core, is_write, addr, gap, where):
        if core < 0 or core >= cores:
            raise ValueError(f"{where}: core {core} out of range (cores={cores})")
        if addr < 0 or addr >= capacity:
            raise ValueError(f"{where}: address {addr:#x} outside capacity {capacity:#x}")
        if gap < 0:
            raise ValueError(f"{where}: negative gap")
        streams[core].append((bool(is_write), addr, gap))

    if fmt == "text":
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = [p.strip() for p in line.split(",")]
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: expected core,kind,hex_address,gap")
                core = int(parts[0])
                kind = parts[1].upper()
                if kind not in ("R", "W"):
                    raise ValueError(f"{path}:{lineno}: kind must be R or W")
                addr = int(parts[2], 16)
                gap = int(parts[3])
                add(core, kind == "W", addr, gap, f"{path}:{lineno}")
    elif fmt == "bin":
        with open(path, "rb") as fh:
            data = fh.read()
        if len(data) % _REC.size:
            raise ValueError(f"{path}: truncated record at end of file")
        for i, (core, kind, addr, gap) in enumerate(_REC.iter_unpack(data)):
            add(core, kind, addr, gap, f"{path}:record {i}")
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    return streams


def write_trace_text(path, records):
    """records: iterable of (core, is_write, addr, gap)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# core,kind,hex_address,gap\n")
        for core, is_write, addr, gap in records:
            fh.write(f"{core},{'W' if is_write else 'R'},{addr:#x},{gap}\n")


def write_trace_bin(path, records):
    with open(path, "wb") as fh:
        for core, is_write, addr, gap in records:
            fh.write(_REC.pack(core, 1 if is_write else 0, addr, gap))


def calibrate_row_locality(base_cfg, target: float, tolerance: float = 0.02,
                           probe_requests: int = 30000, max_iters: int = 18):
    """Search the synthetic row_locality that hits a target single-access
    activation fraction.

    Runs fixed-seed probes under FR-FCFS with the open-adaptive policy and
    bisects on row_locality (the measured fraction falls as locality
    rises).  Returns (row_locality, achieved_fraction); when the target is
    out of reach the nearest achieved point is returned.
    """
    from . import run as runmod
    from .config import copy_config

    if not 0.0 < target < 1.0:
        raise ValueError("target single-access fraction must be in (0,1)")

    def probe(locality):
        cfg = copy_config(base_cfg)
        cfg.scheduler.name = "fr_fcfs"
        cfg.page_policy.name = "open_adaptive"
        cfg.workload.kind = "synthetic"
        cfg.workload.row_locality = locality
        cfg.run.warmup_requests = min(base_cfg.run.warmup_requests, 2000)
        cfg.run.measured_requests = probe_requests
        cfg.run.measured_cycles = 0
        result = runmod.simulate(cfg)
        return result.single_access_fraction()

    lo, hi = 0.0, 1.0
    best = (None, 2.0)  # (locality, |error|)
    best_frac = None
    for _ in range(max_iters):
        mid = (lo + hi) / 2.0
        frac = probe(mid)
        err = abs(frac - target)
        if err < best[1]:
            best = (mid, err)
            best_frac = frac
        if err <= tolerance:
            break
        if frac > target:
            lo = mid  # too many single-access activations: raise locality
        else:
            hi = mid
    return best[0], best_frac
