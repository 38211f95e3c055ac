"""Measurement reporting: per-channel and aggregate metrics, the CSV
contract, event-log serialization and an independent replay accumulator.

The CSV header below is the interface consumed by the plotting frontend;
treat it as stable.  Undefined ratios (no accesses, no retirements) are
emitted as empty cells rather than zeros.
"""

from . import config as configmod
from .engine import ACTIVATE, PRECHARGE, READ, WRITE

CSV_HEADER = [
    "cell", "workload", "scheduler", "page_policy", "channels", "mapping",
    "seed", "config_hash", "channel",
    "elapsed_mem_cycles", "served_reads", "served_writes",
    "row_hits", "row_misses", "row_conflicts", "column_accesses", "hit_rate",
    "activations", "single_access_fraction",
    "avg_read_latency_cycles", "avg_read_latency_cpu_cycles", "avg_read_latency_ns",
    "avg_write_posted_latency_cycles", "avg_write_drained_latency_cycles",
    "avg_read_queue_len", "avg_write_queue_len",
    "bus_busy_cycles", "bandwidth_utilization", "bandwidth_gibps",
    "user_instructions", "user_ipc", "min_core_ipc", "max_core_ipc",
    "ipc_fairness", "max_read_wait_cycles",
    "norm_user_ipc", "norm_hit_rate", "norm_avg_read_latency",
    "norm_bandwidth_utilization", "norm_avg_read_queue_len",
    "norm_avg_write_queue_len", "norm_single_access_fraction",
]

NORM_SOURCES = {
    "norm_user_ipc": "user_ipc",
    "norm_hit_rate": "hit_rate",
    "norm_avg_read_latency": "avg_read_latency_cycles",
    "norm_bandwidth_utilization": "bandwidth_utilization",
    "norm_avg_read_queue_len": "avg_read_queue_len",
    "norm_avg_write_queue_len": "avg_write_queue_len",
    "norm_single_access_fraction": "single_access_fraction",
}


def _ratio(num, den):
    return num / den if den else None


class RunResult:
    """Finished-run metrics; built from an Engine after run()."""

    def __init__(self, cfg, eng):
        self.cfg = cfg
        self.elapsed = eng.elapsed_cycles
        self.channels = []
        for chan in eng.channels:
            self.channels.append({
                "hits": chan.n_hits,
                "misses": chan.n_misses,
                "conflicts": chan.n_conflicts,
                "activations": chan.n_activations,
                "hist": dict(chan.hist),
                "read_lat_sum": chan.read_lat_sum,
                "read_count": chan.read_count,
                "write_posted_sum": chan.write_posted_sum,
                "write_posted_count": chan.write_posted_count,
                "write_drained_sum": chan.write_drained_sum,
                "write_drained_count": chan.write_drained_count,
                "rq_integral": chan.rq_integral,
                "wq_integral": chan.wq_integral,
                "bus_busy_cycles": chan.bus_busy_cycles,
                "bytes": chan.bytes_transferred,
                "max_read_wait": chan.max_read_wait,
                "max_wait": chan.max_wait,
                "served_reads": chan.served_reads,
                "served_writes": chan.served_writes,
            })
        num, den = cfg.cpu.insts_per_mem_cycle()
        self._cpu_per_mem = num / den
        self.instructions = [eng.instructions_in_window(i) for i in range(cfg.workload.cores)]
        self.atlas_rank_changes = list(eng.atlas_rank_changes)

    # -- aggregate helpers ------------------------------------------------

    def _sum(self, key):
        return sum(c[key] for c in self.channels)

    def column_accesses(self):
        return self._sum("hits") + self._sum("misses") + self._sum("conflicts")

    def hit_rate(self):
        return _ratio(self._sum("hits"), self.column_accesses())

    def hist_total(self):
        return sum(n for c in self.channels for n in c["hist"].values())

    def single_access_fraction(self):
        ones = sum(c["hist"].get(1, 0) for c in self.channels)
        return _ratio(ones, self.hist_total())

    def avg_read_latency(self):
        return _ratio(self._sum("read_lat_sum"), self._sum("read_count"))

    def avg_read_queue_len(self):
        return _ratio(self._sum("rq_integral"), len(self.channels) * self.elapsed)

    def avg_write_queue_len(self):
        return _ratio(self._sum("wq_integral"), len(self.channels) * self.elapsed)

    def bandwidth_utilization(self):
        return _ratio(self._sum("bus_busy_cycles"), len(self.channels) * self.elapsed)

    def per_core_ipc(self):
        if not self.elapsed:
            return [None] * len(self.instructions)
        cpu_cycles = self.elapsed * self._cpu_per_mem
        return [insts / cpu_cycles for insts in self.instructions]

    def user_ipc(self):
        if not self.elapsed:
            return None
        return sum(self.instructions) / (self.elapsed * self._cpu_per_mem)

    def ipc_fairness(self):
        ipcs = [x for x in self.per_core_ipc() if x is not None]
        if not ipcs or max(ipcs) == 0:
            return None
        return min(ipcs) / max(ipcs)

    # -- row building -------------------------------------------------------

    def _channel_row(self, idx):
        c = self.channels[idx]
        accesses = c["hits"] + c["misses"] + c["conflicts"]
        ones = c["hist"].get(1, 0)
        hist_total = sum(c["hist"].values())
        return {
            "channel": str(idx),
            "elapsed_mem_cycles": self.elapsed,
            "served_reads": c["served_reads"],
            "served_writes": c["served_writes"],
            "row_hits": c["hits"],
            "row_misses": c["misses"],
            "row_conflicts": c["conflicts"],
            "column_accesses": accesses,
            "hit_rate": _ratio(c["hits"], accesses),
            "activations": c["activations"],
            "single_access_fraction": _ratio(ones, hist_total),
            "avg_read_latency_cycles": _ratio(c["read_lat_sum"], c["read_count"]),
            "avg_write_posted_latency_cycles": _ratio(c["write_posted_sum"], c["write_posted_count"]),
            "avg_write_drained_latency_cycles": _ratio(c["write_drained_sum"], c["write_drained_count"]),
            "avg_read_queue_len": _ratio(c["rq_integral"], self.elapsed),
            "avg_write_queue_len": _ratio(c["wq_integral"], self.elapsed),
            "bus_busy_cycles": c["bus_busy_cycles"],
            "bandwidth_utilization": _ratio(c["bus_busy_cycles"], self.elapsed),
            "bandwidth_gibps": self._gibps(c["bytes"]),
            "max_read_wait_cycles": c["max_read_wait"],
        }

    def _gibps(self, nbytes):
        if not self.elapsed:
            return None
        seconds = self.elapsed / (self.cfg.cpu.mem_mhz * 1e6)
        return nbytes / seconds / 2**30

    def aggregate_row(self):
        accesses = self.column_accesses()
        ipc = self.user_ipc()
        ipcs = [x for x in self.per_core_ipc() if x is not None]
        return {
            "channel": "all",
            "elapsed_mem_cycles": self.elapsed,
            "served_reads": self._sum("served_reads"),
            "served_writes": self._sum("served_writes"),
            "row_hits": self._sum("hits"),
            "row_misses": self._sum("misses"),
            "row_conflicts": self._sum("conflicts"),
            "column_accesses": accesses,
            "hit_rate": self.hit_rate(),
            "activations": self._sum("activations"),
            "single_access_fraction": self.single_access_fraction(),
            "avg_read_latency_cycles": self.avg_read_latency(),
            "avg_write_posted_latency_cycles": _ratio(self._sum("write_posted_sum"), self._sum("write_posted_count")),
            "avg_write_drained_latency_cycles": _ratio(self._sum("write_drained_sum"), self._sum("write_drained_count")),
            "avg_read_queue_len": self.avg_read_queue_len(),
            "avg_write_queue_len": self.avg_write_queue_len(),
            "bus_busy_cycles": self._sum("bus_busy_cycles"),
            "bandwidth_utilization": self.bandwidth_utilization(),
            "bandwidth_gibps": self._gibps(self._sum("bytes")),
            "user_instructions": sum(self.instructions),
            "user_ipc": ipc,
            "min_core_ipc": min(ipcs) if ipcs else None,
            "max_core_ipc": max(ipcs) if ipcs else None,
            "ipc_fairness": self.ipc_fairness(),
            "max_read_wait_cycles": max((c["max_read_wait"] for c in self.channels), default=0),
        }

    def rows(self, aggregate_only=False):
        """CSV-ready rows: one per channel plus the aggregate."""
        cfg = self.cfg
        base = {
            "cell": cfg.cell_name(),
            "workload": cfg.workload.name,
            "scheduler": cfg.scheduler.name,
            "page_policy": cfg.page_policy.name,
            "channels": cfg.geometry.channels,
            "mapping": cfg.mapping,
            "seed": cfg.run.seed,
            "config_hash": configmod.config_hash(cfg),
        }
        ratio = self._cpu_per_mem
        ns_per_cycle = 1e3 / self.cfg.cpu.mem_mhz
        out = []
        rows = [self.aggregate_row()]
        if not aggregate_only:
            rows += [self._channel_row(i) for i in range(len(self.channels))]
        for r in rows:
            row = dict.fromkeys(CSV_HEADER, None)
            row.update(base)
            row.update(r)
            lat = row.get("avg_read_latency_cycles")
            if lat is not None:
                row["avg_read_latency_cpu_cycles"] = lat * ratio
                row["avg_read_latency_ns"] = lat * ns_per_cycle
            out.append(row)
        return out


def format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_csv(fh, rows):
    fh.write(",".join(CSV_HEADER) + "\n")
    for row in rows:
        fh.write(",".join(format_cell(row.get(k)) for k in CSV_HEADER) + "\n")


def csv_text(rows):
    import io

    buf = io.StringIO()
    write_csv(buf, rows)
    return buf.getvalue()


def add_normalized_columns(rows, baseline_cell):
    """Fill norm_* columns in place relative to the named baseline row."""
    base = None
    for row in rows:
        if row["cell"] == baseline_cell:
            base = row
            break
    if base is None:
        raise ValueError(f"baseline cell {baseline_cell!r} not found in results")
    for row in rows:
        for norm_key, src in NORM_SOURCES.items():
            b = base.get(src)
            v = row.get(src)
            row[norm_key] = v / b if (b not in (None, 0) and v is not None) else None
    return rows


# ----------------------------------------------------------------------
# Event log serialization.

def write_event_log(fh, events):
    for ev in events:
        fh.write(" ".join(str(x) for x in ev) + "\n")


def parse_event_log(fh):
    out = []
    for line in fh:
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "WIN":
            out.append((tag, int(parts[1]), parts[2]))
        else:
            out.append(tuple([tag] + [int(x) for x in parts[1:]]))
    return out


# ----------------------------------------------------------------------
# Independent replay accumulator: recomputes the memory-side metrics of a
# run purely from its event log (queue residency by brute force).

def replay_metrics(events, cfg):
    nch = cfg.geometry.channels
    win_start = win_end = None
    # Pass 1: window bounds and per-request lifecycles.
    first_cmd = {}
    enq = {}      # rid -> (cycle, ch, is_write, created)
    col = {}      # rid -> (cycle, ch)
    ret = {}      # rid -> (cycle, created, is_write)
    open_events = []
    window_open = False
    counted_cols = []   # (cycle, ch, rid) column accesses inside the window
    counted_pres = []   # (ch, acc_count) precharges inside the window
    counted_rets = []
    counted_enqs = []
    bank_acc = {}
    bank_row = {}
    for ev in events:
        tag = ev[0]
        if tag == "WIN":
            if ev[2] == "start":
                win_start = ev[1]
                window_open = True
            else:
                win_end = ev[1]
                window_open = False
        elif tag == "ENQ":
            _, cycle, ch, rid, core, is_write, addr, created = ev
            enq[rid] = (cycle, ch, is_write, created)
            if window_open and is_write:
                counted_enqs.append((cycle, created))
        elif tag == "CMD":
            _, cycle, ch, kind, rank, bank, row, colno, rid = ev
            key = (ch, rank, bank)
            if rid >= 0 and rid not in first_cmd:
                first_cmd[rid] = kind
            if kind == ACTIVATE:
                bank_acc[key] = 0
                bank_row[key] = row
            elif kind == PRECHARGE:
                if window_open:
                    counted_pres.append((ch, bank_acc.get(key, 0)))
                bank_acc[key] = 0
                bank_row.pop(key, None)
            else:
                bank_acc[key] = bank_acc.get(key, 0) + 1
                col[rid] = (cycle, ch)
                if window_open:
                    counted_cols.append((cycle, ch, rid))
        elif tag == "RET":
            _, cycle, rid, created, is_write, core, ch = ev
            ret[rid] = (cycle, created, is_write)
            if window_open:
                counted_rets.append((cycle, rid, created, is_write, ch))

    out = {
        "row_hits": 0, "row_misses": 0, "row_conflicts": 0,
        "bus_busy_cycles": 0, "column_accesses": 0,
        "read_lat_sum": 0, "read_count": 0,
        "write_drained_sum": 0, "write_drained_count": 0,
        "write_posted_sum": 0, "write_posted_count": 0,
        "hist": {},
        "rq_integral": 0, "wq_integral": 0,
        "elapsed": (win_end - win_start) if win_end is not None else 0,
    }
    burst = cfg.timing.burst_cycles
    for cycle, ch, rid in counted_cols:
        kind = first_cmd.get(rid)
        if kind in (READ, WRITE):
            out["row_hits"] += 1
        elif kind == ACTIVATE:
            out["row_misses"] += 1
        else:
            out["row_conflicts"] += 1
        out["column_accesses"] += 1
        out["bus_busy_cycles"] += burst
    for ch, acc in counted_pres:
        out["hist"][acc] = out["hist"].get(acc, 0) + 1
    for cycle, rid, created, is_write, ch in counted_rets:
        if is_write:
            out["write_drained_sum"] += cycle - created
            out["write_drained_count"] += 1
        else:
            out["read_lat_sum"] += cycle - created
            out["read_count"] += 1
    for cycle, created in counted_enqs:
        out["write_posted_sum"] += cycle - created
        out["write_posted_count"] += 1
    # Queue residency: a request occupies its queue from the end of its
    # enqueue cycle through the cycle before its column access issues.
    if win_start is not None and win_end is not None and win_end > win_start:
        lo, hi = win_start, win_end - 1  # integral covers cycles lo..hi
        for rid, (ecyc, ch, is_write, _created) in enq.items():
            ccyc = col.get(rid, (win_end, None))[0]
            a = max(ecyc, lo)
            b = min(ccyc - 1, hi)
            if b >= a:
                if is_write:
                    out["wq_integral"] += b - a + 1
                else:
                    out["rq_integral"] += b - a + 1
    return out
