"""Run configuration: dataclasses, INI file loading, validation, overrides.

A run is fully described by one INI file (see ``configs/baseline.ini``).
CLI flags override file keys via ``section.key=value`` strings.  The
resolved configuration has a stable canonical text form whose hash is
embedded in every result row.
"""

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from math import gcd
from pathlib import Path

from . import addressing

SCHEDULERS = ("fcfs", "fcfs_banks", "fr_fcfs", "par_bs", "atlas", "rl")
PAGE_POLICIES = ("open", "close", "open_adaptive", "close_adaptive", "abpp", "rbpp")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass
class DramGeometry:
    channels: int = 1
    ranks_per_channel: int = 2
    banks_per_rank: int = 8
    rows_per_bank: int = 65536
    row_buffer_bytes: int = 8192
    cache_block_bytes: int = 64
    data_bus_bytes_per_cycle: int = 16

    @property
    def banks_per_channel(self) -> int:
        return self.ranks_per_channel * self.banks_per_rank

    @property
    def blocks_per_row(self) -> int:
        return self.row_buffer_bytes // self.cache_block_bytes


@dataclass
class TimingParams:
    # DDR3-1600 class timings, in memory-bus clock cycles.
    tCAS: int = 11
    tRCD: int = 11
    tRP: int = 11
    tRAS: int = 28
    tRC: int = 39
    tWR: int = 12
    tWTR: int = 6
    tRTP: int = 6
    tRRD: int = 5
    tFAW: int = 24
    burst_cycles: int = 4
    bus_turnaround_cycles: int = 2


@dataclass
class ControllerParams:
    read_queue_capacity: int = 64
    write_queue_capacity: int = 64
    write_drain_high: int = 32
    write_drain_low: int = 16


@dataclass
class SchedulerParams:
    name: str = "fr_fcfs"
    # PAR-BS
    batching_cap: int = 5
    parbs_cap_per_core_bank: bool = True
    # ATLAS
    quantum_cycles: int = 10_000_000
    atlas_alpha: float = 0.875
    atlas_alpha_on_current: bool = True
    atlas_starvation_cycles: int = 50_000
    # RL
    rl_tables: int = 32
    rl_table_size: int = 256
    rl_learning_rate: float = 0.1
    rl_discount: float = 0.95
    rl_epsilon: float = 0.05
    rl_starvation_cycles: int = 10_000
    rl_frozen: bool = False
    rl_queue_bucket: int = 4
    rl_max_buckets: int = 16


@dataclass
class PagePolicyParams:
    name: str = "open_adaptive"
    abpp_entries_per_bank: int = 16
    rbpp_registers_per_bank: int = 4


@dataclass
class CpuParams:
    cpu_mhz: int = 2000
    mem_mhz: int = 800
    max_outstanding_reads: int = 1
    write_buffer_credits: int = 8

    def insts_per_mem_cycle(self) -> tuple:
        """(numerator, denominator): instructions retired per memory cycle."""
        g = gcd(self.cpu_mhz, self.mem_mhz)
        return self.cpu_mhz // g, self.mem_mhz // g


@dataclass
class WorkloadParams:
    kind: str = "synthetic"  # synthetic | trace
    name: str = "synthetic"
    trace_path: str = ""
    trace_format: str = "text"  # text | bin
    cores: int = 16
    mpki: float = 5.0
    read_fraction: float = 0.7
    row_locality: float = 0.25
    working_set_fraction: float = 1.0


@dataclass
class RunParams:
    seed: int = 1
    warmup_requests: int = 1000
    measured_requests: int = 20000
    measured_cycles: int = 0  # nonzero: measure a fixed cycle window instead


@dataclass
class RunConfig:
    geometry: DramGeometry = field(default_factory=DramGeometry)
    timing: TimingParams = field(default_factory=TimingParams)
    controller: ControllerParams = field(default_factory=ControllerParams)
    scheduler: SchedulerParams = field(default_factory=SchedulerParams)
    page_policy: PagePolicyParams = field(default_factory=PagePolicyParams)
    cpu: CpuParams = field(default_factory=CpuParams)
    workload: WorkloadParams = field(default_factory=WorkloadParams)
    run: RunParams = field(default_factory=RunParams)
    mapping: str = "RoRaBaCoCh"

    def cell_name(self) -> str:
        return "/".join(
            (
                self.scheduler.name,
                self.page_policy.name,
                str(self.geometry.channels),
                self.mapping,
            )
        )


_SECTIONS = {
    "geometry": ("geometry", DramGeometry),
    "timing": ("timing", TimingParams),
    "controller": ("controller", ControllerParams),
    "scheduler": ("scheduler", SchedulerParams),
    "page_policy": ("page_policy", PagePolicyParams),
    "cpu": ("cpu", CpuParams),
    "workload": ("workload", WorkloadParams),
    "run": ("run", RunParams),
}


def _parse_value(key: str, raw: str, kind: type):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError("expected a boolean")
        if kind is int:
            return int(raw.replace("_", ""), 0)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {raw!r}: {exc}") from None


def _apply_kv(cfg: RunConfig, section: str, key: str, raw: str) -> None:
    if section == "mapping" or (section, key) == ("run", "mapping"):
        # accepted under [mapping] scheme=... for readability
        if key in ("scheme", "mapping"):
            cfg.mapping = raw.strip()
            return
    if section == "mapping":
        raise ConfigError(f"mapping.{key}", "unknown key (use 'scheme')")
    if section not in _SECTIONS:
        raise ConfigError(section, "unknown section")
    attr, cls = _SECTIONS[section]
    target = getattr(cfg, attr)
    for f in fields(cls):
        if f.name == key:
            setattr(target, key, _parse_value(f"{section}.{key}", raw, type(getattr(target, key))))
            return
    raise ConfigError(f"{section}.{key}", "unknown key")


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # timing keys are case-sensitive (tCAS, ...)
    read = parser.read(str(path))
    if not read:
        raise ConfigError(str(path), "config file not found or unreadable")
    cfg = RunConfig()
    for section in parser.sections():
        for key, raw in parser.items(section):
            _apply_kv(cfg, section, key, raw)
    validate(cfg)
    return cfg


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply ``section.key=value`` strings in order; returns cfg."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like section.key=value")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(item, "override must look like section.key=value")
        section, key = dotted.split(".", 1)
        _apply_kv(cfg, section.strip(), key.strip(), raw)
    validate(cfg)
    return cfg


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(key, message)


def _pow2(value: int, key: str) -> None:
    _require(value > 0 and value & (value - 1) == 0, key, f"must be a power of two, got {value}")


def validate(cfg: RunConfig) -> None:
    g = cfg.geometry
    _require(g.channels in (1, 2, 4), "geometry.channels", "must be 1, 2 or 4")
    for key in ("ranks_per_channel", "banks_per_rank", "rows_per_bank", "row_buffer_bytes", "cache_block_bytes"):
        _pow2(getattr(g, key), f"geometry.{key}")
    _require(
        g.row_buffer_bytes % g.cache_block_bytes == 0 and g.row_buffer_bytes >= g.cache_block_bytes,
        "geometry.row_buffer_bytes",
        "must be a multiple of cache_block_bytes",
    )
    t = cfg.timing
    for f in fields(TimingParams):
        _require(getattr(t, f.name) > 0, f"timing.{f.name}", "must be positive")
    _require(t.tRC >= t.tRAS + t.tRP, "timing.tRC", f"must be >= tRAS+tRP ({t.tRAS + t.tRP})")
    c = cfg.controller
    _require(c.read_queue_capacity > 0, "controller.read_queue_capacity", "must be positive")
    _require(c.write_queue_capacity > 0, "controller.write_queue_capacity", "must be positive")
    _require(
        0 < c.write_drain_low <= c.write_drain_high <= c.write_queue_capacity,
        "controller.write_drain_high",
        "need 0 < low <= high <= capacity",
    )
    s = cfg.scheduler
    _require(s.name in SCHEDULERS, "scheduler.name", f"must be one of {', '.join(SCHEDULERS)}")
    _require(s.batching_cap > 0, "scheduler.batching_cap", "must be positive")
    _require(s.quantum_cycles > 0, "scheduler.quantum_cycles", "must be positive")
    _require(0.0 <= s.atlas_alpha <= 1.0, "scheduler.atlas_alpha", "must be in [0,1]")
    _require(s.rl_tables > 0, "scheduler.rl_tables", "must be positive")
    _require(s.rl_table_size > 0, "scheduler.rl_table_size", "must be positive")
    _require(0.0 <= s.rl_epsilon <= 1.0, "scheduler.rl_epsilon", "must be in [0,1]")
    _require(0.0 < s.rl_learning_rate <= 1.0, "scheduler.rl_learning_rate", "must be in (0,1]")
    _require(0.0 <= s.rl_discount < 1.0, "scheduler.rl_discount", "must be in [0,1)")
    p = cfg.page_policy
    _require(p.name in PAGE_POLICIES, "page_policy.name", f"must be one of {', '.join(PAGE_POLICIES)}")
    _require(p.abpp_entries_per_bank > 0, "page_policy.abpp_entries_per_bank", "must be positive")
    _require(p.rbpp_registers_per_bank > 0, "page_policy.rbpp_registers_per_bank", "must be positive")
    cp = cfg.cpu
    _require(cp.cpu_mhz > 0 and cp.mem_mhz > 0, "cpu.cpu_mhz", "clocks must be positive")
    _require(cp.max_outstanding_reads >= 1, "cpu.max_outstanding_reads", "must be >= 1")
    _require(cp.write_buffer_credits >= 1, "cpu.write_buffer_credits", "must be >= 1")
    w = cfg.workload
    _require(w.kind in ("synthetic", "trace"), "workload.kind", "must be synthetic or trace")
    if w.kind == "trace":
        _require(bool(w.trace_path), "workload.trace_path", "required for trace workloads")
        _require(w.trace_format in ("text", "bin"), "workload.trace_format", "must be text or bin")
    _require(w.cores >= 1, "workload.cores", "must be >= 1")
    _require(w.mpki > 0, "workload.mpki", "must be > 0")
    _require(0.0 <= w.read_fraction <= 1.0, "workload.read_fraction", "must be in [0,1]")
    _require(0.0 <= w.row_locality <= 1.0, "workload.row_locality", "must be in [0,1]")
    _require(0.0 < w.working_set_fraction <= 1.0, "workload.working_set_fraction", "must be in (0,1]")
    r = cfg.run
    _require(r.warmup_requests >= 0, "run.warmup_requests", "must be >= 0")
    _require(
        r.measured_requests > 0 or r.measured_cycles > 0,
        "run.measured_requests",
        "need measured_requests or measured_cycles > 0",
    )
    try:
        addressing.parse_scheme(cfg.mapping)
    except ValueError as exc:
        raise ConfigError("mapping.scheme", str(exc)) from None
    _require(
        cfg.mapping in addressing.MAPPING_SCHEMES,
        "mapping.scheme",
        f"must be one of {', '.join(addressing.MAPPING_SCHEMES)}",
    )


def resolved_text(cfg: RunConfig) -> str:
    """Canonical flat text of every key; stable across runs."""
    lines = []
    for section, (attr, cls) in sorted(_SECTIONS.items()):
        obj = getattr(cfg, attr)
        for f in fields(cls):
            lines.append(f"{section}.{f.name}={getattr(obj, f.name)!r}")
    lines.append(f"mapping.scheme={cfg.mapping!r}")
    return "\n".join(lines)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(resolved_text(cfg).encode()).hexdigest()[:12]


def copy_config(cfg: RunConfig) -> RunConfig:
    return RunConfig(
        geometry=replace(cfg.geometry),
        timing=replace(cfg.timing),
        controller=replace(cfg.controller),
        scheduler=replace(cfg.scheduler),
        page_policy=replace(cfg.page_policy),
        cpu=replace(cfg.cpu),
        workload=replace(cfg.workload),
        run=replace(cfg.run),
        mapping=cfg.mapping,
    )
