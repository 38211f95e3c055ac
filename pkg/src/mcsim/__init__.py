"""mcsim: a deterministic cycle-level multi-channel DRAM memory controller
simulator with pluggable schedulers, page-management policies and address
mappings, driven by traces or a calibrated synthetic workload."""

__version__ = "0.1.0"
