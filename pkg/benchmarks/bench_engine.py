#!/usr/bin/env python3
"""Benchmark the compiled engine against the pure-Python fallback.

Runs the same seeded configurations on both backends and reports simulated
cycles per wall-clock second plus the speedup.  Results double as a parity
check: both backends must retire the same request count over the same
number of cycles.
"""

import argparse
import time

from mcsim.config import RunConfig
from mcsim.engine import make_engine


def build_cfg(name):
    cfg = RunConfig()
    cfg.run.warmup_requests = 1000
    cfg.run.measured_requests = 30000
    cfg.workload.cores = 16
    if name == "baseline":
        pass
    elif name == "high-intensity":
        cfg.workload.mpki = 18.0
        cfg.cpu.max_outstanding_reads = 4
        cfg.geometry.channels = 4
    elif name == "rl":
        cfg.scheduler.name = "rl"
        cfg.workload.mpki = 12.0
    else:
        raise ValueError(name)
    return cfg


def run_one(name, backend):
    cfg = build_cfg(name)
    eng = make_engine(cfg, backend=backend)
    t0 = time.perf_counter()
    eng.run()
    dt = time.perf_counter() - t0
    return eng.now, eng.retired_total, dt


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", action="append",
                        choices=["baseline", "high-intensity", "rl"],
                        help="repeatable; default runs all three")
    args = parser.parse_args()
    scenarios = args.scenario or ["baseline", "high-intensity", "rl"]

    backends = ["pure"]
    try:
        import mcsim._engine_cy  # noqa: F401
        backends.append("compiled")
    except ImportError:
        print("compiled engine not built; benchmarking pure backend only")

    print(f"{'scenario':<16} {'backend':<10} {'cycles':>10} {'requests':>9} "
          f"{'seconds':>8} {'kcycles/s':>10}")
    for name in scenarios:
        rates = {}
        checks = set()
        for backend in backends:
            cycles, retired, dt = run_one(name, backend)
            rates[backend] = cycles / dt / 1e3
            checks.add((cycles, retired))
            print(f"{name:<16} {backend:<10} {cycles:>10} {retired:>9} "
                  f"{dt:>8.2f} {rates[backend]:>10.0f}")
        if len(checks) != 1:
            raise SystemExit(f"backend mismatch in scenario {name}: {checks}")
        if "compiled" in rates:
            print(f"{'':<16} speedup: {rates['compiled'] / rates['pure']:.2f}x")


if __name__ == "__main__":
    main()
