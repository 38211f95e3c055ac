"""Engine backend selection.

Prefers the Cython-compiled engine (``mcsim._engine_cy``) and falls back to
the interpreted single-source original.  Set ``MCSIM_PURE=1`` to force the
pure-Python backend, e.g. for debugging or benchmark baselines.
"""

import os

if os.environ.get("MCSIM_PURE", "") == "1":
    from . import _engine as _backend
    BACKEND = "pure"
else:
    try:
        from . import _engine_cy as _backend  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        from . import _engine as _backend
        BACKEND = "pure"

ACTIVATE = _backend.ACTIVATE
PRECHARGE = _backend.PRECHARGE
READ = _backend.READ
WRITE = _backend.WRITE
NOP = _backend.NOP
CMD_NAMES = _backend.CMD_NAMES

Engine = _backend.Engine
RlCore = _backend.RlCore
closed_form_latency = _backend.closed_form_latency
SchedulerBugError = _backend.SchedulerBugError
TimingFaultError = _backend.TimingFaultError
LivelockError = _backend.LivelockError


def make_engine(cfg, trace_streams=None, record_commands=False,
                record_events=False, max_cycles=0, backend=""):
    """Build an Engine on the selected backend ('', 'pure' or 'compiled')."""
    if backend in ("", BACKEND):
        mod = _backend
    elif backend == "pure":
        from . import _engine as mod
    elif backend == "compiled":
        from . import _engine_cy as mod  # raises ImportError if not built
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return mod.Engine(cfg, trace_streams=trace_streams,
                      record_commands=record_commands,
                      record_events=record_events, max_cycles=max_cycles)
