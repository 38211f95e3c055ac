"""The replay validator must flag tampered streams, not just pass clean ones."""

import pytest

from mcsim.engine import ACTIVATE, PRECHARGE, READ, WRITE
from mcsim.run import simulate
from mcsim.validate import validate_command_stream

from conftest import make_cfg


@pytest.fixture(scope="module")
def clean():
    cfg = make_cfg(run__warmup_requests=0, run__measured_requests=1500,
                   workload__row_locality=0.4)
    cfg.workload.cores = 4
    result = simulate(cfg, record_commands=True)
    assert validate_command_stream(result.commands, cfg) == []
    return cfg, result.commands


def _find(cmds, kind):
    for i, c in enumerate(cmds):
        if c[1] == kind and i > 10:
            return i
    raise AssertionError("kind not found")


def test_detects_early_read_after_activate(clean):
    cfg, cmds = clean
    tampered = list(cmds)
    i = _find(cmds, READ)
    c = tampered[i]
    tampered[i] = (max(0, c[0] - 200),) + tuple(c[1:])
    bad = validate_command_stream(tampered, cfg)
    assert bad  # out-of-order or constraint violation flagged


def test_detects_double_activate(clean):
    cfg, cmds = clean
    i = _find(cmds, ACTIVATE)
    tampered = list(cmds)
    c = tampered[i]
    tampered.insert(i + 1, (c[0] + 1, ACTIVATE, c[2], c[3], c[4], c[5] + 1, -1))
    bad = validate_command_stream(tampered, cfg)
    assert any("ACT on active bank" in m or "tRC" in m or "tRRD" in m for m in bad)


def test_detects_trc_violation(clean):
    cfg, cmds = clean
    i = _find(cmds, PRECHARGE)
    cyc, _k, ch, rank, bank, row, col = cmds[i]
    tampered = list(cmds)
    # Re-activate the same bank right after its precharge: violates tRP
    # (and usually tRC from the earlier activate).
    tampered.insert(i + 1, (cyc + 1, ACTIVATE, ch, rank, bank, row, -1))
    bad = validate_command_stream(tampered, cfg)
    assert any("tRP" in m or "tRC" in m for m in bad)


def test_detects_two_commands_same_cycle(clean):
    cfg, cmds = clean
    tampered = list(cmds)
    c = tampered[20]
    tampered.insert(21, c)
    bad = validate_command_stream(tampered, cfg)
    assert any("two commands in one cycle" in m for m in bad)


def test_detects_burst_overlap(clean):
    cfg, cmds = clean
    i = _find(cmds, READ)
    cyc, kind, ch, rank, bank, row, col = cmds[i]
    tampered = list(cmds)
    # A second column access one cycle later overlaps the 4-cycle burst.
    tampered.insert(i + 1, (cyc + 1, kind, ch, rank, bank, row, col))
    bad = validate_command_stream(tampered, cfg)
    assert any("overlap" in m for m in bad)
