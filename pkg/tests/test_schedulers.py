"""Scheduler decision logic: ordering, batching, ranking, Q-learning."""

import pytest

from mcsim.engine import ACTIVATE, PRECHARGE, READ, WRITE, Engine, RlCore, make_engine

from conftest import make_cfg
from util import addr_of, behavior_cfg, retire_order, run_trace


def _contended_streams(cfg):
    """R0 opens row A; R1 (row B) and R2 (row A again) queue behind it."""
    a_rowA = addr_of(cfg, bank=0, row=0)
    a_rowA2 = addr_of(cfg, bank=0, row=0, col=1)
    a_rowB = addr_of(cfg, bank=0, row=1)
    return [
        [(False, a_rowA, 2)],
        [(False, a_rowB, 6)],
        [(False, a_rowA2, 7)],
    ]


def test_fcfs_never_reorders_past_head():
    cfg = behavior_cfg(make_cfg, cores=3, scheduler__name="fcfs",
                       page_policy__name="open")
    eng = run_trace(cfg, _contended_streams(cfg))
    assert retire_order(eng) == [1, 2, 3]


def test_frfcfs_promotes_row_hit_over_age():
    cfg = behavior_cfg(make_cfg, cores=3, scheduler__name="fr_fcfs",
                       page_policy__name="open")
    eng = run_trace(cfg, _contended_streams(cfg))
    assert retire_order(eng) == [1, 3, 2]


def test_fcfs_banks_exploits_bank_parallelism():
    # Head of bank 0 waits on tRCD; bank 1's head must not wait behind it.
    def streams(cfg):
        return [
            [(False, addr_of(cfg, bank=0, row=0), 1)],
            [(False, addr_of(cfg, bank=1, row=0), 2)],
        ]

    acts = {}
    for sched in ("fcfs", "fcfs_banks"):
        cfg = behavior_cfg(make_cfg, cores=2, scheduler__name=sched,
                           page_policy__name="open")
        eng = run_trace(cfg, streams(cfg))
        acts[sched] = [c[0] for c in eng.cmd_log if c[1] == ACTIVATE]
    # Second activate overlaps the first request's tRCD under fcfs_banks
    # (held only by tRRD), but waits for the head's column access in fcfs.
    assert acts["fcfs_banks"][1] < acts["fcfs"][1]


def test_fcfs_banks_single_bank_degenerates_to_fcfs():
    def streams(cfg):
        return [
            [(False, addr_of(cfg, bank=3, row=0), 2)],
            [(False, addr_of(cfg, bank=3, row=1), 3)],
            [(False, addr_of(cfg, bank=3, row=0, col=2), 4)],
        ]

    orders = {}
    for sched in ("fcfs", "fcfs_banks"):
        cfg = behavior_cfg(make_cfg, cores=3, scheduler__name=sched,
                           page_policy__name="open")
        orders[sched] = retire_order(run_trace(cfg, streams(cfg)))
    assert orders["fcfs"] == orders["fcfs_banks"]


# -- PAR-BS ----------------------------------------------------------------


def _queued_engine(cfg):
    eng = Engine(cfg, trace_streams=[[] for _ in range(cfg.workload.cores)])
    return eng, eng.channels[0]


def _queue_req(eng, ch, core, bank, row, rid, is_write=False):
    mod = type(eng).__module__
    import importlib

    Request = importlib.import_module(mod).Request
    req = Request(rid, core, is_write, 0, 0, 0, bank, row, 0, 0)
    ch.enqueue(req, 0)
    return req


def test_parbs_shortest_job_ranking():
    cfg = make_cfg(scheduler__name="par_bs", workload__cores=2)
    eng, ch = _queued_engine(cfg)
    rid = 0
    # core0: 3 requests to bank0, 1 to bank1 (max load 3)
    for bank, n in ((0, 3), (1, 1)):
        for _ in range(n):
            rid += 1
            _queue_req(eng, ch, core=0, bank=bank, row=rid, rid=rid)
    # core1: 1 request to bank0, 2 to bank1 (max load 2)
    for bank, n in ((0, 1), (1, 2)):
        for _ in range(n):
            rid += 1
            _queue_req(eng, ch, core=1, bank=bank, row=rid, rid=rid)
    ch.form_batch()
    assert ch.rank_of[1] < ch.rank_of[0]


def test_parbs_batching_cap_limits_marks():
    cfg = make_cfg(scheduler__name="par_bs", workload__cores=1,
                   scheduler__batching_cap=5)
    eng, ch = _queued_engine(cfg)
    reqs = [_queue_req(eng, ch, core=0, bank=0, row=i, rid=i + 1) for i in range(7)]
    ch.form_batch()
    assert [r.batched for r in reqs] == [True] * 5 + [False] * 2
    assert ch.batch_remaining == 5


def test_parbs_serves_batched_before_unbatched():
    cfg = make_cfg(scheduler__name="par_bs", workload__cores=2,
                   scheduler__batching_cap=1)
    eng, ch = _queued_engine(cfg)
    old = _queue_req(eng, ch, core=0, bank=0, row=1, rid=1)
    young = _queue_req(eng, ch, core=0, bank=1, row=2, rid=2)
    ch.form_batch()  # cap 1 per (core, bank): both are their bank's oldest
    assert old.batched and young.batched
    # Add an unbatched request that would row-hit once bank 2 opens.
    extra = _queue_req(eng, ch, core=1, bank=2, row=3, rid=3)
    assert not extra.batched
    sel = ch.select(0)
    assert sel is not None
    assert sel[1].batched


def test_parbs_single_core_reduces_to_frfcfs_order():
    def streams(cfg):
        return [[
            (False, addr_of(cfg, bank=0, row=0), 2),
            (False, addr_of(cfg, bank=0, row=1), 4),
            (False, addr_of(cfg, bank=0, row=0, col=1), 5),
        ]]

    orders = {}
    for sched in ("fr_fcfs", "par_bs"):
        cfg = behavior_cfg(make_cfg, cores=1, scheduler__name=sched,
                           page_policy__name="open")
        orders[sched] = retire_order(run_trace(cfg, streams(cfg)))
    assert orders["par_bs"] == orders["fr_fcfs"]


# -- ATLAS -------------------------------------------------------------------


def test_atlas_attained_service_counts_busy_banks():
    cfg = make_cfg(scheduler__name="atlas", workload__cores=4)
    eng, ch = _queued_engine(cfg)
    r1 = _queue_req(eng, ch, core=3, bank=0, row=1, rid=1)
    r2 = _queue_req(eng, ch, core=3, bank=1, row=2, rid=2)
    ch.atlas_service_start(r1)
    ch.atlas_service_start(r2)
    eng.now = 10
    ch.atlas_flush(10)
    assert ch.ats[3] == 2 * 10
    ch.atlas_service_end(r1)
    eng.now = 15
    ch.atlas_flush(15)
    assert ch.ats[3] == 20 + 5


def test_atlas_quantum_ewma_bias_to_current():
    cfg = make_cfg(scheduler__name="atlas", workload__cores=2)
    eng, ch = _queued_engine(cfg)
    ch.ats[0] = 800
    ch.atlas_quantum_rollover(ch.next_quantum)
    assert ch.total_service[0] == pytest.approx(700.0)
    assert ch.ats[0] == 0


def test_atlas_quantum_ewma_flag_flips_orientation():
    cfg = make_cfg(scheduler__name="atlas", workload__cores=2,
                   scheduler__atlas_alpha_on_current=False)
    eng, ch = _queued_engine(cfg)
    ch.ats[0] = 800
    ch.atlas_quantum_rollover(ch.next_quantum)
    assert ch.total_service[0] == pytest.approx(100.0)


def test_atlas_ranks_less_served_core_higher():
    cfg = make_cfg(scheduler__name="atlas", workload__cores=2)
    eng, ch = _queued_engine(cfg)
    ch.ats[0] = 1000
    ch.ats[1] = 500
    ch.atlas_quantum_rollover(ch.next_quantum)
    assert ch.rank_of[1] == 0 and ch.rank_of[0] == 1


def test_atlas_rank_changes_only_at_quantum_boundaries():
    cfg = make_cfg(scheduler__name="atlas", workload__cores=8,
                   scheduler__quantum_cycles=20000,
                   workload__mpki=30.0, run__warmup_requests=0,
                   run__measured_requests=10**9, run__measured_cycles=100000)
    cfg.workload.cores = 8
    eng = make_engine(cfg, max_cycles=5_000_000)
    eng.run()
    assert eng.atlas_rank_changes, "expected at least one rank recomputation"
    for cycle, _ch in eng.atlas_rank_changes:
        assert cycle % 20000 == 0


def test_atlas_starved_request_preempts_rank_order():
    cfg = make_cfg(scheduler__name="atlas", workload__cores=2,
                   scheduler__atlas_starvation_cycles=100)
    eng, ch = _queued_engine(cfg)
    starved = _queue_req(eng, ch, core=0, bank=0, row=1, rid=1)
    fresh = _queue_req(eng, ch, core=1, bank=1, row=2, rid=2)
    ch.rank_of[0] = 1
    ch.rank_of[1] = 0  # fresh core nominally ranks first
    eng.now = 200
    sel = ch.select(200)
    assert sel is not None and sel[1] is starved


# -- RL ----------------------------------------------------------------------


def test_rl_queue_length_quantization():
    cfg = make_cfg(scheduler__name="rl", workload__cores=1,
                   scheduler__rl_queue_bucket=4, scheduler__rl_max_buckets=16)
    eng, ch = _queued_engine(cfg)
    assert ch.rl_bucket_of(9) == 2
    assert ch.rl_bucket_of(0) == 0
    assert ch.rl_bucket_of(400) == 15


def test_rl_update_arithmetic():
    rl = RlCore(32, 256, 0.1, 0.95, seed="t")
    key = 12345
    rl.sarsa(key, reward=1.0, next_q=0.0)
    assert rl.qmean(key) == pytest.approx(0.1, abs=1e-12)
    rl.sarsa(key, reward=0.0, next_q=0.0)  # decays toward zero
    assert rl.qmean(key) == pytest.approx(0.1 + 0.1 * (0.95 * 0.0 - 0.1), abs=1e-12)


def test_rl_zero_reward_zero_q_is_fixed_point():
    rl = RlCore(8, 64, 0.1, 0.95, seed="t")
    rl.sarsa(7, reward=0.0, next_q=0.0)
    assert rl.qmean(7) == 0.0


def test_rl_greedy_tie_prefers_read_over_precharge():
    cfg = make_cfg(scheduler__name="rl", workload__cores=2,
                   scheduler__rl_epsilon=0.0, scheduler__rl_frozen=True)
    eng, ch = _queued_engine(cfg)
    hit_bank = ch.banks[0]
    ch.issue_activate(hit_bank, 5, 0)
    conflict_bank = ch.banks[1]
    ch.issue_activate(conflict_bank, 9, 5)
    r_hit = _queue_req(eng, ch, core=0, bank=0, row=5, rid=1)
    r_conf = _queue_req(eng, ch, core=1, bank=1, row=2, rid=2)
    eng.now = 60  # all timing constraints comfortably expired
    sel = ch.select(60)
    assert sel is not None
    kind, req = sel
    assert kind == READ and req is r_hit


def test_rl_epsilon_one_explores_all_legal_actions():
    cfg = make_cfg(scheduler__name="rl", workload__cores=2,
                   scheduler__rl_epsilon=1.0, scheduler__rl_frozen=True)
    eng, ch = _queued_engine(cfg)
    ch.issue_activate(ch.banks[0], 5, 0)
    _queue_req(eng, ch, core=0, bank=0, row=5, rid=1)
    _queue_req(eng, ch, core=1, bank=1, row=2, rid=2)
    eng.now = 60
    seen = set()
    for _ in range(60):
        sel = ch.select(60)
        seen.add(None if sel is None else sel[0])
    assert seen == {None, READ, ACTIVATE}


def test_rl_starvation_forces_oldest():
    cfg = make_cfg(scheduler__name="rl", workload__cores=2,
                   scheduler__rl_epsilon=0.0, scheduler__rl_frozen=True,
                   scheduler__rl_starvation_cycles=1000)
    eng, ch = _queued_engine(cfg)
    ch.issue_activate(ch.banks[1], 7, 0)
    old = _queue_req(eng, ch, core=0, bank=0, row=1, rid=1)
    hit = _queue_req(eng, ch, core=1, bank=1, row=7, rid=2)
    eng.now = 2000
    sel = ch.select(2000)
    assert sel is not None and sel[1] is old and sel[0] == ACTIVATE


def test_rl_fixed_seed_replays_identically():
    cfg = behavior_cfg(make_cfg, cores=4, scheduler__name="rl",
                       workload__kind="synthetic")
    cfg.workload.cores = 4
    cfg.run.measured_requests = 1200
    logs = []
    for _ in range(2):
        eng = make_engine(cfg, record_commands=True, max_cycles=5_000_000)
        eng.run()
        logs.append(eng.cmd_log)
    assert logs[0] == logs[1]
