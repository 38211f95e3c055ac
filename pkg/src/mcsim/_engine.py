"""Cycle-level simulation engine.

Everything on the per-cycle hot path lives here: DRAM bank/rank/channel
timing state, the per-channel controller (queues, write-drain phases,
command issue), the six schedulers, the six page-management policies, the
in-order core models and the synthetic request generator.

The module is plain Python on purpose.  The build copies it to
``_engine_cy.py`` and compiles that copy with Cython; ``mcsim.engine``
selects the compiled module when present.  Keep the code free of
dataclasses, enums and pattern matching so both backends behave
identically.
"""

import heapq
from random import Random

# Command kinds.
ACTIVATE = 0
PRECHARGE = 1
READ = 2
WRITE = 3
NOP = 4

CMD_NAMES = ("ACT", "PRE", "RD", "WR", "NOP")

# Fixed tie-break order between equally valued actions: favor data-bus
# progress, then opening rows, then closing them.
ACTION_ORDER = {READ: 0, WRITE: 1, ACTIVATE: 2, PRECHARGE: 3, NOP: 4}

# Scheduler codes.
S_FCFS = 0
S_FCFS_BANKS = 1
S_FR_FCFS = 2
S_PAR_BS = 3
S_ATLAS = 4
S_RL = 5

SCHED_CODES = {
    "fcfs": S_FCFS,
    "fcfs_banks": S_FCFS_BANKS,
    "fr_fcfs": S_FR_FCFS,
    "par_bs": S_PAR_BS,
    "atlas": S_ATLAS,
    "rl": S_RL,
}

# Page policy codes.
P_OPEN = 0
P_CLOSE = 1
P_OPEN_ADAPTIVE = 2
P_CLOSE_ADAPTIVE = 3
P_ABPP = 4
P_RBPP = 5

POLICY_CODES = {
    "open": P_OPEN,
    "close": P_CLOSE,
    "open_adaptive": P_OPEN_ADAPTIVE,
    "close_adaptive": P_CLOSE_ADAPTIVE,
    "abpp": P_ABPP,
    "rbpp": P_RBPP,
}

# Core states.
C_RUNNING = 0
C_STALLED = 1  # issue attempt blocked on queue space / write credits
C_BLOCKED = 2  # at max outstanding reads, waiting for data
C_DONE = 3


class SchedulerBugError(RuntimeError):
    """A structurally illegal command reached the device."""


class TimingFaultError(RuntimeError):
    """A command was issued before its earliest legal cycle."""


class LivelockError(RuntimeError):
    """The watchdog cycle limit was exceeded."""


def closed_form_latency(timing, row_state: str) -> int:
    """Minimum read latency for an isolated request by row-buffer state."""
    base = timing.tCAS + timing.burst_cycles
    if row_state == "hit":
        return base
    if row_state == "miss":
        return timing.tRCD + base
    if row_state == "conflict":
        return timing.tRP + timing.tRCD + base
    raise ValueError(f"unknown row state {row_state!r}")


class Request:
    __slots__ = (
        "rid", "core", "is_write", "addr", "channel", "rank", "bank", "row",
        "col", "created", "arrival", "batched", "first_cmd", "data_end",
        "retired",
    )

    def __init__(self, rid, core, is_write, addr, channel, rank, bank, row, col, created):
        self.rid = rid
        self.core = core
        self.is_write = is_write
        self.addr = addr
        self.channel = channel
        self.rank = rank
        self.bank = bank  # global bank index within the channel
        self.row = row
        self.col = col
        self.created = created
        self.arrival = -1
        self.batched = False
        self.first_cmd = -1
        self.data_end = -1
        self.retired = False


class Bank:
    __slots__ = (
        "idx", "rank_idx", "active", "open_row", "next_act", "next_pre",
        "next_rw", "acc_count", "closing", "pending_by_row", "pending_total",
        "serving_cores",
    )

    def __init__(self, idx, rank_idx):
        self.idx = idx
        self.rank_idx = rank_idx
        self.active = False
        self.open_row = -1
        self.next_act = 0
        self.next_pre = 0
        self.next_rw = 0
        self.acc_count = 0
        self.closing = False
        self.pending_by_row = {}
        self.pending_total = 0
        self.serving_cores = {}


class RankTiming:
    __slots__ = ("act_hist", "read_ok_at")

    def __init__(self):
        self.act_hist = []  # newest first, at most 4 entries
        self.read_ok_at = 0


class RlCore:
    """CMAC-style Q estimator: many small hashed tables averaged together.

    The Q estimate of a (state, action) key is the mean of one indexed
    entry per table.  A SARSA update moves every indexed entry by the same
    scaled error, so the mean follows the scalar update rule exactly as
    long as the keys in play do not collide within a table.
    """

    _PRIME = (1 << 61) - 1

    def __init__(self, num_tables, table_size, learning_rate, discount, seed):
        self.num_tables = num_tables
        self.table_size = table_size
        self.lr = learning_rate
        self.gamma = discount
        self.tables = [[0.0] * table_size for _ in range(num_tables)]
        rng = Random(f"{seed}/rl-hash")
        p = self._PRIME
        self.hash_a = [rng.randrange(1, p) for _ in range(num_tables)]
        self.hash_b = [rng.randrange(0, p) for _ in range(num_tables)]
        self._index_cache = {}

    def indices(self, key):
        cached = self._index_cache.get(key)
        if cached is not None:
            return cached
        p = self._PRIME
        size = self.table_size
        ha = self.hash_a
        hb = self.hash_b
        out = [((ha[i] * key + hb[i]) % p) % size for i in range(self.num_tables)]
        self._index_cache[key] = out
        return out

    def qmean(self, key):
        total = 0.0
        tables = self.tables
        for i, idx in enumerate(self.indices(key)):
            total += tables[i][idx]
        return total / self.num_tables

    def sarsa(self, prev_key, reward, next_q):
        """One on-policy update of the previous (state, action) estimate."""
        idxs = self.indices(prev_key)
        tables = self.tables
        prev_q = 0.0
        for i, idx in enumerate(idxs):
            prev_q += tables[i][idx]
        prev_q /= self.num_tables
        delta = self.lr * (reward + self.gamma * next_q - prev_q)
        for i, idx in enumerate(idxs):
            tables[i][idx] += delta


class Core:
    """In-order core: retires instructions at a fixed rate while running.

    Instruction progress is tracked in integer units (1 instruction =
    ``den`` units, ``num`` units retired per memory cycle) over a running
    stretch anchored at (stretch_start, stretch_base), so nothing needs
    per-cycle work while a core is between requests.
    """

    __slots__ = (
        "idx", "state", "rate", "stretch_start", "stretch_base",
        "units_needed", "units_done", "outstanding", "credits", "rng",
        "region_base", "cur_block", "have_region", "pending",
        "pending_created", "trace", "trace_pos", "event_time",
    )

    def __init__(self, idx, rng, credits, rate):
        self.idx = idx
        self.state = C_RUNNING
        self.rate = rate
        self.stretch_start = 0
        self.stretch_base = 0
        self.units_needed = 0
        self.units_done = 0
        self.outstanding = 0
        self.credits = credits
        self.rng = rng
        self.region_base = 0
        self.cur_block = 0
        self.have_region = False
        self.pending = None  # (is_write, addr) awaiting issue
        self.pending_created = -1
        self.trace = None
        self.trace_pos = 0
        self.event_time = -1

    def units_at(self, cycle):
        """Instruction units retired by the start of `cycle`."""
        if self.state == C_RUNNING:
            done = self.stretch_base + (cycle - self.stretch_start) * self.rate
            if done > self.units_needed:
                done = self.units_needed
            if done < self.stretch_base:
                done = self.stretch_base
            return done
        return self.units_done


class Channel:
    """One memory channel: banks, queues, scheduler and policy state."""

    def __init__(self, idx, eng):
        self.idx = idx
        self.eng = eng
        cfg = eng.cfg
        g = cfg.geometry
        t = cfg.timing
        self.tCAS = t.tCAS
        self.tRCD = t.tRCD
        self.tRP = t.tRP
        self.tRAS = t.tRAS
        self.tRC = t.tRC
        self.tWR = t.tWR
        self.tWTR = t.tWTR
        self.tRTP = t.tRTP
        self.tRRD = t.tRRD
        self.tFAW = t.tFAW
        self.burst = t.burst_cycles
        self.turnaround = t.bus_turnaround_cycles

        self.nbanks = g.banks_per_channel
        self.banks = [Bank(i, i // g.banks_per_rank) for i in range(self.nbanks)]
        self.ranks = [RankTiming() for _ in range(g.ranks_per_channel)]
        self.bus_busy_until = 0
        self.bus_last_write = -1  # -1 until the first burst

        self.read_q = []
        self.write_q = []
        self.read_cap = cfg.controller.read_queue_capacity
        self.write_cap = cfg.controller.write_queue_capacity
        self.drain_high = cfg.controller.write_drain_high
        self.drain_low = cfg.controller.write_drain_low
        self.drain_write = False
        self.inflight = []  # heap of (data_end, seq, req)
        self.pending_hits_total = 0

        self.sched = SCHED_CODES[cfg.scheduler.name]
        self.policy = POLICY_CODES[cfg.page_policy.name]

        ncores = cfg.workload.cores
        if self.sched == S_FCFS_BANKS:
            self.bank_dq_r = [[] for _ in range(self.nbanks)]
            self.bank_dq_w = [[] for _ in range(self.nbanks)]
            self.bank_dq_r_head = [0] * self.nbanks
            self.bank_dq_w_head = [0] * self.nbanks
        # PAR-BS batching.
        self.batch_remaining = 0
        self.batch_cap = cfg.scheduler.batching_cap
        self.batch_cap_per_bank = cfg.scheduler.parbs_cap_per_core_bank
        self.batch_formed_at = -1
        self.batch_durations = []
        self.rank_of = list(range(ncores))
        # ATLAS.
        sc = cfg.scheduler
        self.atlas_quantum = sc.quantum_cycles
        self.atlas_alpha = sc.atlas_alpha
        self.atlas_alpha_current = sc.atlas_alpha_on_current
        self.atlas_starve = sc.atlas_starvation_cycles
        self.ats = [0] * ncores
        self.total_service = [0.0] * ncores
        self.core_bank_count = [0] * ncores
        self.ats_last_flush = 0
        self.next_quantum = sc.quantum_cycles
        # RL.
        if self.sched == S_RL:
            self.rl = RlCore(
                sc.rl_tables, sc.rl_table_size, sc.rl_learning_rate,
                sc.rl_discount, f"{cfg.run.seed}/ch{idx}",
            )
            self.rl_rng = Random(f"{cfg.run.seed}/rl-explore/ch{idx}")
            self.rl_epsilon = sc.rl_epsilon
            self.rl_frozen = sc.rl_frozen
            self.rl_starve = sc.rl_starvation_cycles
            self.rl_bucket = sc.rl_queue_bucket
            self.rl_max_bucket = sc.rl_max_buckets - 1
            self.rl_prev_key = -1
            self.rl_prev_reward = 0.0
        # Page policy predictor state.
        if self.policy == P_ABPP:
            self.abpp = [{} for _ in range(self.nbanks)]
            self.abpp_cap = cfg.page_policy.abpp_entries_per_bank
        if self.policy == P_RBPP:
            self.marrs = [{} for _ in range(self.nbanks)]
            self.marr_cap = cfg.page_policy.rbpp_registers_per_bank

        # Raw per-channel counters; the engine gates them by the window.
        self.n_hits = 0
        self.n_misses = 0
        self.n_conflicts = 0
        self.n_activations = 0
        self.hist = {}
        self.read_lat_sum = 0
        self.read_count = 0
        self.write_posted_sum = 0
        self.write_posted_count = 0
        self.write_drained_sum = 0
        self.write_drained_count = 0
        self.rq_integral = 0
        self.wq_integral = 0
        self.bus_busy_cycles = 0
        self.bytes_transferred = 0
        self.max_read_wait = 0
        self.max_wait = 0
        self.served_reads = 0
        self.served_writes = 0

    # ------------------------------------------------------------------
    # Device timing: earliest legal cycle per command class.

    def ready_act(self, bank, now):
        t = bank.next_act
        hist = self.ranks[bank.rank_idx].act_hist
        if hist:
            v = hist[0] + self.tRRD
            if v > t:
                t = v
            if len(hist) == 4:
                v = hist[3] + self.tFAW
                if v > t:
                    t = v
        return t if t > now else now

    def ready_pre(self, bank, now):
        t = bank.next_pre
        return t if t > now else now

    def ready_rw(self, bank, is_write, now):
        t = bank.next_rw
        if not is_write:
            v = self.ranks[bank.rank_idx].read_ok_at
            if v > t:
                t = v
        if t < now:
            t = now
        # The burst starts tCAS after issue and must not overlap the
        # previous burst; a direction flip adds the turnaround penalty.
        free = self.bus_busy_until
        if self.bus_last_write >= 0 and self.bus_last_write != (1 if is_write else 0):
            free += self.turnaround
        v = free - self.tCAS
        if v > t:
            t = v
        return t

    def legal_issue_time(self, kind, bank, is_write, now):
        if kind == NOP:
            return now
        if kind == ACTIVATE:
            if bank.active:
                raise SchedulerBugError("ACTIVATE on an active bank")
            return self.ready_act(bank, now)
        if kind == PRECHARGE:
            if not bank.active:
                raise SchedulerBugError("PRECHARGE on an idle bank")
            return self.ready_pre(bank, now)
        if not bank.active:
            raise SchedulerBugError("column access on an idle bank")
        return self.ready_rw(bank, is_write, now)

    # ------------------------------------------------------------------
    # Command issue.

    def issue_activate(self, bank, row, now, rid=-1):
        if bank.active:
            raise SchedulerBugError("ACTIVATE on an active bank")
        if self.ready_act(bank, now) != now:
            raise TimingFaultError("ACTIVATE issued early")
        bank.active = True
        bank.open_row = row
        bank.acc_count = 0
        bank.next_rw = now + self.tRCD
        bank.next_pre = now + self.tRAS
        bank.next_act = now + self.tRC
        hist = self.ranks[bank.rank_idx].act_hist
        hist.insert(0, now)
        if len(hist) > 4:
            hist.pop()
        self.pending_hits_total += bank.pending_by_row.get(row, 0)
        eng = self.eng
        if eng.in_window:
            self.n_activations += 1
        if eng.cmd_log is not None:
            eng.cmd_log.append((now, ACTIVATE, self.idx, bank.rank_idx, bank.idx, row, -1))
        if eng.event_log is not None:
            eng.event_log.append(("CMD", now, self.idx, ACTIVATE, bank.rank_idx, bank.idx, row, -1, rid))

    def issue_precharge(self, bank, now, rid=-1):
        if not bank.active:
            raise SchedulerBugError("PRECHARGE on an idle bank")
        if self.ready_pre(bank, now) != now:
            raise TimingFaultError("PRECHARGE issued early")
        eng = self.eng
        acc = bank.acc_count
        if eng.in_window:
            self.hist[acc] = self.hist.get(acc, 0) + 1
        row = bank.open_row
        hits = acc - 1 if acc > 0 else 0
        if self.policy == P_ABPP:
            tbl = self.abpp[bank.idx]
            if row in tbl:
                del tbl[row]
            elif len(tbl) >= self.abpp_cap:
                del tbl[next(iter(tbl))]
            tbl[row] = hits
        elif self.policy == P_RBPP and hits >= 1:
            tbl = self.marrs[bank.idx]
            if row in tbl:
                del tbl[row]
            elif len(tbl) >= self.marr_cap:
                del tbl[next(iter(tbl))]
            tbl[row] = hits
        self.pending_hits_total -= bank.pending_by_row.get(row, 0)
        bank.active = False
        bank.open_row = -1
        bank.closing = False
        bank.acc_count = 0
        v = now + self.tRP
        if v > bank.next_act:
            bank.next_act = v
        if eng.cmd_log is not None:
            eng.cmd_log.append((now, PRECHARGE, self.idx, bank.rank_idx, bank.idx, row, -1))
        if eng.event_log is not None:
            eng.event_log.append(("CMD", now, self.idx, PRECHARGE, bank.rank_idx, bank.idx, row, -1, rid))

    def issue_column(self, req, now):
        bank = self.banks[req.bank]
        is_write = req.is_write
        if not bank.active or bank.open_row != req.row:
            raise SchedulerBugError("column access does not match the open row")
        if self.ready_rw(bank, is_write, now) != now:
            raise TimingFaultError("column access issued early")
        eng = self.eng
        data_end = now + self.tCAS + self.burst
        self.bus_busy_until = data_end
        self.bus_last_write = 1 if is_write else 0
        if is_write:
            v = data_end + self.tWR
            if v > bank.next_pre:
                bank.next_pre = v
            r = self.ranks[bank.rank_idx]
            v = data_end + self.tWTR
            if v > r.read_ok_at:
                r.read_ok_at = v
        else:
            v = now + self.tRTP
            if v > bank.next_pre:
                bank.next_pre = v
        bank.acc_count += 1
        if self.policy == P_CLOSE:
            bank.closing = True
        if eng.in_window:
            # The first command attributed to a request classifies it:
            # direct column access = row hit, ACTIVATE = bank was idle
            # (miss), PRECHARGE = another row was open (conflict).
            fc = req.first_cmd
            if fc == READ or fc == WRITE:
                self.n_hits += 1
            elif fc == ACTIVATE:
                self.n_misses += 1
            else:
                self.n_conflicts += 1
            self.bus_busy_cycles += self.burst
            self.bytes_transferred += eng.block_bytes
            wait = now - req.arrival
            if wait > self.max_wait:
                self.max_wait = wait
            if not is_write and wait > self.max_read_wait:
                self.max_read_wait = wait
        # Leave the queue; ride the bus until data_end.
        self.dequeue(req)
        req.data_end = data_end
        eng.inflight_seq += 1
        heapq.heappush(self.inflight, (data_end, eng.inflight_seq, req))
        kind = WRITE if is_write else READ
        if eng.cmd_log is not None:
            eng.cmd_log.append((now, kind, self.idx, bank.rank_idx, bank.idx, req.row, req.col))
        if eng.event_log is not None:
            eng.event_log.append(("CMD", now, self.idx, kind, bank.rank_idx, bank.idx, req.row, req.col, req.rid))

    # ------------------------------------------------------------------
    # Queue bookkeeping.

    def has_space(self, is_write):
        if is_write:
            return len(self.write_q) < self.write_cap
        return len(self.read_q) < self.read_cap

    def enqueue(self, req, now):
        """Append to the matching queue; False means back-pressure."""
        if not self.has_space(req.is_write):
            return False
        req.arrival = now
        (self.write_q if req.is_write else self.read_q).append(req)
        bank = self.banks[req.bank]
        bank.pending_total += 1
        d = bank.pending_by_row
        d[req.row] = d.get(req.row, 0) + 1
        if bank.active and bank.open_row == req.row:
            self.pending_hits_total += 1
        if self.sched == S_FCFS_BANKS:
            (self.bank_dq_w if req.is_write else self.bank_dq_r)[req.bank].append(req)
        eng = self.eng
        if eng.in_window and req.is_write:
            self.write_posted_sum += now - req.created
            self.write_posted_count += 1
        if eng.event_log is not None:
            eng.event_log.append(("ENQ", now, self.idx, req.rid, req.core,
                                  1 if req.is_write else 0, req.addr, req.created))
        return True

    def dequeue(self, req):
        (self.write_q if req.is_write else self.read_q).remove(req)
        bank = self.banks[req.bank]
        bank.pending_total -= 1
        d = bank.pending_by_row
        n = d[req.row] - 1
        if n:
            d[req.row] = n
        else:
            del d[req.row]
        # A column access always targets the open row, so this request
        # was counted among the pending hits.
        self.pending_hits_total -= 1
        if self.sched == S_FCFS_BANKS:
            if req.is_write:
                self.bank_dq_w_head[req.bank] += 1
            else:
                self.bank_dq_r_head[req.bank] += 1
        if req.batched:
            self.batch_remaining -= 1
            if self.batch_remaining == 0 and self.batch_formed_at >= 0:
                self.batch_durations.append(self.eng.now - self.batch_formed_at)

    def update_phase(self):
        wl = len(self.write_q)
        if self.drain_write:
            if wl == 0 or (wl <= self.drain_low and self.read_q):
                self.drain_write = False
        else:
            if wl >= self.drain_high or (wl > 0 and not self.read_q):
                self.drain_write = True

    # ------------------------------------------------------------------
    # Page policies: which active bank owes a precharge this cycle?

    def due_precharge(self, now):
        """Return (bank_to_precharge_now, any_due)."""
        pol = self.policy
        if pol == P_OPEN:
            return None, False
        best = None
        any_due = False
        for bank in self.banks:
            if not bank.active:
                continue
            if pol == P_CLOSE:
                due = bank.closing
            else:
                if bank.pending_by_row.get(bank.open_row, 0) > 0:
                    continue  # queued hits always keep the row open
                if pol == P_CLOSE_ADAPTIVE:
                    due = True
                elif pol == P_OPEN_ADAPTIVE:
                    due = bank.pending_total > 0
                elif pol == P_ABPP:
                    e = self.abpp[bank.idx].get(bank.open_row, -1)
                    hits = bank.acc_count - 1 if bank.acc_count > 0 else 0
                    due = e >= 0 and hits >= e
                else:  # P_RBPP
                    e = self.marrs[bank.idx].get(bank.open_row, -1)
                    if e < 0:
                        due = True  # unrecorded rows close like close-adaptive
                    else:
                        hits = bank.acc_count - 1 if bank.acc_count > 0 else 0
                        due = hits >= e
            if due:
                any_due = True
                if best is None and self.ready_pre(bank, now) == now:
                    best = bank
        return best, any_due

    # ------------------------------------------------------------------
    # Scheduling.

    def next_cmd_kind(self, req, bank):
        if bank.active:
            if bank.open_row == req.row and not bank.closing:
                return WRITE if req.is_write else READ
            return PRECHARGE
        return ACTIVATE

    def cmd_ready(self, kind, bank, is_write, now):
        if kind == ACTIVATE:
            return self.ready_act(bank, now) == now
        if kind == PRECHARGE:
            return self.ready_pre(bank, now) == now
        return self.ready_rw(bank, is_write, now) == now

    def active_queue(self):
        return self.write_q if self.drain_write else self.read_q

    def select(self, now):
        """One legal-now command from the scheduler: (kind, req) or None."""
        sched = self.sched
        if sched == S_FR_FCFS:
            return self.select_frfcfs(self.active_queue(), now)
        if sched == S_FCFS:
            q = self.active_queue()
            if not q:
                return None
            req = q[0]
            bank = self.banks[req.bank]
            kind = self.next_cmd_kind(req, bank)
            if self.cmd_ready(kind, bank, req.is_write, now):
                return kind, req
            return None  # never reorder past the head
        if sched == S_FCFS_BANKS:
            return self.select_fcfs_banks(now)
        if sched == S_PAR_BS:
            return self.select_parbs(now)
        if sched == S_ATLAS:
            return self.select_atlas(now)
        return self.select_rl(now)

    def select_fcfs_banks(self, now):
        if self.drain_write:
            dqs, heads = self.bank_dq_w, self.bank_dq_w_head
        else:
            dqs, heads = self.bank_dq_r, self.bank_dq_r_head
        best = None
        best_age = None
        banks = self.banks
        for b in range(self.nbanks):
            dq = dqs[b]
            h = heads[b]
            if h >= len(dq):
                if h:
                    del dq[:]
                    heads[b] = 0
                continue
            req = dq[h]
            age = (req.arrival, req.rid)
            if best_age is not None and age >= best_age:
                continue
            bank = banks[b]
            kind = self.next_cmd_kind(req, bank)
            if self.cmd_ready(kind, bank, req.is_write, now):
                best = (kind, req)
                best_age = age
        return best

    def select_frfcfs(self, q, now):
        banks = self.banks
        best_other = None
        for req in q:
            bank = banks[req.bank]
            kind = self.next_cmd_kind(req, bank)
            if kind == READ or kind == WRITE:
                if self.cmd_ready(kind, bank, req.is_write, now):
                    return kind, req  # oldest legal row hit wins outright
            elif best_other is None and self.cmd_ready(kind, bank, req.is_write, now):
                best_other = (kind, req)
        return best_other

    # -- PAR-BS ---------------------------------------------------------

    def merged_age_order(self):
        rq, wq = self.read_q, self.write_q
        i = j = 0
        ni, nj = len(rq), len(wq)
        while i < ni or j < nj:
            if j >= nj:
                yield rq[i]
                i += 1
            elif i >= ni:
                yield wq[j]
                j += 1
            elif (rq[i].arrival, rq[i].rid) <= (wq[j].arrival, wq[j].rid):
                yield rq[i]
                i += 1
            else:
                yield wq[j]
                j += 1

    def form_batch(self):
        counts = {}
        loads = {}
        cap = self.batch_cap
        marked = 0
        for req in self.merged_age_order():
            key = (req.core, req.bank) if self.batch_cap_per_bank else req.core
            c = counts.get(key, 0)
            if c < cap:
                counts[key] = c + 1
                req.batched = True
                marked += 1
                lk = (req.core, req.bank)
                loads[lk] = loads.get(lk, 0) + 1
        self.batch_remaining = marked
        # Shortest-job-first ranking: a core's job length is its largest
        # per-bank share of the batch; smaller ranks higher.  Cores with
        # nothing batched rank last, in index order.
        per_core_max = {}
        per_core_total = {}
        for (core, _bank), n in loads.items():
            if n > per_core_max.get(core, 0):
                per_core_max[core] = n
            per_core_total[core] = per_core_total.get(core, 0) + n
        order = sorted(
            range(len(self.rank_of)),
            key=lambda c: (per_core_max.get(c, 0) == 0, per_core_max.get(c, 0),
                           per_core_total.get(c, 0), c),
        )
        for pos, core in enumerate(order):
            self.rank_of[core] = pos

    def select_parbs(self, now):
        if self.batch_remaining == 0 and (self.read_q or self.write_q):
            self.form_batch()
            self.batch_formed_at = now
        q = self.active_queue()
        banks = self.banks
        rank_of = self.rank_of
        best = None
        best_key = None
        for req in q:
            bank = banks[req.bank]
            kind = self.next_cmd_kind(req, bank)
            is_hit = kind == READ or kind == WRITE
            key = (not req.batched, rank_of[req.core], not is_hit)
            if best_key is not None and key >= best_key:
                continue
            if self.cmd_ready(kind, bank, req.is_write, now):
                best = (kind, req)
                best_key = key
                if not key[0] and key[1] == 0 and not key[2]:
                    break
        return best

    # -- ATLAS ----------------------------------------------------------

    def atlas_flush(self, now):
        dt = now - self.ats_last_flush
        if dt:
            ats = self.ats
            cbc = self.core_bank_count
            for c in range(len(ats)):
                if cbc[c]:
                    ats[c] += cbc[c] * dt
        self.ats_last_flush = now

    def atlas_service_start(self, req):
        bank = self.banks[req.bank]
        d = bank.serving_cores
        n = d.get(req.core, 0)
        d[req.core] = n + 1
        if n == 0:
            self.atlas_flush(self.eng.now)
            self.core_bank_count[req.core] += 1

    def atlas_service_end(self, req):
        bank = self.banks[req.bank]
        d = bank.serving_cores
        n = d[req.core] - 1
        if n:
            d[req.core] = n
        else:
            del d[req.core]
            self.atlas_flush(self.eng.now)
            self.core_bank_count[req.core] -= 1

    def atlas_quantum_rollover(self, boundary):
        self.atlas_flush(boundary)
        a = self.atlas_alpha if self.atlas_alpha_current else 1.0 - self.atlas_alpha
        ts = self.total_service
        ats = self.ats
        for c in range(len(ats)):
            ts[c] = a * ats[c] + (1.0 - a) * ts[c]
            ats[c] = 0
        order = sorted(range(len(ts)), key=lambda c: (ts[c], c))
        changed = False
        for pos, core in enumerate(order):
            if self.rank_of[core] != pos:
                changed = True
            self.rank_of[core] = pos
        if changed:
            self.eng.atlas_rank_changes.append((boundary, self.idx))
        self.next_quantum = boundary + self.atlas_quantum

    def oldest_overall(self):
        rq, wq = self.read_q, self.write_q
        if rq and wq:
            r, w = rq[0], wq[0]
            return r if (r.arrival, r.rid) <= (w.arrival, w.rid) else w
        if rq:
            return rq[0]
        if wq:
            return wq[0]
        return None

    def select_atlas(self, now):
        oldest = self.oldest_overall()
        if oldest is not None and now - oldest.arrival > self.atlas_starve:
            # Starved: commit to the oldest request until it is served.
            bank = self.banks[oldest.bank]
            kind = self.next_cmd_kind(oldest, bank)
            if self.cmd_ready(kind, bank, oldest.is_write, now):
                return kind, oldest
            return None
        q = self.active_queue()
        banks = self.banks
        rank_of = self.rank_of
        best = None
        best_key = None
        for req in q:
            bank = banks[req.bank]
            kind = self.next_cmd_kind(req, bank)
            is_hit = kind == READ or kind == WRITE
            key = (rank_of[req.core], not is_hit)
            if best_key is not None and key >= best_key:
                continue
            if self.cmd_ready(kind, bank, req.is_write, now):
                best = (kind, req)
                best_key = key
                if key[0] == 0 and not key[1]:
                    break
        return best

    # -- RL ---------------------------------------------------------------

    def rl_bucket_of(self, n):
        b = n // self.rl_bucket
        return b if b < self.rl_max_bucket else self.rl_max_bucket

    def rl_state_base(self):
        rq = self.rl_bucket_of(len(self.read_q))
        wq = self.rl_bucket_of(len(self.write_q))
        hits = self.rl_bucket_of(self.pending_hits_total)
        return (rq * 16 + wq) * 16 + hits

    def rl_key(self, base, bank_active, action_code):
        return (base * 2 + bank_active) * 6 + action_code

    def rl_candidates(self, now):
        """Legal-now commands, reduced to the oldest per (bank, kind, dir)."""
        out = []
        seen = set()
        banks = self.banks
        for req in self.merged_age_order():
            bank = banks[req.bank]
            kind = self.next_cmd_kind(req, bank)
            k = (req.bank, kind, req.is_write)
            if k in seen:
                continue
            seen.add(k)
            if self.cmd_ready(kind, bank, req.is_write, now):
                out.append((kind, req))
        return out

    def select_rl(self, now):
        forced = None
        oldest = self.oldest_overall()
        if oldest is not None and now - oldest.arrival > self.rl_starve:
            bank = self.banks[oldest.bank]
            kind = self.next_cmd_kind(oldest, bank)
            if self.cmd_ready(kind, bank, oldest.is_write, now):
                forced = (kind, oldest)
            else:
                return None  # hold the channel until the starved command is legal
        if forced is not None:
            cands = [forced]
        else:
            cands = self.rl_candidates(now)
            if not cands:
                return None  # empty action set: not a decision epoch
        base = self.rl_state_base()
        rl = self.rl
        if forced is not None:
            kind, req = forced
            chosen = forced
            chosen_key = self.rl_key(base, 1 if self.banks[req.bank].active else 0, kind)
        elif self.rl_epsilon > 0.0 and self.rl_rng.random() < self.rl_epsilon:
            pick = self.rl_rng.randrange(len(cands) + 1)
            if pick == len(cands):
                chosen = None
                chosen_key = self.rl_key(base, 0, NOP)
            else:
                chosen = cands[pick]
                kind, req = chosen
                chosen_key = self.rl_key(base, 1 if self.banks[req.bank].active else 0, kind)
        else:
            # Greedy: highest Q; ties by fixed action order, then age.
            chosen = None
            chosen_key = self.rl_key(base, 0, NOP)
            best_q = rl.qmean(chosen_key)
            best_tie = (ACTION_ORDER[NOP], 0, 0)
            for cand in cands:
                kind, req = cand
                key = self.rl_key(base, 1 if self.banks[req.bank].active else 0, kind)
                q = rl.qmean(key)
                tie = (ACTION_ORDER[kind], req.arrival, req.rid)
                if q > best_q or (q == best_q and tie < best_tie):
                    best_q = q
                    chosen = cand
                    chosen_key = key
                    best_tie = tie
        next_q = rl.qmean(chosen_key)
        if self.rl_prev_key >= 0 and not self.rl_frozen:
            rl.sarsa(self.rl_prev_key, self.rl_prev_reward, next_q)
        self.rl_prev_key = chosen_key
        self.rl_prev_reward = 1.0 if chosen is not None and (chosen[0] == READ or chosen[0] == WRITE) else 0.0
        return chosen

    # ------------------------------------------------------------------
    # One controller decision per cycle.

    def tick(self, now):
        """Issue at most one command; True when work remains pending."""
        if self.sched == S_ATLAS:
            while now >= self.next_quantum:
                self.atlas_quantum_rollover(self.next_quantum)
        self.update_phase()
        sel = self.select(now)
        if sel is not None and (sel[0] == READ or sel[0] == WRITE):
            self.attribute(sel[1], sel[0])
            self.issue_column(sel[1], now)
            return True
        pre_bank, any_due = self.due_precharge(now)
        if pre_bank is not None:
            # A policy precharge with requests waiting on the bank is that
            # request's first service step: classify it as a conflict.
            victim = None
            if pre_bank.pending_total:
                for req in self.merged_age_order():
                    if req.bank == pre_bank.idx:
                        victim = req
                        break
            if victim is not None:
                self.attribute(victim, PRECHARGE)
                self.issue_precharge(pre_bank, now, victim.rid)
            else:
                self.issue_precharge(pre_bank, now)
            return True
        if sel is not None:
            kind, req = sel
            bank = self.banks[req.bank]
            self.attribute(req, kind)
            if kind == ACTIVATE:
                self.issue_activate(bank, req.row, now, req.rid)
            else:
                self.issue_precharge(bank, now, req.rid)
            return True
        return any_due

    def attribute(self, req, kind):
        if req.first_cmd == -1:
            req.first_cmd = kind
            if self.sched == S_ATLAS:
                self.atlas_service_start(req)


class Engine:
    """Deterministic whole-system simulator for one configuration."""

    def __init__(self, cfg, trace_streams=None, record_commands=False,
                 record_events=False, max_cycles=0):
        from . import addressing  # pure helper; the hot path is inlined below

        self.cfg = cfg
        g = cfg.geometry
        self.block_bytes = g.cache_block_bytes
        self.now = 0
        self.inflight_seq = 0
        self.in_window = False
        self.window_start = -1
        self.window_end = -1
        self.retired_total = 0
        self.max_cycles = max_cycles
        self.atlas_rank_changes = []
        self.cmd_log = [] if record_commands else None
        self.event_log = [] if record_events else None

        # Address decode plan: (token, shift, mask) per field.
        widths = addressing.field_widths(g)
        self.block_shift = g.cache_block_bytes.bit_length() - 1
        plan = []
        shift = 0
        for token in reversed(addressing.parse_scheme(cfg.mapping)):
            w = widths[token]
            plan.append((token, shift, (1 << w) - 1))
            shift += w
        self.decode_plan = plan
        self.capacity = addressing.total_capacity_bytes(g)

        num, den = cfg.cpu.insts_per_mem_cycle()
        self.units_num = num
        self.units_den = den

        self.channels = [Channel(i, self) for i in range(g.channels)]
        self.banks_per_rank = g.banks_per_rank

        w = cfg.workload
        self.synthetic = trace_streams is None
        self.mean_gap = 1000.0 / w.mpki
        self.read_fraction = w.read_fraction
        self.row_locality = w.row_locality
        self.blocks_per_region = g.blocks_per_row
        total_regions = self.capacity // g.row_buffer_bytes
        ws = int(total_regions * w.working_set_fraction)
        self.num_regions = ws if ws > 0 else 1
        self.row_bytes = g.row_buffer_bytes

        self.cores = []
        for i in range(w.cores):
            rng = Random(f"{cfg.run.seed}/core{i}")
            core = Core(i, rng, cfg.cpu.write_buffer_credits, num)
            if trace_streams is not None:
                core.trace = trace_streams[i] if i < len(trace_streams) else []
            self.cores.append(core)
        self.max_outstanding = cfg.cpu.max_outstanding_reads

        self.core_heap = []
        self.stalled = set()
        self.rid_seq = 0
        self.units_at_start = [0] * w.cores
        self.units_at_end = [0] * w.cores
        self.elapsed_cycles = 0

        for core in self.cores:
            self._load_next_record(core)
            if core.pending is not None:
                self._schedule_issue(core)
            else:
                core.state = C_DONE

    # ------------------------------------------------------------------
    # Address decoding with the precompiled plan.

    def decode(self, addr):
        a = addr >> self.block_shift
        ch = rank = bank = row = col = 0
        for token, shift, mask in self.decode_plan:
            v = (a >> shift) & mask
            if token == "Ch":
                ch = v
            elif token == "Ra":
                rank = v
            elif token == "Ba":
                bank = v
            elif token == "Ro":
                row = v
            else:
                col = v
        return ch, rank, bank, row, col

    # ------------------------------------------------------------------
    # Workload streams.

    def _synth_record(self, core):
        rng = core.rng
        gap = int(rng.expovariate(1.0 / self.mean_gap) + 0.5)
        is_write = rng.random() >= self.read_fraction
        if core.have_region and rng.random() < self.row_locality:
            core.cur_block = (core.cur_block + 1) % self.blocks_per_region
        else:
            core.region_base = rng.randrange(self.num_regions) * self.row_bytes
            core.cur_block = rng.randrange(self.blocks_per_region)
            core.have_region = True
        addr = core.region_base + core.cur_block * self.block_bytes
        return is_write, addr, gap

    def _load_next_record(self, core):
        """Advance the stream: set core.pending, extend units_needed."""
        if self.synthetic:
            rec = self._synth_record(core)
        else:
            if core.trace_pos >= len(core.trace):
                core.pending = None
                return
            rec = core.trace[core.trace_pos]
            core.trace_pos += 1
        is_write, addr, gap = rec
        core.units_needed += gap * self.units_den
        core.pending = (is_write, addr)
        core.pending_created = -1

    def _schedule_issue(self, core):
        """Queue the heap event for when the current gap is consumed."""
        num = self.units_num
        need = core.units_needed - core.stretch_base
        if need <= 0:
            t = core.stretch_start
        else:
            t = core.stretch_start + (need + num - 1) // num - 1
        if t < self.now:
            t = self.now
        core.event_time = t
        heapq.heappush(self.core_heap, (t, core.idx))

    def _attempt_issue(self, core, now):
        """Try to hand the pending record to its channel queue."""
        core.units_done = core.units_needed
        is_write, addr = core.pending
        if is_write:
            if core.credits == 0:
                core.state = C_STALLED
                self.stalled.add(core.idx)
                return
        else:
            if core.outstanding >= self.max_outstanding:
                core.state = C_BLOCKED
                return
        if core.pending_created < 0:
            core.pending_created = now
        ch_idx, rank, bank, row, col = self.decode(addr)
        chan = self.channels[ch_idx]
        if not chan.has_space(is_write):
            core.state = C_STALLED
            self.stalled.add(core.idx)
            return
        self.rid_seq += 1
        req = Request(self.rid_seq, core.idx, is_write, addr, ch_idx, rank,
                      rank * self.banks_per_rank + bank, row, col,
                      core.pending_created)
        chan.enqueue(req, now)
        if self.event_log is not None:
            self.event_log.append(("REQ", req.created, req.rid, core.idx,
                                   1 if is_write else 0, addr))
        if is_write:
            core.credits -= 1
        else:
            core.outstanding += 1
        was_waiting = core.state != C_RUNNING
        core.state = C_RUNNING
        if was_waiting:
            core.stretch_start = now
            core.stretch_base = core.units_done
        self._load_next_record(core)
        if core.pending is None:
            core.state = C_DONE
            return
        if not is_write and core.outstanding >= self.max_outstanding:
            core.state = C_BLOCKED
            return
        self._schedule_issue(core)

    def _core_resume(self, core, now):
        if core.state != C_BLOCKED:
            return
        core.state = C_RUNNING
        core.stretch_start = now
        core.stretch_base = core.units_done
        if core.pending is None:
            core.state = C_DONE
        else:
            self._schedule_issue(core)

    # ------------------------------------------------------------------

    def _retire(self, chan, req, now):
        if req.retired:
            raise RuntimeError("duplicate retirement")
        req.retired = True
        if chan.sched == S_ATLAS:
            chan.atlas_service_end(req)
        core = self.cores[req.core]
        if req.is_write:
            core.credits += 1
        else:
            core.outstanding -= 1
            self._core_resume(core, now)
        self.retired_total += 1
        if self.in_window:
            if req.is_write:
                chan.write_drained_sum += now - req.created
                chan.write_drained_count += 1
                chan.served_writes += 1
            else:
                chan.read_lat_sum += now - req.created
                chan.read_count += 1
                chan.served_reads += 1
        if self.event_log is not None:
            self.event_log.append(("RET", now, req.rid, req.created,
                                   1 if req.is_write else 0, req.core, chan.idx))
        run = self.cfg.run
        if not self.in_window and self.window_start < 0:
            if self.retired_total >= run.warmup_requests:
                self._open_window(now)
        elif self.in_window and run.measured_cycles <= 0:
            if self.retired_total >= run.warmup_requests + run.measured_requests:
                self._close_window(now)

    def _open_window(self, now):
        self.in_window = True
        self.window_start = now
        for core in self.cores:
            self.units_at_start[core.idx] = core.units_at(now)
        if self.event_log is not None:
            self.event_log.append(("WIN", now, "start"))

    def _close_window(self, now):
        self.in_window = False
        self.window_end = now
        self.elapsed_cycles = now - self.window_start
        for core in self.cores:
            self.units_at_end[core.idx] = core.units_at(now)
        if self.event_log is not None:
            self.event_log.append(("WIN", now, "end"))

    def finished(self):
        return self.window_end >= 0

    # ------------------------------------------------------------------

    def run(self):
        cfg_run = self.cfg.run
        channels = self.channels
        cores = self.cores
        heap = self.core_heap
        stalled = self.stalled
        if cfg_run.warmup_requests == 0 and self.window_start < 0:
            self._open_window(0)
        while True:
            now = self.now
            if self.max_cycles and now > self.max_cycles:
                raise LivelockError(f"no completion by cycle {now}")
            # 1. Bursts finishing by this cycle retire their requests.
            for chan in channels:
                infl = chan.inflight
                while infl and infl[0][0] <= now:
                    _end, _seq, req = heapq.heappop(infl)
                    self._retire(chan, req, now)
                    if self.finished():
                        return
            # 2. Cores whose inter-request gap is consumed issue requests;
            #    stalled cores retry in index order.
            while heap and heap[0][0] <= now:
                t, idx = heapq.heappop(heap)
                core = cores[idx]
                if core.state == C_RUNNING and core.event_time == t and core.pending is not None:
                    self._attempt_issue(core, now)
            if stalled:
                for idx in sorted(stalled):
                    core = cores[idx]
                    if core.state == C_STALLED:
                        stalled.discard(idx)
                        self._attempt_issue(core, now)
            # 3. One command per channel.
            pending_work = False
            for chan in channels:
                if chan.tick(now):
                    pending_work = True
            # 4. Time-based stats and cycle-window bookkeeping.
            if self.in_window:
                if cfg_run.measured_cycles > 0 and now - self.window_start >= cfg_run.measured_cycles:
                    self._close_window(now)
                    return
                for chan in channels:
                    chan.rq_integral += len(chan.read_q)
                    chan.wq_integral += len(chan.write_q)
            # 5. Advance time, fast-forwarding fully idle stretches.
            busy = pending_work or bool(stalled)
            if not busy:
                for chan in channels:
                    if chan.read_q or chan.write_q or chan.inflight:
                        busy = True
                        break
            if busy:
                self.now = now + 1
                continue
            if not heap:
                # Nothing in flight and nothing left to issue: end of stream.
                if self.window_start < 0:
                    self._open_window(now)
                if not self.finished():
                    self._close_window(now)
                return
            target = heap[0][0]
            if target <= now + 1:
                self.now = now + 1
                continue
            if self.in_window and cfg_run.measured_cycles > 0:
                limit = self.window_start + cfg_run.measured_cycles
                if target > limit:
                    target = limit
            for chan in channels:
                if chan.sched == S_ATLAS:
                    while chan.next_quantum <= target:
                        chan.atlas_quantum_rollover(chan.next_quantum)
            self.now = target

    # ------------------------------------------------------------------

    def instructions_in_window(self, core_idx):
        """Instructions retired inside the measurement window."""
        d = self.units_at_end[core_idx] - self.units_at_start[core_idx]
        return d / self.units_den
