"""Independent replay validator for command streams.

A deliberately naive re-check of every timing and structural rule, built on
raw command histories rather than the engine's earliest-legal-time
bookkeeping, so the two implementations cannot share a bug.  Feed it the
command log recorded by an Engine (``record_commands=True``) and it returns
a list of human-readable violations; an empty list means the stream is
clean.

Command tuples: (cycle, kind, channel, rank, bank, row, col) with bank
being the channel-global bank index.
"""

from .engine import ACTIVATE, PRECHARGE, READ, WRITE, CMD_NAMES


class _BankHist:
    def __init__(self):
        self.open_row = None
        self.acts = []       # activate cycles
        self.pres = []       # precharge cycles
        self.reads = []      # read issue cycles
        self.write_ends = [] # write data-end cycles


class _ChannelHist:
    def __init__(self, nbanks, nranks):
        self.banks = [_BankHist() for _ in range(nbanks)]
        self.rank_acts = [[] for _ in range(nranks)]
        self.rank_write_ends = [[] for _ in range(nranks)]
        self.bursts = []  # (start, end, is_write)
        self.last_cmd_cycle = -1


def validate_command_stream(cmds, cfg):
    """Check every command against the full rule list; return violations."""
    t = cfg.timing
    g = cfg.geometry
    horizon = max(t.tRC, t.tFAW, t.tWR + t.tCAS + t.burst_cycles, t.tWTR + t.tCAS + t.burst_cycles) + 4
    chans = [_ChannelHist(g.banks_per_channel, g.ranks_per_channel) for _ in range(g.channels)]
    bad = []

    def flag(cycle, ch, msg):
        bad.append(f"cycle {cycle} ch{ch}: {msg}")

    def prune(lst, cycle):
        while lst and cycle - lst[0] > horizon:
            lst.pop(0)

    for cmd in cmds:
        cycle, kind, ch, rank, bank, row, col = cmd
        hist = chans[ch]
        if cycle == hist.last_cmd_cycle:
            flag(cycle, ch, "two commands in one cycle on one channel")
        elif cycle < hist.last_cmd_cycle:
            flag(cycle, ch, "command stream not in cycle order")
        hist.last_cmd_cycle = cycle
        b = hist.banks[bank]
        racts = hist.rank_acts[rank]
        prune(b.acts, cycle)
        prune(b.pres, cycle)
        prune(b.reads, cycle)
        prune(b.write_ends, cycle)
        prune(racts, cycle)
        prune(hist.rank_write_ends[rank], cycle)

        if kind == ACTIVATE:
            if b.open_row is not None:
                flag(cycle, ch, f"ACT on active bank {bank}")
            for a in b.acts:
                if cycle - a < t.tRC:
                    flag(cycle, ch, f"ACT->ACT {cycle - a} < tRC on bank {bank}")
            for p in b.pres:
                if cycle - p < t.tRP:
                    flag(cycle, ch, f"PRE->ACT {cycle - p} < tRP on bank {bank}")
            for a in racts:
                if cycle - a < t.tRRD:
                    flag(cycle, ch, f"ACT->ACT {cycle - a} < tRRD on rank {rank}")
            recent = [a for a in racts if cycle - a < t.tFAW]
            if len(recent) >= 4:
                flag(cycle, ch, f"5th ACT within tFAW on rank {rank}")
            b.open_row = row
            b.acts.append(cycle)
            racts.append(cycle)

        elif kind == PRECHARGE:
            if b.open_row is None:
                flag(cycle, ch, f"PRE on idle bank {bank}")
            for a in b.acts:
                if cycle - a < t.tRAS:
                    flag(cycle, ch, f"ACT->PRE {cycle - a} < tRAS on bank {bank}")
            for r in b.reads:
                if cycle - r < t.tRTP:
                    flag(cycle, ch, f"RD->PRE {cycle - r} < tRTP on bank {bank}")
            for e in b.write_ends:
                if cycle - e < t.tWR:
                    flag(cycle, ch, f"WR data->PRE {cycle - e} < tWR on bank {bank}")
            b.open_row = None
            b.pres.append(cycle)

        elif kind in (READ, WRITE):
            is_write = kind == WRITE
            if b.open_row is None:
                flag(cycle, ch, f"{CMD_NAMES[kind]} on idle bank {bank}")
            elif b.open_row != row:
                flag(cycle, ch, f"{CMD_NAMES[kind]} to row {row} but row {b.open_row} open on bank {bank}")
            acts_before = [a for a in b.acts if a <= cycle]
            if acts_before and cycle - acts_before[-1] < t.tRCD:
                flag(cycle, ch, f"ACT->{CMD_NAMES[kind]} {cycle - acts_before[-1]} < tRCD on bank {bank}")
            if not is_write:
                for e in hist.rank_write_ends[rank]:
                    if cycle - e < t.tWTR:
                        flag(cycle, ch, f"WR data->RD {cycle - e} < tWTR on rank {rank}")
            start = cycle + t.tCAS
            end = start + t.burst_cycles
            prev = None
            for bs, be, bw in hist.bursts:
                if bs < end and start < be:
                    flag(cycle, ch, f"burst [{start},{end}) overlaps [{bs},{be})")
                if be <= start and (prev is None or be > prev[1]):
                    prev = (bs, be, bw)
            if prev is not None and prev[2] != is_write and start < prev[1] + t.bus_turnaround_cycles:
                flag(cycle, ch, f"bus turnaround {start - prev[1]} < {t.bus_turnaround_cycles}")
            hist.bursts.append((start, end, is_write))
            if len(hist.bursts) > 16:
                hist.bursts.pop(0)
            if is_write:
                b.write_ends.append(end)
                hist.rank_write_ends[rank].append(end)
            else:
                b.reads.append(cycle)

        else:
            flag(cycle, ch, f"unknown command kind {kind}")

    return bad
