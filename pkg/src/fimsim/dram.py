"""DDR4 memory system with in-bank random scatter/gather.

Timing model: integer picoseconds, commands quantized to the DRAM clock.
The controller is per-bank FR-FCFS (row hits first, then oldest) with
open-page policy.  Scatter/gather operations are driven over standard
commands through two reserved virtual rows per bank: writing the packed
column offsets to the offset-buffer region of one virtual row triggers
the in-bank operation, and the precharge/activate pair toward the other
virtual row is an internal no-op whose tWR + tRP + tRCD delay hides the
eight internal column accesses (8 x tCCD_L).  The internally latched
data row survives the virtual-row traffic.

Data bursts are modeled as occupying the bus at command issue (CAS
latency folded into pipeline depth); all relative timing and bandwidth
accounting is unaffected by that constant.
"""

from __future__ import annotations

from heapq import heappush, heappop
from dataclasses import dataclass, field, replace
from typing import Optional

__all__ = [
    "SCATTER_PAD_OFFSET",
    "DramConfig",
    "AddressMap",
    "BankState",
    "FimOp",
    "BusTransaction",
    "timing_check",
    "translate_virtual",
    "issue_fim_gather",
    "issue_fim_scatter",
    "MemoryImage",
    "WorkItem",
    "DramEngine",
]

SCATTER_PAD_OFFSET = 0xFFFF

# Command kinds.
ACT = "ACT"
PRE = "PRE"
RD = "RD"
WR = "WR"
WR_OFFSETBUF = "WR_OFFSETBUF"
WR_DATABUF = "WR_DATABUF"
RD_DATABUF = "RD_DATABUF"
DUMMY_WR = "DUMMY_WR"
REF = "REF"
INT_RD = "INT_RD"
INT_WR = "INT_WR"

COLUMN_KINDS = frozenset((RD, WR, WR_OFFSETBUF, WR_DATABUF, RD_DATABUF, DUMMY_WR))
READ_KINDS = frozenset((RD, RD_DATABUF))
WRITE_KINDS = frozenset((WR, WR_OFFSETBUF, WR_DATABUF, DUMMY_WR))
INTERNAL_KINDS = frozenset((INT_RD, INT_WR))


@dataclass
class DramConfig:
    """Geometry plus timing; timings are in nCK unless suffixed _ns."""

    tck_ns: float = 0.83
    t_rcd: float = 13.32 / 0.83
    t_rp: float = 13.32 / 0.83
    t_ras: float = 39.0
    t_wr: float = 15.0 / 0.83
    t_ccd_l: float = 6.0
    t_ccd_s: float = 4.0
    t_burst: float = 4.0
    t_rrd: float = 6.0
    t_faw: float = 32.0
    t_rtp: float = 9.0
    t_refi_ns: float = 7800.0
    t_rfc_ns: float = 350.0
    channels: int = 1
    ranks: int = 4
    banks_per_rank: int = 16
    bank_groups: int = 4
    rows_per_bank: int = 8192
    row_bytes: int = 8192
    burst_bytes: int = 64
    device_width: int = 16
    offset_bits: int = 16
    fim_enabled: bool = True

    def __post_init__(self):
        for name in ("t_rcd", "t_rp", "t_ras", "t_wr", "t_ccd_l", "t_ccd_s",
                     "t_burst", "t_rrd", "t_faw", "t_rtp"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("channels", "ranks"):
            v = getattr(self, name)
            if v <= 0 or v & (v - 1):
                raise ValueError(f"{name} must be a power of two, got {v}")
        if self.device_width not in (4, 8, 16):
            raise ValueError(f"device_width must be 4, 8 or 16, got {self.device_width}")
        if self.rows_per_bank < 4:
            raise ValueError("need at least 4 rows (2 data + 2 virtual)")
        tck_ps = self.tck_ns * 1000.0
        self.tck_ps = round(tck_ps)
        self.rcd_ps = round(self.t_rcd * tck_ps)
        self.rp_ps = round(self.t_rp * tck_ps)
        self.ras_ps = round(self.t_ras * tck_ps)
        self.wr_ps = round(self.t_wr * tck_ps)
        self.ccd_l_ps = round(self.t_ccd_l * tck_ps)
        self.ccd_s_ps = round(self.t_ccd_s * tck_ps)
        self.burst_ps = round(self.t_burst * tck_ps)
        self.rrd_ps = round(self.t_rrd * tck_ps)
        self.faw_ps = round(self.t_faw * tck_ps)
        self.rtp_ps = round(self.t_rtp * tck_ps)
        self.refi_ps = round(self.t_refi_ns * 1000.0)
        self.rfc_ps = round(self.t_rfc_ns * 1000.0)
        self.row_words = self.row_bytes // 8
        self.words_per_burst = self.burst_bytes // 8
        # Two reserved rows per bank carry the buffer mapping.
        self.virtual_rows = (self.rows_per_bank - 2, self.rows_per_bank - 1)
        self.data_rows = self.rows_per_bank - 2
        self.n_chips = 64 // self.device_width

    @classmethod
    def ddr4_2400r(cls, **overrides) -> "DramConfig":
        return cls(**overrides)

    def offset_bursts(self) -> int:
        """Bus bursts needed to deliver 8 packed offsets to every chip.

        Offsets are duplicated across the n chips of the rank, so each
        chip must receive all 8 x offset_bits bits through its own
        device_width lanes (8 beats per burst).
        """
        bits_per_chip_per_burst = self.device_width * 8
        return -(-8 * self.offset_bits // bits_per_chip_per_burst)

    def gather_window_ns(self) -> float:
        return (self.wr_ps + self.rp_ps + self.rcd_ps) / 1000.0

    def internal_span_ns(self) -> float:
        return 8 * self.ccd_l_ps / 1000.0


def timing_check(cfg: DramConfig) -> tuple[DramConfig, dict]:
    """Ensure the virtual-row gap covers the eight internal accesses.

    The in-bank operation needs 8 x tCCD_L between the triggering write
    and the next column command; the controller-visible gap is
    tWR + tRP + tRCD.  If the gap is short, tWR is raised by exactly the
    deficit (the smallest legal adjustment).
    """
    internal = 8 * cfg.ccd_l_ps
    window = cfg.wr_ps + cfg.rp_ps + cfg.rcd_ps
    deficit = internal - window
    if deficit <= 0:
        return cfg, {"adjusted": False, "window_ps": window, "internal_ps": internal}
    new_wr = cfg.t_wr + deficit / (cfg.tck_ns * 1000.0)
    adjusted = replace(cfg, t_wr=new_wr)
    return adjusted, {
        "adjusted": True,
        "window_ps": adjusted.wr_ps + adjusted.rp_ps + adjusted.rcd_ps,
        "internal_ps": internal,
    }


class AddressMap:
    """Physical address split with 64B channel/bank/rank interleave.

    Low to high: byte(3) | word-in-burst(3) | channel | bank(4) |
    rank | burst-in-row(7) | row.  Consecutive 64B blocks rotate
    through channels then banks then ranks, and one bank's blocks stay
    inside a single row for a channels*ranks*banks*row_bytes span.
    """

    def __init__(self, cfg: DramConfig):
        self.cfg = cfg
        self.ch_bits = cfg.channels.bit_length() - 1
        self.rank_bits = cfg.ranks.bit_length() - 1
        self.bank_bits = cfg.banks_per_rank.bit_length() - 1
        self.burst_bits = (cfg.row_bytes // cfg.burst_bytes).bit_length() - 1
        self.capacity_bytes = (
            cfg.channels * cfg.ranks * cfg.banks_per_rank
            * cfg.data_rows * cfg.row_bytes
        )
        self.banks_total = cfg.channels * cfg.ranks * cfg.banks_per_rank

    def decode(self, addr: int) -> tuple[int, int, int, int, int]:
        """addr -> (channel, rank, bank, row, word-in-row)."""
        if not 0 <= addr < self.capacity_bytes:
            raise ValueError(f"address {addr:#x} outside capacity {self.capacity_bytes:#x}")
        x = addr >> 3
        word = x & 7
        x >>= 3
        ch = x & (self.cfg.channels - 1)
        x >>= self.ch_bits
        bank = x & (self.cfg.banks_per_rank - 1)
        x >>= self.bank_bits
        rank = x & (self.cfg.ranks - 1)
        x >>= self.rank_bits
        burst = x & ((1 << self.burst_bits) - 1)
        x >>= self.burst_bits
        row = x
        return ch, rank, bank, row, (burst << 3) | word

    def encode(self, ch: int, rank: int, bank: int, row: int, word: int) -> int:
        burst, w = word >> 3, word & 7
        x = row
        x = (x << self.burst_bits) | burst
        x = (x << self.rank_bits) | rank
        x = (x << self.bank_bits) | bank
        x = (x << self.ch_bits) | ch
        return ((x << 3) | w) << 3

    def row_key(self, addr: int) -> tuple[int, int, int, int]:
        ch, rank, bank, row, _ = self.decode(addr)
        return ch, rank, bank, row

    def bank_gid(self, ch: int, rank: int, bank: int) -> int:
        return (ch * self.cfg.ranks + rank) * self.cfg.banks_per_rank + bank


@dataclass
class BankState:
    """Controller-visible open row plus the internally latched data row.

    While a collected operation is pending (offset/data buffers loaded,
    internal accesses not yet drained) the bank absorbs precharges so
    the data row stays latched under the virtual-row traffic.
    """

    ctrl_row: int = -1
    latched_row: int = -1
    fim_pending: bool = False


def translate_virtual(cfg: DramConfig, bank: BankState, kind: str, row: int = -1) -> str:
    """In-bank controller view of one command; returns the internal effect.

    Activate/precharge traffic on the two virtual rows, or while an
    operation is pending, leaves the latched data row untouched; writes
    into the buffer region trigger the collected operation.
    """
    if kind == ACT:
        bank.ctrl_row = row
        if row in cfg.virtual_rows:
            return "noop"
        bank.latched_row = row
        bank.fim_pending = False
        return "activate"
    if kind == PRE:
        absorbed = bank.ctrl_row in cfg.virtual_rows or bank.fim_pending
        bank.ctrl_row = -1
        if absorbed:
            return "noop"
        bank.latched_row = -1
        return "precharge"
    if kind == WR_OFFSETBUF:
        bank.fim_pending = True
        return "load_offsets"
    if kind == WR_DATABUF:
        bank.fim_pending = True
        return "load_data"
    if kind == RD_DATABUF:
        bank.fim_pending = False
        return "drain_data"
    if kind == DUMMY_WR:
        bank.fim_pending = False
        return "noop"
    return "column"


@dataclass
class FimOp:
    """One collected in-bank operation on a single (already open) row."""

    kind: str  # "gather" | "scatter"
    row_key: tuple
    offsets: list  # always offsets_per_group long after padding
    n_real: int = 8
    data: Optional[list] = None  # scatter payload words
    consumers: Optional[dict] = None
    result: Optional[list] = None  # gather output words (functional mode)


@dataclass
class BusTransaction:
    t_ps: int
    kind: str
    channel: int
    rank: int
    bank: int
    row: int = -1
    col: int = -1


def issue_fim_gather(cfg: DramConfig, op: FimOp) -> tuple[list, list]:
    """Command schedule of one gather, assuming the data row is open.

    Returns (commands, internal): command kinds in issue order and the
    eight internal column reads.  Off-chip data-bus bursts are
    offset_bursts (one for x16) plus the one data-buffer read.
    """
    commands = [WR_OFFSETBUF] * cfg.offset_bursts() + [PRE, ACT, RD_DATABUF]
    internal = [INT_RD] * 8
    return commands, internal


def issue_fim_scatter(cfg: DramConfig, op: FimOp, follow_up: bool = True) -> tuple[list, list]:
    """Command schedule of one scatter, assuming the data row is open.

    With no follow-up command queued for the bank, a dummy write keeps
    the activation delay that shields the internal writes.
    """
    commands = [WR_OFFSETBUF] * cfg.offset_bursts() + [WR_DATABUF, PRE, ACT]
    if not follow_up:
        commands.append(DUMMY_WR)
    internal = [INT_WR] * 8
    return commands, internal


class MemoryImage:
    """Word-addressable functional memory, keyed by (bank, row, word)."""

    def __init__(self, cfg: DramConfig):
        self.cfg = cfg
        self.words: dict = {}

    def _key(self, gid: int, row: int, word: int) -> int:
        return (gid * self.cfg.rows_per_bank + row) * self.cfg.row_words + word

    def read_word(self, gid: int, row: int, word: int) -> int:
        return self.words.get(self._key(gid, row, word), 0)

    def write_word(self, gid: int, row: int, word: int, value: int) -> None:
        self.words[self._key(gid, row, word)] = value

    def read_burst(self, gid: int, row: int, word: int) -> list:
        return [self.read_word(gid, row, word + i) for i in range(self.cfg.words_per_burst)]

    def write_burst(self, gid: int, row: int, word: int, values) -> None:
        for i, v in enumerate(values):
            self.write_word(gid, row, word + i, v)

    def gather(self, gid: int, row: int, offsets) -> list:
        return [self.read_word(gid, row, o) for o in offsets]

    def scatter(self, gid: int, row: int, offsets, data) -> None:
        for o, v in zip(offsets, data):
            if o == SCATTER_PAD_OFFSET:
                continue
            self.write_word(gid, row, o, v)


@dataclass
class WorkItem:
    """One memory-controller work unit.

    kind "rw": a single 64B burst at (gid, row, word).  kind "fim": the
    attached FimOp.  stream tags the traffic class for accounting.
    """

    stream: str
    kind: str
    gid: int
    row: int
    word: int = 0
    write: bool = False
    op: Optional[FimOp] = None
    payload: Optional[list] = None


# Integer codes keep the scheduler's inner loop on list indexing.
K_ACT, K_PRE, K_RD, K_WR, K_WROFF, K_WRDAT, K_RDDAT, K_DUMMY, K_MAYBE = range(9)
_KIND_NAMES = (ACT, PRE, RD, WR, WR_OFFSETBUF, WR_DATABUF, RD_DATABUF, DUMMY_WR)
_IS_READ = (False, False, True, False, False, False, True, False)
_RW_CODE = (K_RD, K_WR)


class DramEngine:
    """Event-driven command scheduler over one DramConfig.

    Per-bank FR-FCFS with open-page policy.  Bank and rank timing gates
    order the per-bank wakeup heap; channel-level resources (one
    command slot per tCK, data-bus bursts spaced tCCD) are assigned
    greedily in wakeup order.  All times are integer picoseconds.
    """

    def __init__(self, cfg: DramConfig, amap: Optional[AddressMap] = None,
                 image: Optional[MemoryImage] = None,
                 trace_sink=None, refresh: bool = True):
        self.cfg = cfg
        self.amap = amap or AddressMap(cfg)
        self.image = image
        self.trace_sink = trace_sink  # callable(BusTransaction) or list
        self.refresh_enabled = refresh
        n = self.amap.banks_total
        self.nbanks = n
        bpr = cfg.banks_per_rank
        n_ranks = cfg.channels * cfg.ranks
        groups_per_rank = cfg.bank_groups
        gsize = bpr // groups_per_rank
        self.rank_of = [g // bpr for g in range(n)]
        self.ch_of = [g // (bpr * cfg.ranks) for g in range(n)]
        self.gkey_of = [(g // bpr) * groups_per_rank + (g % bpr) // gsize
                        for g in range(n)]
        neg = -(10**9)
        self.open_row = [-1] * n
        self.latched = [-1] * n
        self.fim_pending = [False] * n
        self.virt_flip = [0] * n
        self.act_time = [neg] * n
        self.pre_time = [neg] * n
        self.last_rd_cmd = [neg] * n
        self.last_wr_end = [neg] * n
        self.queues = [[] for _ in range(n)]
        self.prog = [None] * n
        self.step = [0] * n
        self.current = [None] * n
        self.seq_of = [0] * n
        self.group_col = [neg] * (n_ranks * groups_per_rank)
        self.last_col_ch = [neg] * cfg.channels
        self.next_tick = [0] * cfg.channels
        self.rank_last_act = [neg] * n_ranks
        self.rank_act_hist = [[] for _ in range(n_ranks)]
        self.rank_ref_due = [cfg.refi_ps] * n_ranks
        self.rank_ref_until = [0] * n_ranks
        self.ref_min = cfg.refi_ps if refresh else (1 << 62)
        self.seq = 0
        self.now = 0
        self.clock = 0
        self.finish = 0
        self.stats = {
            "ACT": 0, "PRE": 0, "RD": 0, "WR": 0, "WR_OFFSETBUF": 0,
            "WR_DATABUF": 0, "RD_DATABUF": 0, "DUMMY_WR": 0, "REF": 0,
            "INT_RD": 0, "INT_WR": 0,
            "row_hits": 0, "row_misses": 0,
            "bus_bytes": 0, "internal_bytes": 0,
            "gathers": 0, "scatters": 0,
        }
        self.stream_bytes: dict = {}
        self.stream_reads: dict = {}
        self.stream_writes: dict = {}

    # -- tracing ---------------------------------------------------------

    def _emit(self, t: int, kind: str, gid: int, row: int = -1, col: int = -1):
        cfg = self.cfg
        bank = gid % cfg.banks_per_rank
        rank = (gid // cfg.banks_per_rank) % cfg.ranks
        ch = self.ch_of[gid]
        tx = BusTransaction(t, kind, ch, rank, bank, row, col)
        sink = self.trace_sink
        if callable(sink):
            sink(tx)
        else:
            sink.append(tx)

    # -- program construction --------------------------------------------

    def _build_prog(self, gid: int, item: WorkItem) -> list:
        cfg = self.cfg
        steps = []
        row = item.row
        open_row = self.open_row[gid]
        if item.kind == "rw":
            if open_row != row:
                if open_row != -1:
                    steps.append((K_PRE, 0))
                steps.append((K_ACT, row))
            else:
                self.stats["row_hits"] += 1
            steps.append((_RW_CODE[item.write], item.word))
            return steps
        # Collected in-bank operation: land on the data row, trigger
        # through the buffer writes, gap through a virtual row.
        if open_row != row:
            if open_row != -1:
                steps.append((K_PRE, 0))
            steps.append((K_ACT, row))
        for _ in range(cfg.offset_bursts()):
            steps.append((K_WROFF, 0))
        if item.op.kind == "scatter":
            steps.append((K_WRDAT, 0))
        steps.append((K_PRE, 0))
        virt = cfg.virtual_rows[self.virt_flip[gid]]
        self.virt_flip[gid] ^= 1
        steps.append((K_ACT, virt))
        if item.op.kind == "gather":
            steps.append((K_RDDAT, 0))
        else:
            steps.append((K_MAYBE, 0))
        return steps

    # -- internal completion ----------------------------------------------

    def _run_internal(self, gid: int, item: WorkItem, trigger_end: int):
        cfg = self.cfg
        op = item.op
        ccd = cfg.ccd_l_ps
        last = trigger_end + 8 * ccd
        st = self.stats
        if op.kind == "gather":
            st["INT_RD"] += 8
            st["gathers"] += 1
            if self.image is not None:
                op.result = self.image.gather(gid, item.row, op.offsets)
            name = INT_RD
        else:
            st["INT_WR"] += 8
            st["scatters"] += 1
            if self.image is not None:
                self.image.scatter(gid, item.row, op.offsets, op.data or [])
            name = INT_WR
        st["internal_bytes"] += 8 * cfg.burst_bytes
        if self.trace_sink is not None:
            t = trigger_end
            for _ in range(8):
                t += ccd
                self._emit(t, name, gid, row=item.row)
        if last > self.finish:
            self.finish = last

    # -- refresh -----------------------------------------------------------

    def _service_refresh(self):
        """Open refresh windows on every rank whose interval elapsed."""
        cfg = self.cfg
        bpr = cfg.banks_per_rank
        nxt = 1 << 62
        for rk, due in enumerate(self.rank_ref_due):
            if self.clock >= due:
                lo = rk * bpr
                busy = False
                for gid in range(lo, lo + bpr):
                    if self.prog[gid] is not None and self.step[gid] > 0:
                        busy = True
                        break
                if busy:
                    nxt = min(nxt, self.clock + cfg.tck_ps)
                    continue
                ch = self.ch_of[lo]
                start = max(due, self.clock, self.next_tick[ch] * cfg.tck_ps)
                start = -(-start // cfg.tck_ps) * cfg.tck_ps
                for gid in range(lo, lo + bpr):
                    self.open_row[gid] = -1
                    self.latched[gid] = -1
                    self.fim_pending[gid] = False
                    self.pre_time[gid] = start
                    if self.prog[gid] is not None and self.step[gid] == 0:
                        self.prog[gid] = self._build_prog(gid, self.current[gid])
                self.rank_ref_until[rk] = start + cfg.rfc_ps
                self.rank_ref_due[rk] = due + cfg.refi_ps
                self.stats["REF"] += 1
                if self.trace_sink is not None:
                    tx = BusTransaction(start, REF, ch, rk % cfg.ranks, -1, -1, -1)
                    if callable(self.trace_sink):
                        self.trace_sink(tx)
                    else:
                        self.trace_sink.append(tx)
            nxt = min(nxt, self.rank_ref_due[rk])
        self.ref_min = nxt

    # -- scheduling helpers --------------------------------------------------

    def _bank_ready(self, gid: int, code: int) -> int:
        """Earliest time bank/rank gates allow this command."""
        cfg = self.cfg
        rk = self.rank_of[gid]
        t = self.rank_ref_until[rk]
        if code == K_ACT:
            t2 = self.pre_time[gid] + cfg.rp_ps
            if t2 > t:
                t = t2
            t2 = self.rank_last_act[rk] + cfg.rrd_ps
            if t2 > t:
                t = t2
            hist = self.rank_act_hist[rk]
            if len(hist) >= 4:
                t2 = hist[-4] + cfg.faw_ps
                if t2 > t:
                    t = t2
        elif code == K_PRE:
            t2 = self.act_time[gid] + cfg.ras_ps
            if t2 > t:
                t = t2
            t2 = self.last_rd_cmd[gid] + cfg.rtp_ps
            if t2 > t:
                t = t2
            t2 = self.last_wr_end[gid] + cfg.wr_ps
            if t2 > t:
                t = t2
        else:
            t2 = self.act_time[gid] + cfg.rcd_ps
            if t2 > t:
                t = t2
        return t

    def _push(self, heap, t, gid):
        self.seq += 1
        heappush(heap, (t, self.seq, gid, self.seq_of[gid]))

    def _start_next(self, gid, heap):
        q = self.queues[gid]
        if not q:
            return
        # FR-FCFS: oldest item hitting the open row, else the oldest.
        pick = 0
        row = self.open_row[gid]
        if row != -1 and row not in self.cfg.virtual_rows:
            for i, it in enumerate(q):
                if it.row == row:
                    pick = i
                    break
        item = q.pop(pick)
        self.current[gid] = item
        prog = self._build_prog(gid, item)
        self.prog[gid] = prog
        self.step[gid] = 0
        self.seq_of[gid] += 1
        self._push(heap, max(self.now, self._bank_ready(gid, prog[0][0])), gid)

    # -- main loop -------------------------------------------------------------

    def run(self, items: list, window: int = 64, strict_order: bool = False) -> int:
        """Schedule items to completion; returns the finish time in ps.

        `window` bounds in-flight items per stream tag, or globally in
        strict_order mode (which also stops cross-stream lookahead).
        """
        if not items:
            return self.finish
        cfg = self.cfg
        tck = cfg.tck_ps
        ccd_s = cfg.ccd_s_ps
        ccd_l = cfg.ccd_l_ps
        burst = cfg.burst_ps
        burst_bytes = cfg.burst_bytes
        virtual_rows = cfg.virtual_rows
        heap: list = []
        feed_idx = 0
        in_flight: dict = {}
        pending = len(items)
        stats = self.stats
        prog_a = self.prog
        step_a = self.step
        seq_of = self.seq_of
        queues = self.queues
        open_row = self.open_row
        act_time = self.act_time
        pre_time = self.pre_time
        last_rd_cmd = self.last_rd_cmd
        last_wr_end = self.last_wr_end
        latched = self.latched
        fim_pending = self.fim_pending
        rank_of = self.rank_of
        ch_of = self.ch_of
        gkey_of = self.gkey_of
        group_col = self.group_col
        last_col_ch = self.last_col_ch
        next_tick = self.next_tick
        rank_last_act = self.rank_last_act
        rank_act_hist = self.rank_act_hist
        sink = self.trace_sink
        sb = self.stream_bytes
        sr = self.stream_reads
        sw = self.stream_writes

        def feed():
            nonlocal feed_idx
            while feed_idx < len(items):
                it = items[feed_idx]
                key = "*" if strict_order else it.stream
                if in_flight.get(key, 0) >= window:
                    return
                in_flight[key] = in_flight.get(key, 0) + 1
                feed_idx += 1
                q = queues[it.gid]
                q.append(it)
                if prog_a[it.gid] is None:
                    self._start_next(it.gid, heap)

        def finish_item(gid):
            nonlocal pending
            item = self.current[gid]
            prog_a[gid] = None
            self.current[gid] = None
            seq_of[gid] += 1
            key = "*" if strict_order else item.stream
            in_flight[key] -= 1
            pending -= 1
            feed()
            if prog_a[gid] is None:
                self._start_next(gid, heap)

        feed()
        while pending > 0:
            if not heap:
                raise RuntimeError("scheduler stalled with pending items")
            t_est, _, gid, seq = heappop(heap)
            if seq != seq_of[gid]:
                continue
            prog = prog_a[gid]
            step = step_a[gid]
            code, arg = prog[step]
            if t_est > self.now:
                self.now = t_est
            if self.clock >= self.ref_min:
                self._service_refresh()
            if code == K_MAYBE:
                if queues[gid]:
                    finish_item(gid)
                    continue
                code = K_DUMMY
            tb = self._bank_ready(gid, code)
            if tb > t_est:
                self._push(heap, tb, gid)
                continue
            ch = ch_of[gid]
            # Channel slots are granted in wakeup order.
            if code >= K_RD:
                t = last_col_ch[ch] + ccd_s
                if tb > t:
                    t = tb
                gk = gkey_of[gid]
                t2 = group_col[gk] + ccd_l
                if t2 > t:
                    t = t2
            else:
                t = tb
            tick = -(-t // tck)
            if tick < next_tick[ch]:
                tick = next_tick[ch]
            t = tick * tck
            next_tick[ch] = tick + 1
            if t > self.clock:
                # Refresh deadlines are measured against granted slot
                # times; wakeup estimates can lag far behind on long
                # row-hit streams.
                self.clock = t
            item = self.current[gid]
            if code == K_ACT:
                act_time[gid] = t
                open_row[gid] = arg
                if arg not in virtual_rows:
                    latched[gid] = arg
                    fim_pending[gid] = False
                    stats["row_misses"] += 1
                rk = rank_of[gid]
                rank_last_act[rk] = t
                hist = rank_act_hist[rk]
                hist.append(t)
                if len(hist) > 8:
                    del hist[:4]
                stats["ACT"] += 1
                if sink is not None:
                    self._emit(t, ACT, gid, row=arg)
            elif code == K_PRE:
                pre_time[gid] = t
                if open_row[gid] not in virtual_rows and not fim_pending[gid]:
                    latched[gid] = -1
                open_row[gid] = -1
                stats["PRE"] += 1
                if sink is not None:
                    self._emit(t, PRE, gid)
            else:
                end = t + burst
                last_col_ch[ch] = t
                group_col[gk] = t
                if _IS_READ[code]:
                    last_rd_cmd[gid] = t
                    sr[item.stream] = sr.get(item.stream, 0) + 1
                else:
                    last_wr_end[gid] = end
                    sw[item.stream] = sw.get(item.stream, 0) + 1
                stats["bus_bytes"] += burst_bytes
                sb[item.stream] = sb.get(item.stream, 0) + burst_bytes
                name = _KIND_NAMES[code]
                stats[name] += 1
                if sink is not None:
                    self._emit(t, name, gid, row=open_row[gid], col=arg)
                if end > self.finish:
                    self.finish = end
                if code == K_WROFF:
                    fim_pending[gid] = True
                    if prog[step + 1][0] != K_WROFF and item.op.kind == "gather":
                        self._run_internal(gid, item, end)
                elif code == K_WRDAT:
                    fim_pending[gid] = True
                    self._run_internal(gid, item, end)
                elif code == K_RDDAT or code == K_DUMMY:
                    fim_pending[gid] = False
                elif code == K_WR and self.image is not None:
                    self.image.write_burst(gid, item.row, item.word,
                                           item.payload or [0] * 8)
            step += 1
            step_a[gid] = step
            if step >= len(prog):
                finish_item(gid)
            else:
                nxt = prog[step][0]
                est = self._bank_ready(gid, K_DUMMY if nxt == K_MAYBE else nxt)
                if est <= t:
                    est = t + tck
                self._push(heap, est, gid)
        return self.finish
