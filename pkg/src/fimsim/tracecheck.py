"""Post-hoc command-trace validation.

Replays a recorded command trace against a DramConfig and reports every
protocol violation: bank state machine, row/column timing, rank
activation limits, channel command and data bus conflicts, refresh
lockout, and the in-bank operation discipline (internal accesses only
on a latched data row, spaced tCCD_L, eight per trigger, finishing
inside the tWR + tRP + tRCD gap behind the triggering write).

This checker shares nothing with the scheduler except the config; it
rebuilds all state from the trace alone.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dram import (
    ACT, PRE, WR_OFFSETBUF, WR_DATABUF, RD_DATABUF, DUMMY_WR, REF,
    INT_RD, INT_WR, COLUMN_KINDS, READ_KINDS, DramConfig,
)

__all__ = ["Violation", "TraceChecker", "validate_trace",
           "write_trace", "read_trace"]

_NEG = -(10**12)


@dataclass
class Violation:
    t_ps: int
    rule: str
    detail: str

    def __str__(self):
        return f"[{self.t_ps} ps] {self.rule}: {self.detail}"


class _Bank:
    __slots__ = (
        "open_row", "latched", "fim_pending", "act_t", "pre_t", "last_rd",
        "last_wr_end", "trigger_end", "int_times",
    )

    def __init__(self):
        self.open_row = -1
        self.latched = -1
        self.fim_pending = False
        self.act_t = _NEG
        self.pre_t = _NEG
        self.last_rd = _NEG
        self.last_wr_end = _NEG
        self.trigger_end = None
        self.int_times = []


class TraceChecker:
    def __init__(self, cfg: DramConfig, check_command_bus: bool = True):
        self.cfg = cfg
        self.check_command_bus = check_command_bus
        self.violations: list[Violation] = []

    def _flag(self, t, rule, detail):
        self.violations.append(Violation(t, rule, detail))

    def run(self, trace) -> list[Violation]:
        cfg = self.cfg
        txs = sorted(trace, key=lambda tx: tx.t_ps)
        banks: dict = {}
        rank_acts: dict = {}
        rank_ref: dict = {}
        ch_cmd_ticks: dict = {}
        ch_bus: dict = {}
        group_col: dict = {}
        ch_col: dict = {}

        def bank_of(tx):
            key = (tx.channel, tx.rank, tx.bank)
            b = banks.get(key)
            if b is None:
                b = banks[key] = _Bank()
            return b

        for tx in txs:
            t = tx.t_ps
            kind = tx.kind
            rank_key = (tx.channel, tx.rank)

            if kind == REF:
                for (c, r, _), b in banks.items():
                    if c == tx.channel and r == tx.rank:
                        b.open_row = -1
                        b.latched = -1
                        b.pre_t = max(b.pre_t, t)
                rank_ref[rank_key] = (t, t + cfg.rfc_ps)
                continue

            if kind in (INT_RD, INT_WR):
                b = bank_of(tx)
                if b.trigger_end is None:
                    self._flag(t, "fim-internal", "internal access without a trigger")
                    continue
                if tx.row != b.latched:
                    self._flag(t, "fim-latch",
                               f"internal access on row {tx.row} but latched row is {b.latched}")
                if b.int_times and t - b.int_times[-1] < cfg.ccd_l_ps:
                    self._flag(t, "fim-spacing",
                               f"internal accesses {t - b.int_times[-1]} ps apart < tCCD_L")
                window_end = b.trigger_end + cfg.wr_ps + cfg.rp_ps + cfg.rcd_ps
                if t > window_end:
                    self._flag(t, "fim-window",
                               f"internal access past window end {window_end} ps")
                b.int_times.append(t)
                if len(b.int_times) > 8:
                    self._flag(t, "fim-count", "more than 8 internal accesses per trigger")
                continue

            # Refresh lockout for ordinary commands.
            ref = rank_ref.get(rank_key)
            if ref and ref[0] <= t < ref[1]:
                self._flag(t, "refresh-lockout",
                           f"{kind} during refresh window ending {ref[1]} ps")

            if self.check_command_bus:
                tick = t // cfg.tck_ps
                if t % cfg.tck_ps:
                    self._flag(t, "clock", f"{kind} not aligned to tCK")
                if ch_cmd_ticks.get(tx.channel) == tick:
                    self._flag(t, "command-bus",
                               f"two commands in one cycle on channel {tx.channel}")
                ch_cmd_ticks[tx.channel] = tick

            b = bank_of(tx)
            if kind == ACT:
                if b.open_row != -1:
                    self._flag(t, "bank-state", "ACT while a row is open")
                if t - b.pre_t < cfg.rp_ps:
                    self._flag(t, "tRP", f"ACT {t - b.pre_t} ps after PRE < tRP")
                acts = rank_acts.setdefault(rank_key, [])
                if acts and t - acts[-1] < cfg.rrd_ps:
                    self._flag(t, "tRRD", f"ACT {t - acts[-1]} ps after rank ACT < tRRD")
                if len(acts) >= 4 and t - acts[-4] < cfg.faw_ps:
                    self._flag(t, "tFAW", "5th ACT inside the tFAW window")
                acts.append(t)
                if len(acts) > 8:
                    del acts[:4]
                b.open_row = tx.row
                b.act_t = t
                if tx.row not in cfg.virtual_rows:
                    b.latched = tx.row
                    b.fim_pending = False
            elif kind == PRE:
                if b.open_row == -1:
                    self._flag(t, "bank-state", "PRE on a closed bank")
                if t - b.act_t < cfg.ras_ps:
                    self._flag(t, "tRAS", f"PRE {t - b.act_t} ps after ACT < tRAS")
                if t - b.last_rd < cfg.rtp_ps:
                    self._flag(t, "tRTP", f"PRE {t - b.last_rd} ps after RD < tRTP")
                if t - b.last_wr_end < cfg.wr_ps:
                    self._flag(t, "tWR", f"PRE {t - b.last_wr_end} ps after WR data < tWR")
                if b.open_row not in cfg.virtual_rows and not b.fim_pending:
                    b.latched = -1
                b.open_row = -1
                b.pre_t = t
            elif kind in COLUMN_KINDS:
                if b.open_row == -1:
                    self._flag(t, "bank-state", f"{kind} on a closed bank")
                if t - b.act_t < cfg.rcd_ps:
                    self._flag(t, "tRCD", f"{kind} {t - b.act_t} ps after ACT < tRCD")
                last_ch = ch_col.get(tx.channel, _NEG)
                if t - last_ch < cfg.ccd_s_ps:
                    self._flag(t, "tCCD_S", f"{kind} {t - last_ch} ps after column command")
                gkey = (tx.channel, tx.rank,
                        tx.bank // (cfg.banks_per_rank // cfg.bank_groups))
                last_g = group_col.get(gkey, _NEG)
                if t - last_g < cfg.ccd_l_ps:
                    self._flag(t, "tCCD_L", f"{kind} {t - last_g} ps within bank group")
                ch_col[tx.channel] = t
                group_col[gkey] = t
                # Data bus occupancy.
                bus = ch_bus.get(tx.channel)
                if bus is not None and t < bus:
                    self._flag(t, "data-bus", f"burst overlaps previous ending {bus} ps")
                ch_bus[tx.channel] = t + cfg.burst_ps
                if kind in READ_KINDS:
                    b.last_rd = t
                else:
                    b.last_wr_end = t + cfg.burst_ps
                # In-bank operation discipline.
                if kind in (WR_OFFSETBUF, WR_DATABUF):
                    if b.open_row in cfg.virtual_rows:
                        self._flag(t, "fim-shape", f"{kind} with a virtual row open")
                    self._finish_dance(b, t)
                    b.trigger_end = t + cfg.burst_ps
                    b.fim_pending = True
                elif kind in (RD_DATABUF, DUMMY_WR):
                    if b.open_row not in cfg.virtual_rows:
                        self._flag(t, "fim-shape", f"{kind} without a virtual row open")
                    b.fim_pending = False
            else:
                self._flag(t, "unknown", f"unrecognized command {kind}")

        for b in banks.values():
            self._finish_dance(b, None)
        return self.violations

    def _finish_dance(self, b: _Bank, t):
        """Close out a completed internal sequence before a new trigger."""
        if b.trigger_end is None:
            return
        if b.int_times and len(b.int_times) != 8:
            self._flag(t if t is not None else b.int_times[-1], "fim-count",
                       f"{len(b.int_times)} internal accesses, expected 8")
        if b.int_times or t is None:
            b.trigger_end = None
        b.int_times = []


def validate_trace(cfg: DramConfig, trace) -> list[Violation]:
    return TraceChecker(cfg).run(trace)


def write_trace(path, trace) -> None:
    """Write one 'cycle kind channel rank bank row col' line per command.

    cycle is the issue time in picoseconds; row and col are -1 where a
    command carries no such field.
    """
    with open(path, "w", encoding="utf-8") as f:
        for tx in trace:
            f.write(f"{tx.t_ps} {tx.kind} {tx.channel} {tx.rank} "
                    f"{tx.bank} {tx.row} {tx.col}\n")


def read_trace(path) -> list:
    from .dram import BusTransaction

    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 7:
                raise ValueError(
                    f"{path}: line {lineno}: expected 7 fields "
                    f"'cycle kind channel rank bank row col', got {line!r}")
            try:
                t = int(parts[0])
                ch, rank, bank, row, col = (int(x) for x in parts[2:])
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: non-integer field in {line!r}"
                ) from None
            out.append(BusTransaction(t, parts[1], ch, rank, bank, row, col))
    return out
