"""Trace validator tests: injected violations and clean-trace checks."""

import numpy as np
import pytest

from fimsim import DramConfig, DramEngine, FimOp, WorkItem, validate_trace
from fimsim.dram import (
    ACT,
    BusTransaction,
    DUMMY_WR,
    INT_RD,
    PRE,
    RD,
    RD_DATABUF,
    REF,
    WR,
    WR_OFFSETBUF,
)
from fimsim.tracecheck import read_trace, write_trace

CFG = DramConfig.ddr4_2400r()
TCK = CFG.tck_ps


def tx(tick, kind, ch=0, rank=0, bank=0, row=-1, col=-1, t_ps=None):
    t = tick * TCK if t_ps is None else t_ps
    return BusTransaction(t, kind, ch, rank, bank, row, col)


def rules(trace, cfg=CFG):
    return {v.rule for v in validate_trace(cfg, trace)}


# -- injected timing violations ------------------------------------------------

def test_read_too_soon_after_activate():
    assert rules([tx(0, ACT, row=3), tx(16, RD, row=3, col=0)]) == {"tRCD"}


def test_activate_too_soon_after_precharge():
    trace = [tx(0, ACT, row=3), tx(40, PRE), tx(55, ACT, row=4)]
    assert rules(trace) == {"tRP"}


def test_precharge_too_soon_after_activate():
    assert rules([tx(0, ACT, row=3), tx(35, PRE)]) == {"tRAS"}


def test_precharge_too_soon_after_write():
    trace = [tx(0, ACT, row=3), tx(17, WR, row=3, col=0), tx(39, PRE)]
    assert rules(trace) == {"tWR"}


def test_cross_group_column_spacing():
    trace = [
        tx(0, ACT, rank=0, row=3),
        tx(1, ACT, rank=1, row=3),
        tx(17, RD, rank=0, row=3, col=0),
        tx(18, RD, rank=1, row=3, col=0),
    ]
    assert rules(trace) == {"tCCD_S", "data-bus"}


def test_same_group_column_spacing():
    trace = [
        tx(0, ACT, bank=0, row=3),
        tx(6, ACT, bank=1, row=3),
        tx(18, RD, bank=0, row=3, col=0),
        tx(23, RD, bank=1, row=3, col=0),
    ]
    assert rules(trace) == {"tCCD_L"}


def test_two_commands_in_one_cycle():
    trace = [tx(0, ACT, rank=0, row=3), tx(0, ACT, rank=1, row=3)]
    assert rules(trace) == {"command-bus"}


def test_command_off_the_clock_grid():
    assert rules([tx(0, ACT, row=3, t_ps=TCK // 2)]) == {"clock"}


def test_rank_activate_spacing():
    trace = [tx(0, ACT, bank=0, row=3), tx(1, ACT, bank=1, row=3)]
    assert rules(trace) == {"tRRD"}


def test_five_activates_inside_faw():
    trace = [tx(6 * i, ACT, bank=i, row=3) for i in range(5)]
    assert rules(trace) == {"tFAW"}


def test_command_during_refresh_lockout():
    trace = [tx(0, REF), tx(1, ACT, row=3)]
    assert rules(trace) == {"refresh-lockout"}


def test_data_bus_overlap_without_ccd_violation():
    cfg = DramConfig(t_ccd_s=2.0)
    trace = [
        tx(0, ACT, rank=0, row=3),
        tx(1, ACT, rank=1, row=3),
        tx(17, RD, rank=0, row=3, col=0),
        tx(19, RD, rank=1, row=3, col=0),
    ]
    assert rules(trace, cfg) == {"data-bus"}


def test_bank_state_rules():
    assert rules([tx(0, RD, row=3, col=0)]) == {"bank-state"}
    assert rules([tx(0, ACT, row=3), tx(6, ACT, row=4)]) == {"bank-state"}
    assert rules([tx(0, PRE)]) == {"bank-state"}


def test_unknown_command_kind():
    assert rules([tx(0, "NOP")]) == {"unknown"}


# -- in-bank operation discipline ----------------------------------------------

def _gather_dance(n_internal=8, spacing=None, latch_row=3, int_row=None,
                  window_slip=0):
    spacing = CFG.ccd_l_ps if spacing is None else spacing
    int_row = latch_row if int_row is None else int_row
    virt = CFG.virtual_rows[0]
    trace = [tx(0, ACT, row=latch_row), tx(17, WR_OFFSETBUF, row=latch_row, col=0)]
    start = 17 * TCK + CFG.burst_ps + spacing + window_slip
    for i in range(n_internal):
        trace.append(tx(0, INT_RD, row=int_row, t_ps=start + i * spacing))
    trace += [tx(40, PRE), tx(57, ACT, row=virt),
              tx(74, RD_DATABUF, row=virt, col=0)]
    return trace


def test_legal_gather_dance_is_clean():
    assert validate_trace(CFG, _gather_dance()) == []


def test_internal_access_without_trigger():
    assert rules([tx(0, ACT, row=3), tx(0, INT_RD, row=3, t_ps=20_000)]) \
        == {"fim-internal"}


def test_internal_access_on_wrong_row():
    assert "fim-latch" in rules(_gather_dance(int_row=5))


def test_internal_accesses_too_close():
    assert "fim-spacing" in rules(_gather_dance(spacing=CFG.ccd_l_ps - 500))


def test_too_few_internal_accesses():
    assert "fim-count" in rules(_gather_dance(n_internal=5))


def test_too_many_internal_accesses():
    assert "fim-count" in rules(_gather_dance(n_internal=9))


def test_internal_access_outside_window():
    slip = CFG.wr_ps + CFG.rp_ps + CFG.rcd_ps
    assert "fim-window" in rules(_gather_dance(window_slip=slip))


def test_buffer_commands_against_wrong_row_kind():
    virt = CFG.virtual_rows[0]
    on_virtual = [tx(0, ACT, row=virt), tx(17, WR_OFFSETBUF, row=virt, col=0)]
    assert "fim-shape" in rules(on_virtual)
    on_data = [tx(0, ACT, row=3), tx(17, RD_DATABUF, row=3, col=0)]
    assert "fim-shape" in rules(on_data)
    no_row = [tx(0, ACT, row=3), tx(17, DUMMY_WR, row=3, col=0)]
    assert "fim-shape" in rules(no_row)


# -- engine traces validate clean ------------------------------------------------

def _random_items(rng, cfg, n):
    items = []
    for _ in range(n):
        gid = int(rng.integers(0, 8))
        row = int(rng.integers(0, 6))
        pick = rng.random()
        if pick < 0.5:
            word = int(rng.integers(0, cfg.row_words // 8)) * 8
            items.append(WorkItem("t", "rw", gid, row, word=word,
                                  write=bool(rng.random() < 0.3)))
        else:
            kind = "gather" if pick < 0.8 else "scatter"
            offsets = rng.integers(0, cfg.row_words, size=8).tolist()
            data = list(range(8)) if kind == "scatter" else None
            op = FimOp(kind=kind, row_key=(0, 0, gid, row), offsets=offsets,
                       data=data)
            items.append(WorkItem("t", "fim", gid, row, op=op))
    return items


def test_random_engine_trace_has_no_violations():
    cfg = DramConfig.ddr4_2400r()
    trace = []
    engine = DramEngine(cfg, trace_sink=trace, refresh=True)
    rng = np.random.default_rng(23)
    engine.run(_random_items(rng, cfg, 600))
    assert validate_trace(cfg, trace) == []


def test_trace_round_trip(tmp_path):
    cfg = DramConfig.ddr4_2400r()
    trace = []
    engine = DramEngine(cfg, trace_sink=trace, refresh=False)
    rng = np.random.default_rng(29)
    engine.run(_random_items(rng, cfg, 60))
    path = tmp_path / "cmds.trace"
    write_trace(path, trace)
    assert read_trace(path) == trace


def test_read_trace_diagnoses_bad_lines(tmp_path):
    short = tmp_path / "short.trace"
    short.write_text("0 ACT 0 0\n")
    with pytest.raises(ValueError, match="line 1.*7 fields"):
        read_trace(short)
    bad = tmp_path / "bad.trace"
    bad.write_text("# header comment\n0 ACT 0 0 0 x 0\n")
    with pytest.raises(ValueError, match="line 2.*non-integer"):
        read_trace(bad)
