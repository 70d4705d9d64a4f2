"""Strided-read microbenchmark tests against simple counting oracles."""

import pytest

from fimsim import DramConfig
from fimsim.microbench import (
    LAYOUTS,
    _multi_row_groups,
    _single_row_groups,
    microbench_stride,
)

CFG = DramConfig(fim_enabled=True)
SMALL = 64 * 1024  # 1024 eight-word groups


def test_stride_must_be_power_of_two():
    for bad in (0, 3, -8, 12):
        with pytest.raises(ValueError, match="power of two"):
            microbench_stride(bad)


def test_layout_name_validated():
    with pytest.raises(ValueError, match="layout"):
        microbench_stride(1, layout="ring")
    assert LAYOUTS == ("single-row", "multi-row")


def test_single_row_group_geometry():
    groups = _single_row_groups(CFG, 8, 64)
    row_words = CFG.row_bytes // 8
    seen_banks = []
    for ch, rank, bank, row, offsets in groups:
        assert len(offsets) == 8
        assert offsets == [offsets[0] + 8 * i for i in range(8)]
        assert 0 <= offsets[0] and offsets[-1] < row_words
        seen_banks.append((ch, rank, bank))
    # Consecutive groups land on different banks so the two off-chip
    # bursts per gather can overlap at the short CCD.
    first = seen_banks[:4]
    assert len(set(first)) == 4
    groups_of = [bank // 4 for _, _, bank in first]
    assert len(set(groups_of)) == 4


def test_single_row_stride_too_wide():
    # 7*stride+1 words must fit in one 1024-word row.
    with pytest.raises(ValueError, match="more than one row"):
        list(_single_row_groups(CFG, 256, 4))
    assert len(list(_single_row_groups(CFG, 128, 4))) == 4


def test_multi_row_groups_straddle_boundary():
    row_words = CFG.row_bytes // 8
    for stride in (2, 4, 8):
        for _, _, _, row, offsets in _multi_row_groups(CFG, stride, 64):
            low = [o for o in offsets if o < row_words]
            high = [o for o in offsets if o >= row_words]
            assert len(low) == 4 and len(high) == 4
            assert low[0] == row_words - 4 * stride
    with pytest.raises(ValueError, match="more than two rows"):
        list(_multi_row_groups(CFG, 4096, 4))


@pytest.mark.parametrize("stride", [1, 2, 4, 8, 16])
def test_baseline_burst_count_single_row(stride):
    # A group of 8 words at the given stride touches min(stride, 8)
    # distinct 64-byte bursts in its row.
    res = microbench_stride(stride, total_bytes=SMALL, refresh=False)
    n_groups = SMALL // 8 // 8
    assert res.gathers == n_groups
    assert res.baseline_bursts == n_groups * min(stride, 8)
    assert res.fim_bursts == 2 * n_groups


@pytest.mark.parametrize("stride", [2, 4, 8])
def test_multi_row_counts(stride):
    res = microbench_stride(stride, layout="multi-row", total_bytes=SMALL,
                            refresh=False)
    n_groups = SMALL // 8 // 8
    # Each straddling group needs one gather per row.
    assert res.gathers == 2 * n_groups
    assert res.fim_bursts == 2 * res.gathers
    assert res.baseline_bursts == n_groups * min(stride, 8)


def test_speedup_is_time_ratio():
    res = microbench_stride(8, total_bytes=SMALL, refresh=False)
    assert res.speedup == pytest.approx(res.baseline_ps / res.fim_ps)
    assert res.baseline_ps > 0 and res.fim_ps > 0


def test_contiguous_reads_do_not_benefit():
    res = microbench_stride(1, total_bytes=SMALL, refresh=False)
    # Gathering eight contiguous words replaces one burst with two.
    assert res.fim_bursts == 2 * res.baseline_bursts
    assert res.speedup < 1.0


def test_result_dict_keys():
    res = microbench_stride(2, total_bytes=SMALL, refresh=False)
    d = res.to_dict()
    assert list(d) == [
        "stride", "layout", "total_bytes", "baseline_ps", "fim_ps",
        "baseline_bursts", "fim_bursts", "gathers", "speedup",
    ]
    assert d["stride"] == 2
    assert d["layout"] == "single-row"
    assert d["total_bytes"] == SMALL
