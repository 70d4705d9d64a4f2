"""Strided-read microbenchmark comparing plain bursts with gathers.

The benchmark reads a fixed volume of 8-byte words laid out at a given
word stride and times two command streams over the same device config:

* baseline: one 64B read burst per distinct burst the words touch,
* fim: one in-bank gather per group of eight words (two per group in
  the multi-row layout, where every group straddles a row boundary).

Speedup is the ratio of the two finish times.  With the x16 defaults a
gather moves two off-chip bursts regardless of stride, so the expected
single-row curve is 0.5x at stride 1, doubling per stride step, and
saturating at 4x from stride 8 onward.
"""

from dataclasses import dataclass

from .dram import DramConfig, DramEngine, FimOp, WorkItem

__all__ = ["StrideResult", "LAYOUTS", "microbench_stride"]

LAYOUTS = ("single-row", "multi-row")


@dataclass
class StrideResult:
    stride: int
    layout: str
    total_bytes: int
    baseline_ps: int
    fim_ps: int
    baseline_bursts: int
    fim_bursts: int
    gathers: int
    speedup: float

    def to_dict(self) -> dict:
        return {
            "stride": self.stride,
            "layout": self.layout,
            "total_bytes": self.total_bytes,
            "baseline_ps": self.baseline_ps,
            "fim_ps": self.fim_ps,
            "baseline_bursts": self.baseline_bursts,
            "fim_bursts": self.fim_bursts,
            "gathers": self.gathers,
            "speedup": self.speedup,
        }


def _bank_ids(cfg: DramConfig):
    """All banks, ordered so neighbours sit in different bank groups.

    Alternating groups lets back-to-back bursts use tCCD_S instead of
    tCCD_L, which is what a streaming access pattern would see.
    """
    banks = range(cfg.banks_per_rank)
    if cfg.banks_per_rank % cfg.bank_groups == 0:
        gsize = cfg.banks_per_rank // cfg.bank_groups
        banks = [g * gsize + p for p in range(gsize)
                 for g in range(cfg.bank_groups)]
    return [(ch, rank, bank)
            for ch in range(cfg.channels)
            for rank in range(cfg.ranks)
            for bank in banks]


def _single_row_groups(cfg: DramConfig, stride: int, n_groups: int):
    """Yield (ch, rank, bank, row, offsets) with each group in one row."""
    banks = _bank_ids(cfg)
    span = (cfg.words_per_burst - 1) * stride + 1
    if span > cfg.row_words:
        raise ValueError(f"stride {stride} spans more than one row")
    cursor = {b: (0, 0) for b in banks}  # bank -> (row, word)
    for g in range(n_groups):
        b = banks[g % len(banks)]
        row, word = cursor[b]
        if word + span > cfg.row_words:
            row, word = (row + 1) % cfg.data_rows, 0
        offsets = [word + k * stride for k in range(cfg.words_per_burst)]
        cursor[b] = (row, word + cfg.words_per_burst * stride)
        yield (*b, row, offsets)


def _multi_row_groups(cfg: DramConfig, stride: int, n_groups: int):
    """Yield groups split 4/4 across a row boundary.

    Returned offsets may exceed row_words; offset // row_words gives the
    row increment so callers can split the group into per-row parts.
    """
    banks = _bank_ids(cfg)
    half = cfg.words_per_burst // 2
    start = cfg.row_words - half * stride
    if start < 0:
        raise ValueError(f"stride {stride} spans more than two rows")
    rows_used = {b: 0 for b in banks}
    for g in range(n_groups):
        b = banks[g % len(banks)]
        row = rows_used[b]
        rows_used[b] = (row + 2) % (cfg.data_rows - 1)
        offsets = [start + k * stride for k in range(cfg.words_per_burst)]
        yield (*b, row, offsets)


def _baseline_items(cfg: DramConfig, engine: DramEngine, groups) -> list:
    items = []
    wpb = cfg.words_per_burst
    for ch, rank, bank, row, offsets in groups:
        gid = engine.amap.bank_gid(ch, rank, bank)
        seen = set()
        for off in offsets:
            r, word = row + off // cfg.row_words, off % cfg.row_words
            burst = word - word % wpb
            if (r, burst) not in seen:
                seen.add((r, burst))
                items.append(WorkItem("bench", "rw", gid, r, word=burst))
    return items


def _fim_items(cfg: DramConfig, engine: DramEngine, groups) -> list:
    items = []
    wpb = cfg.words_per_burst
    for ch, rank, bank, row, offsets in groups:
        gid = engine.amap.bank_gid(ch, rank, bank)
        parts = {}
        for off in offsets:
            parts.setdefault(off // cfg.row_words, []).append(off % cfg.row_words)
        for dr in sorted(parts):
            offs = parts[dr]
            n_real = len(offs)
            while len(offs) < wpb:
                offs.append(offs[-1])
            op = FimOp(kind="gather", row_key=(ch, rank, bank, row + dr),
                       offsets=offs, n_real=n_real)
            items.append(WorkItem("bench", "fim", gid, row + dr, op=op))
    return items


def microbench_stride(stride: int, total_bytes: int = 16 * 2**20,
                      layout: str = "single-row",
                      dram: DramConfig = None,
                      refresh: bool = True, window: int = 64) -> StrideResult:
    """Time baseline burst reads against gathers for one stride.

    stride is in 8-byte words and must be a positive power of two.
    total_bytes counts the useful words read, so the touched footprint
    grows with the stride.
    """
    if stride < 1 or stride & (stride - 1):
        raise ValueError(f"stride must be a positive power of two, got {stride}")
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {LAYOUTS}, got {layout!r}")
    cfg = dram or DramConfig.ddr4_2400r()
    n_groups = max(1, total_bytes // 8 // cfg.words_per_burst)
    maker = _single_row_groups if layout == "single-row" else _multi_row_groups

    base_engine = DramEngine(cfg, refresh=refresh)
    base_items = _baseline_items(cfg, base_engine, maker(cfg, stride, n_groups))
    baseline_ps = base_engine.run(base_items, window=window)

    fim_engine = DramEngine(cfg, refresh=refresh)
    fim_items = _fim_items(cfg, fim_engine, maker(cfg, stride, n_groups))
    fim_ps = fim_engine.run(fim_items, window=window)

    return StrideResult(
        stride=stride,
        layout=layout,
        total_bytes=total_bytes,
        baseline_ps=baseline_ps,
        fim_ps=fim_ps,
        baseline_bursts=len(base_items),
        fim_bursts=fim_engine.stats["bus_bytes"] // cfg.burst_bytes,
        gathers=fim_engine.stats["gathers"],
        speedup=baseline_ps / fim_ps if fim_ps else 0.0,
    )
