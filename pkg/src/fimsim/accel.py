"""Timed simulation of the tiled vertex-centric accelerator.

Per tile, a canonical-order pass walks the sorted frontier, drives the
destination-property cache and the collecting miss unit, and performs
the functional process/reduce work; the memory requests this produces
are then replayed through the event-driven DDR4 engine to obtain the
tile's memory time.  Tile cycles are the larger of memory time and the
on-chip floor (edge feed rate, per-lane update serialization, cache way
searches, apply throughput).  Vertex values never depend on request
timing, so the final state matches the untimed executor bit for bit at
any tile width.

Traffic streams:
  frontier    active bitmap read per tile, new bitmap written per iteration
  row-index   8B adjacency-offset entry per active vertex per tile
  col-index   4B destination id per edge (weights ride in the same words)
  seq-prop    source properties during process, destination properties
              read/written during apply
  rand-prop   8B destination temp words through the cache; fills and
              writebacks go out as collected scatter/gather when the
              preset has in-memory operations, plain bursts otherwise
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .cache import Cache, CacheConfig, configure_partition
from .dram import AddressMap, DramConfig, DramEngine, WorkItem
from .engine import AlgorithmSpec, VertexState, _tile_lists
from .graph import TiledGraph
from .mshr import CollectionMshr, MshrConfig

__all__ = [
    "PRESETS",
    "AccelConfig",
    "StatsReport",
    "preset",
    "perfect_tile_width",
    "simulate",
]

PRESETS = ("conventional", "sectored", "line8", "piccolo")

_PRESET_MODEL = {
    "conventional": "conventional64",
    "sectored": "sectored",
    "line8": "line8",
    "piccolo": "piccolo",
}


@dataclass
class AccelConfig:
    """One accelerator + memory system operating point.

    The datapath is eight processing elements with 8-way SIMD lanes at
    1 GHz; with prefetching enabled, memory time and compute overlap
    and a tile costs max(memory, compute) cycles, otherwise the two
    serialize.
    """

    cache: CacheConfig
    mshr: MshrConfig
    dram: DramConfig
    use_fim: bool = True
    n_pes: int = 8
    simd_width: int = 8
    accel_clock_ps: int = 1000
    prefetch_enabled: bool = True
    tile_scaling: int = 1
    window: int = 64
    max_iters: int = 40
    refresh: bool = True

    def __post_init__(self):
        if self.n_pes < 1 or self.n_pes & (self.n_pes - 1):
            raise ValueError(f"n_pes must be a power of two, got {self.n_pes}")
        if self.simd_width < 1 or self.tile_scaling < 1:
            raise ValueError("simd_width and tile_scaling must be >= 1")
        if self.use_fim:
            group = self.dram.burst_bytes // 8
            if self.mshr.offsets_per_group != group:
                raise ValueError(
                    f"mshr group size {self.mshr.offsets_per_group} does not "
                    f"match the {group}-word in-bank operation size")
            if not self.dram.fim_enabled:
                raise ValueError("use_fim requires dram.fim_enabled")


def preset(name: str, cache_bytes: int = 8192, ways: int = 8,
           tile_scaling: int = 1, **dram_overrides) -> AccelConfig:
    """Build a named system preset.

    "conventional" is the 64B-line baseline without in-memory
    operations; "sectored", "line8" and "piccolo" pair their cache
    organization with collected in-bank scatter/gather.
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}, expected one of {PRESETS}")
    cache = CacheConfig(model=_PRESET_MODEL[name], capacity_bytes=cache_bytes,
                        ways=ways)
    dram = DramConfig.ddr4_2400r(**dram_overrides)
    return AccelConfig(cache=cache, mshr=MshrConfig(), dram=dram,
                       use_fim=(name != "conventional"),
                       tile_scaling=tile_scaling)


def crossbar_route(dst: int, n_pes: int = 8) -> int:
    """Updater lane for one (destination, value) update: dst mod n_pes.

    Same-lane updates serialize at one per cycle, which keeps reduces
    of the same vertex in order.
    """
    return dst % n_pes


def perfect_tile_width(cache: CacheConfig) -> int:
    """Tile width whose 8B-per-vertex working set just fits the cache."""
    return max(1, cache.capacity_bytes // 8)


def tile_width_for(cfg: AccelConfig) -> int:
    """Configured tile width: tile_scaling times the perfect width."""
    return perfect_tile_width(cfg.cache) * cfg.tile_scaling


@dataclass
class MemRequest:
    """One memory request of the accelerator pipeline."""

    addr: int
    kind: str  # "read" | "write"
    size: int  # 8 or 64
    stream: str  # "row-index" | "col-index" | "seq-prop" | "rand-prop"
    requestor: int = 0
    issue_cycle: int = 0


def prefetch_streams(tg: TiledGraph, tile: int, frontier,
                     layout: MemLayout | None = None) -> list:
    """Enumerate one tile's prefetch requests in pipeline order.

    The tile's adjacency-offset array streams in full as sequential 64B
    reads; each active source with edges in the tile adds a seq-prop
    read of its property and 64B col-index reads covering its edge
    range; every edge adds one 8B rand-prop read of the destination
    temp.  Returns MemRequest records; simulate() emits the same
    streams restricted to the touched adjacency entries.
    """
    if layout is None:
        amap = AddressMap(DramConfig.ddr4_2400r())
        layout = MemLayout(amap, tg.base.n_vertices,
                           [len(c) for _, c, _ in tg.tiles])
    row_ptr, col, _ = tg.tiles[tile]
    reqs: list = []
    base = layout.row_entry(tile, 0)
    for addr in range(base, base + 8 * tg.base.n_vertices, 64):
        reqs.append(MemRequest(addr, "read", 64, "row-index"))
    col_base = layout.col_index[tile]
    last_col = last_src = -1
    for u in sorted(frontier):
        lo = int(row_ptr[u])
        hi = int(row_ptr[u + 1])
        if lo == hi:
            continue
        sa = (layout.v_prop + 8 * u) & ~63
        if sa != last_src:
            last_src = sa
            reqs.append(MemRequest(sa, "read", 64, "seq-prop",
                                   requestor=u % 8))
        for k in range(lo, hi):
            ca = (col_base + 4 * k) >> 6
            if ca != last_col:
                last_col = ca
                reqs.append(MemRequest(ca << 6, "read", 64, "col-index"))
            v = int(col[k])
            reqs.append(MemRequest(layout.temp_addr(v), "read", 8,
                                   "rand-prop", requestor=crossbar_route(v)))
    return reqs


class MemLayout:
    """Physical placement of the graph arrays.

    64B-aligned regions: destination properties, destination temps, the
    frontier bitmap, per-tile adjacency-offset entries (8B per vertex
    per tile) and per-tile destination-id arrays (4B per edge).
    """

    def __init__(self, amap: AddressMap, n_vertices: int, tile_edges: list):
        def up(x: int) -> int:
            return (x + 63) & ~63

        self.nv = n_vertices
        base = 0
        self.v_prop = base
        base += up(8 * n_vertices)
        self.v_temp = base
        base += up(8 * n_vertices)
        self.frontier = base
        self.frontier_bytes = up((n_vertices + 7) // 8)
        base += self.frontier_bytes
        self.row_stride = up(8 * n_vertices)
        self.row_index = base
        base += self.row_stride * len(tile_edges)
        self.col_index = []
        for ne in tile_edges:
            self.col_index.append(base)
            base += up(4 * ne)
        self.total_bytes = base
        if base > amap.capacity_bytes:
            raise ValueError(
                f"graph needs {base} bytes, memory holds {amap.capacity_bytes}")

    def row_entry(self, tile: int, u: int) -> int:
        return self.row_index + tile * self.row_stride + 8 * u

    def temp_addr(self, v: int) -> int:
        return self.v_temp + 8 * v


@dataclass
class StatsReport:
    """Aggregated counters from one simulate() run."""

    cycles: int = 0
    iterations: int = 0
    dram_bound_cycles: int = 0
    compute_bound_cycles: int = 0
    reads: int = 0
    writes: int = 0
    bus_bytes: int = 0
    internal_bytes: int = 0
    bytes_fetched: int = 0
    bytes_useful: int = 0
    writeback_bytes: int = 0
    cache_hits: int = 0
    sector_misses: int = 0
    line_misses: int = 0
    search_cycles: int = 0
    fim_gathers: int = 0
    fim_scatters: int = 0
    partial_gathers: int = 0
    partial_scatters: int = 0
    mshr_merges: int = 0
    raw_serves: int = 0
    conflict_evictions: int = 0
    offchip_gbps: float = 0.0
    internal_gbps: float = 0.0
    stream_reads: dict = field(default_factory=dict)
    stream_writes: dict = field(default_factory=dict)
    stream_bytes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "cycles", "iterations", "reads", "writes", "bus_bytes",
            "internal_bytes", "bytes_fetched", "bytes_useful",
            "writeback_bytes", "cache_hits", "sector_misses", "line_misses",
            "fim_gathers", "fim_scatters", "offchip_gbps", "internal_gbps",
        )}
        return d


def _as_word(value) -> int:
    """Property value as a raw 64-bit word (floats bit-cast)."""
    if isinstance(value, float):
        return struct.unpack("<Q", struct.pack("<d", value))[0]
    return int(value) & (2**64 - 1)


class _Pass:
    """Shared machinery for one simulate() run."""

    def __init__(self, tg: TiledGraph, spec: AlgorithmSpec, cfg: AccelConfig,
                 trace_sink=None):
        self.tg = tg
        self.spec = spec
        self.cfg = cfg
        self.amap = AddressMap(cfg.dram)
        self.layout = MemLayout(self.amap, tg.base.n_vertices,
                                [len(c) for _, c, _ in tg.tiles])
        self.engine = DramEngine(cfg.dram, self.amap, trace_sink=trace_sink,
                                 refresh=cfg.refresh)
        self.cache = Cache(cfg.cache)
        self.mshr = CollectionMshr(cfg.mshr)
        self.items: list = []
        self._temp_ref: list = []

    # -- request plumbing ------------------------------------------------

    def _emit_burst(self, stream: str, addr: int, write: bool) -> None:
        ch, rank, bank, row, word = self.amap.decode(addr)
        gid = self.amap.bank_gid(ch, rank, bank)
        self.items.append(WorkItem(stream, "rw", gid, row, word & ~7, write))

    def _emit_range(self, stream: str, addr: int, n_bytes: int, write: bool) -> None:
        first = addr >> 6
        last = (addr + n_bytes - 1) >> 6
        for burst in range(first, last + 1):
            self._emit_burst(stream, burst << 6, write)

    def _queue_actions(self, actions) -> None:
        for act in actions:
            if act.kind != "flush":
                continue
            op = act.op
            ch, rank, bank, row = op.row_key
            gid = self.amap.bank_gid(ch, rank, bank)
            self.items.append(WorkItem("rand-prop", "fim", gid, row, op=op))

    def temp_access(self, v: int, write: bool, value_word: int = 0) -> int:
        """Route one 8B temp access through cache + miss handling.

        Returns the number of ways searched (for the compute floor).
        """
        addr = self.layout.temp_addr(v)
        out = self.cache.access(addr, write=write)
        use_fim = self.cfg.use_fim
        if out.fill is not None:
            fill_addr, n = out.fill
            if use_fim and n == 8:
                ch, rank, bank, row, word = self.amap.decode(fill_addr)
                self._queue_actions(
                    self.mshr.handle_read((ch, rank, bank, row), word, token=v))
            else:
                self._emit_range("rand-prop", fill_addr, n, write=False)
        for wb_addr, n in out.victim_writebacks:
            if use_fim and n == 8:
                ch, rank, bank, row, word = self.amap.decode(wb_addr)
                self._queue_actions(
                    self.mshr.handle_write((ch, rank, bank, row), word,
                                           self._word_at(wb_addr)))
            else:
                self._emit_range("rand-prop", wb_addr, n, write=True)
        return out.ways_searched

    def writeback(self, wb_addr: int, n: int) -> None:
        if self.cfg.use_fim and n == 8:
            ch, rank, bank, row, word = self.amap.decode(wb_addr)
            self._queue_actions(
                self.mshr.handle_write((ch, rank, bank, row), word,
                                       self._word_at(wb_addr)))
        else:
            self._emit_range("rand-prop", wb_addr, n, write=True)

    def _word_at(self, addr: int) -> int:
        v = (addr - self.layout.v_temp) >> 3
        if 0 <= v < self.layout.nv:
            return _as_word(self._temp_ref[v])
        return 0

    def drain_mshr(self) -> None:
        self._queue_actions(self.mshr.drain())

    def run_items(self) -> int:
        """Replay queued requests through the DRAM engine; returns ps."""
        if not self.items:
            return 0
        t0 = self.engine.finish
        fin = self.engine.run(self.items, window=self.cfg.window)
        self.items = []
        return fin - t0

    def set_tile_partition(self, lo_v: int, hi_v: int) -> None:
        if self.cache.cfg.model != "piccolo" or hi_v <= lo_v:
            return
        ccfg = self.cache.cfg
        span = (ccfg.n_sets * ccfg.line_bytes) << ccfg.fg_tag_bits
        a0 = self.layout.temp_addr(lo_v)
        a1 = self.layout.temp_addr(hi_v) - 1
        tags = {ccfg.split(a)[0] for a in range(a0, a1 + 1, span)}
        tags.add(ccfg.split(a1)[0])
        self.cache.set_partition(configure_partition(sorted(tags), ccfg.ways))


def simulate(cfg: AccelConfig, tg: TiledGraph, spec: AlgorithmSpec,
             trace_sink=None) -> tuple[VertexState, StatsReport]:
    """Run the timed model to convergence.

    Returns the final VertexState (bit-identical to the untimed
    executor) and the aggregated StatsReport.
    """
    sim = _Pass(tg, spec, cfg, trace_sink=trace_sink)
    layout = sim.layout
    tiles = _tile_lists(tg)
    degrees = tg._pydegrees
    state = spec.initial_state()
    sim._temp_ref = state.v_temp
    prop = state.v_prop
    temp = state.v_temp
    const = state.const
    process = spec.process
    reduce_ = spec.reduce
    apply_ = spec.apply
    identity = spec.reduce_identity
    pre_scale = spec.pre_scale
    always_active = spec.always_active
    nv = tg.base.n_vertices
    n_pes = cfg.n_pes
    lane_mask = n_pes - 1
    edges_per_cycle = cfg.n_pes * cfg.simd_width
    overlap = cfg.prefetch_enabled
    clock_ps = cfg.accel_clock_ps
    report = StatsReport()
    touched_flag = bytearray(nv)

    total_cycles = 0
    iters = 0
    active = list(state.active)
    while iters < cfg.max_iters and active:
        active_sorted = sorted(active)
        snapshot = prop[:]
        next_active = []
        for t in range(tg.n_tiles):
            row_ptr, col, wgt = tiles[t]
            lo_v, hi_v = tg.tile_range(t)
            sim.set_tile_partition(lo_v, hi_v)
            searches0 = sim.cache.stats["search_cycles"]
            lanes = [0] * n_pes
            touched = []
            n_edges = 0
            if not always_active:
                sim._emit_range("frontier", layout.frontier,
                                layout.frontier_bytes, write=False)
            col_base = layout.col_index[t]
            last_row = last_src = last_col = -1
            for u in active_sorted:
                ra = layout.row_entry(t, u)
                if ra >> 6 != last_row:
                    last_row = ra >> 6
                    sim._emit_burst("row-index", ra, write=False)
                lo = row_ptr[u]
                hi = row_ptr[u + 1]
                if lo == hi:
                    continue
                sa = layout.v_prop + 8 * u
                if sa >> 6 != last_src:
                    last_src = sa >> 6
                    sim._emit_burst("seq-prop", sa, write=False)
                p = snapshot[u]
                if pre_scale:
                    p = p / degrees[u]
                for k in range(lo, hi):
                    v = col[k]
                    ca = col_base + 4 * k
                    if ca >> 6 != last_col:
                        last_col = ca >> 6
                        sim._emit_burst("col-index", ca, write=False)
                    lanes[v & lane_mask] += 1
                    sim.temp_access(v, write=True)
                    if not touched_flag[v]:
                        touched_flag[v] = 1
                        touched.append(v)
                    temp[v] = reduce_(temp[v], process(wgt[k], p))
                n_edges += hi - lo
            sim.drain_mshr()
            # Apply: fold temps into properties for this tile's range.
            touched.sort()
            apply_list = range(lo_v, hi_v) if always_active else touched
            last_prop = last_wr = -1
            n_applied = 0
            for v in apply_list:
                n_applied += 1
                if touched_flag[v]:
                    sim.temp_access(v, write=False)
                pa = layout.v_prop + 8 * v
                if pa >> 6 != last_prop:
                    last_prop = pa >> 6
                    sim._emit_burst("seq-prop", pa, write=False)
                res = apply_(prop[v], temp[v], const[v] if const else None)
                if res != prop[v]:
                    prop[v] = res
                    next_active.append(v)
                    if pa >> 6 != last_wr:
                        last_wr = pa >> 6
                        sim._emit_burst("seq-prop", pa, write=True)
                temp[v] = identity
            for v in touched:
                touched_flag[v] = 0
            sim.drain_mshr()
            dram_ps = sim.run_items()
            searches = sim.cache.stats["search_cycles"] - searches0
            floor = -(-n_edges // edges_per_cycle)
            m = max(lanes)
            if m > floor:
                floor = m
            s = -(-searches // n_pes)
            if s > floor:
                floor = s
            a = -(-n_applied // n_pes)
            if a > floor:
                floor = a
            dram_cycles = -(-dram_ps // clock_ps)
            if not overlap:
                total_cycles += dram_cycles + floor
                report.dram_bound_cycles += dram_cycles
                report.compute_bound_cycles += floor
            elif dram_cycles >= floor:
                total_cycles += dram_cycles
                report.dram_bound_cycles += dram_cycles
            else:
                total_cycles += floor
                report.compute_bound_cycles += floor
        # Iteration boundary: write the new frontier, spill the cache.
        for wb_addr, n in sim.cache.flush():
            sim.writeback(wb_addr, n)
        sim.drain_mshr()
        if not always_active:
            sim._emit_range("frontier", layout.frontier, layout.frontier_bytes,
                            write=True)
        dram_ps = sim.run_items()
        total_cycles += -(-dram_ps // clock_ps)
        iters += 1
        if not next_active:
            active = []
            break
        active = list(range(nv)) if always_active else next_active

    state.active = active
    report.cycles = total_cycles
    report.iterations = iters
    eng = sim.engine
    cache = sim.cache
    mshr = sim.mshr
    report.reads = sum(eng.stream_reads.values())
    report.writes = sum(eng.stream_writes.values())
    report.bus_bytes = eng.stats["bus_bytes"]
    report.internal_bytes = eng.stats["internal_bytes"]
    report.bytes_fetched = cache.stats["bytes_fetched"]
    report.bytes_useful = cache.stats["bytes_useful"]
    report.writeback_bytes = cache.stats["writeback_bytes"]
    report.cache_hits = cache.stats["hits"]
    report.sector_misses = cache.stats["sector_misses"]
    report.line_misses = cache.stats["line_misses"]
    report.search_cycles = cache.stats["search_cycles"]
    report.fim_gathers = eng.stats["gathers"]
    report.fim_scatters = eng.stats["scatters"]
    report.partial_gathers = mshr.stats["partial_gathers"]
    report.partial_scatters = mshr.stats["partial_scatters"]
    report.mshr_merges = mshr.stats["merges"]
    report.raw_serves = mshr.stats["raw_serves"]
    report.conflict_evictions = mshr.stats["conflict_evictions"]
    report.stream_reads = dict(eng.stream_reads)
    report.stream_writes = dict(eng.stream_writes)
    report.stream_bytes = dict(eng.stream_bytes)
    if total_cycles:
        total_ns = total_cycles * clock_ps / 1000.0
        report.offchip_gbps = report.bus_bytes / total_ns
        report.internal_gbps = report.internal_bytes / total_ns
    return state, report
