"""Set-associative vertex-property cache models.

Four models share one implementation frame: classic 64B lines
(conventional64), 128B lines with 16 shared-tag 8B sectors (sectored),
plain 8B lines (line8), and 128B lines whose sixteen 8B sectors each
carry their own 8-bit fine-grained tag (piccolo).  The piccolo address
split is [tag | set | fg_tag | fg_offset | byte]: a frame stores the
wide tag once and each 8B sector keeps its own fg tag, so one frame
holds sectors drawn from a contiguous 32KB window and the same tag may
occupy several ways of a set.  Way allocation per tag steers whether a
fine-grained miss grows a new line or replaces a single sector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "CACHE_MODELS",
    "CacheConfig",
    "CacheLine",
    "AccessOutcome",
    "WayPartition",
    "configure_partition",
    "metadata_bits",
    "Cache",
]

CACHE_MODELS = ("conventional64", "sectored", "line8", "piccolo")

_DEFAULT_LINE_BYTES = {"conventional64": 64, "sectored": 128, "line8": 8, "piccolo": 128}


@dataclass
class CacheConfig:
    model: str = "piccolo"
    capacity_bytes: int = 4 * 2**20
    ways: int = 8
    line_bytes: int = 0  # 0 = model default
    sector_bytes: int = 8
    fg_tag_bits: int = 8
    addr_bits: int = 48

    def __post_init__(self):
        if self.model not in CACHE_MODELS:
            raise ValueError(f"unknown cache model {self.model!r}")
        if self.line_bytes == 0:
            self.line_bytes = _DEFAULT_LINE_BYTES[self.model]
        if self.line_bytes % self.sector_bytes != 0:
            raise ValueError("line_bytes must be a multiple of sector_bytes")
        lines = self.capacity_bytes // self.line_bytes
        if lines % self.ways != 0 or lines == 0:
            raise ValueError(
                f"capacity {self.capacity_bytes} not divisible into "
                f"{self.ways}-way sets of {self.line_bytes}B lines"
            )
        self.n_sets = lines // self.ways
        if self.n_sets & (self.n_sets - 1):
            raise ValueError(f"set count {self.n_sets} must be a power of two")
        self.n_sectors = self.line_bytes // self.sector_bytes
        self.set_bits = self.n_sets.bit_length() - 1
        self.offset_bits = self.line_bytes.bit_length() - 1
        if self.model == "piccolo":
            self.fg_offset_bits = self.n_sectors.bit_length() - 1
            self.tag_bits = (
                self.addr_bits - self.set_bits - self.fg_tag_bits
                - self.fg_offset_bits - 3
            )
        else:
            self.fg_offset_bits = 0
            self.tag_bits = self.addr_bits - self.set_bits - self.offset_bits
        if self.tag_bits <= 0:
            raise ValueError("address bits too small for this geometry")

    def split(self, addr: int) -> tuple[int, int, int, int]:
        """Decompose addr into (tag, set, fg_tag, sector_index)."""
        if self.model == "piccolo":
            sector = (addr >> 3) & (self.n_sectors - 1)
            fg = (addr >> (3 + self.fg_offset_bits)) & ((1 << self.fg_tag_bits) - 1)
            set_i = (addr >> (3 + self.fg_offset_bits + self.fg_tag_bits)) & (
                self.n_sets - 1)
            tag = addr >> (3 + self.fg_offset_bits + self.fg_tag_bits + self.set_bits)
            return tag, set_i, fg, sector
        sector = (addr >> 3) & (self.n_sectors - 1) if self.n_sectors > 1 else 0
        set_i = (addr >> self.offset_bits) & (self.n_sets - 1)
        tag = addr >> (self.offset_bits + self.set_bits)
        return tag, set_i, 0, sector

    def sector_addr(self, tag: int, set_i: int, fg: int, sector: int) -> int:
        """Inverse of split for one 8B sector (byte offset zero)."""
        if self.model == "piccolo":
            return (
                (((((tag << self.set_bits) | set_i) << self.fg_tag_bits) | fg)
                 << self.fg_offset_bits | sector) << 3
            )
        return (
            ((tag << self.set_bits) | set_i) << self.offset_bits
        ) | (sector * self.sector_bytes)


class CacheLine:
    """One way of a set.  Bitmask fields are indexed by sector."""

    __slots__ = ("tag", "fg", "present", "dirty", "used", "stamp")

    def __init__(self, n_sectors: int):
        self.tag = -1
        self.fg = [0] * n_sectors
        self.present = 0
        self.dirty = 0
        self.used = 0
        self.stamp = -1


@dataclass
class AccessOutcome:
    result: str  # "hit" | "sector_miss" | "line_miss"
    ways_searched: int
    fill: tuple | None  # (addr, n_bytes) to fetch, or None on hit
    victim_writebacks: list  # [(addr, n_bytes)] dirty data displaced


@dataclass
class WayPartition:
    """Way allocation per line tag for the current tile."""

    allocation: dict
    oversubscribed: bool = False


def configure_partition(tile_tags, ways: int) -> WayPartition:
    """Split `ways` across the tile's line tags, remainder to the lowest.

    With more tags than ways some tags get zero dedicated ways and fall
    back to sector replacement inside whichever lines they obtain; that
    round-robin sharing is flagged so runs can report it.
    """
    tags = sorted(set(int(t) for t in tile_tags))
    if not tags:
        return WayPartition(allocation={})
    base = ways // len(tags)
    rem = ways % len(tags)
    alloc = {}
    for i, t in enumerate(tags):
        alloc[t] = min(ways, base + (1 if i < rem else 0))
    return WayPartition(allocation=alloc, oversubscribed=(base == 0))


def metadata_bits(cfg: CacheConfig) -> int:
    """Tag-array bits: line tags plus per-sector fine-grained tags.

    Valid/dirty/LRU bookkeeping is excluded uniformly; this counts the
    storage that scales with address-matching state.
    """
    lines = cfg.capacity_bytes // cfg.line_bytes
    per_line = cfg.tag_bits
    if cfg.model == "piccolo":
        per_line += cfg.n_sectors * cfg.fg_tag_bits
    return per_line * lines


class Cache:
    """Stateful cache model; access order fully determines behavior."""

    def __init__(self, cfg: CacheConfig):
        self.cfg = cfg
        self.sets = [
            [CacheLine(cfg.n_sectors) for _ in range(cfg.ways)]
            for _ in range(cfg.n_sets)
        ]
        self.partition: WayPartition | None = None
        self._clock = 0
        self.stats = {
            "hits": 0,
            "sector_misses": 0,
            "line_misses": 0,
            "bytes_fetched": 0,
            "bytes_useful": 0,
            "writeback_bytes": 0,
            "search_cycles": 0,
            "partition_oversubscribed": 0,
        }

    # ------------------------------------------------------------------

    def set_partition(self, partition: WayPartition | None) -> None:
        self.partition = partition
        if partition is not None and partition.oversubscribed:
            self.stats["partition_oversubscribed"] += 1

    def _allocation(self, tag: int) -> int:
        if self.partition is None:
            return self.cfg.ways
        return self.partition.allocation.get(tag, self.cfg.ways)

    def _retire_sector(self, line: CacheLine, sector: int) -> None:
        bit = 1 << sector
        if line.used & bit:
            self.stats["bytes_useful"] += self.cfg.sector_bytes
        line.used &= ~bit
        line.present &= ~bit
        line.dirty &= ~bit

    def _evict_line(self, set_i: int, line: CacheLine, writebacks: list) -> None:
        cfg = self.cfg
        if cfg.model in ("conventional64", "line8"):
            # Whole-line granularity: one writeback covers the line.
            if line.dirty:
                addr = cfg.sector_addr(line.tag, set_i, 0, 0)
                writebacks.append((addr, cfg.line_bytes))
                self.stats["writeback_bytes"] += cfg.line_bytes
            mask = line.present
            sector = 0
            while mask:
                if mask & 1:
                    self._retire_sector(line, sector)
                mask >>= 1
                sector += 1
            line.tag = -1
            line.stamp = -1
            return
        mask = line.present
        sector = 0
        while mask:
            if mask & 1:
                if line.dirty & (1 << sector):
                    addr = cfg.sector_addr(line.tag, set_i, line.fg[sector], sector)
                    writebacks.append((addr, cfg.sector_bytes))
                    self.stats["writeback_bytes"] += cfg.sector_bytes
                self._retire_sector(line, sector)
            mask >>= 1
            sector += 1
        line.tag = -1
        line.stamp = -1

    # ------------------------------------------------------------------

    def access(self, addr: int, write: bool = False) -> AccessOutcome:
        """One 8B-granular access; write marks the sector dirty.

        Misses allocate (write-allocate) and report the fill request
        plus any displaced dirty data.  For conventional64/line8 the
        fill and victims are whole lines; for sectored/piccolo fills are
        single 8B sectors and a line victim writes back each dirty
        sector individually.
        """
        if addr & 0x7:
            raise ValueError(f"misaligned 8B access: {addr:#x}")
        cfg = self.cfg
        tag, set_i, fg, sector = cfg.split(addr)
        ways = self.sets[set_i]
        self._clock += 1
        bit = 1 << sector

        if cfg.model == "piccolo":
            return self._access_piccolo(addr, tag, set_i, fg, sector, ways, write)

        hit_line = None
        searched = 0
        for line in ways:
            if line.tag == tag:
                hit_line = line
                break
        searched = 1  # parallel tag compare
        self.stats["search_cycles"] += searched

        if hit_line is not None and hit_line.present & bit:
            self.stats["hits"] += 1
            hit_line.used |= bit
            if write:
                hit_line.dirty |= bit
            hit_line.stamp = self._clock
            return AccessOutcome("hit", searched, None, [])

        writebacks: list = []
        if hit_line is not None:
            # Tag present, sector absent: only sectored can get here.
            self.stats["sector_misses"] += 1
            line = hit_line
            result = "sector_miss"
            fill_addr = cfg.sector_addr(tag, set_i, 0, sector)
            fill = (fill_addr, cfg.sector_bytes)
            self.stats["bytes_fetched"] += cfg.sector_bytes
        else:
            self.stats["line_misses"] += 1
            line = min(ways, key=lambda l: l.stamp)
            self._evict_line(set_i, line, writebacks)
            line.tag = tag
            result = "line_miss"
            if cfg.model == "sectored":
                fill_addr = cfg.sector_addr(tag, set_i, 0, sector)
                fill = (fill_addr, cfg.sector_bytes)
                self.stats["bytes_fetched"] += cfg.sector_bytes
            else:
                line_addr = cfg.sector_addr(tag, set_i, 0, 0)
                fill = (line_addr, cfg.line_bytes)
                line.present = (1 << cfg.n_sectors) - 1
                self.stats["bytes_fetched"] += cfg.line_bytes
        line.present |= bit
        line.used |= bit
        if write:
            line.dirty |= bit
        line.stamp = self._clock
        return AccessOutcome(result, searched, fill, writebacks)

    def _access_piccolo(self, addr, tag, set_i, fg, sector, ways, write):
        cfg = self.cfg
        bit = 1 << sector
        matches = []
        searched = 0
        hit_line = None
        for line in ways:
            searched += 1
            if line.tag == tag:
                if (line.present & bit) and line.fg[sector] == fg:
                    hit_line = line
                    break
                matches.append(line)
        self.stats["search_cycles"] += searched

        if hit_line is not None:
            self.stats["hits"] += 1
            hit_line.used |= bit
            if write:
                hit_line.dirty |= bit
            hit_line.stamp = self._clock
            return AccessOutcome("hit", searched, None, [])

        fill = (addr & ~0x7, cfg.sector_bytes)
        self.stats["bytes_fetched"] += cfg.sector_bytes
        writebacks: list = []
        grow = len(matches) < self._allocation(tag)
        if matches and not grow:
            # At (or over) the way allocation: replace one sector in a
            # line of the same tag, preferring a line whose slot for
            # this sector index is free, else the least recently used.
            self.stats["sector_misses"] += 1
            free = [l for l in matches if not (l.present & bit)]
            line = min(free or matches, key=lambda l: l.stamp)
            if line.present & bit:
                if line.dirty & bit:
                    old = cfg.sector_addr(tag, set_i, line.fg[sector], sector)
                    writebacks.append((old, cfg.sector_bytes))
                    self.stats["writeback_bytes"] += cfg.sector_bytes
                self._retire_sector(line, sector)
            result = "sector_miss"
        else:
            # No matching line, or the tag is still under its allocation:
            # take a whole line from another tag (or a free one).
            self.stats["line_misses"] += 1
            line = None
            for cand in ways:
                if cand.tag == -1:
                    line = cand
                    break
            if line is None:
                others = [l for l in ways if l.tag != tag]
                pool = others if others else matches
                line = min(pool, key=lambda l: l.stamp)
                self._evict_line(set_i, line, writebacks)
            line.tag = tag
            result = "line_miss"
        line.fg[sector] = fg
        line.present |= bit
        line.used |= bit
        line.dirty = (line.dirty | bit) if write else (line.dirty & ~bit)
        line.stamp = self._clock
        return AccessOutcome(result, searched, fill, writebacks)

    # ------------------------------------------------------------------

    def flush(self) -> list:
        """Write back and invalidate everything; returns writebacks."""
        writebacks: list = []
        for set_i, ways in enumerate(self.sets):
            for line in ways:
                if line.tag != -1:
                    self._evict_line(set_i, line, writebacks)
        return writebacks
