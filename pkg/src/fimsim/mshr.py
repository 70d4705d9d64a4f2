"""Collection-extended miss handler.

Misses and dirty write-backs are grouped by DRAM row so they can be
served by in-bank gather/scatter operations.  Entries are direct-mapped
by an XOR-folded row key; each entry keeps one open gather group and
one open scatter group of up to `offsets_per_group` column offsets plus
read subentries.  A group flushes as soon as it is full, on a conflict
eviction, or at a drain point (tile boundary or iteration end).
Partial gathers repeat their last offset up to the group size; partial
scatters pad with the sentinel offset 0xFFFF, which the in-bank
controller skips.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dram import FimOp, SCATTER_PAD_OFFSET

__all__ = [
    "MshrConfig",
    "RowEntry",
    "CollectAction",
    "CollectionMshr",
    "mshr_handle",
]


@dataclass
class MshrConfig:
    entries: int = 4096
    offsets_per_group: int = 8
    subentries_per_offset: int = 8
    subentries_per_entry: int = 64

    def __post_init__(self):
        if self.entries <= 0 or self.entries & (self.entries - 1):
            raise ValueError(f"entries must be a power of two, got {self.entries}")
        if self.offsets_per_group <= 0:
            raise ValueError("offsets_per_group must be positive")


@dataclass
class RowEntry:
    row_key: tuple
    ga_offsets: list = field(default_factory=list)   # column offsets awaiting fill
    ga_consumers: dict = field(default_factory=dict)  # offset -> [tokens]
    sc_offsets: list = field(default_factory=list)   # column offsets awaiting write
    sc_data: dict = field(default_factory=dict)      # offset -> 8B word

    @property
    def n_subentries(self) -> int:
        return sum(len(v) for v in self.ga_consumers.values())


@dataclass
class CollectAction:
    """One controller action; kind is one of
    serve_from_writeback, merge_subentry, insert, overwrite,
    flush, evict_entry."""

    kind: str
    row_key: tuple
    offset: int = -1
    data: object = None
    op: FimOp | None = None


class CollectionMshr:
    def __init__(self, cfg: MshrConfig):
        self.cfg = cfg
        self.entries: list = [None] * cfg.entries
        self._live: set = set()
        self.stats = {
            "gathers": 0,
            "scatters": 0,
            "partial_gathers": 0,
            "partial_scatters": 0,
            "merges": 0,
            "raw_serves": 0,
            "waw_overwrites": 0,
            "conflict_evictions": 0,
            "forced_subentry_flushes": 0,
            "read_offsets": 0,
            "write_offsets": 0,
        }

    # ------------------------------------------------------------------

    def _index(self, row_key: tuple) -> int:
        ch, rank, bank, row = row_key
        mask = self.cfg.entries - 1
        bits = max(self.cfg.entries.bit_length() - 1, 1)
        # Geometry fields at their natural offsets so distinct banks land
        # in distinct slots; the row id is XOR-folded on top.
        h = (bank ^ (rank << 4) ^ (ch << 6)) & mask
        x = row
        while x:
            h ^= x & mask
            x >>= bits
        return h

    def _flush_gather(self, entry: RowEntry, actions: list) -> None:
        if not entry.ga_offsets:
            return
        n = self.cfg.offsets_per_group
        offs = list(entry.ga_offsets)
        partial = len(offs) < n
        while len(offs) < n:
            offs.append(offs[-1])  # gather repeats its last offset
        consumers = {o: entry.ga_consumers.get(o, []) for o in entry.ga_offsets}
        op = FimOp(
            kind="gather",
            row_key=entry.row_key,
            offsets=offs,
            n_real=len(entry.ga_offsets),
            consumers=consumers,
        )
        self.stats["gathers"] += 1
        if partial:
            self.stats["partial_gathers"] += 1
        entry.ga_offsets = []
        entry.ga_consumers = {}
        actions.append(CollectAction("flush", entry.row_key, op=op))

    def _flush_scatter(self, entry: RowEntry, actions: list) -> None:
        if not entry.sc_offsets:
            return
        n = self.cfg.offsets_per_group
        offs = list(entry.sc_offsets)
        data = [entry.sc_data[o] for o in offs]
        partial = len(offs) < n
        while len(offs) < n:
            offs.append(SCATTER_PAD_OFFSET)  # skipped by the in-bank controller
            data.append(0)
        op = FimOp(
            kind="scatter",
            row_key=entry.row_key,
            offsets=offs,
            n_real=len(entry.sc_offsets),
            data=data,
        )
        self.stats["scatters"] += 1
        if partial:
            self.stats["partial_scatters"] += 1
        entry.sc_offsets = []
        entry.sc_data = {}
        actions.append(CollectAction("flush", entry.row_key, op=op))

    def _entry_for(self, row_key: tuple, actions: list) -> RowEntry:
        idx = self._index(row_key)
        entry = self.entries[idx]
        if entry is not None and entry.row_key != row_key:
            # Direct-mapped conflict: flush the resident entry first.
            self.stats["conflict_evictions"] += 1
            actions.append(CollectAction("evict_entry", entry.row_key))
            self._flush_gather(entry, actions)
            self._flush_scatter(entry, actions)
            entry = None
        if entry is None:
            entry = RowEntry(row_key)
            self.entries[idx] = entry
            self._live.add(idx)
        return entry

    # ------------------------------------------------------------------

    def handle_read(self, row_key: tuple, offset: int, token=None) -> list:
        """A read miss for one 8B word of a DRAM row."""
        actions: list = []
        entry = self._entry_for(row_key, actions)
        if offset in entry.sc_data:
            # Raw forward: the word sits in the scatter side, newer than DRAM.
            self.stats["raw_serves"] += 1
            actions.append(
                CollectAction(
                    "serve_from_writeback", row_key, offset, entry.sc_data[offset]
                )
            )
            return actions
        if offset in entry.ga_consumers:
            consumers = entry.ga_consumers[offset]
            if (
                len(consumers) >= self.cfg.subentries_per_offset
                or entry.n_subentries >= self.cfg.subentries_per_entry
            ):
                self.stats["forced_subentry_flushes"] += 1
                self._flush_gather(entry, actions)
            else:
                self.stats["merges"] += 1
                consumers.append(token)
                actions.append(CollectAction("merge_subentry", row_key, offset))
                return actions
        entry.ga_offsets.append(offset)
        entry.ga_consumers[offset] = [token]
        self.stats["read_offsets"] += 1
        actions.append(CollectAction("insert", row_key, offset))
        if len(entry.ga_offsets) == self.cfg.offsets_per_group:
            self._flush_gather(entry, actions)
        return actions

    def handle_write(self, row_key: tuple, offset: int, data) -> list:
        """A dirty write-back of one 8B word."""
        actions: list = []
        entry = self._entry_for(row_key, actions)
        if offset in entry.sc_data:
            self.stats["waw_overwrites"] += 1
            entry.sc_data[offset] = data
            actions.append(CollectAction("overwrite", row_key, offset, data))
            return actions
        entry.sc_offsets.append(offset)
        entry.sc_data[offset] = data
        self.stats["write_offsets"] += 1
        actions.append(CollectAction("insert", row_key, offset))
        if len(entry.sc_offsets) == self.cfg.offsets_per_group:
            self._flush_scatter(entry, actions)
        return actions

    def drain(self) -> list:
        """Flush every open group (tile boundary / end of iteration)."""
        actions: list = []
        for idx in sorted(self._live):
            entry = self.entries[idx]
            self._flush_gather(entry, actions)
            self._flush_scatter(entry, actions)
            self.entries[idx] = None
        self._live.clear()
        return actions


def mshr_handle(m: CollectionMshr, miss=None, writeback=None) -> list:
    """Controller entry point: a read miss plus an optional write-back.

    `miss` and `writeback` are (row_key, offset[, token/data]) tuples;
    the read is checked against buffered scatter data first so a read
    never collects alongside a matching pending write.
    """
    actions: list = []
    if miss is not None:
        actions.extend(m.handle_read(*miss))
    if writeback is not None:
        actions.extend(m.handle_write(*writeback))
    return actions
