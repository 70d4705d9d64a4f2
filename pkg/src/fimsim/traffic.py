"""Closed-form per-iteration traffic estimator.

Byte counts for one full pass over a tiled graph, used to cross-check
simulated byte counters and to locate the tile-count sweet spot.  The
constants are absolute: adjacency-offset entries are 8B per vertex per
tile, destination ids 4B per edge, properties prop_bytes each.  The
random-access term depends on the regime: with the working set larger
than the cache every random touch costs a full burst; with perfect
tiling each vertex costs one burst per pass; with fine-grained access
each random touch moves only the property itself, bounded by touching
every vertex once per pass.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["TrafficEstimate", "estimate_traffic", "sweet_spot"]

MODES = ("untiled", "perfect", "piccolo")


@dataclass
class TrafficEstimate:
    """Per-pass byte counts for the four traffic components."""

    row_index_bytes: int
    col_index_bytes: int
    seq_prop_bytes: int
    rand_prop_bytes: int

    @property
    def total(self) -> int:
        return (self.row_index_bytes + self.col_index_bytes
                + self.seq_prop_bytes + self.rand_prop_bytes)


def estimate_traffic(nv: int, ne: int, t: int, burst_bytes: int = 64,
                     prop_bytes: int = 8, mode: str = "untiled") -> TrafficEstimate:
    """Estimate one iteration's traffic for nv vertices, ne edges, t tiles."""
    if t < 1:
        raise ValueError(f"tile count must be >= 1, got {t}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    row = 8 * nv * t
    col = 4 * ne
    seq = prop_bytes * nv * t
    if mode == "untiled":
        rand = ne * burst_bytes
    elif mode == "perfect":
        rand = nv * burst_bytes
    else:
        rand = min(ne * prop_bytes, nv * prop_bytes)
    return TrafficEstimate(row, col, seq, rand)


def sweet_spot(nv: int, ne: int, t_values, burst_bytes: int = 64,
               prop_bytes: int = 8, mode: str = "perfect") -> int:
    """Tile count minimizing estimated total traffic over t_values."""
    best_t = None
    best = None
    for t in t_values:
        total = estimate_traffic(nv, ne, t, burst_bytes, prop_bytes, mode).total
        if best is None or total < best:
            best = total
            best_t = t
    if best_t is None:
        raise ValueError("t_values must be non-empty")
    return best_t
