"""Untimed vertex-centric executor.

Implements the tiled process/reduce/apply model over a TiledGraph and
serves as the golden functional reference for the timed simulator.
Source properties are read from a snapshot taken at iteration start, so
the final state is bit-identical for any tile width; apply results
become visible in the next iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .graph import TiledGraph

__all__ = [
    "INF",
    "AlgorithmSpec",
    "VertexState",
    "ALGORITHMS",
    "algorithm_spec",
    "run_iteration",
    "run_to_convergence",
]

# Saturating +infinity for the integer-valued algorithms; property words
# are 64-bit, so this is the all-ones pattern.
INF = 2**64 - 1

ALGORITHMS = ("pr", "bfs", "cc", "sssp", "sswp")


@dataclass
class AlgorithmSpec:
    """Operator bundle for one algorithm, bound to a vertex count.

    process maps (edge_weight, source_value) to an update; reduce folds
    updates into v_temp (must be associative and commutative); apply
    combines the old property, the folded temp and the per-vertex
    constant into the new property.  pre_scale divides the source
    property by its base out-degree before process (rank spreading).
    """

    name: str
    n_vertices: int
    source: int
    process: Callable
    reduce: Callable
    apply: Callable
    reduce_identity: object
    always_active: bool
    pre_scale: bool
    int_domain: bool
    uses_const: bool

    def initial_state(self) -> "VertexState":
        nv = self.n_vertices
        s = self.source
        if self.name == "pr":
            prop = [1.0 / nv] * nv
            const = [0.15 / nv] * nv
            active = list(range(nv))
        elif self.name == "bfs":
            prop = [INF] * nv
            prop[s] = 0
            const = None
            active = [s]
        elif self.name == "cc":
            prop = list(range(nv))
            const = None
            active = list(range(nv))
        elif self.name == "sssp":
            prop = [INF] * nv
            prop[s] = 0
            const = None
            active = [s]
        else:  # sswp
            prop = [0] * nv
            prop[s] = INF
            const = None
            active = [s]
        return VertexState(
            v_prop=prop,
            v_temp=[self.reduce_identity] * nv,
            const=const,
            active=active,
        )


@dataclass
class VertexState:
    """Property, temp and frontier arrays; values are 64-bit words."""

    v_prop: list
    v_temp: list
    const: Optional[list]
    active: list

    def prop_words(self) -> np.ndarray:
        """Property array as raw 64-bit words (floats bit-cast)."""
        if self.v_prop and isinstance(self.v_prop[0], float):
            return np.asarray(self.v_prop, dtype=np.float64).view(np.uint64)
        return np.asarray(self.v_prop, dtype=np.uint64)


def _sat_add(a: int, b: int) -> int:
    if a >= INF:
        return INF
    c = a + b
    return INF if c > INF else c


def algorithm_spec(name: str, n_vertices: int, source: int = 0) -> AlgorithmSpec:
    """Build the AlgorithmSpec for one of pr/bfs/cc/sssp/sswp."""
    if n_vertices <= 0:
        raise ValueError(f"n_vertices must be positive, got {n_vertices}")
    if not 0 <= source < n_vertices:
        raise ValueError(f"source {source} out of range [0, {n_vertices})")
    if name == "pr":
        return AlgorithmSpec(
            name, n_vertices, source,
            process=lambda w, p: p,
            reduce=lambda a, b: a + b,
            apply=lambda prop, temp, const: const + 0.85 * temp,
            reduce_identity=0.0,
            always_active=True, pre_scale=True,
            int_domain=False, uses_const=True,
        )
    if name == "bfs":
        return AlgorithmSpec(
            name, n_vertices, source,
            process=lambda w, p: _sat_add(p, 1),
            reduce=min,
            apply=lambda prop, temp, const: min(prop, temp),
            reduce_identity=INF,
            always_active=False, pre_scale=False,
            int_domain=True, uses_const=False,
        )
    if name == "cc":
        return AlgorithmSpec(
            name, n_vertices, source,
            process=lambda w, p: p,
            reduce=min,
            apply=lambda prop, temp, const: min(prop, temp),
            reduce_identity=INF,
            always_active=False, pre_scale=False,
            int_domain=True, uses_const=False,
        )
    if name == "sssp":
        return AlgorithmSpec(
            name, n_vertices, source,
            process=lambda w, p: _sat_add(p, w),
            reduce=min,
            apply=lambda prop, temp, const: min(prop, temp),
            reduce_identity=INF,
            always_active=False, pre_scale=False,
            int_domain=True, uses_const=False,
        )
    if name == "sswp":
        return AlgorithmSpec(
            name, n_vertices, source,
            process=lambda w, p: min(p, w),
            reduce=max,
            apply=lambda prop, temp, const: max(prop, temp),
            reduce_identity=0,
            always_active=False, pre_scale=False,
            int_domain=True, uses_const=False,
        )
    raise ValueError(f"unknown algorithm {name!r}, expected one of {ALGORITHMS}")


def _tile_lists(tg: TiledGraph):
    # Plain-list views of the tile arrays; cached, the scalar loops
    # below are much faster on lists than on numpy scalars.
    cached = getattr(tg, "_pylists", None)
    if cached is None:
        cached = [
            (rp.tolist(), col.tolist(), w.tolist()) for rp, col, w in tg.tiles
        ]
        tg._pylists = cached
        tg._pydegrees = tg.base.out_degrees().tolist()
    return cached


def run_iteration(tg: TiledGraph, spec: AlgorithmSpec, state: VertexState) -> list:
    """Run one iteration over all tiles; returns the next frontier.

    The frontier for the processed iteration is state.active (sorted
    ascending); state.v_prop is updated in place and the returned list
    holds every vertex whose property changed, sorted ascending.
    """
    tiles = _tile_lists(tg)
    degrees = tg._pydegrees
    prop = state.v_prop
    snapshot = prop[:]
    temp = state.v_temp
    const = state.const
    process = spec.process
    reduce_ = spec.reduce
    apply_ = spec.apply
    identity = spec.reduce_identity
    pre_scale = spec.pre_scale
    active = sorted(state.active)
    next_active = []
    for t in range(tg.n_tiles):
        row_ptr, col, wgt = tiles[t]
        for u in active:
            lo = row_ptr[u]
            hi = row_ptr[u + 1]
            if lo == hi:
                continue
            p = snapshot[u]
            if pre_scale:
                p = p / degrees[u]
            for k in range(lo, hi):
                v = col[k]
                temp[v] = reduce_(temp[v], process(wgt[k], p))
        lo_v, hi_v = tg.tile_range(t)
        for v in range(lo_v, hi_v):
            res = apply_(prop[v], temp[v], const[v] if const else None)
            if res != prop[v]:
                prop[v] = res
                next_active.append(v)
            temp[v] = identity
    return next_active


def run_to_convergence(
    tg: TiledGraph, spec: AlgorithmSpec, max_iters: int = 40
) -> tuple[VertexState, int]:
    """Iterate until the frontier empties or max_iters is reached."""
    state = spec.initial_state()
    iters = 0
    while iters < max_iters and state.active:
        next_active = run_iteration(tg, spec, state)
        iters += 1
        if not next_active:
            state.active = []
            break
        state.active = list(range(spec.n_vertices)) if spec.always_active else next_active
    return state, iters
