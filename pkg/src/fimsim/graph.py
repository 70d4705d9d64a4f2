"""Graph loading, generation, CSR construction and destination tiling.

Graphs are directed multigraphs with up to 2**32 - 1 vertices and 8-bit
integer edge weights.  The processing engine consumes a CSR form whose
edges are grouped by source and destination-sorted within each source,
plus an optional destination-range tiling where tile t owns vertices
[t*tile_width, (t+1)*tile_width).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EdgeList",
    "CsrGraph",
    "TiledGraph",
    "load_edge_list",
    "save_edge_list",
    "load_csr_binary",
    "save_csr_binary",
    "build_csr",
    "partition_tiles",
    "gen_synthetic",
    "assign_weights",
]

MAX_VERTEX_ID = 2**32 - 1
_CSR_MAGIC = b"PCSR"


@dataclass
class EdgeList:
    """Flat directed edge list: parallel src/dst/weight arrays."""

    n_vertices: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @classmethod
    def empty(cls) -> "EdgeList":
        return cls(
            n_vertices=0,
            src=np.empty(0, dtype=np.uint32),
            dst=np.empty(0, dtype=np.uint32),
            weight=np.empty(0, dtype=np.uint8),
        )

    @classmethod
    def from_arrays(cls, src, dst, weight=None, n_vertices=None) -> "EdgeList":
        src = np.asarray(src, dtype=np.uint32)
        dst = np.asarray(dst, dtype=np.uint32)
        if weight is None:
            weight = np.zeros(len(src), dtype=np.uint8)
        weight = np.asarray(weight, dtype=np.uint8)
        if len(src) != len(dst) or len(src) != len(weight):
            raise ValueError("src/dst/weight arrays must have equal length")
        if n_vertices is None:
            n_vertices = 0 if len(src) == 0 else int(max(src.max(), dst.max())) + 1
        return cls(n_vertices=int(n_vertices), src=src, dst=dst, weight=weight)


@dataclass
class CsrGraph:
    """CSR form: edges of each source contiguous, destination-sorted."""

    n_vertices: int
    row_ptr: np.ndarray  # uint64, length n_vertices + 1
    col_idx: np.ndarray  # uint32
    weight: np.ndarray  # uint8

    @property
    def n_edges(self) -> int:
        return len(self.col_idx)

    def out_degree(self, u: int) -> int:
        return int(self.row_ptr[u + 1] - self.row_ptr[u])

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr).astype(np.int64)


@dataclass
class TiledGraph:
    """Destination-range tiling of a CsrGraph.

    Each tile holds a full CSR slice (row_ptr of length n_vertices + 1)
    containing exactly the base edges whose destination falls in the
    tile's vertex range, so edge multiplicity is preserved and the
    per-tile edge counts sum to the base edge count.
    """

    base: CsrGraph
    tile_width: int
    n_tiles: int
    tiles: list = field(default_factory=list)  # (row_ptr, col_idx, weight) triples

    @property
    def n_vertices(self) -> int:
        return self.base.n_vertices

    def tile_range(self, t: int) -> tuple[int, int]:
        lo = t * self.tile_width
        hi = min((t + 1) * self.tile_width, self.base.n_vertices)
        return lo, hi


def load_edge_list(path, fmt: str = "auto") -> EdgeList:
    """Load a graph as an EdgeList.

    Parameters
    ----------
    path : str or Path
        Input file.
    fmt : {"auto", "text-edge-list", "binary-csr"}
        "auto" sniffs the binary magic and falls back to text.
    """
    if fmt not in ("auto", "text-edge-list", "binary-csr"):
        raise ValueError(f"unknown format {fmt!r}")
    if fmt == "auto":
        with open(path, "rb") as f:
            magic = f.read(4)
        fmt = "binary-csr" if magic == _CSR_MAGIC else "text-edge-list"
    if fmt == "binary-csr":
        g = load_csr_binary(path)
        src = np.repeat(
            np.arange(g.n_vertices, dtype=np.uint32), g.out_degrees()
        )
        return EdgeList(g.n_vertices, src, g.col_idx.copy(), g.weight.copy())
    return _load_text(path)


def save_edge_list(el: EdgeList, path) -> None:
    """Write 'src dst weight' text with a vertex-count directive.

    The directive keeps trailing isolated vertices across a round trip;
    other tools can ignore it as a comment.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# vertices {el.n_vertices}\n")
        for u, v, w in zip(el.src.tolist(), el.dst.tolist(),
                           el.weight.tolist()):
            f.write(f"{u} {v} {w}\n")


def _load_text(path) -> EdgeList:
    srcs: list[int] = []
    dsts: list[int] = []
    weights: list[int] = []
    n_vertices = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            comment = line.split("#", 1)
            if len(comment) == 2:
                fields = comment[1].split()
                if len(fields) == 2 and fields[0] == "vertices":
                    n_vertices = int(fields[1])
            body = comment[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) not in (2, 3):
                raise ValueError(
                    f"{path}: line {lineno}: expected 'src dst [weight]', got {line!r}"
                )
            try:
                u, v = int(parts[0]), int(parts[1])
                w = int(parts[2]) if len(parts) == 3 else 0
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: non-integer field in {line!r}"
                ) from None
            if u < 0 or v < 0 or u > MAX_VERTEX_ID or v > MAX_VERTEX_ID:
                raise ValueError(
                    f"{path}: line {lineno}: vertex id out of range [0, {MAX_VERTEX_ID}]"
                )
            if not 0 <= w <= 255:
                raise ValueError(f"{path}: line {lineno}: weight {w} not in [0, 255]")
            srcs.append(u)
            dsts.append(v)
            weights.append(w)
    if not srcs:
        el = EdgeList.empty()
        if n_vertices:
            el.n_vertices = n_vertices
        return el
    return EdgeList.from_arrays(srcs, dsts, weights, n_vertices=n_vertices)


def load_csr_binary(path) -> CsrGraph:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _CSR_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {_CSR_MAGIC!r}")
        nv, ne = struct.unpack("<QQ", f.read(16))
        row_ptr = np.fromfile(f, dtype="<u8", count=nv + 1)
        col_idx = np.fromfile(f, dtype="<u4", count=ne)
        weight = np.fromfile(f, dtype="u1", count=ne)
    if len(row_ptr) != nv + 1 or len(col_idx) != ne or len(weight) != ne:
        raise ValueError(f"{path}: truncated binary CSR payload")
    if nv > 0 and int(row_ptr[-1]) != ne:
        raise ValueError(f"{path}: row_ptr tail {row_ptr[-1]} != n_edges {ne}")
    return CsrGraph(int(nv), row_ptr.astype(np.uint64), col_idx, weight)


def save_csr_binary(g: CsrGraph, path) -> None:
    with open(path, "wb") as f:
        f.write(_CSR_MAGIC)
        f.write(struct.pack("<QQ", g.n_vertices, g.n_edges))
        g.row_ptr.astype("<u8").tofile(f)
        g.col_idx.astype("<u4").tofile(f)
        g.weight.astype("u1").tofile(f)


def build_csr(el: EdgeList) -> CsrGraph:
    """Build CSR with per-source edges destination-sorted (duplicates kept)."""
    nv = el.n_vertices
    if el.n_edges == 0:
        return CsrGraph(
            nv,
            np.zeros(nv + 1, dtype=np.uint64),
            np.empty(0, dtype=np.uint32),
            np.empty(0, dtype=np.uint8),
        )
    if int(el.src.max()) >= nv or int(el.dst.max()) >= nv:
        raise ValueError("edge endpoint exceeds n_vertices")
    order = np.lexsort((el.dst, el.src))
    src = el.src[order]
    col = el.dst[order]
    w = el.weight[order]
    counts = np.bincount(src, minlength=nv).astype(np.uint64)
    row_ptr = np.zeros(nv + 1, dtype=np.uint64)
    np.cumsum(counts, out=row_ptr[1:])
    return CsrGraph(nv, row_ptr, col.astype(np.uint32), w.astype(np.uint8))


def partition_tiles(g: CsrGraph, tile_width: int) -> TiledGraph:
    """Split a CSR by destination range into ceil(n_vertices/tile_width) tiles."""
    if tile_width <= 0:
        raise ValueError(f"tile_width must be positive, got {tile_width}")
    nv = g.n_vertices
    n_tiles = max(1, -(-nv // tile_width))
    if g.n_edges == 0:
        tiles = [
            (np.zeros(nv + 1, dtype=np.uint64),
             np.empty(0, dtype=np.uint32),
             np.empty(0, dtype=np.uint8))
            for _ in range(n_tiles)
        ]
        return TiledGraph(g, tile_width, n_tiles, tiles)
    src = np.repeat(np.arange(nv, dtype=np.uint32), g.out_degrees())
    tile_of = (g.col_idx // tile_width).astype(np.uint32)
    # Stable sort by tile keeps the (src, dst) order inside each tile.
    order = np.argsort(tile_of, kind="stable")
    src_t = src[order]
    col_t = g.col_idx[order]
    w_t = g.weight[order]
    tile_sorted = tile_of[order]
    bounds = np.searchsorted(tile_sorted, np.arange(n_tiles + 1))
    tiles = []
    for t in range(n_tiles):
        lo, hi = int(bounds[t]), int(bounds[t + 1])
        counts = np.bincount(src_t[lo:hi], minlength=nv).astype(np.uint64)
        row_ptr = np.zeros(nv + 1, dtype=np.uint64)
        np.cumsum(counts, out=row_ptr[1:])
        tiles.append((row_ptr, col_t[lo:hi].copy(), w_t[lo:hi].copy()))
    return TiledGraph(g, tile_width, n_tiles, tiles)


def gen_synthetic(kind: str, seed: int = 1, **params) -> EdgeList:
    """Generate a synthetic graph.

    Parameters
    ----------
    kind : {"kronecker", "watts-strogatz", "uniform"}
        kronecker takes scale and edge_factor and draws each edge by
        recursive quadrant sampling with probabilities
        (0.57, 0.19, 0.19, 0.05); watts-strogatz takes n, k, beta and
        rewires each ring-lattice edge's destination with probability
        beta; uniform takes n, m.
    seed : int
        RNG seed; identical (kind, params, seed) yields an identical
        edge list.
    """
    rng = np.random.default_rng(seed)
    if kind == "kronecker":
        scale = int(params["scale"])
        edge_factor = int(params.get("edge_factor", 8))
        if scale <= 0 or scale > 32:
            raise ValueError(f"kronecker scale must be in [1, 32], got {scale}")
        nv = 1 << scale
        ne = edge_factor * nv
        src = np.zeros(ne, dtype=np.uint64)
        dst = np.zeros(ne, dtype=np.uint64)
        # Quadrant thresholds: A=0.57, B=0.19, C=0.19, D=0.05.
        for _ in range(scale):
            r = rng.random(ne)
            src_bit = r >= 0.57 + 0.19
            dst_bit = ((r >= 0.57) & (r < 0.76)) | (r >= 0.95)
            src = (src << np.uint64(1)) | src_bit.astype(np.uint64)
            dst = (dst << np.uint64(1)) | dst_bit.astype(np.uint64)
        el = EdgeList.from_arrays(src, dst, n_vertices=nv)
    elif kind == "watts-strogatz":
        n = int(params["n"])
        k = int(params.get("k", 4))
        beta = float(params.get("beta", 0.1))
        if k <= 0 or k % 2 != 0 or k >= n:
            raise ValueError(f"watts-strogatz needs even 0 < k < n, got k={k}")
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {beta}")
        base = np.arange(n, dtype=np.int64)
        srcs = []
        dsts = []
        # Both directions of each lattice link, so n*k directed edges.
        for j in range(1, k // 2 + 1):
            srcs.append(base)
            dsts.append((base + j) % n)
            srcs.append(base)
            dsts.append((base - j) % n)
        src = np.concatenate(srcs)
        dst = np.concatenate(dsts)
        rewire = rng.random(len(src)) < beta
        new_dst = rng.integers(0, n, size=len(src), dtype=np.int64)
        # Redraw rewired self-loops deterministically by shifting.
        collide = rewire & (new_dst == src)
        new_dst[collide] = (new_dst[collide] + 1) % n
        dst = np.where(rewire, new_dst, dst)
        el = EdgeList.from_arrays(src, dst, n_vertices=n)
    elif kind == "uniform":
        n = int(params["n"])
        m = int(params["m"])
        src = rng.integers(0, n, size=m, dtype=np.int64)
        dst = rng.integers(0, n, size=m, dtype=np.int64)
        el = EdgeList.from_arrays(src, dst, n_vertices=n)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    el.weight = _draw_weights(el.n_edges, rng)
    return el


def _draw_weights(n_edges: int, rng) -> np.ndarray:
    return rng.integers(0, 256, size=n_edges, dtype=np.int64).astype(np.uint8)


def assign_weights(el: EdgeList, seed: int = 1) -> EdgeList:
    """Return a copy of el with fresh uniform [0, 255] integer weights.

    Topology is untouched; identical seeds yield identical weights.
    """
    rng = np.random.default_rng(seed)
    return EdgeList.from_arrays(el.src, el.dst,
                                weight=_draw_weights(el.n_edges, rng),
                                n_vertices=el.n_vertices)
