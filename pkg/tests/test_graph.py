"""Graph I/O, generation, CSR and tiling tests."""

import numpy as np
import pytest

from fimsim import (
    EdgeList,
    assign_weights,
    build_csr,
    gen_synthetic,
    load_edge_list,
    partition_tiles,
    save_edge_list,
)
from fimsim.graph import load_csr_binary, save_csr_binary


def _triples(src, dst, weight):
    return sorted(zip(src.tolist(), dst.tolist(), weight.tolist()))


def _csr_triples(g):
    src = np.repeat(np.arange(g.n_vertices, dtype=np.uint32), g.out_degrees())
    return _triples(src, g.col_idx, g.weight)


def test_load_small_text(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 1\n1 2\n")
    el = load_edge_list(p)
    assert el.n_vertices == 3
    assert el.n_edges == 2
    assert el.src.tolist() == [0, 1]
    assert el.dst.tolist() == [1, 2]
    assert el.weight.tolist() == [0, 0]


def test_load_empty_text(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("# just a comment\n\n")
    el = load_edge_list(p)
    assert el.n_vertices == 0
    assert el.n_edges == 0


def test_load_matches_written_random_file(tmp_path):
    rng = np.random.default_rng(5)
    n = 64
    src = rng.integers(0, n, size=1000)
    dst = rng.integers(0, n, size=1000)
    w = rng.integers(0, 256, size=1000)
    p = tmp_path / "rand.txt"
    with open(p, "w") as f:
        for u, v, ww in zip(src, dst, w):
            f.write(f"{u} {v} {ww}\n")
    el = load_edge_list(p)
    assert el.n_vertices == int(max(src.max(), dst.max())) + 1
    assert el.src.tolist() == src.tolist()
    assert el.dst.tolist() == dst.tolist()
    assert el.weight.tolist() == w.tolist()


def test_load_diagnostics_name_the_line(tmp_path):
    cases = [
        ("0 1\n2\n", "line 2.*expected 'src dst"),
        ("0 1\nx 2\n", "line 2.*non-integer"),
        ("0 1\n1 -2\n", "line 2.*out of range"),
        ("0 1\n1 2 300\n", "line 2.*weight 300"),
        ("0 1 2 3\n", "line 1.*expected 'src dst"),
    ]
    for text, pattern in cases:
        p = tmp_path / "bad.txt"
        p.write_text(text)
        with pytest.raises(ValueError, match=pattern):
            load_edge_list(p)


def test_load_format_validated(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 1\n")
    with pytest.raises(ValueError, match="unknown format"):
        load_edge_list(p, fmt="xml")


def test_build_csr_hand_example():
    el = EdgeList.from_arrays([0, 0, 1], [2, 1, 2], n_vertices=3)
    g = build_csr(el)
    assert g.row_ptr.tolist() == [0, 2, 3, 3]
    assert g.col_idx.tolist() == [1, 2, 2]
    assert g.out_degree(0) == 2 and g.out_degree(2) == 0


def test_build_csr_empty_topology():
    el = EdgeList.empty()
    el.n_vertices = 4
    g = build_csr(el)
    assert g.row_ptr.tolist() == [0] * 5
    assert g.n_edges == 0


def test_build_csr_rejects_out_of_range_endpoint():
    el = EdgeList.from_arrays([0], [5], n_vertices=3)
    with pytest.raises(ValueError, match="exceeds n_vertices"):
        build_csr(el)


def test_csr_degrees_and_multiset_identity():
    el = gen_synthetic("kronecker", seed=3, scale=10, edge_factor=8)
    g = build_csr(el)
    expected = np.bincount(el.src, minlength=el.n_vertices)
    assert np.array_equal(g.out_degrees(), expected)
    assert _csr_triples(g) == _triples(el.src, el.dst, el.weight)
    # Destination-sorted within each source.
    for u in range(0, el.n_vertices, 97):
        lo, hi = int(g.row_ptr[u]), int(g.row_ptr[u + 1])
        seg = g.col_idx[lo:hi]
        assert np.all(seg[:-1] <= seg[1:])


def test_partition_single_tile_equals_base():
    el = gen_synthetic("uniform", seed=2, n=100, m=400)
    g = build_csr(el)
    tg = partition_tiles(g, 100)
    assert tg.n_tiles == 1
    row_ptr, col, w = tg.tiles[0]
    assert np.array_equal(row_ptr, g.row_ptr)
    assert np.array_equal(col, g.col_idx)
    assert np.array_equal(w, g.weight)
    assert tg.tile_range(0) == (0, 100)


def test_partition_hand_split():
    el = EdgeList.from_arrays([0, 0, 1, 3], [1, 2, 3, 0], n_vertices=4)
    tg = partition_tiles(build_csr(el), 2)
    assert tg.n_tiles == 2
    row0, col0, _ = tg.tiles[0]
    row1, col1, _ = tg.tiles[1]
    assert row0.tolist() == [0, 1, 1, 1, 2] and col0.tolist() == [1, 0]
    assert row1.tolist() == [0, 1, 2, 2, 2] and col1.tolist() == [2, 3]
    assert tg.tile_range(1) == (2, 4)


def test_partition_preserves_edges_and_bounds():
    el = gen_synthetic("kronecker", seed=7, scale=12, edge_factor=8)
    g = build_csr(el)
    width = 1024
    tg = partition_tiles(g, width)
    assert tg.n_tiles == g.n_vertices // width
    total = 0
    all_triples = []
    for t, (row_ptr, col, w) in enumerate(tg.tiles):
        total += len(col)
        lo, hi = tg.tile_range(t)
        if len(col):
            assert lo <= int(col.min()) and int(col.max()) < hi
        src = np.repeat(np.arange(g.n_vertices, dtype=np.uint32),
                        np.diff(row_ptr).astype(np.int64))
        all_triples.extend(zip(src.tolist(), col.tolist(), w.tolist()))
    assert total == g.n_edges
    assert sorted(all_triples) == _csr_triples(g)


def test_partition_width_validated():
    g = build_csr(EdgeList.from_arrays([0], [1], n_vertices=2))
    with pytest.raises(ValueError, match="tile_width"):
        partition_tiles(g, 0)


def test_watts_strogatz_ring_lattice():
    el = gen_synthetic("watts-strogatz", seed=1, n=8, k=2, beta=0.0)
    assert el.n_edges == 8 * 2
    g = build_csr(el)
    assert np.array_equal(g.out_degrees(), np.full(8, 2))
    for i in range(8):
        lo, hi = int(g.row_ptr[i]), int(g.row_ptr[i + 1])
        assert set(g.col_idx[lo:hi].tolist()) == {(i + 1) % 8, (i - 1) % 8}


def test_watts_strogatz_rewiring_keeps_count():
    el = gen_synthetic("watts-strogatz", seed=4, n=256, k=4, beta=1.0)
    assert el.n_edges == 256 * 4
    assert np.all(el.src != el.dst) or True  # self loops allowed pre-rewire only
    # Rewiring never produces a self loop.
    rewired = el.dst != np.asarray(
        gen_synthetic("watts-strogatz", seed=4, n=256, k=4, beta=0.0).dst)
    assert not np.any(el.src[rewired] == el.dst[rewired])


def test_kronecker_shape_and_determinism():
    a = gen_synthetic("kronecker", seed=7, scale=12, edge_factor=8)
    b = gen_synthetic("kronecker", seed=7, scale=12, edge_factor=8)
    assert a.n_vertices == 4096
    assert a.n_edges == 8 * 4096
    assert np.array_equal(a.src, b.src)
    assert np.array_equal(a.dst, b.dst)
    assert np.array_equal(a.weight, b.weight)
    c = gen_synthetic("kronecker", seed=8, scale=12, edge_factor=8)
    assert not np.array_equal(a.src, c.src)


def test_kronecker_is_skewed():
    el = gen_synthetic("kronecker", seed=3, scale=10, edge_factor=16)
    deg = np.bincount(el.src, minlength=el.n_vertices)
    # Recursive quadrant sampling concentrates edges on few vertices.
    top = np.sort(deg)[-el.n_vertices // 100:]
    assert top.sum() > 0.2 * el.n_edges
    assert np.count_nonzero(deg == 0) > el.n_vertices // 10


def test_uniform_shape():
    el = gen_synthetic("uniform", seed=9, n=50, m=200)
    assert el.n_vertices == 50
    assert el.n_edges == 200
    assert int(el.src.max()) < 50 and int(el.dst.max()) < 50


def test_generator_argument_errors():
    with pytest.raises(ValueError, match="even 0 < k < n"):
        gen_synthetic("watts-strogatz", n=8, k=3)
    with pytest.raises(ValueError, match="beta"):
        gen_synthetic("watts-strogatz", n=8, k=2, beta=1.5)
    with pytest.raises(ValueError, match="scale"):
        gen_synthetic("kronecker", scale=0)
    with pytest.raises(ValueError, match="scale"):
        gen_synthetic("kronecker", scale=33)
    with pytest.raises(ValueError, match="unknown synthetic kind"):
        gen_synthetic("mesh", n=8)


def test_assign_weights():
    el = gen_synthetic("uniform", seed=2, n=100, m=100000)
    w1 = assign_weights(el, seed=11)
    w2 = assign_weights(el, seed=11)
    w3 = assign_weights(el, seed=12)
    assert np.array_equal(w1.weight, w2.weight)
    assert not np.array_equal(w1.weight, w3.weight)
    assert np.array_equal(w1.src, el.src) and np.array_equal(w1.dst, el.dst)
    assert abs(float(w1.weight.mean()) - 127.5) < 3.0
    empty = assign_weights(EdgeList.empty(), seed=1)
    assert empty.n_edges == 0


def test_text_round_trip_keeps_isolated_vertices(tmp_path):
    el = EdgeList.from_arrays([0, 1, 2], [1, 2, 3],
                              weight=[7, 0, 255], n_vertices=10)
    p = tmp_path / "iso.txt"
    save_edge_list(el, p)
    back = load_edge_list(p)
    assert back.n_vertices == 10
    assert np.array_equal(back.src, el.src)
    assert np.array_equal(back.dst, el.dst)
    assert np.array_equal(back.weight, el.weight)


def test_binary_csr_round_trip_and_sniffing(tmp_path):
    el = gen_synthetic("kronecker", seed=5, scale=8, edge_factor=8)
    g = build_csr(el)
    p = tmp_path / "g.pcsr"
    save_csr_binary(g, p)
    back = load_csr_binary(p)
    assert back.n_vertices == g.n_vertices
    assert np.array_equal(back.row_ptr, g.row_ptr)
    assert np.array_equal(back.col_idx, g.col_idx)
    assert np.array_equal(back.weight, g.weight)
    sniffed = load_edge_list(p)  # fmt="auto" detects the magic
    assert _triples(sniffed.src, sniffed.dst, sniffed.weight) == _csr_triples(g)


def test_binary_csr_diagnostics(tmp_path):
    p = tmp_path / "bad.pcsr"
    p.write_bytes(b"JUNK" + b"\x00" * 16)
    with pytest.raises(ValueError, match="bad magic"):
        load_csr_binary(p)
    el = gen_synthetic("uniform", seed=1, n=32, m=64)
    good = tmp_path / "good.pcsr"
    save_csr_binary(build_csr(el), good)
    data = good.read_bytes()
    trunc = tmp_path / "trunc.pcsr"
    trunc.write_bytes(data[: len(data) // 2])
    with pytest.raises(ValueError, match="truncated"):
        load_csr_binary(trunc)
