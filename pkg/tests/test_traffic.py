"""Closed-form traffic estimator tests."""

import pytest

from fimsim import estimate_traffic, sweet_spot


def test_exact_component_formulas():
    est = estimate_traffic(100, 400, 2, mode="untiled")
    assert est.row_index_bytes == 8 * 100 * 2
    assert est.col_index_bytes == 4 * 400
    assert est.seq_prop_bytes == 8 * 100 * 2
    assert est.rand_prop_bytes == 400 * 64
    assert est.total == 1600 + 1600 + 1600 + 25600
    assert estimate_traffic(100, 400, 2, mode="perfect").rand_prop_bytes == 100 * 64
    assert estimate_traffic(100, 400, 2, mode="piccolo").rand_prop_bytes == 100 * 8


def test_topology_terms_identical_across_modes():
    untiled = estimate_traffic(1000, 5000, 1, mode="untiled")
    perfect = estimate_traffic(1000, 5000, 1, mode="perfect")
    assert untiled.row_index_bytes == perfect.row_index_bytes
    assert untiled.col_index_bytes == perfect.col_index_bytes
    assert untiled.seq_prop_bytes == perfect.seq_prop_bytes


def test_granularity_gap_ratio():
    nv, ne = 10**4, 10**5
    untiled = estimate_traffic(nv, ne, 1, mode="untiled")
    piccolo = estimate_traffic(nv, ne, 1, mode="piccolo")
    assert untiled.rand_prop_bytes == 64 * ne
    assert piccolo.rand_prop_bytes <= 8 * ne
    assert untiled.rand_prop_bytes == 8 * (8 * ne)


def test_fine_grained_term_caps_at_vertex_count():
    sparse = estimate_traffic(512, 256, 1, mode="piccolo")
    assert sparse.rand_prop_bytes == 8 * 256
    dense = estimate_traffic(512, 4096, 1, mode="piccolo")
    assert dense.rand_prop_bytes == 8 * 512


def test_topology_terms_monotone_in_tile_count():
    prev = None
    for t in (1, 2, 4, 8, 16):
        est = estimate_traffic(4096, 65536, t, mode="perfect")
        if prev is not None:
            assert est.row_index_bytes > prev.row_index_bytes
            assert est.seq_prop_bytes > prev.seq_prop_bytes
            assert est.col_index_bytes == prev.col_index_bytes
            assert est.rand_prop_bytes == prev.rand_prop_bytes
        prev = est


def test_argument_errors():
    with pytest.raises(ValueError, match="tile count"):
        estimate_traffic(10, 20, 0)
    with pytest.raises(ValueError, match="mode"):
        estimate_traffic(10, 20, 1, mode="magic")
    with pytest.raises(ValueError, match="non-empty"):
        sweet_spot(10, 20, [])


def test_sweet_spot_picks_minimum_total():
    assert sweet_spot(4096, 65536, [1, 2, 4, 8], mode="perfect") == 1
    assert sweet_spot(4096, 65536, [8, 4, 2], mode="untiled") == 2


def test_tiling_pays_off_when_edges_dominate():
    # Edges far outnumber vertices: below the cache-fitting tile count
    # random traffic is burst-sized, at and above it byte-sized, so the
    # composed curve drops at the fitting point and climbs after.
    nv, ne, cache_bytes = 4096, 65536, 1024
    t_fit = (8 * nv) // cache_bytes
    def total(t):
        mode = "untiled" if t < t_fit else "perfect"
        return estimate_traffic(nv, ne, t, mode=mode).total
    assert total(t_fit) < total(1)
    after = [total(t) for t in (t_fit, 2 * t_fit, 4 * t_fit)]
    assert after == sorted(after)
    assert sweet_spot(nv, ne, [t_fit, 2 * t_fit, 4 * t_fit],
                      mode="perfect") == t_fit
