"""Tests for the figure renderer.

Fixtures write small schema-conforming CSVs (the run/sweep schema and
the microbenchmark schema) so the renderer is exercised exactly the
way real experiment output drives it.
"""

import csv
import math
import os

import pytest

from fimplots import (
    FIGURE_KINDS,
    MODEL_COLORS,
    MODEL_ORDER,
    FigureSpec,
    geometric_mean,
    main,
    render_figures,
)

RUN_COLUMNS = [
    "config_id", "graph", "algorithm", "model", "tile_factor", "cycles",
    "speedup_vs_baseline", "reads", "writes", "bytes_fetched",
    "bytes_useful", "offchip_GBps", "internal_GBps", "fim_gathers",
    "fim_scatters", "iterations",
]
MICRO_COLUMNS = [
    "stride", "layout", "total_bytes", "baseline_ps", "fim_ps",
    "baseline_bursts", "fim_bursts", "gathers", "speedup",
]

SPEEDUPS = {
    ("kron12", "conventional"): [1.0, 1.0],
    ("kron12", "piccolo"): [1.5, 1.7],
    ("ws4096", "conventional"): [1.0, 1.0],
    ("ws4096", "piccolo"): [1.2, 1.4],
}
CYCLES = {"conventional": [40000, 36000], "piccolo": [25000, 21000]}
STRIDE_SPEEDUPS = {
    "single-row": [0.44, 1.1, 2.3, 3.8],
    "multi-row": [0.40, 0.9, 1.6, 2.2],
}


def _run_rows():
    rows = []
    for graph in ("kron12", "ws4096"):
        for model in ("conventional", "piccolo"):
            for j, factor in enumerate((1, 4)):
                fim = model == "piccolo"
                rows.append({
                    "config_id": f"t:{graph}:bfs:{model}:x{factor}",
                    "graph": graph,
                    "algorithm": "bfs",
                    "model": model,
                    "tile_factor": factor,
                    "cycles": CYCLES[model][j]
                    + (1000 if graph == "ws4096" else 0),
                    "speedup_vs_baseline": SPEEDUPS[(graph, model)][j],
                    "reads": 5000 + 7 * factor,
                    "writes": 900 - factor,
                    "bytes_fetched": 640000 // factor,
                    "bytes_useful": 120000,
                    "offchip_GBps": 10.0 + j,
                    "internal_GBps": 4.5 + j if fim else 0.0,
                    "fim_gathers": 800 if fim else 0,
                    "fim_scatters": 150 if fim else 0,
                    "iterations": 9,
                })
    return rows


def _write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    return str(path)


def _run_csv(tmp_path, name="run.csv"):
    return _write_csv(tmp_path / name, RUN_COLUMNS, _run_rows())


def _micro_csv(tmp_path, name="micro.csv"):
    rows = []
    for layout in ("single-row", "multi-row"):
        for stride, speed in zip((1, 2, 4, 8), STRIDE_SPEEDUPS[layout]):
            baseline_ps = 8_000_000
            rows.append({
                "stride": stride,
                "layout": layout,
                "total_bytes": 65536,
                "baseline_ps": baseline_ps,
                "fim_ps": int(baseline_ps / speed),
                "baseline_bursts": 1024 * min(stride, 8),
                "fim_bursts": 2048,
                "gathers": 1024 if layout == "single-row" else 2048,
                "speedup": speed,
            })
    return _write_csv(tmp_path / name, MICRO_COLUMNS, rows)


def _all_specs(tmp_path):
    run = _run_csv(tmp_path)
    micro = _micro_csv(tmp_path)
    out = tmp_path / "figs"
    return [
        FigureSpec("speedup-bars", run, str(out / "speedup.svg")),
        FigureSpec("breakdown-stack", run, str(out / "breakdown.svg"),
                   group_col="model"),
        FigureSpec("bandwidth-bars", run, str(out / "bandwidth.svg")),
        FigureSpec("tile-lines", run, str(out / "tiles.svg")),
        FigureSpec("stride-curves", micro, str(out / "strides.svg")),
    ]


def test_all_five_kinds_render(tmp_path):
    rendered = render_figures(_all_specs(tmp_path))
    assert [r.kind for r in rendered] == list(FIGURE_KINDS)
    n_files = 0
    for r in rendered:
        assert len(r.paths) == 2
        assert r.paths[0].endswith(".svg") and r.paths[1].endswith(".png")
        for p in r.paths:
            assert os.path.getsize(p) > 0
            n_files += 1
    print(f"[PASS] figure rendering: {len(rendered)} kinds, "
          f"{n_files} non-empty files (svg+png each)", flush=True)


def test_gm_bar_matches_independent_geometric_mean(tmp_path):
    run = _run_csv(tmp_path)
    spec = FigureSpec("speedup-bars", run, str(tmp_path / "speedup.svg"))
    (fig,) = render_figures([spec])
    assert fig.data["groups"][-1] == "GM"

    with open(run, newline="") as f:
        raw = list(csv.DictReader(f))
    groups = list(dict.fromkeys(r["graph"] for r in raw))
    worst = 0.0
    for model, values in fig.data["series"].items():
        cell_means = []
        for g in groups:
            cell = [float(r["speedup_vs_baseline"]) for r in raw
                    if r["graph"] == g and r["model"] == model]
            cell_means.append(sum(cell) / len(cell))
        expected = math.exp(sum(math.log(v) for v in cell_means)
                            / len(cell_means))
        rel = abs(values[-1] - expected) / expected
        worst = max(worst, rel)
        assert rel < 1e-9
        assert values[:-1] == pytest.approx(cell_means)
    print(f"[PASS] GM bar: matches independent geometric mean, worst "
          f"relative error {worst:.2e} < 1e-9", flush=True)


def test_geometric_mean_helper():
    assert geometric_mean([2.0, 8.0]) == pytest.approx(4.0, abs=1e-12)
    assert geometric_mean([3.0]) == pytest.approx(3.0)
    with pytest.raises(ValueError, match="no values"):
        geometric_mean([])
    with pytest.raises(ValueError, match="positive"):
        geometric_mean([1.0, 0.0])
    with pytest.raises(ValueError, match="positive"):
        geometric_mean([1.0, -2.0])


def test_missing_column_names_the_column(tmp_path):
    cols = [c for c in RUN_COLUMNS if c != "speedup_vs_baseline"]
    rows = [{k: v for k, v in r.items() if k in cols} for r in _run_rows()]
    path = _write_csv(tmp_path / "partial.csv", cols, rows)
    spec = FigureSpec("speedup-bars", path, str(tmp_path / "f.svg"))
    with pytest.raises(ValueError, match="speedup_vs_baseline"):
        render_figures([spec])

    micro_cols = [c for c in MICRO_COLUMNS if c != "layout"]
    path = _write_csv(tmp_path / "m.csv", micro_cols,
                      [{"stride": 1, "speedup": 1.0}])
    spec = FigureSpec("stride-curves", path, str(tmp_path / "g.svg"))
    with pytest.raises(ValueError, match="layout"):
        render_figures([spec])


def test_empty_csv_is_an_error(tmp_path):
    header_only = tmp_path / "header.csv"
    header_only.write_text(",".join(RUN_COLUMNS) + "\n")
    spec = FigureSpec("speedup-bars", str(header_only),
                      str(tmp_path / "f.svg"))
    with pytest.raises(ValueError, match="empty CSV"):
        render_figures([spec])

    blank = tmp_path / "blank.csv"
    blank.write_text("")
    spec = FigureSpec("tile-lines", str(blank), str(tmp_path / "g.svg"))
    with pytest.raises(ValueError, match="empty CSV"):
        render_figures([spec])


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError, match="unknown figure kind"):
        FigureSpec("pie", str(tmp_path / "run.csv"),
                   str(tmp_path / "f.svg"))


def test_model_order_and_colors_are_fixed(tmp_path):
    assert MODEL_ORDER == ("conventional", "sectored", "line8", "piccolo")
    assert set(MODEL_COLORS) == set(MODEL_ORDER)

    rows = list(reversed(_run_rows()))
    path = _write_csv(tmp_path / "rev.csv", RUN_COLUMNS, rows)
    spec = FigureSpec("speedup-bars", path, str(tmp_path / "f.svg"))
    (fig,) = render_figures([spec])
    assert list(fig.data["series"]) == ["conventional", "piccolo"]
    assert fig.data["groups"][:-1] == ["ws4096", "kron12"]


def test_breakdown_stack_values(tmp_path):
    path = _run_csv(tmp_path)
    spec = FigureSpec("breakdown-stack", path, str(tmp_path / "b.svg"),
                      group_col="model")
    (fig,) = render_figures([spec])
    raw = _run_rows()
    for i, model in enumerate(fig.data["groups"]):
        sub = [r for r in raw if r["model"] == model]
        fetched = sum(r["bytes_fetched"] for r in sub)
        useful = sum(r["bytes_useful"] for r in sub)
        assert fig.data["useful"][i] == pytest.approx(useful)
        assert fig.data["unuseful"][i] == pytest.approx(fetched - useful)


def test_stride_curve_panels(tmp_path):
    path = _micro_csv(tmp_path)
    spec = FigureSpec("stride-curves", path, str(tmp_path / "s.svg"))
    (fig,) = render_figures([spec])
    assert list(fig.data["panels"]) == ["single-row", "multi-row"]
    for layout, panel in fig.data["panels"].items():
        assert panel["x"] == [1, 2, 4, 8]
        assert panel["y"] == pytest.approx(STRIDE_SPEEDUPS[layout])


def test_tile_lines_average_cycles_per_factor(tmp_path):
    path = _run_csv(tmp_path)
    spec = FigureSpec("tile-lines", path, str(tmp_path / "t.svg"))
    (fig,) = render_figures([spec])
    picc = fig.data["series"]["piccolo"]
    assert picc["x"] == [1, 4]
    assert picc["y"] == pytest.approx([25500.0, 21500.0])
    conv = fig.data["series"]["conventional"]
    assert conv["y"] == pytest.approx([40500.0, 36500.0])


def test_bandwidth_bars_values(tmp_path):
    path = _run_csv(tmp_path)
    spec = FigureSpec("bandwidth-bars", path, str(tmp_path / "bw.svg"))
    (fig,) = render_figures([spec])
    picc = fig.data["series"]["piccolo"]
    assert picc["offchip"] == pytest.approx([10.5, 10.5])
    assert picc["internal"] == pytest.approx([5.0, 5.0])
    conv = fig.data["series"]["conventional"]
    assert conv["internal"] == pytest.approx([0.0, 0.0])


def test_incomplete_series_group_grid_is_an_error(tmp_path):
    rows = [r for r in _run_rows()
            if not (r["graph"] == "ws4096" and r["model"] == "piccolo")]
    path = _write_csv(tmp_path / "holes.csv", RUN_COLUMNS, rows)
    spec = FigureSpec("speedup-bars", path, str(tmp_path / "f.svg"))
    with pytest.raises(ValueError, match="'piccolo' has no rows"):
        render_figures([spec])


def test_render_data_is_deterministic(tmp_path):
    run = _run_csv(tmp_path)
    spec_a = FigureSpec("speedup-bars", run, str(tmp_path / "a.svg"))
    spec_b = FigureSpec("speedup-bars", run, str(tmp_path / "b.svg"))
    (a,) = render_figures([spec_a])
    (b,) = render_figures([spec_b])
    assert a.data == b.data


def test_main_renders_standard_set(tmp_path, capsys):
    run = _run_csv(tmp_path)
    micro = _micro_csv(tmp_path)
    outdir = tmp_path / "figs"
    rc = main(["--run-csv", run, "--microbench-csv", micro,
               "--outdir", str(outdir)])
    assert rc == 0
    names = ["speedup", "breakdown", "bandwidth", "tiles", "strides"]
    for name in names:
        for ext in (".svg", ".png"):
            p = outdir / (name + ext)
            assert p.exists() and p.stat().st_size > 0
    assert "wrote" in capsys.readouterr().err


def test_main_error_exits(tmp_path, capsys):
    assert main(["--outdir", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err

    rc = main(["--run-csv", str(tmp_path / "missing.csv"),
               "--outdir", str(tmp_path)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err
