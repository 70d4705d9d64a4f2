"""Render the five standard figures from experiment CSV output.

Input is never free text: every value is read by column name from the
run/sweep schema (config_id .. iterations) or the microbenchmark
schema (stride .. speedup).  Each figure is written as both a vector
(.svg) and a raster (.png) file, with a fixed series order and color
per model so figures stay comparable across runs.
"""

import argparse
import csv
import os
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "FIGURE_KINDS",
    "MODEL_ORDER",
    "MODEL_COLORS",
    "FigureSpec",
    "RenderedFigure",
    "geometric_mean",
    "render_figures",
    "main",
]

FIGURE_KINDS = (
    "speedup-bars",
    "breakdown-stack",
    "bandwidth-bars",
    "tile-lines",
    "stride-curves",
)

MODEL_ORDER = ("conventional", "sectored", "line8", "piccolo")
MODEL_COLORS = {
    "conventional": "#7f7f7f",
    "sectored": "#1f77b4",
    "line8": "#2ca02c",
    "piccolo": "#d62728",
}
_EXTRA_COLORS = ("#9467bd", "#8c564b", "#e377c2", "#17becf")
_USEFUL_COLOR = "#4c72b0"
_UNUSEFUL_COLOR = "#c44e52"
_LAYOUT_ORDER = ("single-row", "multi-row")


@dataclass
class FigureSpec:
    """One figure to render: kind, input CSV, output image path.

    group_col picks the x-axis grouping and series_col the per-bar or
    per-line split where the kind uses them; value columns are fixed
    by the kind (speedup_vs_baseline, bytes_* and so on).
    """

    kind: str
    csv_path: str
    out_path: str
    group_col: str = "graph"
    series_col: str = "model"
    title: str = ""

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(
                f"unknown figure kind {self.kind!r}; choices: "
                + ", ".join(FIGURE_KINDS))


@dataclass
class RenderedFigure:
    """What one spec produced: output paths plus the plotted values."""

    kind: str
    paths: list = field(default_factory=list)
    data: dict = field(default_factory=dict)


def geometric_mean(values) -> float:
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("geometric mean of no values")
    if np.any(arr <= 0):
        raise ValueError("geometric mean needs positive values")
    return float(np.exp(np.mean(np.log(arr))))


def _read_rows(path) -> tuple:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        fieldnames = reader.fieldnames
        rows = list(reader)
    if not fieldnames or not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows, fieldnames


def _require(fieldnames, columns, path) -> None:
    for col in columns:
        if col not in fieldnames:
            raise ValueError(f"{path}: missing column {col!r}")


def _ordered_unique(values) -> list:
    return list(dict.fromkeys(values))


def _series_order(names) -> list:
    known = [m for m in MODEL_ORDER if m in names]
    rest = sorted(n for n in names if n not in MODEL_ORDER)
    return known + rest


def _series_color(name, index) -> str:
    return MODEL_COLORS.get(name, _EXTRA_COLORS[index % len(_EXTRA_COLORS)])


def _cell_mean(rows, spec, group, series, value_col) -> float:
    vals = [float(r[value_col]) for r in rows
            if r[spec.group_col] == group and r[spec.series_col] == series]
    if not vals:
        raise ValueError(
            f"{spec.csv_path}: series {series!r} has no rows for "
            f"group {group!r}")
    return float(np.mean(vals))


# -- the five kinds -----------------------------------------------------------


def _speedup_bars(spec, rows, fieldnames, ax) -> dict:
    _require(fieldnames, [spec.group_col, spec.series_col,
                          "speedup_vs_baseline"], spec.csv_path)
    groups = _ordered_unique(r[spec.group_col] for r in rows)
    series = _series_order({r[spec.series_col] for r in rows})
    table = {}
    for s in series:
        vals = [_cell_mean(rows, spec, g, s, "speedup_vs_baseline")
                for g in groups]
        table[s] = vals + [geometric_mean(vals)]
    xgroups = groups + ["GM"]
    x = np.arange(len(xgroups))
    width = 0.8 / len(series)
    for i, s in enumerate(series):
        ax.bar(x + (i - (len(series) - 1) / 2) * width, table[s],
               width, label=s, color=_series_color(s, i))
    ax.set_xticks(x, xgroups)
    ax.set_ylabel("speedup vs conventional")
    ax.axhline(1.0, color="black", linewidth=0.6)
    ax.legend()
    return {"groups": xgroups, "series": table}


def _breakdown_stack(spec, rows, fieldnames, ax) -> dict:
    _require(fieldnames, [spec.group_col, "bytes_fetched", "bytes_useful"],
             spec.csv_path)
    groups = _ordered_unique(r[spec.group_col] for r in rows)
    useful, unuseful = [], []
    for g in groups:
        sub = [r for r in rows if r[spec.group_col] == g]
        fetched = sum(float(r["bytes_fetched"]) for r in sub)
        used = sum(float(r["bytes_useful"]) for r in sub)
        useful.append(used)
        unuseful.append(fetched - used)
    x = np.arange(len(groups))
    ax.bar(x, useful, 0.6, label="useful", color=_USEFUL_COLOR)
    ax.bar(x, unuseful, 0.6, bottom=useful, label="unuseful",
           color=_UNUSEFUL_COLOR)
    ax.set_xticks(x, groups)
    ax.set_ylabel("fetched bytes")
    ax.legend()
    return {"groups": groups, "useful": useful, "unuseful": unuseful}


def _bandwidth_bars(spec, rows, fieldnames, ax) -> dict:
    _require(fieldnames, [spec.group_col, spec.series_col,
                          "offchip_GBps", "internal_GBps"], spec.csv_path)
    groups = _ordered_unique(r[spec.group_col] for r in rows)
    series = _series_order({r[spec.series_col] for r in rows})
    table = {}
    x = np.arange(len(groups))
    width = 0.8 / len(series)
    for i, s in enumerate(series):
        off = [_cell_mean(rows, spec, g, s, "offchip_GBps") for g in groups]
        internal = [_cell_mean(rows, spec, g, s, "internal_GBps")
                    for g in groups]
        table[s] = {"offchip": off, "internal": internal}
        pos = x + (i - (len(series) - 1) / 2) * width
        color = _series_color(s, i)
        ax.bar(pos, off, width, label=f"{s} off-chip", color=color)
        ax.bar(pos, internal, width, bottom=off, label=f"{s} internal",
               color=color, alpha=0.45, hatch="//")
    ax.set_xticks(x, groups)
    ax.set_ylabel("GB/s")
    ax.legend(fontsize="small")
    return {"groups": groups, "series": table}


def _tile_lines(spec, rows, fieldnames, ax) -> dict:
    _require(fieldnames, ["tile_factor", spec.series_col, "cycles"],
             spec.csv_path)
    series = _series_order({r[spec.series_col] for r in rows})
    table = {}
    for i, s in enumerate(series):
        sub = [r for r in rows if r[spec.series_col] == s]
        factors = sorted({int(r["tile_factor"]) for r in sub})
        ys = []
        for f in factors:
            vals = [float(r["cycles"]) for r in sub
                    if int(r["tile_factor"]) == f]
            ys.append(float(np.mean(vals)))
        table[s] = {"x": factors, "y": ys}
        ax.plot(factors, ys, marker="o", label=s,
                color=_series_color(s, i))
    ax.set_xscale("log", base=2)
    ax.set_xlabel("tile scaling factor")
    ax.set_ylabel("cycles")
    ax.legend()
    return {"series": table}


def _stride_curves(spec, rows, fieldnames, axes) -> dict:
    _require(fieldnames, ["stride", "layout", "speedup"], spec.csv_path)
    layouts = [l for l in _LAYOUT_ORDER
               if any(r["layout"] == l for r in rows)]
    extra = sorted({r["layout"] for r in rows} - set(_LAYOUT_ORDER))
    layouts += extra
    if not layouts:
        raise ValueError(f"{spec.csv_path}: no layout rows")
    panels = {}
    for ax, layout in zip(axes, layouts):
        sub = [r for r in rows if r["layout"] == layout]
        strides = sorted({int(r["stride"]) for r in sub})
        ys = []
        for st in strides:
            vals = [float(r["speedup"]) for r in sub
                    if int(r["stride"]) == st]
            ys.append(float(np.mean(vals)))
        panels[layout] = {"x": strides, "y": ys}
        ax.plot(strides, ys, marker="o", color=MODEL_COLORS["piccolo"])
        ax.axhline(1.0, color="black", linewidth=0.6)
        ax.set_xscale("log", base=2)
        ax.set_title(layout)
        ax.set_xlabel("stride (8B words)")
    axes[0].set_ylabel("gather speedup")
    return {"panels": panels}


def _save(fig, out_path) -> list:
    root, _ = os.path.splitext(str(out_path))
    parent = os.path.dirname(root)
    if parent:
        os.makedirs(parent, exist_ok=True)
    paths = [root + ".svg", root + ".png"]
    fig.savefig(paths[0])
    fig.savefig(paths[1], dpi=150)
    plt.close(fig)
    return paths


def render_figures(specs) -> list:
    """Render each spec; returns RenderedFigure records in order.

    Every record carries the exact values that were plotted, so the
    numbers in a figure can be checked without re-deriving them.
    """
    out = []
    for spec in specs:
        rows, fieldnames = _read_rows(spec.csv_path)
        if spec.kind == "stride-curves":
            _require(fieldnames, ["stride", "layout", "speedup"],
                     spec.csv_path)
            n_panels = max(len({r["layout"] for r in rows}), 1)
            fig, axes = plt.subplots(1, n_panels, figsize=(4 * n_panels, 3.2),
                                     squeeze=False)
            data = _stride_curves(spec, rows, fieldnames, list(axes[0]))
        else:
            fig, ax = plt.subplots(figsize=(6, 3.6))
            draw = {
                "speedup-bars": _speedup_bars,
                "breakdown-stack": _breakdown_stack,
                "bandwidth-bars": _bandwidth_bars,
                "tile-lines": _tile_lines,
            }[spec.kind]
            data = draw(spec, rows, fieldnames, ax)
        if spec.title:
            fig.suptitle(spec.title)
        fig.tight_layout()
        paths = _save(fig, spec.out_path)
        out.append(RenderedFigure(kind=spec.kind, paths=paths, data=data))
    return out


def default_specs(run_csv, microbench_csv, outdir,
                  group_col="graph", series_col="model") -> list:
    """The standard figure set for one experiment's CSV pair."""
    specs = []
    if run_csv:
        specs += [
            FigureSpec("speedup-bars", run_csv,
                       os.path.join(outdir, "speedup.svg"),
                       group_col=group_col, series_col=series_col),
            FigureSpec("breakdown-stack", run_csv,
                       os.path.join(outdir, "breakdown.svg"),
                       group_col=series_col),
            FigureSpec("bandwidth-bars", run_csv,
                       os.path.join(outdir, "bandwidth.svg"),
                       group_col=group_col, series_col=series_col),
            FigureSpec("tile-lines", run_csv,
                       os.path.join(outdir, "tiles.svg"),
                       series_col=series_col),
        ]
    if microbench_csv:
        specs.append(FigureSpec("stride-curves", microbench_csv,
                                os.path.join(outdir, "strides.svg")))
    return specs


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="fimplots",
        description="Render the standard figure set from experiment CSVs.")
    p.add_argument("--run-csv", help="run/sweep output CSV")
    p.add_argument("--microbench-csv", help="microbenchmark output CSV")
    p.add_argument("--outdir", required=True)
    p.add_argument("--group-col", default="graph")
    p.add_argument("--series-col", default="model")
    args = p.parse_args(argv)
    if not args.run_csv and not args.microbench_csv:
        print("error: need --run-csv and/or --microbench-csv",
              file=sys.stderr)
        return 2
    specs = default_specs(args.run_csv, args.microbench_csv, args.outdir,
                          group_col=args.group_col,
                          series_col=args.series_col)
    try:
        rendered = render_figures(specs)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    for r in rendered:
        print(f"wrote {r.paths[0]} and {r.paths[1]}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
