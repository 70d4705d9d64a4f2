"""Experiment runner and command-line interface.

Parses flat INI configs, builds or loads graphs, runs batches of
simulations across system presets and tile factors, and writes stats as
CSV (default) or JSON.  Subcommands: run, microbench, sweep-tiles,
gen-graph, validate-trace.
"""

import argparse
import configparser
import csv
import dataclasses
import json
import os
import sys

from .accel import PRESETS, preset, simulate, tile_width_for
from .dram import DramConfig
from .engine import ALGORITHMS, algorithm_spec
from .graph import (build_csr, gen_synthetic, load_edge_list,
                    partition_tiles, save_edge_list)
from .microbench import LAYOUTS, microbench_stride
from .mshr import MshrConfig
from .tracecheck import read_trace, validate_trace, write_trace

__all__ = [
    "OUTPUT_COLUMNS", "MICROBENCH_COLUMNS", "ConfigError",
    "ExperimentConfig", "load_config", "run_experiment", "sweep_tiles",
    "write_records", "main",
]

OUTPUT_COLUMNS = [
    "config_id", "graph", "algorithm", "model", "tile_factor", "cycles",
    "speedup_vs_baseline", "reads", "writes", "bytes_fetched",
    "bytes_useful", "offchip_GBps", "internal_GBps", "fim_gathers",
    "fim_scatters", "iterations",
]

MICROBENCH_COLUMNS = [
    "stride", "layout", "total_bytes", "baseline_ps", "fim_ps",
    "baseline_bursts", "fim_bursts", "gathers", "speedup",
]

_DRAM_KEYS = {f.name for f in dataclasses.fields(DramConfig)}
_GRAPH_KEYS = {"kind", "path", "seed", "scale", "edge_factor",
               "n", "k", "beta", "m"}
_RUN_KEYS = {"id", "algorithms", "models", "tile_factors", "cache_bytes",
             "ways", "seed", "source", "output"}
_MSHR_KEYS = {"entries"}


class ConfigError(ValueError):
    """Bad experiment configuration; the message names the key."""


@dataclasses.dataclass
class ExperimentConfig:
    """One batch: a graph crossed with algorithms, models and factors."""

    graph_kind: str = "kronecker"
    graph_path: str = None
    graph_params: dict = dataclasses.field(default_factory=dict)
    graph_seed: int = 1
    algorithms: list = dataclasses.field(default_factory=lambda: ["bfs"])
    models: list = dataclasses.field(default_factory=lambda: list(PRESETS))
    tile_factors: list = dataclasses.field(default_factory=lambda: [1])
    cache_bytes: int = 1024
    ways: int = 8
    seed: int = 1
    source: int = 0
    run_id: str = "run"
    output: str = None
    dram_overrides: dict = dataclasses.field(default_factory=dict)
    mshr_entries: int = None

    def __post_init__(self):
        if self.graph_path is not None and not os.path.exists(self.graph_path):
            raise ConfigError(f"[graph] path: no such file {self.graph_path!r}")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ConfigError(
                    f"unknown algorithm {alg!r}; choices: "
                    + ", ".join(ALGORITHMS))
        for m in self.models:
            if m not in PRESETS:
                raise ConfigError(
                    f"unknown model {m!r}; choices: " + ", ".join(PRESETS))
        for f in self.tile_factors:
            if f < 1:
                raise ConfigError(f"tile factor must be >= 1, got {f}")

    def graph_label(self) -> str:
        if self.graph_path is not None:
            name = os.path.basename(self.graph_path)
            return name.rsplit(".", 1)[0] if "." in name else name
        p = self.graph_params
        if self.graph_kind == "kronecker":
            return f"kron{p.get('scale', '?')}"
        if self.graph_kind == "watts-strogatz":
            return f"ws{p.get('n', '?')}"
        return f"uni{p.get('n', '?')}"

    def build_graph(self):
        if self.graph_path is not None:
            return build_csr(load_edge_list(self.graph_path))
        return build_csr(gen_synthetic(self.graph_kind,
                                       seed=self.graph_seed,
                                       **self.graph_params))


def _ints(text: str) -> list:
    return [int(x) for x in text.replace(",", " ").split()]


def _names(text: str) -> list:
    return text.replace(",", " ").split()


def _check_keys(section: str, got, valid) -> None:
    for key in got:
        if key not in valid:
            raise ConfigError(
                f"[{section}] unknown key {key!r}; valid keys: "
                + ", ".join(sorted(valid)))


def _coerce(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    return text


def load_config(path) -> ExperimentConfig:
    """Parse a flat key=value INI file into an ExperimentConfig."""
    if not os.path.exists(path):
        raise ConfigError(f"no such config file: {path}")
    ini = configparser.ConfigParser()
    try:
        ini.read(path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    for section in ini.sections():
        if section not in ("graph", "run", "dram", "mshr"):
            raise ConfigError(
                f"unknown section [{section}]; valid sections: "
                "graph, run, dram, mshr")
    kw = {}
    if ini.has_section("graph"):
        sec = dict(ini.items("graph"))
        _check_keys("graph", sec, _GRAPH_KEYS)
        if "path" in sec:
            kw["graph_path"] = sec.pop("path")
        if "kind" in sec:
            kw["graph_kind"] = sec.pop("kind")
        if "seed" in sec:
            kw["graph_seed"] = int(sec.pop("seed"))
        kw["graph_params"] = {k: _coerce(v) for k, v in sec.items()}
    if ini.has_section("run"):
        sec = dict(ini.items("run"))
        _check_keys("run", sec, _RUN_KEYS)
        try:
            if "id" in sec:
                kw["run_id"] = sec["id"]
            if "algorithms" in sec:
                kw["algorithms"] = _names(sec["algorithms"])
            if "models" in sec:
                kw["models"] = _names(sec["models"])
            if "tile_factors" in sec:
                kw["tile_factors"] = _ints(sec["tile_factors"])
            for key in ("cache_bytes", "ways", "seed", "source"):
                if key in sec:
                    kw[key] = int(sec[key])
            if "output" in sec:
                kw["output"] = sec["output"]
        except ValueError as e:
            raise ConfigError(f"[run] bad value: {e}") from None
    if ini.has_section("dram"):
        sec = dict(ini.items("dram"))
        _check_keys("dram", sec, _DRAM_KEYS)
        kw["dram_overrides"] = {k: _coerce(v) for k, v in sec.items()}
    if ini.has_section("mshr"):
        sec = dict(ini.items("mshr"))
        _check_keys("mshr", sec, _MSHR_KEYS)
        if "entries" in sec:
            kw["mshr_entries"] = int(sec["entries"])
    return ExperimentConfig(**kw)


def _build_preset(config: ExperimentConfig, model: str, factor: int):
    cfg = preset(model, cache_bytes=config.cache_bytes, ways=config.ways,
                 tile_scaling=factor, **config.dram_overrides)
    if config.mshr_entries is not None:
        cfg = dataclasses.replace(
            cfg, mshr=MshrConfig(entries=config.mshr_entries))
    return cfg


def run_experiment(config: ExperimentConfig, trace_sink=None) -> list:
    """Run the batch and return one stats dict per (alg, model, factor).

    A conventional baseline row is added per (algorithm, tile factor)
    when missing, so every speedup cell has its denominator in-batch.
    trace_sink, if given, collects the command trace of the first
    configured combination only (one engine timeline per file).
    """
    models = list(config.models)
    if "conventional" not in models:
        models.insert(0, "conventional")
    traced = None
    if trace_sink is not None:
        traced = (config.algorithms[0], config.models[0],
                  config.tile_factors[0])
    csr = config.build_graph()
    label = config.graph_label()
    tiled = {}
    rows = []
    for alg in config.algorithms:
        alg_spec = algorithm_spec(alg, csr.n_vertices, source=config.source)
        for model in models:
            for factor in config.tile_factors:
                cfg = _build_preset(config, model, factor)
                width = tile_width_for(cfg)
                if width not in tiled:
                    tiled[width] = partition_tiles(csr, width)
                sink = (trace_sink
                        if (alg, model, factor) == traced else None)
                _, rep = simulate(cfg, tiled[width], alg_spec,
                                  trace_sink=sink)
                rows.append({
                    "config_id": f"{config.run_id}:{label}:{alg}:{model}:x{factor}",
                    "graph": label,
                    "algorithm": alg,
                    "model": model,
                    "tile_factor": factor,
                    "cycles": rep.cycles,
                    "speedup_vs_baseline": 1.0,
                    "reads": rep.reads,
                    "writes": rep.writes,
                    "bytes_fetched": rep.bytes_fetched,
                    "bytes_useful": rep.bytes_useful,
                    "offchip_GBps": round(rep.offchip_gbps, 6),
                    "internal_GBps": round(rep.internal_gbps, 6),
                    "fim_gathers": rep.fim_gathers,
                    "fim_scatters": rep.fim_scatters,
                    "iterations": rep.iterations,
                })
    rows.sort(key=lambda r: (r["graph"], r["algorithm"],
                             PRESETS.index(r["model"]), r["tile_factor"]))
    base = {(r["graph"], r["algorithm"], r["tile_factor"]): r["cycles"]
            for r in rows if r["model"] == "conventional"}
    for r in rows:
        denom = base[(r["graph"], r["algorithm"], r["tile_factor"])]
        r["speedup_vs_baseline"] = round(denom / r["cycles"], 6)
    return rows


def sweep_tiles(config: ExperimentConfig, factors=None) -> tuple:
    """Run (model, factor) grid; returns (rows, best-factor map).

    best maps (algorithm, model) to the factor with the fewest cycles.
    """
    if factors is not None:
        config = dataclasses.replace(config, tile_factors=list(factors))
    rows = run_experiment(config)
    best = {}
    for r in rows:
        key = (r["algorithm"], r["model"])
        if key not in best or r["cycles"] < best[key][1]:
            best[key] = (r["tile_factor"], r["cycles"])
    return rows, {k: v[0] for k, v in best.items()}


def write_records(rows, columns, out, as_json: bool = False) -> None:
    """Write dict rows to a path or file object as CSV or JSON."""
    own = isinstance(out, (str, os.PathLike))
    f = open(out, "w", encoding="utf-8", newline="") if own else out
    try:
        if as_json:
            json.dump([{c: r[c] for c in columns} for r in rows], f, indent=2)
            f.write("\n")
        else:
            w = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore",
                               lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    finally:
        if own:
            f.close()


def _emit(rows, columns, path, as_json):
    if path is None or path == "-":
        write_records(rows, columns, sys.stdout, as_json)
    else:
        write_records(rows, columns, path, as_json)


def _cmd_run(args) -> int:
    config = load_config(args.config)
    sink = [] if args.trace else None
    rows = run_experiment(config, trace_sink=sink)
    if args.trace:
        write_trace(args.trace, sink)
        print(f"wrote {len(sink)} trace records to {args.trace}",
              file=sys.stderr)
    _emit(rows, OUTPUT_COLUMNS, args.output or config.output, args.json)
    return 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    rows, best = sweep_tiles(config, factors=args.factors)
    _emit(rows, OUTPUT_COLUMNS, args.output or config.output, args.json)
    for (alg, model), factor in sorted(best.items()):
        print(f"best {alg} {model}: factor {factor}", file=sys.stderr)
    return 0


def _cmd_microbench(args) -> int:
    layouts = list(LAYOUTS) if args.layout == "both" else [args.layout]
    rows = []
    for layout in layouts:
        for stride in args.strides:
            r = microbench_stride(stride, total_bytes=args.total_bytes,
                                  layout=layout)
            d = r.to_dict()
            d["speedup"] = round(d["speedup"], 6)
            rows.append(d)
    _emit(rows, MICROBENCH_COLUMNS, args.output, args.json)
    return 0


def _cmd_gen_graph(args) -> int:
    params = {}
    for key in ("scale", "edge_factor", "n", "k", "m"):
        v = getattr(args, key)
        if v is not None:
            params[key] = v
    if args.beta is not None:
        params["beta"] = args.beta
    el = gen_synthetic(args.kind, seed=args.seed, **params)
    save_edge_list(el, args.output)
    print(f"wrote {el.n_vertices} vertices, {el.n_edges} edges "
          f"to {args.output}", file=sys.stderr)
    return 0


def _cmd_validate_trace(args) -> int:
    overrides = {}
    if args.config:
        overrides = load_config(args.config).dram_overrides
    cfg = DramConfig.ddr4_2400r(**overrides)
    trace = read_trace(args.trace)
    violations = validate_trace(cfg, trace)
    for v in violations[:args.max_report]:
        print(str(v), file=sys.stderr)
    if violations:
        print(f"{len(violations)} violation(s) in {len(trace)} commands",
              file=sys.stderr)
        return 1
    print(f"ok: {len(trace)} commands, no violations", file=sys.stderr)
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fimsim",
        description="Simulate a tiled graph accelerator on DDR4 with "
                    "in-bank scatter/gather.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment batch in a config")
    run.add_argument("config")
    run.add_argument("--output", "-o", help="CSV/JSON path (default stdout)")
    run.add_argument("--json", action="store_true", help="emit JSON")
    run.add_argument("--trace", help="write the DRAM command trace here")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep-tiles",
                           help="sweep tile factors per model")
    sweep.add_argument("config")
    sweep.add_argument("--factors", type=int, nargs="+",
                       help="override [run] tile_factors")
    sweep.add_argument("--output", "-o")
    sweep.add_argument("--json", action="store_true")
    sweep.set_defaults(func=_cmd_sweep)

    mb = sub.add_parser("microbench",
                        help="strided gather-vs-burst read benchmark")
    mb.add_argument("--strides", type=int, nargs="+",
                    default=[1, 2, 4, 8, 16])
    mb.add_argument("--layout", choices=list(LAYOUTS) + ["both"],
                    default="both")
    mb.add_argument("--total-bytes", type=int, default=16 * 2**20)
    mb.add_argument("--output", "-o")
    mb.add_argument("--json", action="store_true")
    mb.set_defaults(func=_cmd_microbench)

    gen = sub.add_parser("gen-graph", help="write a synthetic edge list")
    gen.add_argument("kind", choices=["kronecker", "watts-strogatz",
                                      "uniform"])
    gen.add_argument("output")
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--scale", type=int)
    gen.add_argument("--edge-factor", type=int, dest="edge_factor")
    gen.add_argument("--n", type=int)
    gen.add_argument("--k", type=int)
    gen.add_argument("--beta", type=float)
    gen.add_argument("--m", type=int)
    gen.set_defaults(func=_cmd_gen_graph)

    val = sub.add_parser("validate-trace",
                         help="check a command trace for protocol violations")
    val.add_argument("trace")
    val.add_argument("--config", help="INI file supplying [dram] overrides")
    val.add_argument("--max-report", type=int, default=20)
    val.set_defaults(func=_cmd_validate_trace)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
