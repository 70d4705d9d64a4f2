"""Cycle-level simulator of a tiled vertex-centric graph accelerator
attached to DDR4 with in-bank scatter/gather, a fine-grained sector
cache, and a collecting miss-handling unit."""

from .graph import (
    EdgeList,
    CsrGraph,
    TiledGraph,
    load_edge_list,
    save_edge_list,
    load_csr_binary,
    save_csr_binary,
    build_csr,
    partition_tiles,
    gen_synthetic,
    assign_weights,
)
from .engine import (
    ALGORITHMS,
    INF,
    AlgorithmSpec,
    VertexState,
    algorithm_spec,
    run_iteration,
    run_to_convergence,
)
from .cache import (
    CACHE_MODELS,
    Cache,
    CacheConfig,
    configure_partition,
    metadata_bits,
)
from .mshr import CollectionMshr, MshrConfig
from .dram import (
    AddressMap,
    DramConfig,
    DramEngine,
    FimOp,
    MemoryImage,
    WorkItem,
    issue_fim_gather,
    issue_fim_scatter,
    timing_check,
    translate_virtual,
)
from .tracecheck import TraceChecker, validate_trace
from .accel import (
    PRESETS,
    AccelConfig,
    MemLayout,
    MemRequest,
    StatsReport,
    crossbar_route,
    perfect_tile_width,
    prefetch_streams,
    preset,
    simulate,
    tile_width_for,
)
from .traffic import TrafficEstimate, estimate_traffic, sweet_spot
from .microbench import StrideResult, microbench_stride

__version__ = "0.1.0"
