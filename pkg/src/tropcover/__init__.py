"""Approximate (min,+) computations whose operation counts ignore weight size.

The library builds sum-to-max covering families that reduce approximate
min-plus products, shortest paths, and convolutions to exact (min,max)
computations on ranks, plus scaling-based baselines, exact oracles, graph
characteristic approximations, and an operation-counting harness.
"""

from .covering import (
    ChunkList,
    CoveringFamily,
    Layer,
    close_covering,
    close_layer_count,
    distant_covering_sets,
    distant_covering_vectors,
    distant_layer_count,
    sum_to_max_covering,
)
from .minmax import (
    RankMatrix,
    RankSequence,
    minmax_convolution,
    minmax_product,
)
from .product import (
    INT_INF,
    WeightMatrix,
    approx_minplus_product,
    bounded_minplus_product,
    minmax_product_via_approx,
    minplus_product_naive,
    zwick_minplus_product,
    zwick_scale,
)
from .numeric import (
    INF,
    ExpFloat,
    GeometricGrid,
    OpCounter,
    PRECISION,
    RankMap,
    bucket_index,
    ef_add,
    ef_mul,
    rank_compress,
)

__version__ = "0.1.0"

__all__ = [
    "ChunkList",
    "CoveringFamily",
    "INF",
    "INT_INF",
    "ExpFloat",
    "GeometricGrid",
    "Layer",
    "OpCounter",
    "PRECISION",
    "RankMap",
    "RankMatrix",
    "RankSequence",
    "WeightMatrix",
    "approx_minplus_product",
    "bounded_minplus_product",
    "bucket_index",
    "close_covering",
    "close_layer_count",
    "distant_covering_sets",
    "distant_covering_vectors",
    "distant_layer_count",
    "ef_add",
    "ef_mul",
    "minmax_convolution",
    "minmax_product",
    "minmax_product_via_approx",
    "minplus_product_naive",
    "rank_compress",
    "sum_to_max_covering",
    "zwick_minplus_product",
    "zwick_scale",
]
