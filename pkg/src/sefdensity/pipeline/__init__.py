"""Batch differential density analysis: ingest, preprocess, test, export."""

from .config import RunConfig, load_config, parse_config
from .io import RawCounts, load_counts, read_metadata
from .preprocess import FilterThresholds, filter_gene, normalize_library_size, sqrt_transform
from .runner import (
    Dataset,
    GeneResult,
    analyze_gene,
    build_dataset,
    run_differential,
    run_permutations,
    synthetic_counts,
    test_groups,
    write_curves,
    write_results,
)

__all__ = [
    "RunConfig", "load_config", "parse_config", "RawCounts", "load_counts", "read_metadata",
    "FilterThresholds", "filter_gene", "normalize_library_size", "sqrt_transform",
    "Dataset", "GeneResult", "analyze_gene", "build_dataset", "run_differential",
    "run_permutations", "synthetic_counts", "test_groups", "write_curves", "write_results",
]
