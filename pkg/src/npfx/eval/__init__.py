"""Benchmark, tracking, zero-shot, elasticity and flow-dump protocols."""

from .benchmark import (
    ModelImputer, ZeroShotReport, build_imputers, format_table, make_masks, run_benchmark,
    run_elasticity, run_zero_shot,
)
from .flowdump import dump_flow, read_pgm, write_flow_csv, write_pgm
from .tracking import (
    PolarCalibration, TrackingResult, blob_centroid, empirical_cdf, track_blob, track_frames,
    tracking_error,
)

__all__ = [
    "ModelImputer", "ZeroShotReport", "build_imputers", "format_table", "make_masks",
    "run_benchmark", "run_elasticity", "run_zero_shot", "dump_flow", "read_pgm",
    "write_flow_csv", "write_pgm", "PolarCalibration", "TrackingResult", "blob_centroid",
    "empirical_cdf", "track_blob", "track_frames", "tracking_error",
]
