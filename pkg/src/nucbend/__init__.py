"""Bending loss, overlapped-nuclei metrics and watershed postprocessing."""

from .bending import BendingParams, BendingReport, bending_loss, pattern_table, polygon_bending_gradient
from .contour import ContourSet, DiagnosticWarning, trace_contours
from .imgcore import (
    FloatMap,
    FloatMapPair,
    FormatError,
    LabelMap,
    read_float_map,
    read_float_map_pair,
    read_label_map,
    write_float_map,
    write_label_map,
)
from .losses import LossBreakdown, total_loss
from .metrics import MetricsReport, aggregate, evaluate
from .pipeline import (
    PostprocessParams,
    extract_patches,
    hv_ground_truth,
    identify_overlapped,
    merge_patches,
    sobel_energy,
    watershed_postprocess,
)

__version__ = "0.1.0"

__all__ = [
    "BendingParams", "BendingReport", "bending_loss", "pattern_table", "polygon_bending_gradient",
    "ContourSet", "DiagnosticWarning", "trace_contours",
    "FloatMap", "FloatMapPair", "FormatError", "LabelMap",
    "read_float_map", "read_float_map_pair", "read_label_map", "write_float_map", "write_label_map",
    "LossBreakdown", "total_loss",
    "MetricsReport", "aggregate", "evaluate",
    "PostprocessParams", "extract_patches", "hv_ground_truth", "identify_overlapped",
    "merge_patches", "sobel_energy", "watershed_postprocess",
]
