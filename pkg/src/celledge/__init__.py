"""Automatic correction of polygon cell annotations.

Pipeline: snap annotation vertices to nearby image-gradient maxima,
densify large gaps, refit smooth closed curves with locally weighted
linear regression, and rasterize the result into connected edge maps.
Evaluation (ODS/OIS/AP) and dataset-preparation tools round out the
batch workflow.
"""

from celledge.annotations import (
    AnnotationFormatError,
    AnnotationSet,
    CellClass,
    ImageDecodeError,
    PolygonAnnotation,
    RasterImage,
    load_grayscale,
    parse_annotation,
    write_annotation,
)
from celledge.correction import CandidateSet, CorrectionParams, correct_polygon
from celledge.gradients import GradientField, compute_gradient_field
from celledge.raster import EdgeMap, rasterize_loop, rasterize_set
from celledge.refit import FitParams, interpolate_gaps, refit_closed_curve

__version__ = "0.1.0"
