"""Polygon annotation parsing/serialization and grayscale image loading.

Annotations follow the labelme JSON layout: a top-level ``shapes`` array
whose entries carry ``label``, ``points`` (list of [x, y]) and
``shape_type``. Only closed polygons labeled cytoplasm or nucleus are
accepted; anything else is an error, never silently dropped.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from PIL import Image, UnidentifiedImageError

__all__ = [
    "CellClass",
    "PolygonAnnotation",
    "AnnotationSet",
    "RasterImage",
    "AnnotationFormatError",
    "ImageDecodeError",
    "parse_annotation",
    "write_annotation",
    "load_grayscale",
]

# ITU-R 601 luma weights, used for every RGB -> scalar conversion.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class AnnotationFormatError(ValueError):
    """Raised when an annotation document violates the expected schema."""


class ImageDecodeError(ValueError):
    """Raised when an image payload cannot be decoded."""


class CellClass(str, Enum):
    CYTOPLASM = "cytoplasm"
    NUCLEUS = "nucleus"


@dataclass
class PolygonAnnotation:
    """Closed loop of subpixel vertices with a cell-class tag.

    The loop is implicitly closed: the first vertex is never repeated at
    the end, and all neighbor arithmetic wraps around.
    """

    points: np.ndarray  # (n, 2) float64, n >= 3
    cell_class: CellClass
    id: str

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise AnnotationFormatError(
                f"polygon {self.id!r}: points must be an (n, 2) array")
        if len(self.points) < 3:
            raise AnnotationFormatError(
                f"polygon {self.id!r}: fewer than 3 distinct points")
        if not np.all(np.isfinite(self.points)):
            raise AnnotationFormatError(
                f"polygon {self.id!r}: non-finite coordinates")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class AnnotationSet:
    """All polygon annotations of one image."""

    image_path: str
    image_size: tuple[int, int]  # (width, height)
    polygons: list[PolygonAnnotation] = field(default_factory=list)

    def __post_init__(self):
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise AnnotationFormatError(f"non-positive image size {self.image_size}")
        ids = [p.id for p in self.polygons]
        if len(set(ids)) != len(ids):
            raise AnnotationFormatError("duplicate polygon ids in annotation set")


@dataclass
class RasterImage:
    """Single-channel raster, row-major, intensities in [0, 255].

    ``pixels`` may be integral (decoded images) or real-valued
    (smoothed images); both satisfy the same range contract.
    """

    pixels: np.ndarray  # (height, width)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2:
            raise ValueError("pixels must be a 2-D array")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _collapse_duplicates(points: np.ndarray) -> np.ndarray:
    """Drop consecutive duplicate vertices, wraparound pair included."""
    if len(points) == 0:
        return points
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.any(points[1:] != points[:-1], axis=1)
    points = points[keep]
    while len(points) > 1 and np.all(points[-1] == points[0]):
        points = points[:-1]
    return points


def parse_annotation(data: bytes) -> AnnotationSet:
    """Parse a labelme-style JSON document into an AnnotationSet.

    Labels map case-insensitively onto the known cell classes, consecutive
    duplicate vertices are collapsed, and polygon ids are assigned by
    position (``<class>-<index>``). Malformed JSON, unknown labels,
    non-polygon shapes, and degenerate polygons all raise
    AnnotationFormatError naming the offending item.
    """
    try:
        doc = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise AnnotationFormatError(f"annotation is not UTF-8: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise AnnotationFormatError(
            f"malformed JSON at byte offset {exc.pos}: {exc.msg}") from exc

    if not isinstance(doc, dict) or not isinstance(doc.get("shapes"), list):
        raise AnnotationFormatError("document must be an object with a 'shapes' array")

    try:
        width = int(doc["imageWidth"])
        height = int(doc["imageHeight"])
    except (KeyError, TypeError, ValueError) as exc:
        raise AnnotationFormatError(
            "document must carry integer imageWidth/imageHeight") from exc

    polygons: list[PolygonAnnotation] = []
    for idx, shape in enumerate(doc["shapes"]):
        if not isinstance(shape, dict):
            raise AnnotationFormatError(f"shape #{idx} is not an object")
        shape_type = shape.get("shape_type", "polygon")
        if shape_type != "polygon":
            raise AnnotationFormatError(
                f"shape #{idx}: unsupported shape_type {shape_type!r}")
        label = str(shape.get("label", ""))
        try:
            cell_class = CellClass(label.lower())
        except ValueError:
            raise AnnotationFormatError(
                f"shape #{idx}: unknown label {label!r}") from None
        raw = shape.get("points")
        try:
            points = np.asarray(raw, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise AnnotationFormatError(f"shape #{idx}: bad points array") from exc
        if points.ndim != 2 or points.shape[1] != 2:
            raise AnnotationFormatError(
                f"shape #{idx}: points must be a list of [x, y] pairs")
        points = _collapse_duplicates(points)
        poly_id = f"{cell_class.value}-{idx}"
        if len(np.unique(points, axis=0)) < 3:
            raise AnnotationFormatError(
                f"polygon {poly_id!r}: fewer than 3 distinct points")
        polygons.append(PolygonAnnotation(points, cell_class, poly_id))

    return AnnotationSet(
        image_path=str(doc.get("imagePath", "")),
        image_size=(width, height),
        polygons=polygons,
    )


def write_annotation(annotation_set: AnnotationSet) -> bytes:
    """Serialize an AnnotationSet back to the same JSON schema.

    ``parse_annotation(write_annotation(s))`` reproduces ``s`` up to
    float formatting (coordinates within 1e-6) for sets whose ids follow
    the position-based scheme parse_annotation assigns.
    """
    doc = {
        "imagePath": annotation_set.image_path,
        "imageWidth": annotation_set.image_size[0],
        "imageHeight": annotation_set.image_size[1],
        "shapes": [
            {
                "label": poly.cell_class.value,
                "points": [[float(x), float(y)] for x, y in poly.points],
                "shape_type": "polygon",
            }
            for poly in annotation_set.polygons
        ],
    }
    return json.dumps(doc, indent=2).encode("utf-8")


def load_grayscale(data: bytes) -> RasterImage:
    """Decode a PNG/JPEG payload into a grayscale raster.

    Color images are reduced with fixed ITU-R 601 weights
    (0.299 R + 0.587 G + 0.114 B), rounded half-up; grayscale inputs pass
    through unchanged.
    """
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            if img.mode == "L":
                pixels = np.asarray(img, dtype=np.uint8)
            else:
                rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
                luma = rgb @ np.array(LUMA_WEIGHTS)
                pixels = np.floor(luma + 0.5).astype(np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageDecodeError(f"cannot decode image payload: {exc}") from exc
    return RasterImage(pixels)
