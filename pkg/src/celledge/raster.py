"""Rasterize closed point loops into binary 8-connected edge maps."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from celledge.annotations import AnnotationSet

__all__ = ["EdgeMap", "bresenham_line", "rasterize_loop", "rasterize_set"]

logger = logging.getLogger(__name__)


@dataclass
class EdgeMap:
    """Binary occupancy raster of edge pixels."""

    bits: np.ndarray  # (height, width) bool

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValueError("edge map must be 2-D")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @classmethod
    def empty(cls, size: tuple[int, int]) -> "EdgeMap":
        w, h = size
        return cls(np.zeros((h, w), dtype=bool))


def bresenham_line(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer pixel chain from (x0, y0) to (x1, y1), endpoints included."""
    points = []
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        points.append((x, y))
        if x == x1 and y == y1:
            return points
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def _quantize(points: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Round half-up to pixel centers and clamp into the raster."""
    w, h = size
    grid = np.floor(np.asarray(points, dtype=np.float64) + 0.5).astype(np.int64)
    grid[:, 0] = np.clip(grid[:, 0], 0, w - 1)
    grid[:, 1] = np.clip(grid[:, 1], 0, h - 1)
    return grid


def rasterize_loop(points: np.ndarray, size: tuple[int, int]) -> EdgeMap:
    """Draw a closed loop as an 8-connected pixel cycle."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 3:
        raise ValueError("a closed loop needs at least 3 points")
    edge_map = EdgeMap.empty(size)
    grid = _quantize(points, size)
    bits = edge_map.bits
    for i in range(len(grid)):
        x0, y0 = grid[i]
        x1, y1 = grid[(i + 1) % len(grid)]
        for x, y in bresenham_line(x0, y0, x1, y1):
            bits[y, x] = True
    if bits.sum() == 1:
        logger.warning("loop collapsed to a single pixel")
    return edge_map


def rasterize_set(
    annotation_set: AnnotationSet,
    loops: list[np.ndarray] | None = None,
) -> EdgeMap:
    """Union of all loop rasterizations; overlapping cell edges coexist.

    ``loops`` overrides the set's own polygon loops (e.g. corrected or
    refitted curves) but must share the set's image size.
    """
    size = annotation_set.image_size
    edge_map = EdgeMap.empty(size)
    if loops is None:
        loops = [poly.points for poly in annotation_set.polygons]
    for loop in loops:
        edge_map.bits |= rasterize_loop(loop, size).bits
    return edge_map
