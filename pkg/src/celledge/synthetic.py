"""Synthetic blurred-boundary cell scenes with known analytic contours.

Used by the experiment scripts and the test suite: scenes are additive,
so every shape keeps a full-strength intensity step along its entire
outline even where shapes overlap, mimicking translucent overlapping
cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from celledge.annotations import AnnotationSet, CellClass, PolygonAnnotation, RasterImage
from celledge.gradients import gaussian_smooth

__all__ = [
    "EllipseSpec",
    "ellipse_points",
    "ellipse_normals",
    "dense_contour",
    "render_scene",
    "sample_annotation",
    "perturb_along_normals",
    "random_scene",
    "scene_annotation_set",
]


@dataclass
class EllipseSpec:
    """Rotated ellipse with a class tag and an additive intensity.

    Default amplitudes keep boundary steps strong enough that the
    default snapping threshold treats them as real edges, like stained
    cell boundaries in a micrograph.
    """

    center: tuple[float, float]
    axes: tuple[float, float]
    angle: float = 0.0
    cell_class: CellClass = CellClass.CYTOPLASM
    amplitude: float = 118.0

    def _rotation(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])


def ellipse_points(spec: EllipseSpec, thetas: np.ndarray) -> np.ndarray:
    """Contour points at the given parameter angles."""
    a, b = spec.axes
    unit = np.stack([a * np.cos(thetas), b * np.sin(thetas)], axis=1)
    return unit @ spec._rotation().T + np.asarray(spec.center)


def ellipse_normals(spec: EllipseSpec, thetas: np.ndarray) -> np.ndarray:
    """Outward unit normals at the given parameter angles."""
    a, b = spec.axes
    raw = np.stack([b * np.cos(thetas), a * np.sin(thetas)], axis=1)
    raw = raw @ spec._rotation().T
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def dense_contour(spec: EllipseSpec, n: int = 4096) -> np.ndarray:
    """Dense polyline of the true contour, for distance oracles."""
    return ellipse_points(spec, np.linspace(0.0, 2.0 * math.pi, n, endpoint=False))


def _fill_mask(spec: EllipseSpec, size: tuple[int, int]) -> np.ndarray:
    w, h = size
    a, b = spec.axes
    cx, cy = spec.center
    reach = max(a, b) + 2.0
    x0, x1 = max(0, int(cx - reach)), min(w, int(cx + reach) + 2)
    y0, y1 = max(0, int(cy - reach)), min(h, int(cy + reach) + 2)
    mask = np.zeros((h, w), dtype=bool)
    if x0 >= x1 or y0 >= y1:
        return mask
    xs = np.arange(x0, x1, dtype=np.float64) - cx
    ys = np.arange(y0, y1, dtype=np.float64) - cy
    rot = spec._rotation()
    gx = xs[None, :] * rot[0, 0] + ys[:, None] * rot[1, 0]
    gy = xs[None, :] * rot[0, 1] + ys[:, None] * rot[1, 1]
    mask[y0:y1, x0:x1] = (gx / a) ** 2 + (gy / b) ** 2 <= 1.0
    return mask


def render_scene(
    size: tuple[int, int],
    shapes: list[EllipseSpec],
    base: float = 5.0,
    blur_sigma: float = 1.0,
) -> RasterImage:
    """Additive shape intensities, blurred once to soften all boundaries."""
    w, h = size
    field = np.full((h, w), base, dtype=np.float64)
    for spec in shapes:
        field[_fill_mask(spec, size)] += spec.amplitude
    blurred = gaussian_smooth(RasterImage(field), blur_sigma)
    return RasterImage(np.clip(np.round(blurred.pixels), 0, 255).astype(np.uint8))


def sample_annotation(spec: EllipseSpec, spacing: float = 5.0) -> np.ndarray:
    """Ideal annotation: contour samples at roughly the given arc spacing."""
    a, b = spec.axes
    perimeter = math.pi * (3.0 * (a + b) - math.sqrt((3 * a + b) * (a + 3 * b)))
    n = max(12, int(round(perimeter / spacing)))
    return ellipse_points(spec, np.linspace(0.0, 2.0 * math.pi, n, endpoint=False))


def perturb_along_normals(
    spec: EllipseSpec,
    points: np.ndarray,
    thetas: np.ndarray,
    max_shift: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Shift contour samples by uniform noise in [-max_shift, +max_shift]
    along the analytic normals."""
    shifts = rng.uniform(-max_shift, max_shift, size=len(points))
    return points + shifts[:, None] * ellipse_normals(spec, thetas)


def _inside(spec: EllipseSpec, point: np.ndarray, margin: float = 1.0) -> bool:
    rel = spec._rotation().T @ (np.asarray(point) - np.asarray(spec.center))
    a, b = spec.axes
    return (rel[0] / a) ** 2 + (rel[1] / b) ** 2 <= margin**2


def random_scene(
    rng: np.random.Generator,
    size: tuple[int, int],
    n_cells: int = 2,
    with_nuclei: bool = True,
) -> list[EllipseSpec]:
    """A few overlapping cytoplasm ellipses, each with one nucleus.

    Nuclei stay clear of neighboring cells so additive intensities never
    saturate and every boundary keeps its full contrast.
    """
    w, h = size
    cells = []
    for _ in range(n_cells):
        cx = rng.uniform(0.30 * w, 0.70 * w)
        cy = rng.uniform(0.30 * h, 0.70 * h)
        a = rng.uniform(0.14, 0.22) * min(w, h)
        b = a * rng.uniform(0.70, 1.0)
        angle = rng.uniform(0.0, math.pi)
        cells.append(EllipseSpec((cx, cy), (a, b), angle, CellClass.CYTOPLASM))
    shapes = list(cells)
    if with_nuclei:
        for cell in cells:
            others = [c for c in cells if c is not cell]
            b = cell.axes[1]
            for _ in range(50):
                r = rng.uniform(0.22, 0.34) * b
                off = rng.uniform(-0.3, 0.3, size=2) * (b - r)
                center = np.asarray(cell.center) + off
                clearance = r + 4.0
                if all(not _inside(o, center, 1.0 + clearance / min(o.axes))
                       for o in others):
                    shapes.append(EllipseSpec(
                        tuple(center), (r, r * rng.uniform(0.85, 1.0)),
                        rng.uniform(0.0, math.pi), CellClass.NUCLEUS,
                        amplitude=110.0))
                    break
    return shapes


def scene_annotation_set(
    shapes: list[EllipseSpec],
    size: tuple[int, int],
    image_path: str = "",
    spacing: float = 5.0,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> AnnotationSet:
    """Annotation set over a scene, optionally with normal-direction noise."""
    polygons = []
    for i, spec in enumerate(shapes):
        points = sample_annotation(spec, spacing)
        if noise > 0.0:
            thetas = np.linspace(0.0, 2.0 * math.pi, len(points), endpoint=False)
            if rng is None:
                raise ValueError("noisy annotations need an rng")
            points = perturb_along_normals(spec, points, thetas, noise, rng)
        polygons.append(PolygonAnnotation(
            points, spec.cell_class, f"{spec.cell_class.value}-{i}"))
    return AnnotationSet(image_path=image_path, image_size=size, polygons=polygons)
