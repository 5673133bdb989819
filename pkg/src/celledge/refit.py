"""Smooth closed-curve refitting via locally weighted linear regression.

A corrected point loop is first densified so no gap exceeds the sampling
step, then partitioned into overlapping groups. Each group is rotated
into a local frame whose x-axis is the chord between its endpoints and
fitted there with a weighted line; two stitch points at the group-overlap
boundaries get boosted weights so adjacent fitted segments connect.

Two modes:

* ``smooth_closed`` (default): every point owns a group centered on it,
  the fit is evaluated only at that point's abscissa, and the point count
  never changes. The loop is smooth at every node because no segments
  are spliced.
* ``stitched``: groups advance by a fixed stride; each group's fitted
  line is resampled over its inner interval and the segments are
  concatenated, which changes the point count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from celledge.annotations import CellClass, PolygonAnnotation
from celledge.kernels import gaussian_kernel

__all__ = [
    "ClassFitParams",
    "FitParams",
    "GroupingPlan",
    "LocalFrame",
    "FitGroup",
    "interpolate_gaps",
    "plan_groups",
    "to_local_frame",
    "select_group_size",
    "select_bandwidth",
    "normalized_weights",
    "local_linear_fit",
    "refit_closed_curve",
    "refit_polygon",
]

STITCH_BOOST = 1.5
_DEGENERATE_CHORD = 1e-12


@dataclass
class ClassFitParams:
    """Per-class fitting constants.

    bandwidth_scale multiplies the ordinate-spread term of the bandwidth;
    group_divisor and min_group_size set the group-size rule
    max(floor(step * n / group_divisor), min_group_size).
    """

    bandwidth_scale: float
    group_divisor: float
    min_group_size: int


@dataclass
class FitParams:
    """Curve refitting configuration with per-class constants."""

    step: float = 1.0
    mode: str = "smooth_closed"
    overlap: float | None = None  # stitched-mode group overlap half-width
    offset_divisor: float = 6.0   # divisor of the floor(step * group_size) bandwidth term
    cytoplasm: ClassFitParams = field(
        default_factory=lambda: ClassFitParams(10.0, 40.0, 7))
    nucleus: ClassFitParams = field(
        default_factory=lambda: ClassFitParams(5.0, 10.0, 3))

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.mode not in ("smooth_closed", "stitched"):
            raise ValueError(f"unknown fit mode {self.mode!r}")
        if self.mode == "stitched" and self.overlap is None:
            raise ValueError("stitched mode requires an overlap")

    def for_class(self, cell_class: CellClass) -> ClassFitParams:
        return self.cytoplasm if cell_class is CellClass.CYTOPLASM else self.nucleus


@dataclass
class GroupingPlan:
    """Partition arithmetic for splitting a closed loop into fit groups.

    Group k starts at point k * stride and nominally spans
    2 * radius + 1 points; the last group alone runs short by
    ``surplus`` points so the loop is covered exactly once.
    """

    total_points: int
    group_size: int
    radius: int
    overlap: float
    stride: float
    group_count: int
    surplus: float
    single_group: bool = False

    def group_span(self, k: int) -> int:
        """Index of the last group point relative to its start."""
        if self.single_group:
            return self.total_points - 1
        short = int(self.surplus) if k == self.group_count - 1 else 0
        return 2 * self.radius - short

    def group_indices(self, k: int) -> np.ndarray:
        """Wrapped point indices of group k."""
        if not float(self.stride).is_integer() and not self.single_group:
            raise ValueError(
                f"group stride {self.stride} is not an integer; "
                "choose an overlap that is a multiple of 0.5")
        start = 0 if self.single_group else k * int(self.stride)
        return (start + np.arange(self.group_span(k) + 1)) % self.total_points

    def stitch_positions(self, k: int) -> tuple[int, int]:
        """Group-local indices of the two boosted stitch points."""
        lo = int(math.floor(self.overlap))
        return lo, self.group_span(k) - lo


def plan_groups(
    n_points: int,
    group_size: int,
    mode: str = "smooth_closed",
    overlap: float | None = None,
) -> GroupingPlan:
    """Derive the group partition of an n-point closed loop.

    In smooth_closed mode the overlap is pinned to radius - 0.5, which
    collapses the stride to 1 and gives every point its own group. Fewer
    points than the group size falls back to a single group of all points.
    """
    if group_size < 3 or group_size % 2 == 0:
        raise ValueError(f"group size must be odd and >= 3, got {group_size}")
    radius = (group_size - 1) // 2
    if mode == "smooth_closed":
        overlap = radius - 0.5
    elif mode == "stitched":
        if overlap is None or not 0 < overlap < radius:
            raise ValueError(
                f"stitched mode needs 0 < overlap < {radius}, got {overlap}")
    else:
        raise ValueError(f"unknown fit mode {mode!r}")

    if n_points < group_size:
        return GroupingPlan(
            total_points=n_points, group_size=group_size, radius=radius,
            overlap=overlap, stride=float(n_points), group_count=1,
            surplus=0.0, single_group=True)

    stride = 2.0 * (radius - overlap)
    group_count = math.ceil(n_points / stride)
    surplus = stride * group_count - n_points
    return GroupingPlan(
        total_points=n_points, group_size=group_size, radius=radius,
        overlap=overlap, stride=stride, group_count=group_count,
        surplus=surplus)


@dataclass
class LocalFrame:
    """Rigid transform mapping a group chord onto the +x axis."""

    origin: np.ndarray    # (2,)
    rotation: np.ndarray  # (2, 2) orthonormal, det +1

    def to_local(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.origin) @ self.rotation.T

    def to_global(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation + self.origin


def to_local_frame(points: np.ndarray) -> tuple[LocalFrame, np.ndarray]:
    """Rotate group points so the first maps to (0,0) and the last to (L,0)."""
    points = np.asarray(points, dtype=np.float64)
    chord = points[-1] - points[0]
    length = float(np.hypot(chord[0], chord[1]))
    if length <= _DEGENERATE_CHORD:
        raise ValueError("coincident group endpoints")
    cx, cy = chord / length
    rotation = np.array([[cx, cy], [-cy, cx]])
    frame = LocalFrame(points[0].copy(), rotation)
    return frame, frame.to_local(points)


def select_group_size(cell_class: CellClass, n_points: int, params: FitParams) -> int:
    """Class-dependent group size, rounded up to the nearest odd integer."""
    cls = params.for_class(cell_class)
    size = max(int(math.floor(params.step * n_points / cls.group_divisor)),
               cls.min_group_size)
    return size if size % 2 == 1 else size + 1


def select_bandwidth(
    local_y: np.ndarray,
    group_size: int,
    cell_class: CellClass,
    params: FitParams,
) -> float:
    """Kernel bandwidth from the ordinate spread plus a step-scaled floor.

    Degenerate zero bandwidth (flat group and zero floor term) falls back
    to the sampling step so the fit stays total.
    """
    sigma = float(np.std(np.asarray(local_y, dtype=np.float64)))
    spread_term = 2.0 * sigma * math.sqrt(group_size)
    floor_term = math.floor(params.step * group_size) / params.offset_divisor
    bandwidth = params.for_class(cell_class).bandwidth_scale * spread_term + floor_term
    return bandwidth if bandwidth > 0 else params.step


@dataclass
class FitGroup:
    """One group's local-frame data, ready for per-target weighted fits."""

    local_x: np.ndarray
    local_y: np.ndarray
    bandwidth: float
    stitch_indices: tuple[int, int]
    sigma: float = field(init=False)

    def __post_init__(self):
        self.local_x = np.asarray(self.local_x, dtype=np.float64)
        self.local_y = np.asarray(self.local_y, dtype=np.float64)
        self.sigma = float(np.std(self.local_y))


def normalized_weights(group: FitGroup, x: float) -> np.ndarray:
    """Kernel weights at target x, stitch points boosted, summing to 1."""
    plain = gaussian_kernel(x - group.local_x, group.bandwidth)
    weights = plain.copy()
    boost = STITCH_BOOST * plain.max()
    for j in group.stitch_indices:
        weights[j] = boost
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        return np.full_like(weights, 1.0 / len(weights))
    return weights / total


def _solve_weighted_line(x, y, w):
    """Closed-form weighted least-squares line; near-singular systems
    collapse to the horizontal line through the weighted mean."""
    s0 = w.sum()
    s1 = (w * x).sum()
    s2 = (w * x * x).sum()
    t0 = (w * y).sum()
    t1 = (w * x * y).sum()
    denom = s0 * s2 - s1 * s1
    if denom <= 1e-12 * max(s0 * s2, 1e-300):
        return t0 / s0, 0.0
    slope = (s0 * t1 - s1 * t0) / denom
    intercept = (s2 * t0 - s1 * t1) / denom
    return intercept, slope


def local_linear_fit(group: FitGroup, x: float) -> tuple[float, float]:
    """Weighted line fit at target x; returns (intercept, slope)."""
    weights = normalized_weights(group, x)
    return _solve_weighted_line(group.local_x, group.local_y, weights)


def interpolate_gaps(points: np.ndarray, step: float) -> np.ndarray:
    """Insert points on every wrapped segment longer than twice the step.

    A segment of length d gets m - 1 equally spaced inner points, m being
    the smallest integer with d / m < step; shorter segments (d <= 2*step)
    pass through untouched. Original points survive as an exact
    subsequence.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if n < 3:
        raise ValueError("a closed loop needs at least 3 points")
    out = []
    for i in range(n):
        p = points[i]
        q = points[(i + 1) % n]
        out.append(p)
        gap = float(np.hypot(*(q - p)))
        if gap > 2.0 * step:
            m = math.floor(gap / step) + 1
            fractions = np.arange(1, m)[:, None] / m
            out.extend(p[None, :] + fractions * (q - p)[None, :])
    return np.vstack(out)


def _refit_smooth_closed(points, group_size, cls, params):
    """Vectorized per-point fits: one centered group per loop point."""
    n = len(points)
    size = min(group_size, n if n % 2 == 1 else n - 1)
    radius = (size - 1) // 2
    scale = params.for_class(cls).bandwidth_scale
    floor_term = math.floor(params.step * size) / params.offset_divisor

    idx = (np.arange(n)[:, None] + np.arange(-radius, radius + 1)[None, :]) % n
    grp = points[idx]                                   # (n, size, 2)
    first = grp[:, 0]
    chord = grp[:, -1] - first
    length = np.hypot(chord[:, 0], chord[:, 1])
    ok = length > _DEGENERATE_CHORD
    unit = np.where(ok[:, None], chord / np.where(ok, length, 1.0)[:, None], 0.0)

    rel = grp - first[:, None, :]
    x_loc = rel[..., 0] * unit[:, None, 0] + rel[..., 1] * unit[:, None, 1]
    y_loc = -rel[..., 0] * unit[:, None, 1] + rel[..., 1] * unit[:, None, 0]

    sigma = y_loc.std(axis=1)
    bandwidth = scale * 2.0 * sigma * math.sqrt(size) + floor_term
    bandwidth = np.where(bandwidth > 0, bandwidth, params.step)

    target = x_loc[:, radius]
    plain = gaussian_kernel(target[:, None] - x_loc, bandwidth[:, None])
    weights = plain.copy()
    boost = STITCH_BOOST * plain.max(axis=1)
    weights[:, radius - 1] = boost
    weights[:, radius + 1] = boost
    totals = weights.sum(axis=1, keepdims=True)
    bad = ~np.isfinite(totals[:, 0]) | (totals[:, 0] <= 0.0)
    weights[bad] = 1.0 / size
    totals = np.where(bad[:, None], 1.0, totals)
    weights = weights / totals

    s1 = (weights * x_loc).sum(axis=1)
    s2 = (weights * x_loc * x_loc).sum(axis=1)
    t0 = (weights * y_loc).sum(axis=1)
    t1 = (weights * x_loc * y_loc).sum(axis=1)
    denom = s2 - s1 * s1
    singular = denom <= 1e-12 * np.maximum(s2, 1e-300)
    safe = np.where(singular, 1.0, denom)
    slope = np.where(singular, 0.0, (t1 - s1 * t0) / safe)
    intercept = np.where(singular, t0, (s2 * t0 - s1 * t1) / safe)
    y_fit = intercept + slope * target

    perp = np.stack([-unit[:, 1], unit[:, 0]], axis=1)
    out = first + target[:, None] * unit + y_fit[:, None] * perp
    out[~ok] = points[~ok]
    return out


def _refit_stitched(points, plan, cls, params):
    """Per-group fits resampled over their inner intervals and spliced."""
    segments = []
    for k in range(plan.group_count):
        indices = plan.group_indices(k)
        grp = points[indices]
        lo, hi = plan.stitch_positions(k)
        try:
            frame, local = to_local_frame(grp)
        except ValueError:
            segments.append(grp[lo:hi + 1])
            continue
        bandwidth = select_bandwidth(local[:, 1], plan.group_size, cls, params)
        group = FitGroup(local[:, 0], local[:, 1], bandwidth, (lo, hi))
        span = local[hi, 0] - local[lo, 0]
        count = max(1, math.ceil(abs(span) / params.step))
        targets = local[lo, 0] + span * np.arange(count) / count
        fitted = np.empty((count, 2))
        for j, t in enumerate(targets):
            intercept, slope = local_linear_fit(group, float(t))
            fitted[j] = (t, intercept + slope * t)
        segments.append(frame.to_global(fitted))
    return np.vstack(segments)


def refit_closed_curve(
    points: np.ndarray,
    cell_class: CellClass,
    params: FitParams,
) -> np.ndarray:
    """Refit a densified closed loop into a smooth curve.

    smooth_closed mode preserves the point count; stitched mode resamples
    each group's fitted segment at the configured step.
    """
    points = np.asarray(points, dtype=np.float64)
    group_size = select_group_size(cell_class, len(points), params)
    if params.mode == "smooth_closed":
        return _refit_smooth_closed(points, group_size, cell_class, params)
    plan = plan_groups(len(points), group_size, params.mode, params.overlap)
    if plan.single_group:
        plan.overlap = 0.0  # sample the whole group; there is nothing to stitch
    return _refit_stitched(points, plan, cell_class, params)


def refit_polygon(poly: PolygonAnnotation, params: FitParams) -> PolygonAnnotation:
    """Densify and refit one polygon, keeping its class and id."""
    dense = interpolate_gaps(poly.points, params.step)
    refit = refit_closed_curve(dense, poly.cell_class, params)
    return PolygonAnnotation(refit, poly.cell_class, poly.id)
