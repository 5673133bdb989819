"""Boundary-detection scoring: tolerance-matched PR curves and ODS/OIS/AP.

Predicted edge pixels are matched one-to-one to ground-truth pixels
within a Euclidean tolerance, greedily in increasing-distance order.
Soft predictions are swept over a threshold grid; both sides are thinned
to single-pixel width before matching so thick maps are not rewarded.
The evaluator assumes a single ground-truth map per image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from skimage.morphology import thin

from celledge.raster import EdgeMap

__all__ = [
    "PRPoint",
    "EvalSummary",
    "default_tolerance",
    "default_thresholds",
    "match_edges",
    "pr_curve",
    "summarize",
]


@dataclass
class PRPoint:
    """Counts and derived scores at one binarization threshold."""

    threshold: float
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r else 0.0


@dataclass
class EvalSummary:
    ods: float
    ois: float
    ap: float
    per_image: list[list[PRPoint]]


def default_tolerance(size: tuple[int, int]) -> float:
    """Matching tolerance: 0.0075 of the image diagonal."""
    w, h = size
    return 0.0075 * float(np.hypot(w, h))


def default_thresholds(count: int = 33) -> np.ndarray:
    """``count`` thresholds uniformly spaced in the open interval (0, 1)."""
    return np.arange(1, count + 1, dtype=np.float64) / (count + 1)


def match_edges(pred: EdgeMap, gt: EdgeMap, tol: float) -> tuple[int, int, int]:
    """Greedy one-to-one matching of edge pixels within ``tol``.

    Candidate pairs are processed in increasing-distance order (ties
    broken by pixel index, so the result is deterministic). Returns
    (tp, fp, fn).
    """
    if pred.bits.shape != gt.bits.shape:
        raise ValueError(
            f"shape mismatch: pred {pred.bits.shape} vs gt {gt.bits.shape}")
    if tol < 0:
        raise ValueError(f"tolerance must be >= 0, got {tol}")

    pred_xy = np.argwhere(pred.bits)[:, ::-1].astype(np.float64)
    gt_xy = np.argwhere(gt.bits)[:, ::-1].astype(np.float64)
    n_pred, n_gt = len(pred_xy), len(gt_xy)
    if n_pred == 0 or n_gt == 0:
        return 0, n_pred, n_gt

    tree = cKDTree(gt_xy)
    pairs = []
    for i, neighbors in enumerate(tree.query_ball_point(pred_xy, tol)):
        for j in neighbors:
            d = float(np.hypot(*(pred_xy[i] - gt_xy[j])))
            pairs.append((d, i, j))
    pairs.sort()

    pred_used = np.zeros(n_pred, dtype=bool)
    gt_used = np.zeros(n_gt, dtype=bool)
    tp = 0
    for _, i, j in pairs:
        if not pred_used[i] and not gt_used[j]:
            pred_used[i] = True
            gt_used[j] = True
            tp += 1
    return tp, n_pred - tp, n_gt - tp


def pr_curve(
    pred_soft: np.ndarray,
    gt: EdgeMap,
    thresholds: np.ndarray | None = None,
    tol: float | None = None,
) -> list[PRPoint]:
    """Score a soft prediction in [0, 1] over a threshold sweep.

    At each threshold the prediction is binarized at >= t and thinned;
    the ground truth is thinned once as well, so self-evaluation of any
    map is exactly perfect.
    """
    pred_soft = np.asarray(pred_soft, dtype=np.float64)
    if thresholds is None:
        thresholds = default_thresholds()
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if np.any(np.diff(thresholds) <= 0) or np.any((thresholds <= 0) | (thresholds >= 1)):
        raise ValueError("thresholds must be strictly increasing within (0, 1)")
    if tol is None:
        tol = default_tolerance((gt.width, gt.height))

    gt_thin = EdgeMap(thin(gt.bits))
    points = []
    for t in thresholds:
        pred_map = EdgeMap(thin(pred_soft >= t))
        tp, fp, fn = match_edges(pred_map, gt_thin, tol)
        points.append(PRPoint(float(t), tp, fp, fn))
    return points


def _pooled_f(tables: list[list[PRPoint]], picks: list[int]) -> float:
    tp = sum(tbl[k].tp for tbl, k in zip(tables, picks))
    fp = sum(tbl[k].fp for tbl, k in zip(tables, picks))
    fn = sum(tbl[k].fn for tbl, k in zip(tables, picks))
    return PRPoint(0.0, tp, fp, fn).f


def summarize(per_image: list[list[PRPoint]]) -> EvalSummary:
    """Aggregate per-image PR tables into ODS, OIS and AP.

    ODS maximizes the F-score of dataset-pooled counts over a shared
    threshold. OIS pools each image's counts at its own best threshold.
    AP is the trapezoidal area under the pooled PR curve sorted by recall
    (deduplicated by recall, extended to recall 0 at the precision of the
    lowest-recall point).
    """
    if not per_image:
        raise ValueError("need at least one image")
    n_thresh = len(per_image[0])
    if any(len(tbl) != n_thresh for tbl in per_image):
        raise ValueError("per-image tables must share one threshold grid")

    ods = max(_pooled_f(per_image, [k] * len(per_image)) for k in range(n_thresh))

    best = [max(range(n_thresh), key=lambda k: (tbl[k].f, -k)) for tbl in per_image]
    ois = _pooled_f(per_image, best)

    pooled = [
        PRPoint(
            per_image[0][k].threshold,
            sum(tbl[k].tp for tbl in per_image),
            sum(tbl[k].fp for tbl in per_image),
            sum(tbl[k].fn for tbl in per_image),
        )
        for k in range(n_thresh)
    ]
    by_recall: dict[float, float] = {}
    for pt in pooled:
        r = pt.recall
        by_recall[r] = max(by_recall.get(r, 0.0), pt.precision)
    recalls = np.array(sorted(by_recall))
    precisions = np.array([by_recall[r] for r in recalls])
    recalls = np.concatenate([[0.0], recalls])
    precisions = np.concatenate([[precisions[0]], precisions])
    ap = float(np.trapezoid(precisions, recalls))

    return EvalSummary(ods=ods, ois=ois, ap=ap, per_image=per_image)
