"""Evaluation metrics: Chamfer matching, average precision, raster IoU,
and aligned point error.

Detection scoring follows the standard protocol: predictions are matched
greedily in descending confidence to the unmatched ground-truth instance of
the same class with minimal Chamfer distance, a match counting only below the
threshold; AP interpolates precision at 101 recall points and averages over
the thresholds {0.5, 1.0, 1.5} meters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import DataError
from .map_io import resample_coords
from .pretrain import CorruptionPlan
from .vector_core import (DEFAULT_WINDOW, EVAL_CLASSES, ElementType,
                          PerceptionWindow, VectorInstance, VectorMap)

DEFAULT_TAUS = (0.5, 1.0, 1.5)
DEFAULT_CHAMFER_SAMPLES = 100
DEFAULT_RESOLUTION = 0.15
_RECALL_GRID = np.linspace(0.0, 1.0, 101)


# ---------------------------------------------------------------------------
# chamfer distance

def _instance_coords(obj: Union[VectorInstance, np.ndarray]) -> np.ndarray:
    xy = obj.coords() if isinstance(obj, VectorInstance) else np.asarray(obj,
                                                                         float)
    if xy.ndim != 2 or xy.shape[1] != 2 or xy.shape[0] == 0:
        raise DataError(f"chamfer needs a nonempty (n, 2) point set, got "
                        f"shape {xy.shape}")
    return xy


def chamfer_distance(a, b, n_samples: int = DEFAULT_CHAMFER_SAMPLES) -> float:
    """Symmetric mean nearest-neighbor distance between two polylines,
    both resampled to a common point count first."""
    pa = _instance_coords(a)
    pb = _instance_coords(b)
    if n_samples >= 2:
        if pa.shape[0] > 1:
            pa = resample_coords(pa, n_samples)
        if pb.shape[0] > 1:
            pb = resample_coords(pb, n_samples)
    pa = np.ascontiguousarray(pa)
    pb = np.ascontiguousarray(pb)
    return 0.5 * (kernels.chamfer_directed(pa, pb)
                  + kernels.chamfer_directed(pb, pa))


# ---------------------------------------------------------------------------
# matching and AP

@dataclass
class MatchResult:
    """Greedy matching outcome for one class at one threshold."""

    order: np.ndarray            # pred indices, descending confidence
    matched_gt: list[Optional[int]]  # aligned with order
    distances: list[float]       # chamfer to the matched (or nearest) GT
    confidences: np.ndarray      # aligned with order
    tp: np.ndarray               # aligned with order
    n_gt: int


def _filter_class(instances: Sequence[VectorInstance],
                  class_id: Optional[int]) -> list[VectorInstance]:
    if class_id is None:
        return list(instances)
    return [i for i in instances if int(i.element_type) == int(class_id)]


def match_instances(preds: Sequence[VectorInstance],
                    gts: Sequence[VectorInstance],
                    class_id: Optional[int], tau: float,
                    n_samples: int = DEFAULT_CHAMFER_SAMPLES) -> MatchResult:
    """Greedy confidence-ordered matching under a Chamfer threshold."""
    preds = _filter_class(preds, class_id)
    gts = _filter_class(gts, class_id)
    conf = np.array([p.confidence for p in preds])
    order = np.argsort(-conf, kind="stable")
    pred_pts = [resample_coords(p.coords(), n_samples) for p in preds]
    gt_pts = [resample_coords(g.coords(), n_samples) for g in gts]
    taken = [False] * len(gts)
    matched: list[Optional[int]] = []
    dists: list[float] = []
    tp = np.zeros(len(preds), dtype=bool)
    for rank, pi in enumerate(order):
        best, best_d = None, np.inf
        for gi in range(len(gts)):
            if taken[gi]:
                continue
            d = 0.5 * (kernels.chamfer_directed(pred_pts[pi], gt_pts[gi])
                       + kernels.chamfer_directed(gt_pts[gi], pred_pts[pi]))
            if d < best_d:
                best, best_d = gi, d
        if best is not None and best_d < tau:
            taken[best] = True
            matched.append(best)
            dists.append(best_d)
            tp[rank] = True
        else:
            matched.append(None)
            dists.append(best_d if best is not None else np.inf)
    return MatchResult(order=order, matched_gt=matched, distances=dists,
                       confidences=conf[order], tp=tp, n_gt=len(gts))


def ap_from_flags(tp: np.ndarray, n_gt: int) -> float:
    """101-point interpolated AP from confidence-ordered hit flags."""
    if n_gt == 0:
        raise DataError("AP undefined with zero ground-truth instances")
    if len(tp) == 0:
        return 0.0
    cum = np.cumsum(tp.astype(np.float64))
    ranks = np.arange(1, len(tp) + 1, dtype=np.float64)
    precision = cum / ranks
    recall = cum / n_gt
    total = 0.0
    for r in _RECALL_GRID:
        mask = recall >= r
        total += float(precision[mask].max()) if mask.any() else 0.0
    return total / len(_RECALL_GRID)


def average_precision(preds: Sequence[VectorInstance],
                      gts: Sequence[VectorInstance],
                      class_id: Optional[int], tau: float,
                      n_samples: int = DEFAULT_CHAMFER_SAMPLES
                      ) -> Optional[float]:
    """AP for one class at one threshold; None when the class has no GT."""
    result = match_instances(preds, gts, class_id, tau, n_samples)
    if result.n_gt == 0:
        return None
    return ap_from_flags(result.tp, result.n_gt)


def evaluate_detection(frames: Sequence[tuple[Sequence[VectorInstance],
                                              Sequence[VectorInstance]]],
                       classes: Sequence[ElementType] = EVAL_CLASSES,
                       taus: Sequence[float] = DEFAULT_TAUS,
                       n_samples: int = DEFAULT_CHAMFER_SAMPLES) -> dict:
    """Dataset-level AP: match per frame, pool detections, score per class.

    Classes with no ground truth anywhere are excluded from the mean and
    listed in the report.
    """
    report: dict = {"ap": {}, "class_ap": {}, "excluded_classes": []}
    class_means = []
    for cls in classes:
        name = ElementType(cls).name.lower()
        per_tau = {}
        n_gt_total = 0
        for tau in taus:
            confs, flags = [], []
            n_gt = 0
            for preds, gts in frames:
                res = match_instances(list(preds), list(gts), int(cls), tau,
                                      n_samples)
                confs.extend(res.confidences.tolist())
                flags.extend(res.tp.tolist())
                n_gt += res.n_gt
            n_gt_total = n_gt
            if n_gt == 0:
                continue
            pooled = np.argsort(-np.asarray(confs), kind="stable")
            tp = np.asarray(flags, dtype=bool)[pooled]
            per_tau[tau] = ap_from_flags(tp, n_gt)
        if n_gt_total == 0:
            report["excluded_classes"].append(name)
            continue
        report["ap"][name] = {str(t): per_tau[t] for t in taus}
        class_ap = sum(per_tau.values()) / len(taus)
        report["class_ap"][name] = class_ap
        class_means.append(class_ap)
    report["map"] = (sum(class_means) / len(class_means)) if class_means else None
    return report


# ---------------------------------------------------------------------------
# rasterization and IoU

@dataclass
class RasterGrid:
    """Per-class boolean occupancy grids.

    Cell (iy, ix) is centered at (x_min + ix*res, y_min + iy*res); a cell is
    occupied when its center lies within line_width/2 of a polyline of that
    class.
    """

    grids: dict[int, np.ndarray]
    resolution: float
    window: PerceptionWindow
    line_width: float

    @property
    def shape(self) -> tuple[int, int]:
        first = next(iter(self.grids.values()))
        return first.shape


def rasterize(vmap: VectorMap, window: PerceptionWindow = DEFAULT_WINDOW,
              resolution: float = DEFAULT_RESOLUTION,
              line_width: float = DEFAULT_RESOLUTION,
              classes: Sequence[ElementType] = EVAL_CLASSES) -> RasterGrid:
    """Draw each instance as its polyline dilated to line_width, per class."""
    w = int(round((window.x_max - window.x_min) / resolution))
    h = int(round((window.y_max - window.y_min) / resolution))
    grids = {int(c): np.zeros((h, w), dtype=bool) for c in classes}
    half = line_width / 2.0
    for inst in vmap.instances:
        cls = int(inst.element_type)
        if cls not in grids:
            continue
        grid = grids[cls]
        xy = inst.coords()
        for s in range(len(xy) - 1):
            _mark_segment(grid, xy[s], xy[s + 1], half, window, resolution)
    return RasterGrid(grids=grids, resolution=resolution, window=window,
                      line_width=line_width)


def _mark_segment(grid: np.ndarray, p: np.ndarray, q: np.ndarray, half: float,
                  window: PerceptionWindow, res: float) -> None:
    h, w = grid.shape
    ix0 = max(0, int(np.floor((min(p[0], q[0]) - half - window.x_min) / res)))
    ix1 = min(w - 1, int(np.ceil((max(p[0], q[0]) + half - window.x_min) / res)))
    iy0 = max(0, int(np.floor((min(p[1], q[1]) - half - window.y_min) / res)))
    iy1 = min(h - 1, int(np.ceil((max(p[1], q[1]) + half - window.y_min) / res)))
    if ix0 > ix1 or iy0 > iy1:
        return
    xs = window.x_min + np.arange(ix0, ix1 + 1) * res
    ys = window.y_min + np.arange(iy0, iy1 + 1) * res
    cx, cy = np.meshgrid(xs, ys)
    d = q - p
    seg2 = float(d[0] * d[0] + d[1] * d[1])
    if seg2 == 0.0:
        dist = np.hypot(cx - p[0], cy - p[1])
    else:
        t = ((cx - p[0]) * d[0] + (cy - p[1]) * d[1]) / seg2
        np.clip(t, 0.0, 1.0, out=t)
        dist = np.hypot(cx - (p[0] + t * d[0]), cy - (p[1] + t * d[1]))
    grid[iy0:iy1 + 1, ix0:ix1 + 1] |= dist <= half


@dataclass
class IouResult:
    per_class: dict[str, float]
    both_empty: list[str]
    mean: float


def iou(a: RasterGrid, b: RasterGrid) -> IouResult:
    """Per-class intersection-over-union; both-empty classes score 1.0 and
    are flagged."""
    if set(a.grids) != set(b.grids) or a.shape != b.shape:
        raise DataError(f"raster grids differ: classes {sorted(a.grids)} vs "
                        f"{sorted(b.grids)}, dims {a.shape} vs {b.shape}")
    per_class = {}
    both_empty = []
    for cls in sorted(a.grids):
        name = ElementType(cls).name.lower()
        ga, gb = a.grids[cls], b.grids[cls]
        union = int(np.logical_or(ga, gb).sum())
        if union == 0:
            per_class[name] = 1.0
            both_empty.append(name)
        else:
            inter = int(np.logical_and(ga, gb).sum())
            per_class[name] = inter / union
    mean = sum(per_class.values()) / len(per_class)
    return IouResult(per_class=per_class, both_empty=both_empty, mean=mean)


# ---------------------------------------------------------------------------
# aligned reconstruction error

def mean_point_error(pred: VectorMap, gt: VectorMap,
                     plan: Optional[CorruptionPlan] = None) -> float:
    """Mean Euclidean distance over index-aligned points; optionally
    restricted to a corruption plan's points."""
    if len(pred) != len(gt):
        raise DataError(f"structure mismatch: {len(pred)} vs {len(gt)} instances")
    errors = []
    for i, (pi, gi) in enumerate(zip(pred.instances, gt.instances)):
        if len(pi) != len(gi):
            raise DataError(f"structure mismatch at instance {i}: "
                            f"{len(pi)} vs {len(gi)} points")
        pxy, gxy = pi.coords(), gi.coords()
        errors.append(np.hypot(pxy[:, 0] - gxy[:, 0], pxy[:, 1] - gxy[:, 1]))
    if not errors:
        return 0.0
    if plan is None:
        return float(np.concatenate(errors).mean())
    sel = [errors[e.instance][e.point] for e in plan.entries]
    if not sel:
        raise DataError("plan-restricted error: the plan is empty")
    return float(np.mean(sel))
