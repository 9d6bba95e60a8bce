"""Independent reference implementations used to check the package.

Everything here is deliberately naive: plain loops, no shared code with the
implementations under test beyond numpy itself.
"""
from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# finite differences

def finite_difference_gradients(loss_fn, params, h: float = 1e-5,
                                names=None) -> dict:
    """Central-difference gradient of loss_fn() for every parameter element."""
    out = {}
    for name, node in params.items():
        if names is not None and name not in names:
            continue
        value = node.value
        grad = np.zeros_like(value)
        flat = value.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            flat[i] = orig - h
            lm = loss_fn()
            flat[i] = orig
            gflat[i] = (lp - lm) / (2.0 * h)
        out[name] = grad
    return out


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       floor: float = 1e-6) -> float:
    a = np.asarray(analytic).reshape(-1)
    n = np.asarray(numeric).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


# ---------------------------------------------------------------------------
# brute-force chamfer / matching / AP

def oracle_resample(points, n: int):
    """Arc-length resampling with plain loops."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) == 1:
        return pts * n
    cum = [0.0]
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        cum.append(cum[-1] + math.hypot(x1 - x0, y1 - y0))
    total = cum[-1]
    if total == 0.0:
        return [pts[0]] * n
    out = []
    for k in range(n):
        target = total * k / (n - 1)
        seg = 1
        while seg < len(cum) - 1 and cum[seg] < target:
            seg += 1
        span = cum[seg] - cum[seg - 1]
        t = 0.0 if span == 0.0 else (target - cum[seg - 1]) / span
        x = pts[seg - 1][0] + t * (pts[seg][0] - pts[seg - 1][0])
        y = pts[seg - 1][1] + t * (pts[seg][1] - pts[seg - 1][1])
        out.append((x, y))
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def oracle_chamfer(a_points, b_points, n_samples: int = 100) -> float:
    pa = oracle_resample(a_points, n_samples)
    pb = oracle_resample(b_points, n_samples)

    def directed(src, dst):
        acc = 0.0
        for (x, y) in src:
            best = min(math.hypot(x - u, y - v) for (u, v) in dst)
            acc += best
        return acc / len(src)

    return 0.5 * (directed(pa, pb) + directed(pb, pa))


def oracle_greedy_match(pred_points, confidences, gt_points, tau: float,
                        n_samples: int = 100):
    """Returns hit flags in descending-confidence order plus that order."""
    order = sorted(range(len(pred_points)),
                   key=lambda i: (-confidences[i], i))
    taken = set()
    flags = []
    for pi in order:
        best_gt, best_d = None, float("inf")
        for gi in range(len(gt_points)):
            if gi in taken:
                continue
            d = oracle_chamfer(pred_points[pi], gt_points[gi], n_samples)
            if d < best_d:
                best_gt, best_d = gi, d
        if best_gt is not None and best_d < tau:
            taken.add(best_gt)
            flags.append(True)
        else:
            flags.append(False)
    return flags, order


def oracle_ap(flags, n_gt: int) -> float:
    """101-point interpolated AP enumerated directly from prefix PR points."""
    if n_gt == 0:
        raise ValueError("no ground truth")
    if not flags:
        return 0.0
    precisions = []
    recalls = []
    tp = 0
    for k, hit in enumerate(flags, start=1):
        if hit:
            tp += 1
        precisions.append(tp / k)
        recalls.append(tp / n_gt)
    grid = np.linspace(0.0, 1.0, 101)
    total = 0.0
    for r in grid:
        best = 0.0
        for p, rec in zip(precisions, recalls):
            if rec >= r and p > best:
                best = p
        total += best
    return total / 101


# ---------------------------------------------------------------------------
# linear-scan retrieval

def oracle_retrieve(entries, pose, radius: float, k: int):
    """entries: list of (pose, timestamp). Returns indices, nearest first,
    newer-first on distance ties, capped at k."""
    hits = []
    for idx, (epose, ts) in enumerate(entries):
        d = math.hypot(epose[0] - pose[0], epose[1] - pose[1])
        if d <= radius:
            hits.append((d, -ts, idx))
    hits.sort()
    return [idx for _, _, idx in hits[:k]]
