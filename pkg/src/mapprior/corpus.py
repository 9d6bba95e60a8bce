"""Synthetic ego-frame road corpora for desk-scale training and evaluation.

Each map holds a handful of roughly parallel lane dividers following a smooth
low-curvature centerline, road boundaries offset outward, up to two pedestrian
crossing rectangles, and occasionally an explicit centerline. Geometry stays
well inside the perception window so corruption noise rarely pushes points
out of range.
"""
from __future__ import annotations

import numpy as np

from .map_io import clip_to_window, resample_map
from .seeding import derive_seed
from .vector_core import (DEFAULT_WINDOW, ElementType, PerceptionWindow,
                          VectorMap, make_instance)

_LATERAL_MARGIN = 3.0
_LONGITUDINAL_MARGIN = 3.5


def _road_profile(rng: np.random.Generator, window: PerceptionWindow):
    """Sample a smooth lateral-offset function x(y) and lane layout."""
    n_lanes = int(rng.integers(2, 5))          # lane dividers
    spacing = rng.uniform(2.8, 3.6)
    center = rng.uniform(-1.5, 1.5)
    amp = rng.uniform(0.0, 2.0)
    omega = rng.uniform(0.03, 0.08)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    slope = rng.uniform(-2.0, 2.0)
    y_span = window.y_max - window.y_min

    def base(y: np.ndarray) -> np.ndarray:
        return (center + amp * np.sin(omega * y + phase)
                + slope * (y - window.y_min) / y_span - slope / 2.0)

    return base, n_lanes, spacing


def synth_map(rng: np.random.Generator,
              window: PerceptionWindow = DEFAULT_WINDOW,
              n_points: int = 20) -> VectorMap:
    base, n_lanes, spacing = _road_profile(rng, window)
    ys = np.linspace(window.y_min + _LONGITUDINAL_MARGIN,
                     window.y_max - _LONGITUDINAL_MARGIN, 40)
    bx = base(ys)
    half_span = (n_lanes - 1) * spacing / 2.0

    instances = []
    for k in range(n_lanes):
        offset = k * spacing - half_span
        xy = np.column_stack([bx + offset, ys])
        instances.append(make_instance(xy, ElementType.LANE_DIVIDER))
    for side in (-1.0, 1.0):
        margin = rng.uniform(1.5, 2.0)
        xy = np.column_stack([bx + side * (half_span + margin), ys])
        instances.append(make_instance(xy, ElementType.ROAD_BOUNDARY))

    n_crossings = int(rng.integers(0, 3))
    used_y: list[float] = []
    for _ in range(n_crossings):
        yc = rng.uniform(window.y_min + 6.0, window.y_max - 6.0)
        if any(abs(yc - u) < 8.0 for u in used_y):
            continue
        used_y.append(yc)
        h = rng.uniform(2.5, 4.0)
        xc = float(base(np.array([yc]))[0])
        x0, x1 = xc - half_span - 2.3, xc + half_span + 2.3
        y0, y1 = yc - h / 2.0, yc + h / 2.0
        loop = [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
        instances.append(make_instance(loop, ElementType.PEDESTRIAN_CROSSING))

    if rng.random() < 0.5:
        xy = np.column_stack([bx, ys])
        instances.append(make_instance(xy, ElementType.CENTERLINE))

    vmap = VectorMap(tuple(instances), frame="ego", source_tag="ground_truth")
    vmap = clip_to_window(vmap, window)
    return resample_map(vmap, n_points)


def synth_corpus(n_maps: int, seed: int,
                 window: PerceptionWindow = DEFAULT_WINDOW,
                 n_points: int = 20) -> list[VectorMap]:
    """Seed-deterministic corpus of synthetic ego-frame maps."""
    if n_maps < 1:
        from .errors import DataError
        raise DataError(f"corpus size must be >= 1, got {n_maps}")
    maps = []
    for i in range(n_maps):
        rng = np.random.default_rng(derive_seed(seed, "synth-map", i))
        maps.append(synth_map(rng, window, n_points))
    return maps
