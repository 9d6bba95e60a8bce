"""Vectorized map data model.

A map is a set of instances (polylines with a semantic class), each instance an
ordered sequence of points carrying position (x, y), a unit direction
(vx, vy), and the class code. All types are immutable after construction and
safe to share between threads.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError

_UNIT_NORM_TOL = 1e-6

SOURCE_TAGS = ("sd_map", "hd_map_ex", "online_local", "ground_truth", "prediction")
FRAMES = ("global", "ego")


class ElementType(enum.IntEnum):
    """Map element classes; the integer codes index embedding tables."""

    LANE_DIVIDER = 0
    PEDESTRIAN_CROSSING = 1
    ROAD_BOUNDARY = 2
    CENTERLINE = 3

    @classmethod
    def from_name(cls, name: str) -> "ElementType":
        try:
            return cls[name.upper()]
        except KeyError:
            raise DataError(f"unknown element type {name!r}; expected one of "
                            f"{[t.name.lower() for t in cls]}") from None


# classes scored by the detection/segmentation metrics
EVAL_CLASSES = (
    ElementType.LANE_DIVIDER,
    ElementType.PEDESTRIAN_CROSSING,
    ElementType.ROAD_BOUNDARY,
)

_instance_counter = itertools.count()


def _fresh_instance_id() -> str:
    return f"inst{next(_instance_counter):08d}"


@dataclass(frozen=True)
class VectorPoint:
    """One map point: ego-frame position, unit (or zero) direction, class code."""

    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0
    cls: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DataError(f"non-finite point coordinates ({self.x}, {self.y})")
        norm = math.hypot(self.vx, self.vy)
        if norm != 0.0 and abs(norm - 1.0) > _UNIT_NORM_TOL:
            raise DataError(f"direction ({self.vx}, {self.vy}) is neither zero "
                            f"nor unit-norm (|v|={norm})")


@dataclass(frozen=True)
class VectorInstance:
    """An ordered polyline of at least two points, one semantic class."""

    points: tuple[VectorPoint, ...]
    element_type: ElementType
    confidence: float = 1.0
    instance_id: str = field(default_factory=_fresh_instance_id)

    def __post_init__(self):
        if len(self.points) < 2:
            raise DataError(f"instance needs >=2 points, got {len(self.points)}")
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"confidence {self.confidence} outside [0, 1]")
        code = int(self.element_type)
        for p in self.points:
            if p.cls != code:
                raise DataError(f"point cls {p.cls} does not match element type "
                                f"{self.element_type.name.lower()} ({code})")

    def __len__(self) -> int:
        return len(self.points)

    def coords(self) -> np.ndarray:
        """(n, 2) float64 array of point positions."""
        return np.array([(p.x, p.y) for p in self.points], dtype=np.float64)

    def dirs(self) -> np.ndarray:
        """(n, 2) float64 array of point directions."""
        return np.array([(p.vx, p.vy) for p in self.points], dtype=np.float64)

    def with_coords(self, xy: np.ndarray, dirs: Optional[np.ndarray] = None,
                    fresh_id: bool = False) -> "VectorInstance":
        """Same instance with replaced coordinates (and optionally directions)."""
        if dirs is None:
            dirs = self.dirs()
        code = int(self.element_type)
        pts = tuple(VectorPoint(float(x), float(y), float(vx), float(vy), code)
                    for (x, y), (vx, vy) in zip(xy, dirs))
        if fresh_id:
            return VectorInstance(pts, self.element_type, self.confidence)
        return replace(self, points=pts)


@dataclass(frozen=True)
class VectorMap:
    """A set of vector instances in either the global or the ego frame."""

    instances: tuple[VectorInstance, ...]
    frame: str = "ego"
    pose: Optional[tuple[float, float, float]] = None  # (x_w, y_w, yaw)
    source_tag: str = "ground_truth"

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise DataError(f"unknown frame {self.frame!r}; expected one of {FRAMES}")
        if self.source_tag not in SOURCE_TAGS:
            raise DataError(f"unknown source tag {self.source_tag!r}; "
                            f"expected one of {SOURCE_TAGS}")
        if self.pose is not None and len(self.pose) != 3:
            raise DataError(f"pose must be (x, y, yaw), got {self.pose!r}")

    def __len__(self) -> int:
        return len(self.instances)

    def total_points(self) -> int:
        return sum(len(inst) for inst in self.instances)


@dataclass(frozen=True)
class PerceptionWindow:
    """Ego-centered evaluation rectangle: x lateral, y longitudinal, meters."""

    x_min: float = -15.0
    x_max: float = 15.0
    y_min: float = -30.0
    y_max: float = 30.0

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise DataError(f"degenerate window {self}")

    def contains(self, x: float, y: float, tol: float = 0.0) -> bool:
        return (self.x_min - tol <= x <= self.x_max + tol
                and self.y_min - tol <= y <= self.y_max + tol)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max)


DEFAULT_WINDOW = PerceptionWindow()


def make_instance(points: Iterable[Sequence[float]],
                  element_type: ElementType | str,
                  confidence: float = 1.0) -> VectorInstance:
    """Build an instance from raw (x, y) or (x, y, vx, vy) tuples.

    Point order is preserved exactly; class codes are stamped from the element
    type. Directions default to zero (unknown) unless provided.
    """
    if isinstance(element_type, str):
        element_type = ElementType.from_name(element_type)
    rows = [tuple(map(float, p)) for p in points]
    if len(rows) < 2:
        raise DataError(f"too few points for an instance: {len(rows)} < 2")
    code = int(element_type)
    pts = []
    for row in rows:
        if len(row) == 2:
            x, y = row
            vx = vy = 0.0
        elif len(row) == 4:
            x, y, vx, vy = row
        else:
            raise DataError(f"point must have 2 or 4 fields, got {len(row)}")
        if not all(math.isfinite(v) for v in row):
            raise DataError(f"non-finite point {row}")
        pts.append(VectorPoint(x, y, vx, vy, code))
    return VectorInstance(tuple(pts), element_type, confidence)


def compute_directions(instance: VectorInstance) -> VectorInstance:
    """Assign unit tangent directions from central differences.

    Interior points use the normalized chord from predecessor to successor;
    endpoints use their single adjacent chord. A zero-length chord inherits the
    nearest assigned neighbor direction (previous first, then next); an
    all-degenerate polyline keeps (0, 0) everywhere.
    """
    xy = instance.coords()
    dirs = _tangent_directions(xy)
    return instance.with_coords(xy, dirs)


def _tangent_directions(xy: np.ndarray) -> np.ndarray:
    n = xy.shape[0]
    chords = np.empty_like(xy)
    chords[0] = xy[1] - xy[0]
    chords[-1] = xy[-1] - xy[-2]
    if n > 2:
        chords[1:-1] = xy[2:] - xy[:-2]
    norms = np.hypot(chords[:, 0], chords[:, 1])
    dirs = np.zeros_like(xy)
    nz = norms != 0.0
    dirs[nz] = chords[nz] / norms[nz, None]
    # fill degenerate chords from the previous point, then from the next
    for i in range(1, n):
        if not nz[i] and np.any(dirs[i - 1] != 0.0):
            dirs[i] = dirs[i - 1]
    for i in range(n - 2, -1, -1):
        if norms[i] == 0.0 and np.all(dirs[i] == 0.0):
            dirs[i] = dirs[i + 1]
    return dirs
