"""Map file parsing/serialization, frame transforms, clipping, resampling.

File format: one JSON object per line, one map per record:

    {"frame": "global"|"ego", "pose": [x, y, yaw]|null, "source": <tag>,
     "instances": [{"type": <element type name>, "confidence": f,
                    "points": [[x, y], ...], "dirs": [[vx, vy], ...]|null}]}

"dirs": null means directions are derived with compute_directions on load.
"""
from __future__ import annotations

import io
import json
import math
from typing import IO, Iterable, Optional, Union

import numpy as np

from .errors import DataError
from .vector_core import (DEFAULT_WINDOW, ElementType, PerceptionWindow,
                          VectorInstance, VectorMap, _tangent_directions,
                          compute_directions, make_instance)

DEFAULT_RESAMPLE_POINTS = 20


# ---------------------------------------------------------------------------
# parsing / serialization

def parse_map_file(source: Union[str, IO[str]]) -> list[VectorMap]:
    """Parse a line-delimited map file (path or text stream)."""
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            return parse_map_file(fh)
    maps = []
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        maps.append(_parse_record(line, lineno))
    return maps


def _parse_record(line: str, lineno: int) -> VectorMap:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    return map_from_dict(rec, where=f"line {lineno}")


def map_from_dict(rec: dict, where: str = "record") -> VectorMap:
    """Build a VectorMap from one decoded record."""
    if not isinstance(rec, dict):
        raise DataError(f"{where}: expected an object, got {type(rec).__name__}")
    for key in ("frame", "instances"):
        if key not in rec:
            raise DataError(f"{where}: missing field {key!r}")
    pose = rec.get("pose")
    if pose is not None:
        if len(pose) != 3 or not all(math.isfinite(float(v)) for v in pose):
            raise DataError(f"{where}: field 'pose' must be [x, y, yaw] or null")
        pose = tuple(float(v) for v in pose)
    instances = []
    for k, inst in enumerate(rec["instances"]):
        label = f"{where}, instance {k}"
        for key in ("type", "points"):
            if key not in inst:
                raise DataError(f"{label}: missing field {key!r}")
        try:
            etype = ElementType.from_name(str(inst["type"]))
        except DataError as exc:
            raise DataError(f"{label}, field 'type': {exc}") from None
        pts = inst["points"]
        if len(pts) < 2:
            raise DataError(f"{label}: needs >=2 points, got {len(pts)}")
        dirs = inst.get("dirs")
        if dirs is None:
            built = make_instance(pts, etype, float(inst.get("confidence", 1.0)))
            built = compute_directions(built)
        else:
            if len(dirs) != len(pts):
                raise DataError(f"{label}: 'dirs' length {len(dirs)} != "
                                f"points length {len(pts)}")
            rows = [(p[0], p[1], d[0], d[1]) for p, d in zip(pts, dirs)]
            built = make_instance(rows, etype, float(inst.get("confidence", 1.0)))
        instances.append(built)
    try:
        return VectorMap(tuple(instances), frame=rec["frame"], pose=pose,
                         source_tag=rec.get("source", "ground_truth"))
    except DataError as exc:
        raise DataError(f"{where}: {exc}") from None


def map_to_dict(vmap: VectorMap) -> dict:
    """Invert map_from_dict; coordinates keep full float precision."""
    return {
        "frame": vmap.frame,
        "pose": list(vmap.pose) if vmap.pose is not None else None,
        "source": vmap.source_tag,
        "instances": [
            {
                "type": inst.element_type.name.lower(),
                "confidence": inst.confidence,
                "points": inst.coords().tolist(),
                "dirs": inst.dirs().tolist(),
            }
            for inst in vmap.instances
        ],
    }


def serialize_map(vmap: VectorMap) -> str:
    return json.dumps(map_to_dict(vmap), sort_keys=True)


def write_map_file(maps: Iterable[VectorMap], dest: Union[str, IO[str]]) -> None:
    if isinstance(dest, str):
        with open(dest, "w", encoding="utf-8") as fh:
            write_map_file(maps, fh)
        return
    for vmap in maps:
        dest.write(serialize_map(vmap))
        dest.write("\n")


def maps_to_text(maps: Iterable[VectorMap]) -> str:
    buf = io.StringIO()
    write_map_file(maps, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# frame transforms

def world_to_ego(vmap: VectorMap, pose: tuple[float, float, float]) -> VectorMap:
    """Re-express a global-frame map relative to an ego pose.

    Positions are rotated by -yaw about the pose and translated so the pose
    lands at the origin; directions are rotated only.
    """
    if vmap.frame != "global":
        raise DataError(f"world_to_ego needs a global-frame map, got {vmap.frame!r}")
    x0, y0, yaw = (float(v) for v in pose)
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, s], [-s, c]])  # R(-yaw), applied to row vectors via .T
    out = []
    for inst in vmap.instances:
        xy = (inst.coords() - (x0, y0)) @ rot.T
        dirs = inst.dirs() @ rot.T
        out.append(inst.with_coords(xy, dirs))
    return VectorMap(tuple(out), frame="ego", pose=(x0, y0, yaw),
                     source_tag=vmap.source_tag)


def ego_to_world(vmap: VectorMap, pose: Optional[tuple[float, float, float]] = None
                 ) -> VectorMap:
    """Inverse of world_to_ego."""
    if vmap.frame != "ego":
        raise DataError(f"ego_to_world needs an ego-frame map, got {vmap.frame!r}")
    if pose is None:
        pose = vmap.pose
    if pose is None:
        raise DataError("ego_to_world needs a pose (none stored on the map)")
    x0, y0, yaw = (float(v) for v in pose)
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, -s], [s, c]])  # R(yaw)
    out = []
    for inst in vmap.instances:
        xy = inst.coords() @ rot.T + (x0, y0)
        dirs = inst.dirs() @ rot.T
        out.append(inst.with_coords(xy, dirs))
    return VectorMap(tuple(out), frame="global", pose=(x0, y0, yaw),
                     source_tag=vmap.source_tag)


# ---------------------------------------------------------------------------
# clipping

def clip_to_window(vmap: VectorMap,
                   window: PerceptionWindow = DEFAULT_WINDOW) -> VectorMap:
    """Intersect every instance with the window.

    Instances crossing the boundary are split into sub-instances at the exact
    intersection points (linearly interpolated on segments); parts with fewer
    than two points are dropped. Fully inside instances pass through unchanged.
    """
    if vmap.frame != "ego":
        raise DataError(f"clip_to_window needs an ego-frame map, got {vmap.frame!r}")
    out = []
    for inst in vmap.instances:
        xy = inst.coords()
        inside = ((xy[:, 0] >= window.x_min) & (xy[:, 0] <= window.x_max)
                  & (xy[:, 1] >= window.y_min) & (xy[:, 1] <= window.y_max))
        if inside.all():
            out.append(inst)
            continue
        for part in _clip_polyline(xy, window):
            dirs = _tangent_directions(part)
            out.append(inst.with_coords(part, dirs, fresh_id=True))
    return VectorMap(tuple(out), frame=vmap.frame, pose=vmap.pose,
                     source_tag=vmap.source_tag)


def _clip_segment(p: np.ndarray, q: np.ndarray,
                  window: PerceptionWindow) -> Optional[tuple[float, float]]:
    """Liang-Barsky: parameter range [t0, t1] of segment p->q inside the box."""
    t0, t1 = 0.0, 1.0
    d = q - p
    for delta, lo, hi in ((d[0], window.x_min - p[0], window.x_max - p[0]),
                          (d[1], window.y_min - p[1], window.y_max - p[1])):
        if delta == 0.0:
            if lo > 0.0 or hi < 0.0:
                return None
            continue
        ta, tb = lo / delta, hi / delta
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return None
    return t0, t1


def _clip_polyline(xy: np.ndarray, window: PerceptionWindow) -> list[np.ndarray]:
    parts: list[list[np.ndarray]] = []
    cur: list[np.ndarray] = []

    def flush():
        nonlocal cur
        if len(cur) >= 2:
            parts.append(cur)
        cur = []

    for i in range(len(xy) - 1):
        p, q = xy[i], xy[i + 1]
        span = _clip_segment(p, q, window)
        if span is None:
            flush()
            continue
        t0, t1 = span
        a = p if t0 == 0.0 else p + t0 * (q - p)
        b = q if t1 == 1.0 else p + t1 * (q - p)
        if t0 > 0.0:
            flush()
        if not cur:
            cur = [a]
        elif not np.array_equal(cur[-1], a):
            cur.append(a)
        if not np.array_equal(cur[-1], b):
            cur.append(b)
        if t1 < 1.0:
            flush()
    flush()
    return [np.asarray(part) for part in parts]


# ---------------------------------------------------------------------------
# resampling

def resample_coords(xy: np.ndarray, n_points: int) -> np.ndarray:
    """Equally spaced resampling by arc length; endpoints preserved exactly."""
    if n_points < 2:
        raise DataError(f"resampling needs n_points >= 2, got {n_points}")
    xy = np.asarray(xy, dtype=np.float64)
    seg = np.hypot(np.diff(xy[:, 0]), np.diff(xy[:, 1]))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        return np.repeat(xy[:1], n_points, axis=0)
    keep = np.concatenate([[True], seg > 0.0])  # drop zero-length duplicates
    cum_k, xy_k = cum[keep], xy[keep]
    targets = np.linspace(0.0, total, n_points)
    out = np.empty((n_points, 2))
    out[:, 0] = np.interp(targets, cum_k, xy_k[:, 0])
    out[:, 1] = np.interp(targets, cum_k, xy_k[:, 1])
    out[0] = xy[0]
    out[-1] = xy[-1]
    return out


def resample_instance(instance: VectorInstance, n_points: int) -> VectorInstance:
    """Resample to a fixed point count; directions recomputed from the result.

    A zero-length polyline collapses to n_points copies of its single location
    with zero directions.
    """
    xy = resample_coords(instance.coords(), n_points)
    if np.array_equal(xy[0], xy[-1]) and not np.any(np.diff(xy, axis=0)):
        dirs = np.zeros_like(xy)
    else:
        dirs = _tangent_directions(xy)
    return instance.with_coords(xy, dirs)


def resample_map(vmap: VectorMap, n_points: int = DEFAULT_RESAMPLE_POINTS
                 ) -> VectorMap:
    """Resample every instance of a map to the same point count."""
    return VectorMap(tuple(resample_instance(i, n_points) for i in vmap.instances),
                     frame=vmap.frame, pose=vmap.pose, source_tag=vmap.source_tag)
