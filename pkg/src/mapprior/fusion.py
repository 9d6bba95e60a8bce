"""Prior map storage, pose-based retrieval, and query fusion.

Stored maps live in world coordinates, indexed by the capture pose on a
uniform grid. Retrieval returns the nearest entries within a search radius,
re-expressed in the query's ego frame and clipped to the perception window.
Encoded prior features merge into a learnable query grid through one of three
operations: add, replace, or concatenate-and-project.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .encoder import PriorFeatureBundle
from .errors import DataError
from .map_io import clip_to_window, map_from_dict, map_to_dict, world_to_ego
from .vector_core import DEFAULT_WINDOW, PerceptionWindow, VectorMap

DEFAULT_SEARCH_RANGE_M = 5.0
DEFAULT_PRIOR_NUM = 2
DEFAULT_MERGE_MODE = "concat"
MERGE_MODES = ("add", "replace", "concat")


@dataclass(frozen=True)
class StoreEntry:
    pose: tuple[float, float, float]
    vmap: VectorMap
    timestamp: float


class PriorStore:
    """Pose-indexed store of world-frame maps with radius queries.

    Queries return entries whose pose position lies within the radius,
    nearest first; equal distances rank newer timestamps first.
    """

    def __init__(self, cell_size: float = 25.0):
        if cell_size <= 0:
            raise DataError(f"cell_size must be positive, got {cell_size}")
        self.cell_size = float(cell_size)
        self._entries: list[StoreEntry] = []
        self._grid: dict[tuple[int, int], list[int]] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def _cell(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor(x / self.cell_size), math.floor(y / self.cell_size))

    def insert(self, pose: Sequence[float], vmap: VectorMap,
               timestamp: float) -> int:
        if vmap.frame != "global":
            raise DataError(f"prior store holds global-frame maps, got "
                            f"{vmap.frame!r}")
        pose = tuple(float(v) for v in pose)
        if len(pose) != 3:
            raise DataError(f"pose must be (x, y, yaw), got {pose!r}")
        idx = len(self._entries)
        self._entries.append(StoreEntry(pose, vmap, float(timestamp)))
        self._grid.setdefault(self._cell(pose[0], pose[1]), []).append(idx)
        return idx

    def query(self, pose: Sequence[float], radius: float) -> list[StoreEntry]:
        if radius <= 0:
            raise DataError(f"search radius must be positive, got {radius}")
        qx, qy = float(pose[0]), float(pose[1])
        reach = int(math.ceil(radius / self.cell_size))
        cx, cy = self._cell(qx, qy)
        hits: list[tuple[float, float, int]] = []
        for gx in range(cx - reach, cx + reach + 1):
            for gy in range(cy - reach, cy + reach + 1):
                for idx in self._grid.get((gx, gy), ()):
                    e = self._entries[idx]
                    d = math.hypot(e.pose[0] - qx, e.pose[1] - qy)
                    if d <= radius:
                        hits.append((d, -e.timestamp, idx))
        hits.sort()
        return [self._entries[i] for _, _, i in hits]

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self._entries:
                fh.write(json.dumps({"pose": list(e.pose),
                                     "timestamp": e.timestamp,
                                     "map": map_to_dict(e.vmap)},
                                    sort_keys=True))
                fh.write("\n")

    @classmethod
    def load(cls, path: str, cell_size: float = 25.0) -> "PriorStore":
        store = cls(cell_size=cell_size)
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path} line {lineno}: invalid JSON "
                                    f"({exc.msg})") from None
                for key in ("pose", "timestamp", "map"):
                    if key not in rec:
                        raise DataError(f"{path} line {lineno}: missing "
                                        f"field {key!r}")
                store.insert(tuple(rec["pose"]),
                             map_from_dict(rec["map"], f"{path} line {lineno}"),
                             rec["timestamp"])
        return store


def insert_prior(store: PriorStore, pose: Sequence[float], vmap: VectorMap,
                 timestamp: float) -> PriorStore:
    store.insert(pose, vmap, timestamp)
    return store


def retrieve_priors(store: PriorStore, pose: Sequence[float],
                    search_range_m: float = DEFAULT_SEARCH_RANGE_M,
                    prior_num: int = DEFAULT_PRIOR_NUM,
                    window: PerceptionWindow = DEFAULT_WINDOW
                    ) -> list[VectorMap]:
    """Nearest in-range priors, re-expressed in the query ego frame and
    clipped; fewer than prior_num may be available."""
    if prior_num < 1:
        raise DataError(f"prior_num must be >= 1, got {prior_num}")
    pose = tuple(float(v) for v in pose)
    out = []
    for entry in store.query(pose, search_range_m)[:prior_num]:
        ego = world_to_ego(entry.vmap, pose)
        out.append(clip_to_window(ego, window))
    return out


# ---------------------------------------------------------------------------
# query grids and merging

@dataclass
class QueryGrid:
    """Learnable instance/point query components; slot (i, j) composes as
    q_ins[i] + q_pt[j]."""

    q_ins: np.ndarray  # (m, qd)
    q_pt: np.ndarray   # (n, qd)

    def __post_init__(self):
        if self.q_ins.ndim != 2 or self.q_pt.ndim != 2 \
                or self.q_ins.shape[1] != self.q_pt.shape[1]:
            raise DataError(f"inconsistent query grid shapes "
                            f"{self.q_ins.shape} / {self.q_pt.shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.q_ins.shape[0], self.q_pt.shape[0], self.q_ins.shape[1])

    def composed(self) -> np.ndarray:
        """(m, n, qd) grid of composed queries."""
        return self.q_ins[:, None, :] + self.q_pt[None, :, :]

    @classmethod
    def create(cls, m: int, n: int, qd: int,
               rng: np.random.Generator) -> "QueryGrid":
        return cls(q_ins=rng.normal(0.0, 0.02, size=(m, qd)),
                   q_pt=rng.normal(0.0, 0.02, size=(n, qd)))


@dataclass
class FusionParams:
    """Trainable fusion parameters shared across merge modes."""

    proj: np.ndarray         # (uve_dim, qd) prior-feature projection
    concat_proj: np.ndarray  # (2*qd, qd) down-projection after concatenation
    null_prior: np.ndarray   # (qd,) stand-in for slots without prior coverage

    @classmethod
    def create(cls, uve_dim: int, qd: int,
               rng: np.random.Generator) -> "FusionParams":
        return cls(proj=rng.normal(0.0, 1.0 / math.sqrt(uve_dim),
                                   size=(uve_dim, qd)),
                   concat_proj=rng.normal(0.0, 1.0 / math.sqrt(2 * qd),
                                          size=(2 * qd, qd)),
                   null_prior=np.zeros(qd))

    @classmethod
    def identity(cls, uve_dim: int, qd: int) -> "FusionParams":
        """Parameterization under which every merge reproduces the grid:
        zero projection, [I | 0] down-projection, zero null vector."""
        concat = np.zeros((2 * qd, qd))
        concat[:qd] = np.eye(qd)
        return cls(proj=np.zeros((uve_dim, qd)), concat_proj=concat,
                   null_prior=np.zeros(qd))


@dataclass
class MergedQueries:
    features: np.ndarray      # (m, n, qd)
    prior_backed: np.ndarray  # (m, n) bool
    dropped_instances: int = 0
    dropped_points: int = 0


Bundles = Union[PriorFeatureBundle, Sequence[PriorFeatureBundle]]


def _as_bundles(bundle: Bundles) -> list[PriorFeatureBundle]:
    if isinstance(bundle, PriorFeatureBundle):
        return [bundle]
    return list(bundle)


def _place_bundles(grid: QueryGrid, bundles: list[PriorFeatureBundle],
                   proj: np.ndarray):
    """Assign prior instances to consecutive slot blocks, nearest kept first.

    Yields (slot, projected f_ins, projected f_pt rows, n_points) plus the
    dropped instance/point counts.
    """
    m, n, _ = grid.shape
    placed = []
    dropped_instances = 0
    dropped_points = 0
    slot = 0
    for b in bundles:
        for i in range(b.n_instances):
            if slot >= m:
                dropped_instances += 1
                continue
            fp = b.f_pt[i]
            if fp.shape[0] > n:
                dropped_points += fp.shape[0] - n
                fp = fp[:n]
            placed.append((slot, b.f_ins[i] @ proj, fp @ proj, fp.shape[0]))
            slot += 1
    return placed, dropped_instances, dropped_points


def merge_add(grid: QueryGrid, bundle: Bundles,
              params: FusionParams) -> MergedQueries:
    """Slot (i, j): (q_ins + P f_ins) + (q_pt + P f_pt); uncovered slots keep
    their original composed query."""
    out = grid.composed()
    backed = np.zeros(out.shape[:2], dtype=bool)
    placed, di, dp = _place_bundles(grid, _as_bundles(bundle), params.proj)
    for slot, p_ins, p_pt, npts in placed:
        out[slot, :npts] += p_ins + p_pt
        backed[slot, :npts] = True
    return MergedQueries(out, backed, di, dp)


def merge_replace(grid: QueryGrid, bundle: Bundles,
                  params: FusionParams) -> MergedQueries:
    """Prior-backed slots use P f_ins + P f_pt in place of both query
    components; untouched slots keep originals."""
    out = grid.composed()
    backed = np.zeros(out.shape[:2], dtype=bool)
    placed, di, dp = _place_bundles(grid, _as_bundles(bundle), params.proj)
    for slot, p_ins, p_pt, npts in placed:
        out[slot, :npts] = p_ins + p_pt
        backed[slot, :npts] = True
    return MergedQueries(out, backed, di, dp)


def merge_concat(grid: QueryGrid, bundle: Bundles,
                 params: FusionParams) -> MergedQueries:
    """Concatenate the composed query with the projected prior sum (or the
    learned null vector where no prior lands) and project back to qd."""
    m, n, qd = grid.shape
    base = grid.composed()
    prior_half = np.broadcast_to(params.null_prior, base.shape).copy()
    backed = np.zeros((m, n), dtype=bool)
    placed, di, dp = _place_bundles(grid, _as_bundles(bundle), params.proj)
    for slot, p_ins, p_pt, npts in placed:
        prior_half[slot, :npts] = p_ins + p_pt
        backed[slot, :npts] = True
    stacked = np.concatenate([base, prior_half], axis=2).reshape(m * n, 2 * qd)
    out = (stacked @ params.concat_proj).reshape(m, n, qd)
    return MergedQueries(out, backed, di, dp)


def merge(mode: str, grid: QueryGrid, bundle: Bundles,
          params: FusionParams) -> MergedQueries:
    if mode == "add":
        return merge_add(grid, bundle, params)
    if mode == "replace":
        return merge_replace(grid, bundle, params)
    if mode == "concat":
        return merge_concat(grid, bundle, params)
    raise DataError(f"unknown merge mode {mode!r}; expected one of {MERGE_MODES}")
