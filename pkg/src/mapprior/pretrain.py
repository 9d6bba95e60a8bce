"""Position-modeling pre-training: corruption generator, loss, training loop.

The generator perturbs a map at two granularities: whole contiguous spans of
randomly chosen instances (segment level) and isolated points sampled across
the rest of the map (point level). Noise mode adds Gaussian offsets to x and y
only; mask mode overwrites coordinates with the -1 sentinel. The encoder then
reconstructs the clean map: the coordinate head predicts a per-point
correction that is added to the corrupted input coordinates, so an untrained
model echoes its input and the reconstruction error starts at the corruption
magnitude.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Node
from .encoder import (TokenSequence, UveConfig, decode_coordinates,
                      encode_tokens, hybrid_prior_embed, init_params)
from .errors import DataError, NumericError
from .seeding import derive_rng
from .vector_core import VectorMap

CORRUPTION_MODES = ("noise", "mask", "none")
MASK_SENTINEL = -1.0


@dataclass(frozen=True)
class CorruptionConfig:
    mode: str = "noise"
    seg_fraction: float = 0.10
    pt_fraction: float = 0.05
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in CORRUPTION_MODES:
            raise DataError(f"unknown corruption mode {self.mode!r}; "
                            f"expected one of {CORRUPTION_MODES}")
        for name in ("seg_fraction", "pt_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name} must lie in [0, 1], got {v}")
        if self.noise_std < 0.0:
            raise DataError(f"noise_std must be >= 0, got {self.noise_std}")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "seg_fraction": self.seg_fraction,
                "pt_fraction": self.pt_fraction, "noise_std": self.noise_std,
                "seed": self.seed}


@dataclass(frozen=True)
class PlanEntry:
    """One corrupted point: location, clean coordinates, and what happened."""

    instance: int
    point: int
    original: tuple[float, float]
    delta: Optional[tuple[float, float]]  # None when masked
    masked: bool
    segment_level: bool


@dataclass
class CorruptionPlan:
    entries: list[PlanEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def index_set(self) -> set[tuple[int, int]]:
        return {(e.instance, e.point) for e in self.entries}

    def segment_instances(self) -> set[int]:
        return {e.instance for e in self.entries if e.segment_level}


def corrupt(vmap: VectorMap, cfg: CorruptionConfig,
            rng: Optional[np.random.Generator] = None
            ) -> tuple[VectorMap, CorruptionPlan]:
    """Apply segment- and point-level corruption; untouched points are
    bit-identical to the input.

    Instances are drawn independently with probability seg_fraction and get a
    contiguous span covering 30-70% of their points; the remaining points are
    drawn independently with probability pt_fraction. Directions and types are
    never modified.
    """
    plan = CorruptionPlan()
    if cfg.mode == "none" or len(vmap) == 0:
        return vmap, plan
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    selected: list[tuple[int, int, bool]] = []  # (instance, point, segment_level)
    for i, inst in enumerate(vmap.instances):
        n = len(inst)
        covered = np.zeros(n, dtype=bool)
        if rng.random() < cfg.seg_fraction:
            span = min(n, max(2, int(round(n * rng.uniform(0.3, 0.7)))))
            start = int(rng.integers(0, n - span + 1))
            covered[start:start + span] = True
            selected.extend((i, j, True) for j in range(start, start + span))
        for j in range(n):
            if not covered[j] and rng.random() < cfg.pt_fraction:
                selected.append((i, j, False))

    k = len(selected)
    deltas = rng.normal(0.0, cfg.noise_std, size=(k, 2)) if cfg.mode == "noise" \
        else None

    per_instance: dict[int, list[tuple[int, int]]] = {}
    for row, (i, j, _) in enumerate(selected):
        per_instance.setdefault(i, []).append((row, j))

    new_instances = list(vmap.instances)
    for i, hits in per_instance.items():
        inst = vmap.instances[i]
        xy = inst.coords()
        for row, j in hits:
            orig = (float(xy[j, 0]), float(xy[j, 1]))
            seg = selected[row][2]
            if cfg.mode == "noise":
                xy[j, 0] += deltas[row, 0]
                xy[j, 1] += deltas[row, 1]
                plan.entries.append(PlanEntry(i, j, orig,
                                              (float(deltas[row, 0]),
                                               float(deltas[row, 1])),
                                              masked=False, segment_level=seg))
            else:
                xy[j, 0] = MASK_SENTINEL
                xy[j, 1] = MASK_SENTINEL
                plan.entries.append(PlanEntry(i, j, orig, None, masked=True,
                                              segment_level=seg))
        new_instances[i] = inst.with_coords(xy)
    out = VectorMap(tuple(new_instances), frame=vmap.frame, pose=vmap.pose,
                    source_tag=vmap.source_tag)
    return out, plan


def reconstruction_loss(predicted, target_xy: np.ndarray) -> Node:
    """RMSE between predicted and clean coordinates over all valid points."""
    pred = predicted if isinstance(predicted, Node) else ad.constant(predicted)
    target = np.asarray(target_xy, dtype=np.float64)
    n = target.shape[0]
    if n == 0:
        raise DataError("reconstruction_loss: no valid points")
    if pred.value.shape != target.shape:
        raise DataError(f"reconstruction_loss: prediction shape "
                        f"{pred.value.shape} != target shape {target.shape}")
    diff = ad.sub(pred, ad.constant(target))
    return ad.sqrt(ad.scale(ad.sum(ad.square(diff)), 1.0 / n))


@dataclass
class TrainReport:
    """Training summary; wall_clock_s is excluded from serialized output so
    repeated runs of the same seed produce identical report bytes."""

    epoch_losses: list[float]
    dist_err_all: float
    dist_err_corrupted: Optional[float]
    baseline_err_corrupted: Optional[float]
    n_train: int
    n_holdout: int
    uve_config: dict
    corruption: dict
    lr: float
    batch_size: int
    epochs: int
    seed: int
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "epoch_losses": self.epoch_losses,
            "dist_err_all": self.dist_err_all,
            "dist_err_corrupted": self.dist_err_corrupted,
            "baseline_err_corrupted": self.baseline_err_corrupted,
            "n_train": self.n_train,
            "n_holdout": self.n_holdout,
            "uve_config": self.uve_config,
            "corruption": self.corruption,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
        }


def _forward_map(vmap: VectorMap, config: UveConfig, params) -> tuple[Node, TokenSequence]:
    """Encode a (possibly corrupted) map and reconstruct point coordinates."""
    tokens = hybrid_prior_embed(vmap, config, params)
    states = encode_tokens(tokens, config, params)
    point_rows = tokens.point_rows()
    point_states = ad.embedding_lookup(states, point_rows)
    correction = decode_coordinates(point_states, params)
    reconstructed = ad.add(correction, ad.constant(tokens.coords[point_rows]))
    return reconstructed, tokens


def _clean_coords(vmap: VectorMap) -> np.ndarray:
    return np.concatenate([inst.coords() for inst in vmap.instances], axis=0) \
        if len(vmap) else np.zeros((0, 2))


def _point_errors(reconstructed: np.ndarray, clean: np.ndarray,
                  counts: Sequence[int], plan: CorruptionPlan
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Euclidean errors over all points and over the plan's points."""
    err = np.hypot(reconstructed[:, 0] - clean[:, 0],
                   reconstructed[:, 1] - clean[:, 1])
    offsets = np.concatenate([[0], np.cumsum(counts)])
    sel = [offsets[e.instance] + e.point for e in plan.entries]
    return err, err[sel]


def pretrain_loop(corpus: Sequence[VectorMap], config: UveConfig,
                  corruption: CorruptionConfig, epochs: int = 24,
                  lr: float = 1e-3, batch_size: int = 8, seed: int = 0,
                  holdout_fraction: float = 0.1, warmup_steps: int = 200,
                  lr_schedule: str = "cosine",
                  log=None) -> tuple["ad.ParamStore", TrainReport]:
    """Corrupt, encode, decode, and optimize over the corpus.

    The learning rate warms up linearly then follows the chosen schedule
    ("cosine" decay to 2% of peak, or "constant"). The holdout split comes
    off the end of the corpus. The final report carries held-out mean
    Euclidean point error over all points and over corrupted points only,
    next to the corruption magnitude baseline.
    """
    if not corpus:
        raise DataError("pretrain_loop: empty corpus")
    from ._alloctune import tune_malloc
    tune_malloc()
    t_start = time.perf_counter()
    params = init_params(config, seed=seed)
    # the reconstruction head starts at zero so an untrained model echoes its
    # corrupted input coordinates
    params["head.w2"].value[:] = 0.0
    params["head.b2"].value[:] = 0.0

    n_holdout = int(round(len(corpus) * holdout_fraction)) if len(corpus) >= 5 else 0
    train = list(corpus[:len(corpus) - n_holdout])
    holdout = list(corpus[len(corpus) - n_holdout:]) if n_holdout else list(corpus)

    if lr_schedule not in ("cosine", "constant"):
        raise DataError(f"unknown lr schedule {lr_schedule!r}")
    shuffle_rng = derive_rng(seed, "shuffle")
    corrupt_rng = derive_rng(seed, "corrupt")
    opt = Adam(params, lr=lr)
    steps_per_epoch = max(1, (len(train) + batch_size - 1) // batch_size)
    total_steps = steps_per_epoch * epochs

    def step_lr(t: int) -> float:
        if total_steps <= 0:
            return lr
        if warmup_steps > 0 and t < warmup_steps:
            return lr * (t + 1) / warmup_steps
        if lr_schedule == "constant":
            return lr
        frac = (t - warmup_steps) / max(1, total_steps - warmup_steps)
        frac = min(1.0, max(0.0, frac))
        return lr * (0.02 + 0.98 * 0.5 * (1.0 + math.cos(math.pi * frac)))

    epoch_losses: list[float] = []
    step = 0
    for epoch in range(epochs):
        order = shuffle_rng.permutation(len(train))
        losses = []
        for b0 in range(0, len(order), batch_size):
            batch = order[b0:b0 + batch_size]
            map_losses = []
            for mi in batch:
                corrupted, _ = corrupt(train[mi], corruption, corrupt_rng)
                recon, _ = _forward_map(corrupted, config, params)
                map_losses.append(reconstruction_loss(recon,
                                                      _clean_coords(train[mi])))
            loss = map_losses[0]
            for extra in map_losses[1:]:
                loss = ad.add(loss, extra)
            loss = ad.scale(loss, 1.0 / len(map_losses))
            if not np.isfinite(loss.value):
                raise NumericError(f"training diverged at step {step} "
                                   f"(epoch {epoch})")
            ad.backward(loss)
            opt.lr = step_lr(step)
            opt.step()
            params.zero_grads()
            losses.append(float(loss.value))
            step += 1
        epoch_losses.append(float(np.mean(losses)))
        if log is not None:
            log(f"epoch {epoch + 1}/{epochs}: loss {epoch_losses[-1]:.4f}")

    eval_rng = derive_rng(seed, "holdout-eval")
    all_err, corr_err, base_err = [], [], []
    for vmap in holdout:
        corrupted, plan = corrupt(vmap, corruption, eval_rng)
        recon, _ = _forward_map(corrupted, config, params)
        clean = _clean_coords(vmap)
        counts = [len(inst) for inst in vmap.instances]
        err, err_sel = _point_errors(recon.value, clean, counts, plan)
        all_err.append(err)
        corr_err.append(err_sel)
        dirty = _clean_coords(corrupted)
        base, base_sel = _point_errors(dirty, clean, counts, plan)
        base_err.append(base_sel)
    all_e = np.concatenate(all_err) if all_err else np.zeros(0)
    corr_e = np.concatenate(corr_err) if corr_err else np.zeros(0)
    base_e = np.concatenate(base_err) if base_err else np.zeros(0)
    report = TrainReport(
        epoch_losses=epoch_losses,
        dist_err_all=float(all_e.mean()) if all_e.size else 0.0,
        dist_err_corrupted=float(corr_e.mean()) if corr_e.size else None,
        baseline_err_corrupted=float(base_e.mean()) if base_e.size else None,
        n_train=len(train), n_holdout=len(holdout),
        uve_config=config.to_dict(), corruption=corruption.to_dict(),
        lr=lr, batch_size=batch_size, epochs=epochs, seed=seed,
        wall_clock_s=time.perf_counter() - t_start)
    return params, report
