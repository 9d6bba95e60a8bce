"""Vector map encoder.

Maps become token sequences (one aggregate token per instance followed by its
point tokens), embedded by summing Fourier position/direction features with
learnable instance, type, and 2D position embeddings. The encoder stack runs
intra-instance attention layers first (tokens interact only within their
instance), then inter-instance layers (all valid tokens interact), and a small
feed-forward head decodes per-point coordinates for reconstruction training.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ParamStore
from .errors import DataError
from .vector_core import DEFAULT_WINDOW, PerceptionWindow, VectorMap


@dataclass(frozen=True)
class UveConfig:
    """Encoder shape and capacity settings."""

    m_intra: int = 2
    n_inter: int = 2
    dim: int = 64
    heads: int = 4
    ffn_dim: int = 128
    fourier_bands: int = 8
    max_instances: int = 32
    max_points: int = 20
    n_types: int = 4
    window: tuple[float, float, float, float] = DEFAULT_WINDOW.as_tuple()

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise DataError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.fourier_bands < 1:
            raise DataError("fourier_bands must be >= 1")
        if min(self.m_intra, self.n_inter) < 0 or self.m_intra + self.n_inter < 1:
            raise DataError("need at least one encoder layer")

    @property
    def n_layers(self) -> int:
        return self.m_intra + self.n_inter

    @property
    def feature_width(self) -> int:
        # sin+cos per band, two coordinates, for position and direction blocks
        return 8 * self.fourier_bands

    def perception_window(self) -> PerceptionWindow:
        return PerceptionWindow(*self.window)

    def to_dict(self) -> dict:
        return {
            "m_intra": self.m_intra, "n_inter": self.n_inter, "dim": self.dim,
            "heads": self.heads, "ffn_dim": self.ffn_dim,
            "fourier_bands": self.fourier_bands,
            "max_instances": self.max_instances, "max_points": self.max_points,
            "n_types": self.n_types, "window": list(self.window),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UveConfig":
        d = dict(d)
        d["window"] = tuple(d.get("window", DEFAULT_WINDOW.as_tuple()))
        return cls(**d)


@dataclass
class TokenSequence:
    """Flattened token layout of a map, one block per instance."""

    embeddings: Node                # (T, dim)
    instance_index: np.ndarray      # (T,) block index, also the instance slot
    point_index: np.ndarray         # (T,) point index within instance, -1 on [VEC]/pad
    is_vec: np.ndarray              # (T,) bool
    valid: np.ndarray               # (T,) bool
    coords: np.ndarray              # (T, 2) raw input coordinates (0 for [VEC]/pad)
    n_instances: int                # real instances
    points_per_instance: list[int]  # real point counts
    block_size: Optional[int]       # tokens per block when uniform, else None

    def __len__(self) -> int:
        return self.embeddings.value.shape[0]

    def vec_rows(self) -> np.ndarray:
        return np.flatnonzero(self.is_vec & self.valid)

    def point_rows(self) -> np.ndarray:
        return np.flatnonzero(~self.is_vec & self.valid)


@dataclass
class PriorFeatureBundle:
    """Encoded map features: one vector per instance, one per point."""

    f_ins: np.ndarray              # (m, dim)
    f_pt: list[np.ndarray] = field(default_factory=list)  # per instance (n_i, dim)

    @property
    def n_instances(self) -> int:
        return self.f_ins.shape[0]

    def points_per_instance(self) -> list[int]:
        return [f.shape[0] for f in self.f_pt]

    @classmethod
    def empty(cls, dim: int) -> "PriorFeatureBundle":
        return cls(f_ins=np.zeros((0, dim)), f_pt=[])


# ---------------------------------------------------------------------------
# parameters

def _layer_names(idx: int) -> dict[str, str]:
    p = f"enc{idx:02d}."
    return {k: p + k for k in
            ("ln1.g", "ln1.b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
             "ln2.g", "ln2.b", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2")}


def expected_shapes(config: UveConfig) -> dict[str, tuple]:
    """Parameter manifest implied by a config; used to validate checkpoints."""
    d, f = config.dim, config.ffn_dim
    shapes: dict[str, tuple] = {
        "embed.point_proj.w": (config.feature_width, d),
        "embed.point_proj.b": (d,),
        "embed.vec_token": (1, d),
        "embed.instance": (config.max_instances, d),
        "embed.type": (config.n_types, d),
        "embed.position": (config.max_instances * (config.max_points + 1), d),
        "head.w1": (d, f), "head.b1": (f,), "head.w2": (f, 2), "head.b2": (2,),
    }
    for i in range(config.n_layers):
        names = _layer_names(i)
        for key, name in names.items():
            if key in ("ln1.g", "ln1.b", "ln2.g", "ln2.b", "bq", "bk", "bv", "bo"):
                shapes[name] = (d,)
            elif key in ("wq", "wk", "wv", "wo"):
                shapes[name] = (d, d)
            elif key == "ffn.w1":
                shapes[name] = (d, f)
            elif key == "ffn.b1":
                shapes[name] = (f,)
            elif key == "ffn.w2":
                shapes[name] = (f, d)
            elif key == "ffn.b2":
                shapes[name] = (d,)
    return shapes


def init_params(config: UveConfig, seed: int = 0) -> ParamStore:
    """Random initialization; draw order is fixed, so seeds reproduce exactly."""
    rng = np.random.default_rng(seed)
    store = ParamStore(seed=seed)
    d, f = config.dim, config.ffn_dim

    def dense(name, fan_in, shape):
        store.add(name, rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=shape))

    def table(name, shape):
        store.add(name, rng.normal(0.0, 0.02, size=shape))

    dense("embed.point_proj.w", config.feature_width, (config.feature_width, d))
    store.add("embed.point_proj.b", np.zeros(d))
    table("embed.vec_token", (1, d))
    table("embed.instance", (config.max_instances, d))
    table("embed.type", (config.n_types, d))
    table("embed.position", (config.max_instances * (config.max_points + 1), d))
    for i in range(config.n_layers):
        names = _layer_names(i)
        store.add(names["ln1.g"], np.ones(d))
        store.add(names["ln1.b"], np.zeros(d))
        for w, b in (("wq", "bq"), ("wk", "bk"), ("wv", "bv"), ("wo", "bo")):
            dense(names[w], d, (d, d))
            store.add(names[b], np.zeros(d))
        store.add(names["ln2.g"], np.ones(d))
        store.add(names["ln2.b"], np.zeros(d))
        dense(names["ffn.w1"], d, (d, f))
        store.add(names["ffn.b1"], np.zeros(f))
        dense(names["ffn.w2"], f, (f, d))
        store.add(names["ffn.b2"], np.zeros(d))
    dense("head.w1", d, (d, f))
    store.add("head.b1", np.zeros(f))
    dense("head.w2", f, (f, 2))
    store.add("head.b2", np.zeros(2))
    return store


# ---------------------------------------------------------------------------
# embedding

def fourier_features(values: np.ndarray, bands: int) -> np.ndarray:
    """[sin(2^k pi u), cos(2^k pi u)] features per coordinate, k < bands."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if n == 0:
        return np.zeros((0, 4 * bands))
    freqs = (2.0 ** np.arange(bands)) * np.pi
    ang = values[:, :, None] * freqs          # (N, 2, bands)
    return np.concatenate([np.sin(ang).reshape(n, -1),
                           np.cos(ang).reshape(n, -1)], axis=1)


def hybrid_prior_embed(vmap: VectorMap, config: UveConfig, params: ParamStore,
                       pad_instances: Optional[int] = None,
                       pad_points: Optional[int] = None) -> TokenSequence:
    """Build the token sequence and its summed input embeddings.

    Per point token: Fourier features of the window-normalized position
    concatenated with Fourier features of the direction, linearly projected,
    plus instance, type, and 2D (instance x point) position embeddings. Each
    instance's [VEC] token swaps the projected features for a learnable token
    embedding and sits at position index 0 of its block. Optional padding
    appends invalid blocks/rows that must not alter any valid output.
    """
    if vmap.frame != "ego":
        raise DataError(f"encoder needs an ego-frame map, got {vmap.frame!r}")
    m = len(vmap.instances)
    counts = [len(inst) for inst in vmap.instances]
    if m > config.max_instances:
        raise DataError(f"{m} instances exceed capacity {config.max_instances}")
    if any(n > config.max_points for n in counts):
        raise DataError(f"instance length {max(counts)} exceeds capacity "
                        f"{config.max_points}")
    n_blocks = m if pad_instances is None else int(pad_instances)
    if n_blocks < m or n_blocks > config.max_instances:
        raise DataError(f"pad_instances {n_blocks} out of range [{m}, "
                        f"{config.max_instances}]")
    if pad_points is not None:
        pad_points = int(pad_points)
        if counts and pad_points < max(counts):
            raise DataError(f"pad_points {pad_points} below longest instance "
                            f"{max(counts)}")
        if pad_points > config.max_points:
            raise DataError(f"pad_points {pad_points} exceeds capacity "
                            f"{config.max_points}")
        block_points = [pad_points] * n_blocks
    else:
        block_points = counts + [0] * (n_blocks - m)

    rows = []
    for b in range(n_blocks):
        npts_real = counts[b] if b < m else 0
        rows.append((b, -1, True, npts_real > 0 or b < m))
        for j in range(block_points[b]):
            rows.append((b, j, False, b < m and j < npts_real))
    T = len(rows)
    instance_index = np.array([r[0] for r in rows], dtype=np.int64)
    point_index = np.array([r[1] for r in rows], dtype=np.int64)
    is_vec = np.array([r[2] for r in rows], dtype=bool)
    valid = np.array([r[3] for r in rows], dtype=bool)

    coords = np.zeros((T, 2))
    dirs = np.zeros((T, 2))
    type_idx = np.zeros(T, dtype=np.int64)
    for b, inst in enumerate(vmap.instances):
        block_rows = np.flatnonzero((instance_index == b) & ~is_vec
                                    & (point_index < len(inst)))
        coords[block_rows] = inst.coords()
        dirs[block_rows] = inst.dirs()
        block_all = instance_index == b
        type_idx[block_all] = int(inst.element_type)

    window = config.perception_window()
    cx = 0.5 * (window.x_min + window.x_max)
    cy = 0.5 * (window.y_min + window.y_max)
    hx = 0.5 * (window.x_max - window.x_min)
    hy = 0.5 * (window.y_max - window.y_min)
    norm_xy = np.column_stack([(coords[:, 0] - cx) / hx,
                               (coords[:, 1] - cy) / hy])
    feats = np.concatenate([fourier_features(norm_xy, config.fourier_bands),
                            fourier_features(dirs, config.fourier_bands)], axis=1)
    is_point_col = (~is_vec & valid).astype(np.float64)[:, None]
    is_vec_col = is_vec.astype(np.float64)[:, None]
    # zero the Fourier inputs of non-point rows so masking is exact
    feats *= is_point_col

    point_term = ad.mul(
        ad.add(ad.matmul(ad.constant(feats), params["embed.point_proj.w"]),
               params["embed.point_proj.b"]),
        ad.constant(is_point_col))
    vec_term = ad.mul(
        ad.embedding_lookup(params["embed.vec_token"],
                            np.zeros(T, dtype=np.int64)),
        ad.constant(is_vec_col))
    inst_term = ad.embedding_lookup(params["embed.instance"], instance_index)
    type_term = ad.embedding_lookup(params["embed.type"], type_idx)
    pos_within = np.where(is_vec, 0, point_index + 1)
    pos_pair = instance_index * (config.max_points + 1) + pos_within
    pos_term = ad.embedding_lookup(params["embed.position"], pos_pair)

    emb = ad.add(ad.add(ad.add(ad.add(point_term, vec_term), inst_term),
                        type_term), pos_term)

    uniform = len(set(block_points)) <= 1
    block_size = (1 + block_points[0]) if (uniform and n_blocks) else None
    return TokenSequence(embeddings=emb, instance_index=instance_index,
                         point_index=point_index, is_vec=is_vec, valid=valid,
                         coords=coords, n_instances=m,
                         points_per_instance=counts, block_size=block_size)


# ---------------------------------------------------------------------------
# attention masks

def build_attention_masks(tokens: TokenSequence) -> tuple[np.ndarray, np.ndarray]:
    """Additive (0 / -1e9) intra- and inter-instance attention masks."""
    T = len(tokens)
    both_valid = np.logical_and.outer(tokens.valid, tokens.valid)
    same = tokens.instance_index[:, None] == tokens.instance_index[None, :]
    intra = np.where(both_valid & same, 0.0, ad.MASK_NEG)
    inter = np.where(both_valid, 0.0, ad.MASK_NEG)
    return intra, inter


# ---------------------------------------------------------------------------
# encoder stack

def _attention_block(x: Node, layer: dict[str, Node], heads: int,
                     mask: Optional[ad.SoftmaxMask]) -> Node:
    """Pre-norm multi-head self-attention + feed-forward with residuals.

    Heads ride along the leading batch axis, so all heads (and, on the
    batched intra path, all instance blocks) share one matmul and one softmax
    per layer.
    """
    batched = x.value.ndim == 3
    dh = x.value.shape[-1] // heads
    h = ad.layer_norm(x, layer["ln1.g"], layer["ln1.b"])
    q = ad.add(ad.matmul(h, layer["wq"]), layer["bq"])
    k = ad.add(ad.matmul(h, layer["wk"]), layer["bk"])
    v = ad.add(ad.matmul(h, layer["wv"]), layer["bv"])
    q = ad.scale(q, 1.0 / math.sqrt(dh))
    qh = ad.split_heads(q, heads)
    kh = ad.split_heads(k, heads)
    vh = ad.split_heads(v, heads)
    scores = ad.matmul(qh, ad.transpose_last(kh))
    probs = ad.softmax_last_dim(scores, mask)
    ctx = ad.merge_heads(ad.matmul(probs, vh), heads, batched=batched)
    x = ad.add(x, ad.add(ad.matmul(ctx, layer["wo"]), layer["bo"]))
    h2 = ad.layer_norm(x, layer["ln2.g"], layer["ln2.b"])
    f = ad.gelu(ad.add(ad.matmul(h2, layer["ffn.w1"]), layer["ffn.b1"]))
    f = ad.add(ad.matmul(f, layer["ffn.w2"]), layer["ffn.b2"])
    return ad.add(x, f)


def _layer_params(params: ParamStore, idx: int) -> dict[str, Node]:
    return {key: params[name] for key, name in _layer_names(idx).items()}


def encode_tokens(tokens: TokenSequence, config: UveConfig,
                  params: ParamStore) -> Node:
    """Run the intra then inter attention stack; returns final token states."""
    x = tokens.embeddings
    T = len(tokens)
    if T == 0:
        return x
    fast = tokens.block_size is not None and bool(tokens.valid.all())
    if fast:
        # uniform fully-valid blocks: intra attention runs batched per block
        # and needs no mask; inter attention is dense over all tokens
        n_blocks = T // tokens.block_size
        for i in range(config.m_intra):
            x = ad.reshape(x, (n_blocks, tokens.block_size, config.dim))
            x = _attention_block(x, _layer_params(params, i), config.heads, None)
            x = ad.reshape(x, (T, config.dim))
        for i in range(config.m_intra, config.n_layers):
            x = _attention_block(x, _layer_params(params, i), config.heads, None)
        return x
    intra, inter = build_attention_masks(tokens)
    # heads share the batch axis, so masks are materialized per head once
    rep = (config.heads, T, T)
    intra_mask = ad.SoftmaxMask(np.broadcast_to(intra, rep))
    inter_mask = ad.SoftmaxMask(np.broadcast_to(inter, rep))
    for i in range(config.m_intra):
        x = _attention_block(x, _layer_params(params, i), config.heads,
                             intra_mask)
    for i in range(config.m_intra, config.n_layers):
        x = _attention_block(x, _layer_params(params, i), config.heads,
                             inter_mask)
    return x


def encode(vmap: VectorMap, config: UveConfig, params: ParamStore,
           pad_instances: Optional[int] = None,
           pad_points: Optional[int] = None) -> PriorFeatureBundle:
    """Encode a map into instance-level and point-level feature vectors."""
    tokens = hybrid_prior_embed(vmap, config, params, pad_instances, pad_points)
    states = encode_tokens(tokens, config, params)
    ad.check_finite(states, "encoder output")
    value = states.value
    f_ins = np.array([value[r] for r in tokens.vec_rows()]).reshape(-1, config.dim)
    f_pt = []
    for b in range(tokens.n_instances):
        rows = np.flatnonzero((tokens.instance_index == b) & ~tokens.is_vec
                              & tokens.valid)
        f_pt.append(value[rows].copy())
    return PriorFeatureBundle(f_ins=f_ins, f_pt=f_pt)


def decode_coordinates(features, params: ParamStore) -> Node:
    """Per-point coordinate head: dim -> ffn_dim -> 2 feed-forward."""
    node = features if isinstance(features, Node) else ad.constant(features)
    h = ad.gelu(ad.add(ad.matmul(node, params["head.w1"]), params["head.b1"]))
    return ad.add(ad.matmul(h, params["head.w2"]), params["head.b2"])
