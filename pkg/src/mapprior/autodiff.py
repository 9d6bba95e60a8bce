"""Reverse-mode automatic differentiation over dense float64 arrays (rank <= 3).

Design notes:
  - Each operation allocates its output once and works in place afterwards;
    repeated large temporaries are the dominant cost at encoder sizes.
  - A backward function returns one gradient array per parent. It may hand the
    incoming gradient through unchanged for at most one parent; everything
    else must be freshly allocated (or a view of the incoming gradient with a
    disjoint buffer region), so in-place accumulation never aliases.
  - Heavy kernels (softmax, layer norm, GELU) are delegated to
    mapprior.kernels, which picks the compiled backend when available.
  - Finite-ness is validated at pass boundaries (losses, encoder outputs,
    optimizer steps) via check_finite rather than per primitive op.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DataError, NumericError

MASK_NEG = -1e9          # additive logit for blocked attention entries
_HARD_MASK_THRESH = -1e8  # anything below counts as fully blocked


def _as_value(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim > 3:
        raise DataError(f"arrays are limited to rank 3, got shape {arr.shape}")
    return arr


class Node:
    """One value in the computation graph."""

    __slots__ = ("value", "grad", "parents", "_backward")

    def __init__(self, value, parents: tuple = (),
                 backward: Optional[Callable] = None):
        self.value = _as_value(value)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(shape={self.value.shape}, leaf={not self.parents})"

    # small amount of operator sugar used by the encoder
    def __add__(self, other):
        return add(self, other if isinstance(other, Node) else constant(other))

    def __sub__(self, other):
        return sub(self, other if isinstance(other, Node) else constant(other))

    def __mul__(self, other):
        if isinstance(other, Node):
            return mul(self, other)
        return scale(self, float(other))

    def __matmul__(self, other):
        return matmul(self, other)


def constant(x) -> Node:
    """Leaf node that participates in the graph without being trained."""
    return Node(x)


def check_finite(x, context: str) -> None:
    """Raise NumericError if the node/array holds NaN or infinity."""
    arr = x.value if isinstance(x, Node) else np.asarray(x)
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values detected in {context}")


# ---------------------------------------------------------------------------
# backward pass

def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node, accumulate: bool = False) -> None:
    """Populate .grad on every node reachable from the (scalar) loss.

    A second backward over leaves that already carry gradients is rejected
    unless accumulate=True: accumulation must be asked for explicitly.
    """
    if loss.value.size != 1:
        raise DataError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    order = _topo_order(loss)
    if not accumulate:
        for node in order:
            if not node.parents and node.grad is not None:
                raise DataError("gradients already populated; call zero_grads() "
                                "or pass accumulate=True")
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        for parent, g in zip(node.parents, node._backward(node.grad)):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = np.asarray(g, dtype=np.float64)
            else:
                np.add(parent.grad, g, out=parent.grad)


# ---------------------------------------------------------------------------
# primitive ops

def _unbroadcast(g: np.ndarray, shape: tuple, force_copy: bool = False
                 ) -> np.ndarray:
    """Reduce a broadcast gradient back to `shape`."""
    if g.shape == shape:
        return g.copy() if force_copy else g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return np.ascontiguousarray(g)


def _shapes(*nodes: Node) -> str:
    return " and ".join(str(n.value.shape) for n in nodes)


def add(a: Node, b: Node) -> Node:
    try:
        value = np.add(a.value, b.value)
    except ValueError:
        raise DataError(f"add: incompatible shapes {_shapes(a, b)}") from None

    def back(g):
        # copy when both parents would otherwise receive the same array
        return (_unbroadcast(g, a.value.shape),
                _unbroadcast(g, b.value.shape, force_copy=g.shape == b.value.shape))

    return Node(value, (a, b), back)


def sub(a: Node, b: Node) -> Node:
    try:
        value = np.subtract(a.value, b.value)
    except ValueError:
        raise DataError(f"sub: incompatible shapes {_shapes(a, b)}") from None

    def back(g):
        return (_unbroadcast(g, a.value.shape),
                _unbroadcast(np.negative(g), b.value.shape))

    return Node(value, (a, b), back)


def mul(a: Node, b: Node) -> Node:
    try:
        value = np.multiply(a.value, b.value)
    except ValueError:
        raise DataError(f"mul: incompatible shapes {_shapes(a, b)}") from None

    def back(g):
        return (_unbroadcast(g * b.value, a.value.shape),
                _unbroadcast(g * a.value, b.value.shape))

    return Node(value, (a, b), back)


def scale(a: Node, s: float) -> Node:
    s = float(s)

    def back(g):
        return (np.asarray(g * s, dtype=np.float64),)

    return Node(a.value * s, (a,), back)


def matmul(a: Node, b: Node) -> Node:
    av, bv = a.value, b.value
    if av.ndim == 2 and bv.ndim == 2:
        if av.shape[1] != bv.shape[0]:
            raise DataError(f"matmul: incompatible shapes {_shapes(a, b)}")
        value = av @ bv

        def back(g):
            return (g @ bv.T, av.T @ g)

    elif av.ndim == 3 and bv.ndim == 3:
        if av.shape[0] != bv.shape[0] or av.shape[2] != bv.shape[1]:
            raise DataError(f"matmul: incompatible shapes {_shapes(a, b)}")
        value = np.matmul(av, bv)

        def back(g):
            return (np.matmul(g, bv.swapaxes(1, 2)),
                    np.matmul(av.swapaxes(1, 2), g))

    elif av.ndim == 3 and bv.ndim == 2:
        if av.shape[2] != bv.shape[0]:
            raise DataError(f"matmul: incompatible shapes {_shapes(a, b)}")
        flat = av.reshape(-1, av.shape[2])
        value = (flat @ bv).reshape(av.shape[0], av.shape[1], bv.shape[1])

        def back(g):
            g2 = g.reshape(-1, bv.shape[1])
            return ((g2 @ bv.T).reshape(av.shape), flat.T @ g2)

    else:
        raise DataError(f"matmul: unsupported ranks for shapes {_shapes(a, b)}")
    return Node(value, (a, b), back)


def transpose_last(a: Node) -> Node:
    """Swap the last two axes (view-based, no copy)."""
    if a.value.ndim < 2:
        raise DataError(f"transpose_last needs rank >= 2, got {a.value.shape}")

    def back(g):
        return (g.swapaxes(-1, -2),)

    return Node(a.value.swapaxes(-1, -2), (a,), back)


def reshape(a: Node, shape: tuple) -> Node:
    orig = a.value.shape

    def back(g):
        return (np.ascontiguousarray(g).reshape(orig),)

    return Node(a.value.reshape(shape), (a,), back)


def concat_last_dim(parts: Sequence[Node]) -> Node:
    if not parts:
        raise DataError("concat_last_dim needs at least one input")
    lead = parts[0].value.shape[:-1]
    for p in parts:
        if p.value.shape[:-1] != lead:
            raise DataError("concat_last_dim: leading shapes differ "
                            f"({_shapes(*parts)})")
    widths = [p.value.shape[-1] for p in parts]
    value = np.concatenate([p.value for p in parts], axis=-1)

    def back(g):
        outs, off = [], 0
        for w in widths:
            outs.append(g[..., off:off + w])
            off += w
        return tuple(outs)

    return Node(value, tuple(parts), back)


def split_heads(a: Node, heads: int) -> Node:
    """[T, H*dh] -> [H, T, dh] or [B, T, H*dh] -> [B*H, T, dh].

    Packs attention heads into the leading batch axis so one batched matmul
    covers all heads.
    """
    v = a.value
    if v.shape[-1] % heads != 0:
        raise DataError(f"split_heads: width {v.shape[-1]} not divisible by "
                        f"{heads} heads")
    dh = v.shape[-1] // heads
    if v.ndim == 2:
        t = v.shape[0]
        value = np.ascontiguousarray(v.reshape(t, heads, dh).swapaxes(0, 1))

        def back(g):
            return (np.ascontiguousarray(g.swapaxes(0, 1)).reshape(v.shape),)

    elif v.ndim == 3:
        b, t = v.shape[0], v.shape[1]
        value = np.ascontiguousarray(
            v.reshape(b, t, heads, dh).swapaxes(1, 2)).reshape(b * heads, t, dh)

        def back(g):
            g4 = g.reshape(b, heads, t, dh).swapaxes(1, 2)
            return (np.ascontiguousarray(g4).reshape(v.shape),)

    else:
        raise DataError(f"split_heads: unsupported rank for shape {v.shape}")
    return Node(value, (a,), back)


def merge_heads(a: Node, heads: int, batched: bool) -> Node:
    """Inverse of split_heads: [H, T, dh] -> [T, H*dh] when batched=False,
    [B*H, T, dh] -> [B, T, H*dh] when batched=True."""
    v = a.value
    if v.ndim != 3 or v.shape[0] % heads != 0:
        raise DataError(f"merge_heads: bad shape {v.shape} for {heads} heads")
    b = v.shape[0] // heads
    t, dh = v.shape[1], v.shape[2]
    if not batched:
        if b != 1:
            raise DataError(f"merge_heads: shape {v.shape} is batched")
        value = np.ascontiguousarray(v.swapaxes(0, 1)).reshape(t, heads * dh)

        def back(g):
            g3 = g.reshape(t, heads, dh).swapaxes(0, 1)
            return (np.ascontiguousarray(g3),)

    else:
        value = np.ascontiguousarray(
            v.reshape(b, heads, t, dh).swapaxes(1, 2)).reshape(b, t, heads * dh)

        def back(g):
            g4 = g.reshape(b, t, heads, dh).swapaxes(1, 2)
            return (np.ascontiguousarray(g4).reshape(v.shape),)

    return Node(value, (a,), back)


def split_last_dim(a: Node, n_chunks: int) -> list[Node]:
    c = a.value.shape[-1]
    if c % n_chunks != 0:
        raise DataError(f"split_last_dim: width {c} not divisible by {n_chunks}")
    w = c // n_chunks
    chunks = []
    for k in range(n_chunks):
        off = k * w

        def back(g, off=off):
            z = np.zeros(a.value.shape)
            z[..., off:off + w] = g
            return (z,)

        chunks.append(Node(a.value[..., off:off + w], (a,), back))
    return chunks


class SoftmaxMask:
    """Prepared additive attention mask (0 pass / -1e9 blocked).

    Precomputes the hard-block indicator so the softmax kernels can zero
    blocked entries exactly and detect fully-blocked rows.
    """

    def __init__(self, additive: np.ndarray):
        self.additive = np.ascontiguousarray(additive, dtype=np.float64)
        self.binary = (self.additive > _HARD_MASK_THRESH).astype(np.float64)

    @property
    def shape(self):
        return self.additive.shape


def softmax_last_dim(a: Node, mask: Optional[SoftmaxMask | np.ndarray] = None
                     ) -> Node:
    """Softmax along the last axis, optionally under an additive mask.

    Hard-masked entries get exactly zero weight whenever the row has at least
    one live entry; fully-masked rows fall back to uniform weights (and carry
    zero gradient, since the fallback is constant).
    """
    if mask is not None and not isinstance(mask, SoftmaxMask):
        mask = SoftmaxMask(mask)
    cols = a.value.shape[-1]
    x2 = np.ascontiguousarray(a.value.reshape(-1, cols))
    if mask is None:
        additive2 = binary2 = None
    else:
        if mask.shape != a.value.shape:
            raise DataError(f"softmax_last_dim: mask shape {mask.shape} != "
                            f"input shape {a.value.shape}")
        additive2 = mask.additive.reshape(-1, cols)
        binary2 = mask.binary.reshape(-1, cols)
    probs2, dead = kernels.softmax_forward(x2, additive2, binary2)

    def back(g):
        g2 = np.ascontiguousarray(g.reshape(-1, cols))
        gx = kernels.softmax_backward(g2, probs2, dead)
        return (gx.reshape(a.value.shape),)

    return Node(probs2.reshape(a.value.shape), (a,), back)


def layer_norm(a: Node, gamma: Node, beta: Node, eps: float = 1e-5) -> Node:
    """Row normalization along the last axis with affine parameters.

    Variance is floored by eps, so constant rows normalize to zero rather
    than NaN.
    """
    d = a.value.shape[-1]
    if gamma.value.shape != (d,) or beta.value.shape != (d,):
        raise DataError(f"layer_norm: affine shapes {_shapes(gamma, beta)} "
                        f"do not match feature width {d}")
    x2 = np.ascontiguousarray(a.value.reshape(-1, d))
    out2, xhat, inv_std = kernels.layer_norm_forward(x2, gamma.value,
                                                     beta.value, eps)

    def back(g):
        g2 = np.ascontiguousarray(g.reshape(-1, d))
        gx, dgamma, dbeta = kernels.layer_norm_backward(g2, xhat, inv_std,
                                                        gamma.value)
        return (gx.reshape(a.value.shape), dgamma, dbeta)

    return Node(out2.reshape(a.value.shape), (a, gamma, beta), back)


def gelu(a: Node) -> Node:
    """GELU activation (tanh approximation)."""
    flat = np.ascontiguousarray(a.value.reshape(-1))
    out, t = kernels.gelu_forward(flat)

    def back(g):
        g1 = np.ascontiguousarray(g.reshape(-1))
        gx = kernels.gelu_backward(g1, flat, t)
        return (gx.reshape(a.value.shape),)

    return Node(out.reshape(a.value.shape), (a,), back)


def _scatter_add_rows(out: np.ndarray, idx: np.ndarray, g: np.ndarray) -> None:
    """out[idx[k]] += g[k] with deterministic grouping of repeated rows."""
    order = np.argsort(idx, kind="stable")
    sid = idx[order]
    gs = g[order]
    starts = np.flatnonzero(np.r_[True, sid[1:] != sid[:-1]])
    sums = np.add.reduceat(gs, starts, axis=0)
    out[sid[starts]] += sums


def embedding_lookup(table: Node, indices) -> Node:
    """Gather rows of a 2D table by integer index (1D or 2D index array)."""
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise DataError("embedding_lookup: indices must be integers")
    if table.value.ndim != 2:
        raise DataError(f"embedding_lookup: table must be 2D, got "
                        f"{table.value.shape}")
    v = table.value.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= v):
        raise DataError(f"embedding_lookup: index out of range for table of "
                        f"{v} rows")
    value = table.value[idx]

    def back(g):
        gt = np.zeros(table.value.shape)
        if idx.size:
            _scatter_add_rows(gt, idx.reshape(-1),
                              np.ascontiguousarray(g).reshape(-1, g.shape[-1]))
        return (gt,)

    return Node(value, (table,), back)


def mean(a: Node) -> Node:
    size = a.value.size
    if size == 0:
        raise DataError("mean of an empty array")

    def back(g):
        return (np.full(a.value.shape, float(g) / size),)

    return Node(a.value.mean(), (a,), back)


def sum(a: Node) -> Node:  # noqa: A001 - op name from the public surface
    def back(g):
        return (np.full(a.value.shape, float(g)),)

    return Node(a.value.sum(), (a,), back)


def square(a: Node) -> Node:
    def back(g):
        out = np.asarray(g * a.value, dtype=np.float64)
        if out.ndim:
            np.multiply(out, 2.0, out=out)
        else:
            out = np.asarray(out * 2.0)
        return (out,)

    return Node(np.multiply(a.value, a.value), (a,), back)


def sqrt(a: Node) -> Node:
    value = np.sqrt(a.value)

    def back(g):
        return (np.asarray(g / (value * 2.0), dtype=np.float64),)

    return Node(value, (a,), back)


# ---------------------------------------------------------------------------
# parameters and optimizer

class ParamStore:
    """Named trainable parameters; iteration is sorted by name."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._params: dict[str, Node] = {}

    def add(self, name: str, value) -> Node:
        if name in self._params:
            raise DataError(f"duplicate parameter name {name!r}")
        node = Node(np.ascontiguousarray(value, dtype=np.float64))
        self._params[name] = node
        return node

    def __getitem__(self, name: str) -> Node:
        try:
            return self._params[name]
        except KeyError:
            raise DataError(f"unknown parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> list[tuple[str, Node]]:
        return [(n, self._params[n]) for n in self.names()]

    def n_values(self) -> int:
        return int(np.sum([p.value.size for p in self._params.values()]))

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def clone_values(self) -> dict[str, np.ndarray]:
        return {n: p.value.copy() for n, p in self.items()}


class Adam:
    """Adam with bias correction; moments live per parameter name."""

    def __init__(self, params: ParamStore, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {n: np.zeros_like(p.value) for n, p in params.items()}
        self._v = {n: np.zeros_like(p.value) for n, p in params.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            m, v = self._m[name], self._v[name]
            np.multiply(m, self.beta1, out=m)
            m += (1.0 - self.beta1) * g
            np.multiply(v, self.beta2, out=v)
            v += (1.0 - self.beta2) * np.multiply(g, g)
            update = m / bc1
            denom = np.sqrt(v / bc2)
            denom += self.eps
            np.divide(update, denom, out=update)
            np.multiply(update, self.lr, out=update)
            p.value -= update


def adam_step(params: ParamStore, state: Adam) -> None:
    """One optimizer step on populated gradients."""
    if state.params is not params:
        raise DataError("adam_step: optimizer state belongs to another store")
    state.step()
