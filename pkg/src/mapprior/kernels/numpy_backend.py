"""Pure-numpy kernel implementations.

These define the reference semantics for the compiled extension. All functions
are allocation-lean: repeated large temporaries are the dominant cost at the
array sizes the encoder uses, so each kernel allocates its output once and
works in place after that.
"""
from __future__ import annotations

import numpy as np

NAME = "numpy"

_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def softmax_forward(z: np.ndarray, additive=None, binary=None):
    """Row softmax along the last axis with optional hard masking.

    `additive` holds 0 / -1e9 mask logits added to z; `binary` is the matching
    0/1 indicator. Hard-masked entries come out exactly 0; rows with no live
    entry come out uniform. Returns (probs, dead_rows|None).
    """
    if additive is not None:
        t = z + additive
    else:
        t = z.copy()
    m = t.max(axis=-1, keepdims=True)
    np.subtract(t, m, out=t)
    np.exp(t, out=t)
    dead = None
    if binary is not None:
        np.multiply(t, binary, out=t)
    s = t.sum(axis=-1, keepdims=True)
    if binary is not None:
        dead = s[..., 0] == 0.0
        if dead.any():
            t[dead] = 1.0 / z.shape[-1]
            s[dead] = 1.0
    np.divide(t, s, out=t)
    return t, dead


def softmax_backward(g: np.ndarray, probs: np.ndarray, dead):
    """Gradient of softmax_forward w.r.t. its logits."""
    tmp = g * probs
    s = tmp.sum(axis=-1, keepdims=True)
    np.subtract(g, s, out=tmp)
    np.multiply(tmp, probs, out=tmp)
    if dead is not None and dead.any():
        tmp[dead] = 0.0  # uniform fallback rows are constant w.r.t. logits
    return tmp


def layer_norm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                       eps: float):
    """Normalize rows of a 2D array; returns (out, xhat, inv_std)."""
    mu = x.mean(axis=1, keepdims=True)
    xhat = x - mu
    var = np.einsum("rd,rd->r", xhat, xhat) / x.shape[1]
    inv_std = 1.0 / np.sqrt(var + eps)
    np.multiply(xhat, inv_std[:, None], out=xhat)
    out = xhat * gamma
    np.add(out, beta, out=out)
    return out, xhat, inv_std


def layer_norm_backward(g: np.ndarray, xhat: np.ndarray, inv_std: np.ndarray,
                        gamma: np.ndarray):
    """Returns (gx, dgamma, dbeta) for layer_norm_forward."""
    d = g.shape[1]
    dgamma = np.einsum("rd,rd->d", g, xhat)
    dbeta = g.sum(axis=0)
    dxhat = g * gamma
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = np.einsum("rd,rd->r", dxhat, xhat) / d
    np.subtract(dxhat, m1, out=dxhat)
    dxhat -= xhat * m2[:, None]
    np.multiply(dxhat, inv_std[:, None], out=dxhat)
    return dxhat, dgamma, dbeta


def gelu_forward(x: np.ndarray):
    """tanh-approximation GELU; returns (out, tanh_term)."""
    t = x * x
    np.multiply(t, x, out=t)
    np.multiply(t, _GELU_A, out=t)
    np.add(t, x, out=t)
    np.multiply(t, _GELU_C, out=t)
    np.tanh(t, out=t)
    out = t + 1.0
    np.multiply(out, x, out=out)
    np.multiply(out, 0.5, out=out)
    return out, t


def gelu_backward(g: np.ndarray, x: np.ndarray, t: np.ndarray):
    """Gradient of gelu_forward given the saved tanh term."""
    du = x * x
    np.multiply(du, 3.0 * _GELU_A, out=du)
    np.add(du, 1.0, out=du)
    np.multiply(du, _GELU_C, out=du)          # du/dx of the inner polynomial
    sech2 = t * t
    np.subtract(1.0, sech2, out=sech2)
    np.multiply(sech2, du, out=sech2)
    np.multiply(sech2, x, out=sech2)
    np.add(sech2, t, out=sech2)
    np.add(sech2, 1.0, out=sech2)
    np.multiply(sech2, 0.5, out=sech2)        # full dGELU/dx
    np.multiply(sech2, g, out=sech2)
    return sech2


def chamfer_directed(a: np.ndarray, b: np.ndarray) -> float:
    """Mean over points of `a` of the distance to the nearest point of `b`."""
    dx = a[:, 0:1] - b[None, :, 0].reshape(1, -1)
    dy = a[:, 1:2] - b[None, :, 1].reshape(1, -1)
    np.multiply(dx, dx, out=dx)
    np.multiply(dy, dy, out=dy)
    np.add(dx, dy, out=dx)
    d2 = dx.min(axis=1)
    np.sqrt(d2, out=d2)
    return float(d2.mean())
