"""Dense layers with paired forward/backward passes over numpy arrays.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache, adds parameter gradients into
``Parameter.grad`` and returns the gradient with respect to the input.
Arrays keep the dtype they come in with: float32 for training, float64 for
gradient verification.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ShapeError

LAYER_NORM_EPS = 1e-12
MASK_BIAS = -1e9

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Parameter:
    """A trainable array and its accumulated gradient."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape}, dtype={self.value.dtype})"


def check_finite(x: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {where}")


def dump_tensor(x: np.ndarray) -> str:
    """Shape header, then one row per line."""
    rows = np.atleast_2d(x).reshape(-1, x.shape[-1] if x.ndim else 1)
    lines = ["shape " + " ".join(str(d) for d in x.shape)]
    lines += [" ".join(repr(float(v)) for v in row) for row in rows]
    return "\n".join(lines)


# -- affine -------------------------------------------------------------------


def affine_forward(x, W: Parameter, b: Parameter):
    """``y = x @ W + b`` over the last axis of ``x``."""
    if x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeError(f"affine: input {x.shape} incompatible with weight {W.shape} / bias {b.shape}")
    return x @ W.value + b.value, x


def affine_backward(dy, cache, W: Parameter, b: Parameter):
    x = cache
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    W.grad += x2.T @ dy2
    b.grad += dy2.sum(axis=0)
    return dy @ W.value.T


# -- layer norm ---------------------------------------------------------------


def layer_norm_forward(x, gamma: Parameter, beta: Parameter, eps: float = LAYER_NORM_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gamma.value + beta.value, (xhat, inv)


def layer_norm_backward(dy, cache, gamma: Parameter, beta: Parameter):
    xhat, inv = cache
    n = xhat.shape[-1]
    gamma.grad += (dy * xhat).reshape(-1, n).sum(axis=0)
    beta.grad += dy.reshape(-1, n).sum(axis=0)
    dxhat = dy * gamma.value
    return inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


# -- activations --------------------------------------------------------------


def gelu_forward(x, approximate: bool = False):
    """``x * Phi(x)`` with the exact Gaussian CDF; ``approximate`` uses the tanh form."""
    if approximate:
        c = math.sqrt(2.0 / math.pi)
        t = np.tanh(c * (x + 0.044715 * x**3))
        return 0.5 * x * (1.0 + t), (x, t)
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return x * cdf, (x, cdf)


def gelu_backward(dy, cache, approximate: bool = False):
    x, aux = cache
    if approximate:
        c = math.sqrt(2.0 / math.pi)
        t = aux
        dt = (1.0 - t * t) * c * (1.0 + 3 * 0.044715 * x * x)
        return dy * (0.5 * (1.0 + t) + 0.5 * x * dt)
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return dy * (aux + x * pdf)


def tanh_forward(x):
    y = np.tanh(x)
    return y, y


def tanh_backward(dy, cache):
    return dy * (1.0 - cache * cache)


# -- softmax / loss -----------------------------------------------------------


def softmax(logits, axis: int = -1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood; returns ``(loss, probabilities, cache)``."""
    labels = np.asarray(labels)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch of {b}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in 0..{k - 1}, got {labels.tolist()}")
    z = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_z
    probs = np.exp(log_p)
    loss = float(-log_p[np.arange(b), labels].mean())
    return loss, probs, (probs, labels)


def softmax_cross_entropy_backward(cache, scale: float = 1.0):
    probs, labels = cache
    b = probs.shape[0]
    d = probs.copy()
    d[np.arange(b), labels] -= 1.0
    return d * (scale / b)


# -- multi-head self-attention ------------------------------------------------


class AttentionParams:
    """Query/key/value/output projections for one attention block."""

    def __init__(self, wq, bq, wk, bk, wv, bv, wo, bo):
        self.wq, self.bq = wq, bq
        self.wk, self.bk = wk, bk
        self.wv, self.bv = wv, bv
        self.wo, self.bo = wo, bo

    def __iter__(self):
        return iter((self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo))


def _split_heads(t, heads):
    b, s, h = t.shape
    return t.reshape(b, s, heads, h // heads).transpose(0, 2, 1, 3)


def _merge_heads(t):
    b, a, s, d = t.shape
    return t.transpose(0, 2, 1, 3).reshape(b, s, a * d)


def attention_forward(x, mask, params: AttentionParams, heads: int):
    """Scaled dot-product self-attention over ``x[b, s, h]`` with key padding ``mask[b, s]``."""
    b, s, h = x.shape
    if heads < 1 or h % heads:
        raise ConfigError(f"hidden size {h} is not divisible by {heads} heads")
    mask = np.asarray(mask)
    if mask.shape != (b, s):
        raise ShapeError(f"mask shape {mask.shape} does not match input {(b, s)}")
    d = h // heads
    q, cq = affine_forward(x, params.wq, params.bq)
    k, ck = affine_forward(x, params.wk, params.bk)
    v, cv = affine_forward(x, params.wv, params.bv)
    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    scale = 1.0 / math.sqrt(d)
    bias = ((1 - mask) * MASK_BIAS).astype(x.dtype)[:, None, None, :]
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * x.dtype.type(scale) + bias
    p = softmax(scores)
    ctx = _merge_heads(p @ vh)
    out, co = affine_forward(ctx, params.wo, params.bo)
    return out, (cq, ck, cv, co, qh, kh, vh, p, scale, heads)


def attention_backward(dout, cache, params: AttentionParams):
    cq, ck, cv, co, qh, kh, vh, p, scale, heads = cache
    dctx = affine_backward(dout, co, params.wo, params.bo)
    dctx_h = _split_heads(dctx, heads)
    dp = dctx_h @ vh.transpose(0, 1, 3, 2)
    dvh = p.transpose(0, 1, 3, 2) @ dctx_h
    dscores = p * (dp - (dp * p).sum(axis=-1, keepdims=True))
    dscores = dscores * dscores.dtype.type(scale)
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh
    dx = affine_backward(_merge_heads(dqh), cq, params.wq, params.bq)
    dx = dx + affine_backward(_merge_heads(dkh), ck, params.wk, params.bk)
    dx = dx + affine_backward(_merge_heads(dvh), cv, params.wv, params.bv)
    return dx
