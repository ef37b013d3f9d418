"""
Checking hand-written backward passes
=====================================

Every layer has an analytic backward pass. Central finite differences
give an independent estimate of the same gradient. In float64 the two
agree to about nine digits.
"""

import numpy as np

from issuebert import model as M
from issuebert import nncore

cfg = M.EncoderConfig(layers=1, hidden=8, heads=2, vocab_size=12, max_positions=16)
model = M.init(cfg, seed=3, dtype=np.float64)
rng = np.random.default_rng(0)
for p in model.parameters():
    p.value += rng.standard_normal(p.shape) * 0.3

ids = np.array([[2, 5, 7, 9, 3], [2, 11, 4, 3, 0]])
mask = np.array([[1, 1, 1, 1, 1], [1, 1, 1, 1, 0]])
labels = np.array([0, 2])


def loss():
    out, _ = M.forward(model, ids, mask)
    return nncore.softmax_cross_entropy(out, labels)[0]


model.zero_grad()
out, cache = M.forward(model, ids, mask)
_, _, ce = nncore.softmax_cross_entropy(out, labels)
M.backward(model, nncore.softmax_cross_entropy_backward(ce), cache)

delta = 1e-6
for name in ("head.w", "pooler.w", "layer0.attn.wq", "layer0.ffn.w1", "embeddings.token"):
    p = model.params[name]
    ix = (int(ids[0, 1]), 3) if name == "embeddings.token" else (1, 2)
    old = p.value[ix]
    p.value[ix] = old + delta
    up = loss()
    p.value[ix] = old - delta
    down = loss()
    p.value[ix] = old
    numeric = (up - down) / (2 * delta)
    print(f"{name:18s} analytic {p.grad[ix]: .10f}  numeric {numeric: .10f}")
