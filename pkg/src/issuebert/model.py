"""BERT-style encoder with a [CLS] pooler and a three-way classification head."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint, nncore
from .corpus import IssueLabel, normalize_text
from .errors import CheckpointVersionError, ConfigError, InputError
from .nncore import AttentionParams, Parameter
from .tokenizer import MAX_LEN, Encoding, Vocabulary, encode

INIT_STD = 0.02
MODEL_TYPE = "transformer"


@dataclass(frozen=True)
class EncoderConfig:
    layers: int
    hidden: int
    heads: int
    vocab_size: int
    ff_dim: int | None = None
    max_positions: int = MAX_LEN
    num_labels: int = 3

    def __post_init__(self):
        if self.ff_dim is None:
            object.__setattr__(self, "ff_dim", 4 * self.hidden)

    def validate(self) -> None:
        for name in ("layers", "hidden", "heads", "vocab_size", "ff_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.hidden % self.heads:
            raise ConfigError(f"hidden size {self.hidden} is not divisible by {self.heads} heads")
        if self.max_positions < 2:
            raise ConfigError(f"max_positions must be at least 2, got {self.max_positions}")
        if self.num_labels != 3:
            raise ConfigError(f"num_labels must be 3 for issue types, got {self.num_labels}")

    def param_count(self) -> int:
        h, f = self.hidden, self.ff_dim
        per_layer = 4 * (h * h + h) + (h * f + f) + (f * h + h) + 2 * (2 * h)
        return (
            self.vocab_size * h
            + self.max_positions * h
            + 2 * h
            + self.layers * per_layer
            + (h * h + h)
            + (h * self.num_labels + self.num_labels)
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# Full-size BERT-large shape; listed for reference, far too big to train here.
BERT_LARGE = dict(layers=24, hidden=1024, heads=16, ff_dim=4096)


def _trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    z = rng.standard_normal(shape)
    bad = np.abs(z) > 2.0
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > 2.0
    return z * std


class ClassifierModel:
    def __init__(self, config: EncoderConfig, params: dict[str, Parameter], vocab: Vocabulary | None = None):
        self.config = config
        self.params = params
        self.vocab = vocab
        p = params
        self.attn = [
            AttentionParams(*(p[f"layer{i}.attn.{n}"] for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")))
            for i in range(config.layers)
        ]

    @property
    def dtype(self) -> np.dtype:
        return self.params["embeddings.token"].value.dtype

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def copy(self) -> "ClassifierModel":
        params = {n: Parameter(n, p.value.copy()) for n, p in self.params.items()}
        return ClassifierModel(self.config, params, self.vocab)


def _param_shapes(config: EncoderConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """(name, shape, init kind) in registry order."""
    h, f = config.hidden, config.ff_dim
    spec = [
        ("embeddings.token", (config.vocab_size, h), "normal"),
        ("embeddings.position", (config.max_positions, h), "normal"),
        ("embeddings.ln.gamma", (h,), "one"),
        ("embeddings.ln.beta", (h,), "zero"),
    ]
    for i in range(config.layers):
        pre = f"layer{i}"
        for n in ("q", "k", "v", "o"):
            spec += [(f"{pre}.attn.w{n}", (h, h), "normal"), (f"{pre}.attn.b{n}", (h,), "zero")]
        spec += [(f"{pre}.attn_ln.gamma", (h,), "one"), (f"{pre}.attn_ln.beta", (h,), "zero")]
        spec += [
            (f"{pre}.ffn.w1", (h, f), "normal"),
            (f"{pre}.ffn.b1", (f,), "zero"),
            (f"{pre}.ffn.w2", (f, h), "normal"),
            (f"{pre}.ffn.b2", (h,), "zero"),
        ]
        spec += [(f"{pre}.ffn_ln.gamma", (h,), "one"), (f"{pre}.ffn_ln.beta", (h,), "zero")]
    spec += [
        ("pooler.w", (h, h), "normal"),
        ("pooler.b", (h,), "zero"),
        ("head.w", (h, config.num_labels), "normal"),
        ("head.b", (config.num_labels,), "zero"),
    ]
    return spec


def init(config: EncoderConfig, seed: int = 0, dtype=np.float32, vocab: Vocabulary | None = None) -> ClassifierModel:
    """Weights from N(0, 0.02) truncated at two standard deviations; biases 0, norms identity."""
    config.validate()
    if vocab is not None and len(vocab) != config.vocab_size:
        raise ConfigError(f"vocabulary has {len(vocab)} tokens but config.vocab_size={config.vocab_size}")
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, kind in _param_shapes(config):
        if kind == "normal":
            value = _trunc_normal(rng, shape, INIT_STD)
        elif kind == "one":
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        params[name] = Parameter(name, value.astype(dtype))
    return ClassifierModel(config, params, vocab)


def batch_arrays(batch: Sequence[Encoding]) -> tuple[np.ndarray, np.ndarray]:
    """Stack encodings into ``(ids, mask)``, cut to the longest real length in the batch."""
    s = max(e.real_len for e in batch)
    ids = np.array([e.ids[:s] for e in batch], dtype=np.int64)
    mask = np.array([e.attention_mask[:s] for e in batch], dtype=np.int64)
    return ids, mask


def forward(model: ClassifierModel, ids: np.ndarray, mask: np.ndarray):
    """Logits for a batch of token ids; returns ``(logits, cache)``."""
    cfg, p = model.config, model.params
    b, s = ids.shape
    if s > cfg.max_positions:
        raise InputError(f"sequence length {s} exceeds max_positions={cfg.max_positions}")
    bad = np.argwhere((ids < 0) | (ids >= cfg.vocab_size))
    if bad.size:
        r, c = bad[0]
        raise InputError(f"token id {ids[r, c]} at batch row {r}, position {c} is outside vocabulary of {cfg.vocab_size}")

    x = p["embeddings.token"].value[ids] + p["embeddings.position"].value[:s]
    x, c_emb_ln = nncore.layer_norm_forward(x, p["embeddings.ln.gamma"], p["embeddings.ln.beta"])
    layer_caches = []
    for i in range(cfg.layers):
        pre = f"layer{i}"
        a, c_attn = nncore.attention_forward(x, mask, model.attn[i], cfg.heads)
        x, c_ln1 = nncore.layer_norm_forward(x + a, p[f"{pre}.attn_ln.gamma"], p[f"{pre}.attn_ln.beta"])
        f1, c_f1 = nncore.affine_forward(x, p[f"{pre}.ffn.w1"], p[f"{pre}.ffn.b1"])
        g, c_g = nncore.gelu_forward(f1)
        f2, c_f2 = nncore.affine_forward(g, p[f"{pre}.ffn.w2"], p[f"{pre}.ffn.b2"])
        x, c_ln2 = nncore.layer_norm_forward(x + f2, p[f"{pre}.ffn_ln.gamma"], p[f"{pre}.ffn_ln.beta"])
        layer_caches.append((c_attn, c_ln1, c_f1, c_g, c_f2, c_ln2))
    cls_state = x[:, 0, :]
    z, c_pool = nncore.affine_forward(cls_state, p["pooler.w"], p["pooler.b"])
    pooled, c_tanh = nncore.tanh_forward(z)
    logits, c_head = nncore.affine_forward(pooled, p["head.w"], p["head.b"])
    return logits, (ids, x.shape, c_emb_ln, layer_caches, c_pool, c_tanh, c_head)


def backward(model: ClassifierModel, dlogits: np.ndarray, cache) -> None:
    """Accumulate gradients of every parameter given ``d loss / d logits``."""
    cfg, p = model.config, model.params
    ids, shape, c_emb_ln, layer_caches, c_pool, c_tanh, c_head = cache
    dpooled = nncore.affine_backward(dlogits, c_head, p["head.w"], p["head.b"])
    dz = nncore.tanh_backward(dpooled, c_tanh)
    dcls = nncore.affine_backward(dz, c_pool, p["pooler.w"], p["pooler.b"])
    dx = np.zeros(shape, dtype=dlogits.dtype)
    dx[:, 0, :] = dcls
    for i in reversed(range(cfg.layers)):
        pre = f"layer{i}"
        c_attn, c_ln1, c_f1, c_g, c_f2, c_ln2 = layer_caches[i]
        dres = nncore.layer_norm_backward(dx, c_ln2, p[f"{pre}.ffn_ln.gamma"], p[f"{pre}.ffn_ln.beta"])
        dg = nncore.affine_backward(dres, c_f2, p[f"{pre}.ffn.w2"], p[f"{pre}.ffn.b2"])
        df1 = nncore.gelu_backward(dg, c_g)
        dx = dres + nncore.affine_backward(df1, c_f1, p[f"{pre}.ffn.w1"], p[f"{pre}.ffn.b1"])
        dres = nncore.layer_norm_backward(dx, c_ln1, p[f"{pre}.attn_ln.gamma"], p[f"{pre}.attn_ln.beta"])
        dx = dres + nncore.attention_backward(dres, c_attn, model.attn[i])
    demb = nncore.layer_norm_backward(dx, c_emb_ln, p["embeddings.ln.gamma"], p["embeddings.ln.beta"])
    np.add.at(p["embeddings.token"].grad, ids, demb)
    p["embeddings.position"].grad[: ids.shape[1]] += demb.sum(axis=0)


def logits(model: ClassifierModel, batch: Sequence[Encoding]) -> np.ndarray:
    ids, mask = batch_arrays(batch)
    out, _ = forward(model, ids, mask)
    return out


def predict_proba(model: ClassifierModel, vocab: Vocabulary, texts: Sequence[str], batch_size: int = 64) -> np.ndarray:
    rows = []
    for start in range(0, len(texts), batch_size):
        enc = [encode(normalize_text(t), vocab, model.config.max_positions) for t in texts[start : start + batch_size]]
        rows.append(nncore.softmax(logits(model, enc)))
    return np.concatenate(rows) if rows else np.zeros((0, model.config.num_labels), dtype=model.dtype)


def predict(model: ClassifierModel, vocab: Vocabulary, text: str) -> tuple[IssueLabel, np.ndarray]:
    """Most likely issue type and the three class probabilities; ties go to the lower index."""
    probs = predict_proba(model, vocab, [text])[0]
    return IssueLabel(int(np.argmax(probs))), probs


def save_checkpoint(model: ClassifierModel, path: str | Path) -> None:
    extra = {"vocab": list(model.vocab.tokens)} if model.vocab is not None else {}
    arrays = [(n, p.value) for n, p in model.params.items()]
    checkpoint.write(path, MODEL_TYPE, model.config.to_dict(), arrays, extra)


def load_checkpoint(path: str | Path) -> ClassifierModel:
    manifest, arrays = checkpoint.read(path)
    if manifest["model_type"] != MODEL_TYPE:
        raise CheckpointVersionError(f"{path}: expected a {MODEL_TYPE} checkpoint, found {manifest['model_type']!r}")
    fields = {f.name for f in dataclasses.fields(EncoderConfig)}
    if set(manifest["config"]) != fields:
        raise CheckpointVersionError(f"{path}: config keys {sorted(manifest['config'])} do not match {sorted(fields)}")
    config = EncoderConfig(**manifest["config"])
    expected = [(n, s) for n, s, _ in _param_shapes(config)]
    found = [(e["name"], tuple(e["shape"])) for e in manifest["params"]]
    if expected != found:
        raise CheckpointVersionError(f"{path}: parameter layout does not match its config")
    vocab = Vocabulary(manifest["extra"]["vocab"]) if "vocab" in manifest["extra"] else None
    params = {n: Parameter(n, arrays[n]) for n, _ in expected}
    return ClassifierModel(config, params, vocab)
