"""fastText-style linear classifier over averaged word and hashed-bigram embeddings."""

from __future__ import annotations

import dataclasses
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import checkpoint
from .corpus import CleanExample, IssueLabel, normalize_text, shuffled_indices
from .errors import CheckpointVersionError, ConfigError, DataError
from .metrics import ConfusionMatrix, confusion
from .nncore import softmax
from .tokenizer import pre_tokenize

MODEL_TYPE = "baseline"
NUM_LABELS = 3

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class BowConfig:
    embedding_dim: int = 16
    bucket_count: int = 2**18
    lr_start: float = 0.1
    epochs: int = 5
    min_word_count: int = 1
    bigrams: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.embedding_dim < 1:
            raise ConfigError(f"embedding_dim must be positive, got {self.embedding_dim}")
        if self.bucket_count < 1 or self.bucket_count & (self.bucket_count - 1):
            raise ConfigError(f"bucket_count must be a power of two, got {self.bucket_count}")
        if self.epochs < 1 or self.min_word_count < 1 or self.lr_start < 0:
            raise ConfigError("epochs and min_word_count must be >= 1, lr_start >= 0")


def fnv1a64(data: bytes, h: int = _FNV_OFFSET) -> int:
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def bigram_hash(first: str, second: str) -> int:
    # 0xFF never occurs in UTF-8, so it separates the two words unambiguously.
    return fnv1a64(first.encode("utf-8") + b"\xff" + second.encode("utf-8"))


class BowModel:
    def __init__(self, config: BowConfig, words: Sequence[str], embeddings, output, bias):
        self.config = config
        self.words = tuple(words)
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.embeddings = embeddings
        self.output = output
        self.bias = bias

    def featurize(self, text: str) -> list[int]:
        return featurize(text, self)

    def copy(self) -> "BowModel":
        return BowModel(self.config, self.words, self.embeddings.copy(), self.output.copy(), self.bias.copy())


def featurize(text: str, model: BowModel) -> list[int]:
    """Known-word ids, then bigram bucket ids offset past the word range."""
    words = pre_tokenize(text)
    ids = [model.word_index[w] for w in words if w in model.word_index]
    if model.config.bigrams:
        offset, mask = len(model.words), model.config.bucket_count - 1
        ids += [offset + (bigram_hash(a, b) & mask) for a, b in zip(words, words[1:])]
    return ids


def _mean_embedding(model: BowModel, ids: Sequence[int]) -> np.ndarray:
    # Summed in sorted order so that the mean does not depend on word order.
    if not len(ids):
        return np.zeros(model.config.embedding_dim, model.embeddings.dtype)
    return model.embeddings[sorted(ids)].mean(axis=0)


def bow_forward(model: BowModel, ids: Sequence[int]) -> np.ndarray:
    """Mean feature embedding (zeros when there are none) through the output layer."""
    return _mean_embedding(model, ids) @ model.output + model.bias


def bow_loss_and_grads(model: BowModel, ids: Sequence[int], label: int):
    """Cross-entropy of one example and its gradients.

    Returns ``(loss, d_embedding_rows, d_output, d_bias)``; the embedding
    gradient is the same row for every listed feature occurrence.
    """
    n = len(ids)
    hidden = _mean_embedding(model, ids)
    logits = hidden @ model.output + model.bias
    probs = softmax(logits)
    loss = float(-np.log(probs[label]))
    dlogits = probs.copy()
    dlogits[label] -= 1.0
    d_output = np.outer(hidden, dlogits)
    d_hidden = model.output @ dlogits
    d_row = d_hidden / n if n else d_hidden * 0
    return loss, d_row, d_output, dlogits


def init(config: BowConfig, words: Sequence[str]) -> BowModel:
    rng = np.random.default_rng(config.seed)
    rows = len(words) + (config.bucket_count if config.bigrams else 0)
    d = config.embedding_dim
    emb = rng.uniform(-1.0 / d, 1.0 / d, size=(rows, d)).astype(np.float32)
    return BowModel(config, words, emb, np.zeros((d, NUM_LABELS), np.float32), np.zeros(NUM_LABELS, np.float32))


def bow_train(
    examples: Sequence[CleanExample],
    cfg: BowConfig = BowConfig(),
    on_epoch: Callable[[int, float, BowModel], None] | None = None,
) -> BowModel:
    """Per-example SGD with a learning rate decaying linearly to zero over all updates.

    ``on_epoch(epoch, mean_loss, model)`` is called after each pass, epochs counted from 1.
    """
    cfg.validate()
    if not examples:
        raise DataError("cannot train the baseline on an empty example list")
    counts = Counter(w for ex in examples for w in pre_tokenize(ex.text))
    words = sorted(w for w, c in counts.items() if c >= cfg.min_word_count)
    model = init(cfg, words)
    features = [featurize(ex.text, model) for ex in examples]
    total = cfg.epochs * len(examples)
    step = 0
    for epoch in range(cfg.epochs):
        losses = []
        for i in shuffled_indices(len(examples), cfg.seed + epoch):
            lr = np.float32(cfg.lr_start * (1.0 - step / total))
            step += 1
            ids = features[i]
            loss, d_row, d_out, d_bias = bow_loss_and_grads(model, ids, examples[i].label)
            losses.append(loss)
            if ids:
                np.subtract.at(model.embeddings, ids, lr * d_row)
            model.output -= lr * d_out
            model.bias -= lr * d_bias
        if on_epoch is not None:
            on_epoch(epoch + 1, float(np.mean(losses)), model)
    return model


def predict_proba(model: BowModel, texts: Sequence[str]) -> np.ndarray:
    rows = [softmax(bow_forward(model, featurize(normalize_text(t), model))) for t in texts]
    return np.array(rows).reshape(len(rows), NUM_LABELS)


def predict(model: BowModel, text: str) -> tuple[IssueLabel, np.ndarray]:
    probs = predict_proba(model, [text])[0]
    return IssueLabel(int(np.argmax(probs))), probs


def evaluate(model: BowModel, examples: Sequence[CleanExample]) -> tuple[float, ConfusionMatrix]:
    if not examples:
        raise DataError("cannot evaluate on an empty example list")
    preds = np.argmax(predict_proba(model, [ex.text for ex in examples]), axis=1)
    cm = confusion(preds.tolist(), [ex.label for ex in examples])
    return cm.accuracy(), cm


def save_checkpoint(model: BowModel, path: str | Path) -> None:
    arrays = [("embeddings", model.embeddings), ("output", model.output), ("bias", model.bias)]
    checkpoint.write(path, MODEL_TYPE, dataclasses.asdict(model.config), arrays, {"words": list(model.words)})


def load_checkpoint(path: str | Path) -> BowModel:
    manifest, arrays = checkpoint.read(path)
    if manifest["model_type"] != MODEL_TYPE:
        raise CheckpointVersionError(f"{path}: expected a {MODEL_TYPE} checkpoint, found {manifest['model_type']!r}")
    fields = {f.name for f in dataclasses.fields(BowConfig)}
    if set(manifest["config"]) != fields:
        raise CheckpointVersionError(f"{path}: config keys {sorted(manifest['config'])} do not match {sorted(fields)}")
    config = BowConfig(**manifest["config"])
    return BowModel(config, manifest["extra"]["words"], arrays["embeddings"], arrays["output"], arrays["bias"])
