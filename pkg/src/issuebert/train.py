"""Fine-tuning loop: cross-entropy, AdamW, per-epoch validation, best-epoch selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import model as M
from . import nncore
from .corpus import CleanExample, DatasetSplit, shuffled_indices
from .errors import ConfigError, DataError, NonFiniteLossError
from .metrics import ConfusionMatrix, confusion
from .nncore import Parameter
from .tokenizer import Encoding, Vocabulary, encode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    eps: float = 1e-8
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0

    def validate(self) -> None:
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be at least 1")
        if self.weight_decay < 0 or self.eps <= 0:
            raise ConfigError("weight_decay must be >= 0 and eps > 0")


@dataclass
class AdamWState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    validation_accuracy: float

    def csv(self) -> str:
        return f"{self.epoch},{self.train_loss:.6f},{self.validation_accuracy:.6f}"


LOG_HEADER = "epoch,train_loss,val_accuracy"


def adamw_step(params: Iterable[Parameter], state: AdamWState, cfg: TrainConfig) -> None:
    """One AdamW update with bias correction and decoupled weight decay.

    The decay term uses the parameter value from before this step.
    """
    params = list(params)
    for p in params:
        if p.grad is None or p.grad.shape != p.value.shape:
            raise ValueError(f"parameter {p.name!r} has no gradient")
    state.t += 1
    t = state.t
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p in params:
        g = p.grad
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        if cfg.weight_decay:
            update = update + cfg.weight_decay * p.value
        p.value -= cfg.lr * update


def encode_all(examples: Sequence[CleanExample], vocab: Vocabulary, max_len: int) -> list[Encoding]:
    return [encode(ex.text, vocab, max_len) for ex in examples]


def _predict_labels(model: M.ClassifierModel, encodings: Sequence[Encoding], batch_size: int) -> np.ndarray:
    preds = []
    for start in range(0, len(encodings), batch_size):
        preds.append(np.argmax(M.logits(model, encodings[start : start + batch_size]), axis=1))
    return np.concatenate(preds)


def evaluate(
    model: M.ClassifierModel,
    examples: Sequence[CleanExample],
    vocab: Vocabulary,
    batch_size: int = 64,
) -> tuple[float, ConfusionMatrix]:
    """Accuracy (correct / total) and the confusion matrix of argmax predictions."""
    if not examples:
        raise DataError("cannot evaluate on an empty example list")
    enc = encode_all(examples, vocab, model.config.max_positions)
    preds = _predict_labels(model, enc, batch_size)
    cm = confusion(preds.tolist(), [ex.label for ex in examples])
    return cm.accuracy(), cm


def train(
    model: M.ClassifierModel,
    split: DatasetSplit,
    vocab: Vocabulary,
    cfg: TrainConfig = TrainConfig(),
    on_epoch: Callable[[EpochLog], None] | None = None,
) -> tuple[M.ClassifierModel, list[EpochLog]]:
    """Fine-tune every parameter; return the model from the most accurate epoch.

    Ties in validation accuracy go to the earliest epoch.
    """
    cfg.validate()
    if not split.train or not split.validation:
        raise DataError("training needs non-empty train and validation sets")
    max_len = model.config.max_positions
    train_enc = encode_all(split.train, vocab, max_len)
    train_labels = np.array([ex.label for ex in split.train])
    val_enc = encode_all(split.validation, vocab, max_len)
    val_labels = np.array([ex.label for ex in split.validation])
    params = model.parameters()
    state = AdamWState()
    logs: list[EpochLog] = []
    best, best_acc = None, -1.0

    for epoch in range(1, cfg.epochs + 1):
        order = shuffled_indices(len(train_enc), cfg.seed + epoch)
        touched = {p.name: False for p in params}
        batch_losses = []
        for batch_no, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            ids, mask = M.batch_arrays([train_enc[i] for i in idx])
            model.zero_grad()
            out, cache = M.forward(model, ids, mask)
            loss, _, ce_cache = nncore.softmax_cross_entropy(out, train_labels[idx])
            if not math.isfinite(loss):
                raise NonFiniteLossError(epoch, batch_no, loss)
            M.backward(model, nncore.softmax_cross_entropy_backward(ce_cache), cache)
            for p in params:
                if not touched[p.name] and np.any(p.grad):
                    touched[p.name] = True
            adamw_step(params, state, cfg)
            batch_losses.append(loss)
        for name, hit in touched.items():
            if not hit:
                log.warning("parameter %s received an all-zero gradient for all of epoch %d", name, epoch)

        preds = _predict_labels(model, val_enc, 64)
        acc = float(np.mean(preds == val_labels))
        entry = EpochLog(epoch, float(np.mean(batch_losses)), acc)
        logs.append(entry)
        log.info("epoch %d: train_loss=%.4f val_accuracy=%.4f", epoch, entry.train_loss, acc)
        if on_epoch is not None:
            on_epoch(entry)
        if acc > best_acc:
            best, best_acc = model.copy(), acc
    return best, logs


def best_epoch(logs: Sequence[EpochLog]) -> EpochLog:
    """Highest validation accuracy, earliest on ties."""
    return max(logs, key=lambda e: (e.validation_accuracy, -e.epoch))
