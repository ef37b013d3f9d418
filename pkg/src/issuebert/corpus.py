"""Labeled issue data: CSV ingest, text normalization, label encoding, splitting."""

from __future__ import annotations

import csv
import enum
import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError

REQUIRED_COLUMNS = ("label", "title", "body")
DEFAULT_SEED = 42

_MASK64 = (1 << 64) - 1


class IssueLabel(enum.IntEnum):
    BUG = 0
    ENHANCEMENT = 1
    QUESTION = 2

    @classmethod
    def parse(cls, value: str) -> "IssueLabel":
        try:
            return cls[value.strip().upper()]
        except KeyError:
            raise DataError(f"unknown label {value!r}; expected one of bug, enhancement, question") from None

    @property
    def text(self) -> str:
        return self.name.lower()


LABEL_NAMES = tuple(label.text for label in IssueLabel)


@dataclass(frozen=True)
class IssueRecord:
    label: IssueLabel
    title: str
    body: str


@dataclass(frozen=True)
class CleanExample:
    text: str
    label: int


@dataclass(frozen=True)
class DatasetSplit:
    train: list[CleanExample]
    validation: list[CleanExample]
    seed: int
    fraction: float


# CRLF first so it becomes one space, not two. \s also covers \v, \f and
# Unicode spaces, so no whitespace run can survive collapsing.
_BREAKS = re.compile(r"\r\n|\s")
_SPACES = re.compile(r" {2,}")


def normalize_text(text: str) -> str:
    """Turn line breaks, tabs and other whitespace into spaces, collapse runs, trim."""
    text = _BREAKS.sub(" ", text)
    return _SPACES.sub(" ", text).strip(" ")


def preprocess(record: IssueRecord) -> CleanExample:
    return CleanExample(normalize_text(record.title + " " + record.body), int(record.label))


def parse_csv(path: str | Path) -> list[IssueRecord]:
    """Read issues from a CSV with at least ``label``, ``title`` and ``body`` columns.

    Other columns (URL, author, timestamps, ...) are ignored. Labels are
    matched case-insensitively.
    """
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected header with columns label,title,body") from None
        except csv.Error as exc:
            raise DataError(f"{path}: unreadable header: {exc}") from None
        names = [h.strip().lower() for h in header]
        for column in REQUIRED_COLUMNS:
            if column not in names:
                raise DataError(f"{path}: missing required column {column!r}")
        idx = [names.index(c) for c in REQUIRED_COLUMNS]
        row_no = 0
        while True:
            row_no += 1
            try:
                row = next(reader)
            except StopIteration:
                break
            except csv.Error as exc:
                raise DataError(f"{path}: row {row_no}: {exc}") from None
            if not row:
                row_no -= 1
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_no}: expected {len(header)} fields, found {len(row)}")
            label, title, body = (row[i] for i in idx)
            try:
                parsed = IssueLabel.parse(label)
            except DataError as exc:
                raise DataError(f"{path}: row {row_no}: {exc}") from None
            records.append(IssueRecord(parsed, title, body))
    return records


def write_csv(records: Iterable[IssueRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(REQUIRED_COLUMNS)
        for r in records:
            writer.writerow([r.label.text, r.title, r.body])


class SplitMix64:
    """Small seeded 64-bit generator; its output is fixed by the algorithm."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection, no modulo bias."""
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n


def shuffled_indices(n: int, seed: int) -> list[int]:
    """Fisher-Yates permutation of range(n)."""
    rng = SplitMix64(seed)
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        order[i], order[j] = order[j], order[i]
    return order


def split(
    examples: Sequence[CleanExample],
    fraction: float = 0.8,
    seed: int = DEFAULT_SEED,
    stratified: bool = False,
) -> DatasetSplit:
    """Shuffle and cut into train/validation; ``floor(fraction * N)`` go to train."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    if not examples:
        raise DataError("cannot split an empty example list")
    n = len(examples)
    n_train = math.floor(fraction * n)
    order = shuffled_indices(n, seed)
    if stratified:
        by_class: dict[int, list[int]] = {}
        for i in order:
            by_class.setdefault(examples[i].label, []).append(i)
        chosen = set()
        for members in by_class.values():
            chosen.update(members[: math.floor(fraction * len(members))])
        for i in order:
            if len(chosen) >= n_train:
                break
            chosen.add(i)
        train_idx = [i for i in order if i in chosen]
        val_idx = [i for i in order if i not in chosen]
    else:
        train_idx, val_idx = order[:n_train], order[n_train:]
    return DatasetSplit(
        train=[examples[i] for i in train_idx],
        validation=[examples[i] for i in val_idx],
        seed=seed,
        fraction=fraction,
    )


def class_counts(examples: Iterable[CleanExample]) -> dict[str, int]:
    counts = Counter(ex.label for ex in examples)
    return {name: counts.get(i, 0) for i, name in enumerate(LABEL_NAMES)}


def write_jsonl(examples: Iterable[CleanExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(json.dumps({"text": ex.text, "label": ex.label}, ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> list[CleanExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                text, label = obj["text"], obj["label"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}: line {line_no}: bad record ({exc})") from None
            if isinstance(label, str):
                label = int(IssueLabel.parse(label))
            if label not in (0, 1, 2):
                raise DataError(f"{path}: line {line_no}: label {label!r} not in 0..2")
            out.append(CleanExample(text, int(label)))
    return out
