"""Per-class recall, precision and F-score plus the micro average.

Counts stay integers until the final division, so the equality of micro
recall, micro precision and micro F-score can be checked exactly with
:class:`fractions.Fraction`.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .corpus import LABEL_NAMES

NUM_CLASSES = len(LABEL_NAMES)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are actual classes, columns predicted classes."""

    counts: tuple[tuple[int, ...], ...]

    @classmethod
    def from_array(cls, a) -> "ConfusionMatrix":
        a = np.asarray(a)
        if a.shape != (NUM_CLASSES, NUM_CLASSES) or (a < 0).any():
            raise ValueError(f"confusion matrix must be a non-negative {NUM_CLASSES}x{NUM_CLASSES} array")
        return cls(tuple(tuple(int(v) for v in row) for row in a))

    def tp(self, c: int) -> int:
        return self.counts[c][c]

    def fn(self, c: int) -> int:
        return sum(self.counts[c]) - self.counts[c][c]

    def fp(self, c: int) -> int:
        return sum(row[c] for row in self.counts) - self.counts[c][c]

    def support(self, c: int) -> int:
        return sum(self.counts[c])

    def total(self) -> int:
        return sum(map(sum, self.counts))

    def accuracy(self) -> float:
        return micro_average(self)

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)


def confusion(predictions: Sequence[int], actuals: Sequence[int]) -> ConfusionMatrix:
    if len(predictions) != len(actuals):
        raise ValueError(f"{len(predictions)} predictions but {len(actuals)} actual labels")
    if not len(actuals):
        raise ValueError("cannot build a confusion matrix from empty lists")
    counts = [[0] * NUM_CLASSES for _ in range(NUM_CLASSES)]
    for p, a in zip(predictions, actuals):
        counts[int(a)][int(p)] += 1
    return ConfusionMatrix(tuple(map(tuple, counts)))


def _ratio(num, den):
    return num / den if den else 0.0


def f_score(recall: float, precision: float) -> float:
    return _ratio(2 * recall * precision, recall + precision)


@dataclass(frozen=True)
class ClassScores:
    recall: float
    precision: float
    f_score: float


def scores(recall: float, precision: float) -> ClassScores:
    return ClassScores(recall, precision, f_score(recall, precision))


def class_metrics(m: ConfusionMatrix, c: int) -> ClassScores:
    """Recall, precision and F-score for class ``c``; undefined ratios are 0."""
    tp, fn, fp = m.tp(c), m.fn(c), m.fp(c)
    return scores(_ratio(tp, tp + fn), _ratio(tp, tp + fp))


def micro_scores_exact(m: ConfusionMatrix) -> tuple[Fraction, Fraction, Fraction]:
    """Micro recall, precision and F-score as exact fractions."""
    tp = sum(m.tp(c) for c in range(NUM_CLASSES))
    fn = sum(m.fn(c) for c in range(NUM_CLASSES))
    fp = sum(m.fp(c) for c in range(NUM_CLASSES))
    if tp + fn == 0:
        raise ValueError("micro average of an empty confusion matrix is undefined")
    r = Fraction(tp, tp + fn)
    p = Fraction(tp, tp + fp)
    f = 2 * r * p / (r + p) if r + p else Fraction(0)
    return r, p, f


def micro_average(m: ConfusionMatrix) -> float:
    """sum(tp) / sum(tp + fn) over the three classes; equals accuracy."""
    return float(micro_scores_exact(m)[0])


@dataclass
class MetricsReport:
    per_class: dict[str, ClassScores]
    micro_average: float
    support: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_class": {
                name: {"recall": s.recall, "precision": s.precision, "f_score": s.f_score}
                for name, s in self.per_class.items()
            },
            "micro_average": self.micro_average,
            "support": dict(self.support),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricsReport":
        return cls(
            {n: ClassScores(**s) for n, s in d["per_class"].items()},
            d["micro_average"],
            dict(d.get("support", {})),
        )


def report(m: ConfusionMatrix) -> MetricsReport:
    return MetricsReport(
        per_class={name: class_metrics(m, c) for c, name in enumerate(LABEL_NAMES)},
        micro_average=micro_average(m),
        support={name: m.support(c) for c, name in enumerate(LABEL_NAMES)},
    )


def percent(x: float) -> Decimal:
    """Percentage rounded half-up to one decimal."""
    return (Decimal(repr(float(x))) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)


def _rows(reports: Mapping[str, MetricsReport]):
    """(block, class, [percent per report]) in table order: recall, precision, F-score, micro."""
    for block, attr in (("recall", "recall"), ("precision", "precision"), ("F-score", "f_score")):
        for name in LABEL_NAMES:
            yield block, name, [percent(getattr(r.per_class[name], attr)) for r in reports.values()]
    yield "", "micro average", [percent(r.micro_average) for r in reports.values()]


def _signed(d: Decimal) -> str:
    return f"{d:+.1f}%"


def render_report(reports: Mapping[str, MetricsReport], fmt: str = "table") -> str:
    """Render one or more reports; with exactly two, add ``second - first`` as a Difference column."""
    if not reports:
        raise ValueError("need at least one report")
    if fmt == "json":
        return json.dumps({name: r.to_dict() for name, r in reports.items()}, indent=2)
    names = list(reports)
    with_diff = len(reports) == 2
    rows = []
    for block, cls_name, values in _rows(reports):
        cells = [f"{v}%" for v in values]
        if with_diff:
            cells.append(_signed(values[1] - values[0]))
        rows.append([block, cls_name, *cells])
    header = ["metric", "class", *names] + (["Difference"] if with_diff else [])
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt != "table":
        raise ValueError(f"unknown format {fmt!r}; use table, json or csv")
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]

    def line(cells):
        left = [str(c).ljust(w) for c, w in zip(cells[:2], widths[:2])]
        right = [str(c).rjust(w) for c, w in zip(cells[2:], widths[2:])]
        return "  ".join(left + right).rstrip()

    sep = "-" * len(line(header))
    out = [line(header), sep]
    prev = None
    for r in rows:
        if prev is not None and r[0] != prev:
            out.append(sep)
        out.append(line(r))
        prev = r[0]
    return "\n".join(out) + "\n"
