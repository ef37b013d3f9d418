"""Synthetic GitHub-style issues for desk-scale runs.

The generated issues are not real data; they carry class-indicative vocabulary
mixed with shared filler and some deliberately mislabeled items, so that a
classifier can learn something but not everything.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .corpus import LABEL_NAMES, CleanExample

# Development-set class counts of the real issue data.
DEV_COUNTS = {"bug": 361_238, "enhancement": 299_287, "question": 62_373}
TEST_COUNTS = {"bug": 40_152, "enhancement": 33_290, "question": 7_076}

_CLASS_WORDS = {
    "bug": [
        "crash", "crashes", "error", "exception", "fails", "failing", "broken", "traceback",
        "segfault", "regression", "incorrect", "unexpected", "wrong", "stacktrace", "null",
        "undefined", "panic", "bug", "freezes", "hangs", "leak", "nan",
    ],
    "enhancement": [
        "add", "support", "feature", "option", "allow", "improve", "would", "nice", "request",
        "proposal", "implement", "extend", "configurable", "enable", "suggestion", "new",
        "better", "provide", "integration", "api", "plugin", "customize",
    ],
    "question": [
        "how", "why", "what", "question", "help", "possible", "anyone", "documentation",
        "understand", "clarify", "example", "usage", "can", "explain", "wondering", "advice",
        "best", "way", "tutorial", "?", "confused", "recommended",
    ],
}

_SHARED = [
    "the", "a", "when", "i", "it", "in", "to", "of", "with", "on", "this", "is", "for", "and",
    "version", "server", "client", "config", "file", "build", "docker", "linux", "windows",
    "python", "node", "page", "button", "table", "login", "cache", "request", "response",
    "database", "query", "module", "package", "release", "update", "test", "run", "using",
]

_TITLE_TEMPLATES = {
    "bug": ["{w} when {s} {s}", "{s} {w} after update", "{w}: {s} {w}", "{s} {s} {w}"],
    "enhancement": ["{w} {s} {s}", "{w} to {w} {s}", "feature: {w} {s}", "{s} {w} {w}"],
    "question": ["{w} to {s} {s}?", "{w} {s} {w}", "question about {s} {s}", "{w} is {s} {w}?"],
}

_SEPARATORS = [" ", " ", " ", "\n", "\r\n", "  ", "\t", "\n\n"]


def _words(rng, pool, k):
    return [pool[i] for i in rng.integers(0, len(pool), size=k)]


def _issue(rng: np.random.Generator, cls: str) -> tuple[str, str]:
    tmpl = _TITLE_TEMPLATES[cls][rng.integers(len(_TITLE_TEMPLATES[cls]))]
    title = tmpl
    while "{w}" in title or "{s}" in title:
        title = title.replace("{w}", _words(rng, _CLASS_WORDS[cls], 1)[0], 1)
        title = title.replace("{s}", _words(rng, _SHARED, 1)[0], 1)
    n = int(rng.integers(8, 70))
    share = rng.uniform(0.12, 0.3)
    toks = []
    for _ in range(n):
        pool = _CLASS_WORDS[cls] if rng.random() < share else _SHARED
        toks.append(_words(rng, pool, 1)[0])
        toks.append(_SEPARATORS[rng.integers(len(_SEPARATORS))])
    return title, "".join(toks).strip(" ")


def proportional_counts(n: int, reference: dict[str, int] = DEV_COUNTS) -> dict[str, int]:
    """Split ``n`` across classes in reference proportions (largest remainder)."""
    total = sum(reference.values())
    exact = {k: n * v / total for k, v in reference.items()}
    counts = {k: int(v) for k, v in exact.items()}
    for k in sorted(exact, key=lambda k: exact[k] - counts[k], reverse=True)[: n - sum(counts.values())]:
        counts[k] += 1
    return counts


def synthetic_issues(n: int = 3000, seed: int = 2022, noise: float = 0.15) -> list[dict[str, str]]:
    """Rows with label, title, body plus url/author/created_at columns."""
    rng = np.random.default_rng(seed)
    rows = []
    for label, count in proportional_counts(n).items():
        for _ in range(count):
            source = label
            if rng.random() < noise:
                source = LABEL_NAMES[rng.integers(len(LABEL_NAMES))]
            title, body = _issue(rng, source)
            rows.append({"label": label, "title": title, "body": body})
    order = rng.permutation(len(rows))
    rows = [rows[i] for i in order]
    for i, row in enumerate(rows):
        row["url"] = f"https://github.com/example/project/issues/{i + 1}"
        row["author"] = f"user{int(rng.integers(1, 500))}"
        row["created_at"] = f"2021-{1 + i % 12:02d}-{1 + i % 28:02d}T12:00:00Z"
    return rows


def write_sample_csv(path: str | Path, n: int = 3000, seed: int = 2022) -> None:
    rows = synthetic_issues(n, seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["url", "label", "title", "body", "author", "created_at"])
        writer.writeheader()
        writer.writerows(rows)


def separable_examples(n: int = 32, seed: int = 0) -> list[CleanExample]:
    """Short texts whose class is fixed by which keyword pool they draw from.

    Every third example cycles through the classes, so all three are present.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = i % len(LABEL_NAMES)
        words = _words(rng, _CLASS_WORDS[LABEL_NAMES[label]], int(rng.integers(2, 5)))
        words += _words(rng, _SHARED, int(rng.integers(1, 4)))
        order = rng.permutation(len(words))
        out.append(CleanExample(" ".join(words[j] for j in order), label))
    return out
