"""WordPiece-style tokenization with a fixed 128-token input cap."""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import VocabError

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP)
CONTINUATION = "##"
MAX_LEN = 128
MAX_WORD_CHARS = 100


class Vocabulary:
    """Immutable token table; a token's id is its position."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens: tuple[str, ...] = tuple(tokens)
        self.index: dict[str, int] = {}
        for i, tok in enumerate(self.tokens):
            if tok in self.index:
                raise VocabError(f"duplicate token {tok!r} at lines {self.index[tok] + 1} and {i + 1}")
            self.index[tok] = i
        for special in SPECIAL_TOKENS:
            if special not in self.index:
                raise VocabError(f"vocabulary is missing special token {special}")
        if self.index[PAD] != 0:
            raise VocabError(f"{PAD} must have id 0, found {self.index[PAD]}")
        self.pad_id = self.index[PAD]
        self.unk_id = self.index[UNK]
        self.cls_id = self.index[CLS]
        self.sep_id = self.index[SEP]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        return self.index[token]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for tok in self.tokens:
                fh.write(tok + "\n")


def load_vocab(path: str | Path) -> Vocabulary:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return Vocabulary([line.rstrip("\r") for line in lines])


def _is_punctuation(ch: str) -> bool:
    cp = ord(ch)
    # ASCII symbols such as "$", "^" and "`" count as punctuation too.
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


def pre_tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and isolate every punctuation character."""
    words = []
    for chunk in text.lower().split():
        current = []
        for ch in chunk:
            if _is_punctuation(ch):
                if current:
                    words.append("".join(current))
                    current = []
                words.append(ch)
            else:
                current.append(ch)
        if current:
            words.append("".join(current))
    return words


def wordpiece(word: str, vocab: Vocabulary | set[str] | dict[str, int]) -> list[str] | None:
    """Split ``word`` into vocabulary pieces, longest match first.

    At every position the longest matching piece is tried first; a dead end
    backtracks to the next shorter piece. Returns ``None`` when no tiling exists.
    With every single character in the vocabulary this never backtracks and
    is plain greedy WordPiece.
    """
    if len(word) > MAX_WORD_CHARS:
        return None
    n = len(word)
    dead: set[int] = set()

    def tile(start: int) -> list[str] | None:
        if start == n:
            return []
        if start in dead:
            return None
        for end in range(n, start, -1):
            piece = word[start:end] if start == 0 else CONTINUATION + word[start:end]
            if piece in vocab:
                rest = tile(end)
                if rest is not None:
                    return [piece] + rest
        dead.add(start)
        return None

    return tile(0) if n else []


@dataclass(frozen=True)
class Encoding:
    ids: tuple[int, ...]
    attention_mask: tuple[int, ...]
    real_len: int

    def to_json(self) -> str:
        return json.dumps({"ids": list(self.ids), "mask": list(self.attention_mask)})


def tokenize(text: str, vocab: Vocabulary) -> list[str]:
    pieces = []
    for word in pre_tokenize(text):
        tiled = wordpiece(word, vocab)
        pieces.extend(tiled if tiled is not None else [UNK])
    return pieces


def encode(text: str, vocab: Vocabulary, max_len: int = MAX_LEN) -> Encoding:
    if max_len < 2:
        raise ValueError(f"max_len must be at least 2, got {max_len}")
    # Keep the head of the text; the tail is what gets cut.
    body = [vocab.index[p] for p in tokenize(text, vocab)][: max_len - 2]
    ids = [vocab.cls_id, *body, vocab.sep_id]
    real_len = len(ids)
    pad = max_len - real_len
    return Encoding(tuple(ids + [vocab.pad_id] * pad), (1,) * real_len + (0,) * pad, real_len)


def build_vocab(texts: Iterable[str], target_size: int) -> Vocabulary:
    """Frequency-based vocabulary over normalized texts.

    Order: the four special tokens, every observed character (word-initial and
    ``##`` form), then whole words and ``##`` suffixes of length >= 2 by
    descending count, ties broken lexicographically. Characters are always
    kept, so the result can exceed ``target_size`` on very diverse input.
    """
    texts = list(texts)
    if not texts:
        raise VocabError("cannot build a vocabulary from an empty corpus")
    if target_size < len(SPECIAL_TOKENS) + 26:
        raise VocabError(f"target_size must be at least 30, got {target_size}")
    word_counts = Counter(w for t in texts for w in pre_tokenize(t))
    chars = sorted({ch for w in word_counts for ch in w})
    tokens = list(SPECIAL_TOKENS)
    tokens += chars
    tokens += [CONTINUATION + ch for ch in chars]
    seen = set(tokens)

    candidates: Counter[str] = Counter()
    for w, c in word_counts.items():
        if len(w) > 1:
            candidates[w] += c
        for i in range(1, len(w) - 1):
            candidates[CONTINUATION + w[i:]] += c
    for tok, _ in sorted(candidates.items(), key=lambda kv: (-kv[1], kv[0])):
        if len(tokens) >= target_size:
            break
        if tok not in seen:
            tokens.append(tok)
            seen.add(tok)
    return Vocabulary(tokens)
