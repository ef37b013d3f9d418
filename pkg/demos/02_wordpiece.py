"""
WordPiece tokenization
======================

Words are split into the longest vocabulary pieces first. Continuation
pieces carry a ``##`` prefix, and every encoding is framed by [CLS] and
[SEP] and padded to 128 positions.
"""

from issuebert.corpus import normalize_text, parse_csv, preprocess
from issuebert.tokenizer import build_vocab, encode, tokenize, wordpiece

texts = [
    "the parser crashes when the config file is missing",
    "crashing parsers and missing configs",
    "please add support for custom configs",
]
vocab = build_vocab(texts, 80)
print(len(vocab), "tokens, first ten:", vocab.tokens[:10])

for word in ("crashes", "configs", "parsers"):
    print(word, "->", wordpiece(word, vocab))

# Characters never seen during vocabulary building map to [UNK].
print(tokenize(normalize_text("Crash: ünïcode\tparser"), vocab))

enc = encode("the parser crashes", vocab)
print("real length", enc.real_len, "ids", enc.ids[: enc.real_len + 2], "...")
print("mask", enc.attention_mask[: enc.real_len + 2], "...")
