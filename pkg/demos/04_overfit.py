"""
Overfitting 32 separable examples
=================================

A two-layer encoder with hidden size 32 and the fastText-style baseline
both learn a small separable set perfectly. This shows that the forward
pass, the backward pass and the optimizer work together.
"""

import time

from issuebert import baseline as B
from issuebert import model as M
from issuebert import train as T
from issuebert.corpus import DatasetSplit
from issuebert.sample import separable_examples
from issuebert.tokenizer import build_vocab

examples = separable_examples(32, seed=0)
for ex in examples[:3]:
    print(ex.label, ex.text)
vocab = build_vocab([e.text for e in examples], 200)

model = M.init(M.EncoderConfig(layers=2, hidden=32, heads=4, vocab_size=len(vocab)), seed=0, vocab=vocab)
start = time.perf_counter()
best, logs = T.train(
    model,
    DatasetSplit(examples, examples, 0, 1.0),
    vocab,
    T.TrainConfig(lr=1e-3, epochs=200),
)
print(f"transformer: best epoch {T.best_epoch(logs).epoch}, "
      f"accuracy {T.evaluate(best, examples, vocab)[0]:.3f}, {time.perf_counter() - start:.1f}s")
for entry in logs[::25]:
    print("  ", entry.csv())

bow = B.bow_train(examples, B.BowConfig(epochs=200))
print(f"baseline: accuracy {B.evaluate(bow, examples)[0]:.3f}")

label, probs = M.predict(best, vocab, examples[0].text)
print(label.text, probs.round(3))
