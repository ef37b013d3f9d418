"""
The desk-scale benchmark through the command line
=================================================

The same steps a user would type: prepare the bundled sample, build a
vocabulary, train both models, then compare them in one table. Output goes
to ``runs/benchmark``. The run takes about half a minute on one core.
"""

from pathlib import Path

from issuebert.cli import main

root = Path(__file__).resolve().parents[1]
run = root / "runs" / "benchmark"


def step(*argv):
    print("$ issuebert", " ".join(str(a) for a in argv))
    code = main([str(a) for a in argv])
    if code:
        raise SystemExit(code)


step("prep", "--input", root / "data/sample_issues.csv", "--output", run / "data")
step("build-vocab", "--input", run / "data/train.jsonl", "--size", 1000, "--output", run / "vocab.txt")
step("train", "--config", root / "configs/benchmark.json", "--model", "transformer")
step("train", "--config", root / "configs/benchmark.json", "--model", "baseline")
step("eval", "--checkpoint", run / "transformer.ckpt", "--checkpoint", run / "baseline.ckpt",
     "--data", run / "data/validation.jsonl")
step("predict", "--checkpoint", run / "transformer.ckpt", "--text", "I think I found a bug!")
