"""
Cleaning and splitting issue text
=================================

Title and body are joined, every kind of line break or tab becomes a
space, and runs of spaces collapse. The split is a seeded shuffle that any
language can reproduce.
"""

from pathlib import Path

from issuebert.corpus import IssueLabel, IssueRecord, class_counts, parse_csv, preprocess, split

# A raw issue straight from a tracker, with Windows line endings and a tab.
record = IssueRecord(IssueLabel.BUG, "App crashes", "Steps:\r\n1. open\tsettings\n\n2. click  save")
print(repr(preprocess(record).text))

# The bundled sample is synthetic, with the class mix of the real data set.
csv_path = Path(__file__).resolve().parents[1] / "data" / "sample_issues.csv"
examples = [preprocess(r) for r in parse_csv(csv_path)]
print(len(examples), "issues:", class_counts(examples))

# 80/20 split with the default seed. The same seed always gives the same split.
parts = split(examples, 0.8, seed=42)
print("train", class_counts(parts.train))
print("validation", class_counts(parts.validation))
assert split(examples, 0.8, seed=42) == parts
