"""
Recomputing a published results table
=====================================

F-scores follow from recall and precision, and the micro average follows
from per-class recalls and supports. Recomputing them checks whether a
published table is internally consistent.
"""

from issuebert.metrics import ClassScores, MetricsReport, f_score, render_report

support = {"bug": 40_152, "enhancement": 33_290, "question": 7_076}
published = {
    "fastText": {"bug": (0.816, 0.831, 0.831), "enhancement": (0.845, 0.816, 0.831), "question": (0.350, 0.652, 0.456)},
    "seBERT": {"bug": (0.906, 0.866, 0.886), "enhancement": (0.877, 0.864, 0.871), "question": (0.487, 0.731, 0.584)},
}
micro = {"fastText": 0.816, "seBERT": 0.857}

for model, rows in published.items():
    for cls, (r, p, f) in rows.items():
        print(f"{model:8s} {cls:12s} F printed {100 * f:5.1f}  recomputed {100 * f_score(r, p):6.2f}")
    weighted = sum(rows[c][0] * n for c, n in support.items()) / sum(support.values())
    print(f"{model:8s} micro average printed {100 * micro[model]:.1f}  recomputed {100 * weighted:.2f}")

# The fastText bug F-score and micro average do not follow from the other
# printed numbers; the seBERT column is consistent.

reports = {
    name: MetricsReport({c: ClassScores(*v) for c, v in rows.items()}, micro[name], support)
    for name, rows in published.items()
}
print(render_report(reports))
