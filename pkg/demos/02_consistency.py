"""
Error shrinks with sample size
==============================

Repeat learn-and-align over a ladder of sample sizes and write the median
error per node to a TSV table for plotting elsewhere.
"""

import sys

from spectree import consistency_curve
from spectree.formats import write_curve
from spectree.zoo import acceptance_model

params, tree = acceptance_model()
ladder = [1_000, 10_000, 100_000]
curve = consistency_curve(params, tree, ladder, trials=3, seed=0)

for N, err in curve.medians().items():
    print(f"N={N:>7}  worst-node median Frobenius error {err:.4f}")

# columns: N, node, trials, failures, median, q25, q75, min, max
write_curve(sys.stdout, curve, tree)
