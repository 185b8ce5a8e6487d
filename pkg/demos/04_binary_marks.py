"""
Multi-track binary data
=======================

Each node may observe several on/off marks per position (for instance, a
handful of binarised signal tracks).  ``k`` marks pack into one symbol in
``[0, 2^k)`` with mark ``j`` as bit ``j``, and observation files can store
them as 0/1 strings.
"""

import os
import tempfile

import numpy as np

from spectree import TreeStructure, learn, random_params, sample_triples
from spectree.evaluation import compare_models
from spectree.formats import pack_marks, read_observations, unpack_marks, write_observations

marks = np.array([[1, 0, 1], [0, 0, 0], [1, 1, 1]])
symbols = pack_marks(marks)
print("marks -> symbols:", symbols, "-> back:", unpack_marks(symbols, 3).tolist())

tree = TreeStructure.star(3, names=("cellA", "cellB", "cellC"))
params = random_params(tree, 2, 8, 3, separation=8.0, stickiness=6.0, parent_pull=3.0)
batch, _ = sample_triples(params, tree, 100_000, seed=2)

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "marks.tsv")
    write_observations(path, batch, ["cellA", "cellB", "cellC"], marks=3)
    with open(path) as fh:
        print("".join(fh.readline() for _ in range(10)))
    back, names = read_observations(path)

res = learn(back, tree, 2)
print("max aligned O error:", round(compare_models(params, res.params, tree).max_obs_fro, 4))
