"""
Learning a small tree-structured HMM
====================================

A three-node star: one root chain and two child chains that each follow the
root.  We check that the model is learnable, sample from it, learn it back
and compare.
"""

import numpy as np

from spectree import check_rank_conditions, compare_models, learn, sample_triples
from spectree.zoo import acceptance_model

params, tree = acceptance_model()
print("nodes:", [tree.label(u) for u in range(tree.size)], "m =", params.m, "n =", params.n)

###############################################################################
# Learnability is a question about singular values.  Each node needs a
# full-rank emission matrix and pair moment, and each root path needs a
# full-rank co-occurrence matrix over its coalesced states.

report = check_rank_conditions(params, tree)
for u in range(tree.size):
    print(f"{tree.label(u):>6}  sigma_obs={report.sigma_obs[u]:.3f}  "
          f"sigma_pair={report.sigma_pair[u]:.3f}  sigma_path={report.sigma_path[u]:.4f}")
print("all conditions hold:", report.ok)

###############################################################################
# Draw independent length-3 windows and run the whole pipeline.

batch, truth = sample_triples(params, tree, 200_000, seed=0)
result = learn(batch, tree, params.m)

###############################################################################
# Hidden states come back in arbitrary order, so compare after matching
# columns of the emission matrices.

cmp = compare_models(params, result.params, tree)
for u in range(tree.size):
    a = cmp.alignments[u]
    print(f"{tree.label(u):>6}  perm={a.perm}  |O - O_hat|_F={a.error_fro:.4f}  "
          f"max|T - T_hat|={cmp.trans_max[u]:.4f}")

np.set_printoptions(precision=3, suppress=True)
print("true O(left):\n", params.obs[1])
print("learned O(left), aligned:\n", cmp.aligned.obs[1])
