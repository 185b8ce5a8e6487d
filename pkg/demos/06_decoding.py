"""
Labelling hidden states
=======================

Decode with learned parameters, map learned state labels onto the true
ones and score per-state F1.
"""

import numpy as np

from spectree import align, f1_report, learn, posterior_decode, sample_long
from spectree.decoder import constant_baseline, label_accuracy
from spectree.zoo import acceptance_model

params, tree = acceptance_model()
train, _ = sample_long(params, tree, 200_000, seed=3)
test, truth = sample_long(params, tree, 20_000, seed=4)

learned = learn(train, tree, params.m).params
trace = posterior_decode(learned, tree, test)
perms = {u: align(params.obs[u], learned.obs[u]).perm for u in range(tree.size)}

acc = label_accuracy(trace, truth, perms)
base = constant_baseline(truth)
for u in range(tree.size):
    inverse = np.argsort(perms[u])
    scores = f1_report(inverse[trace.labels[u]], truth.states[u], params.m)
    f1s = ", ".join(f"state {k}: {e.f1:.3f}" for k, e in scores.items())
    print(f"{tree.label(u):>6}  accuracy {acc[u]:.3f} (constant {base[u]:.3f})  F1 {f1s}")
