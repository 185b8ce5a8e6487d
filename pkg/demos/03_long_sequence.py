"""
One long chain instead of many short ones
=========================================

With a single stationary run the moments are averaged over every window of
three consecutive steps.  Emissions and transitions are recovered as before.
The initial distribution is not: the first step of a window follows the
stationary law, so the learned ``W`` estimates that instead.
"""

import numpy as np

from spectree import compare_models, learn, sample_long
from spectree.config import RunConfig
from spectree.model import meta_transition, stationary_distribution
from spectree.zoo import acceptance_model

params, tree = acceptance_model()
batch, _ = sample_long(params, tree, 300_000, burn_in=1000, seed=1)

for window in ("overlap", "disjoint"):
    res = learn(batch, tree, params.m, RunConfig(window=window))
    cmp = compare_models(params, res.params, tree)
    print(f"{window:>8} windows: max O error (Frobenius) {cmp.max_obs_fro:.4f}, "
          f"max T error {max(cmp.trans_max.values()):.4f}")

res = learn(batch, tree, params.m)
aligned = compare_models(params, res.params, tree).aligned
pi = stationary_distribution(meta_transition(params, tree, [0]))
print("root W, true initial:", params.init[0])
print("root W, stationary:  ", np.round(pi, 3))
print("root W, learned:     ", np.round(aligned.init[0], 3))
