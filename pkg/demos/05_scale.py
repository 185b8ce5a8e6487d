"""
Nine cell types, 256 symbols, six states
========================================

A star tree with a root and eight children, each emitting one of ``2^8``
symbols.  All moments live in the per-node ``m``-dimensional subspaces, so
the largest tracked buffer stays far below anything that grows like
``n^2`` per path.
"""

import time

from spectree import learn, sample_long, validate
from spectree.evaluation import compare_models
from spectree.tensor_core import allocation_probe
from spectree.zoo import scale_model

params, tree = scale_model()
t0 = time.perf_counter()
batch, _ = sample_long(params, tree, 100_000, seed=0)
print(f"sampled {batch.length} steps in {time.perf_counter() - t0:.1f}s")

t0 = time.perf_counter()
with allocation_probe() as probe:
    res = learn(batch, tree, params.m)
print(f"learned in {time.perf_counter() - t0:.1f}s; failures: {res.failures or 'none'}")
print("largest tracked buffer:", probe.peak, "elements, shape", probe.peak_shape)
print("learned model valid:", validate(res.params, tree) == [])
print("max aligned O error:", round(compare_models(params, res.params, tree).max_obs_fro, 4))
