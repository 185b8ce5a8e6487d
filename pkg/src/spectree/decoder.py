"""Posterior decoding of hidden states.

The coalesced states of a root-to-leaf path form an ordinary HMM with
``m^|H|`` states, so each path is decoded with a forward-backward pass over
meta-states and every node takes its marginal from the deepest path that
contains it.  The evidence for a node is therefore the observations of that
path; siblings on other branches are not used.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .model import (META_STATE_CAP, ThsHmmParams, TreeStructure, ensure_valid,
                    meta_cap_check, meta_initial, meta_transition)
from .simulator import SequenceBatch, StateTrace
from .tensor_core import row_kron

logger = logging.getLogger(__name__)


@dataclass
class PosteriorTrace:
    posteriors: dict
    labels: dict
    paths: dict
    warnings: list = field(default_factory=list)


def decoding_paths(tree: TreeStructure) -> dict:
    """Map each node to the deepest root-to-leaf path containing it (lowest leaf id on ties)."""
    leaf_paths = {leaf: tree.path_to(leaf) for leaf in tree.leaves()}
    out = {}
    for u in range(tree.size):
        best = None
        for leaf in sorted(leaf_paths):
            path = leaf_paths[leaf]
            if u in path and (best is None or len(path) > len(best)):
                best = path
        out[u] = tuple(best)
    return out


def _meta_emissions(params, batch, path):
    """``(N, L, m^|H|)`` emission likelihoods of each meta-state."""
    N, L = batch.num_sequences, batch.length
    E = None
    for v in path:
        rows = params.obs[v][batch.symbols[v].reshape(-1)]
        E = rows if E is None else row_kron(E, rows)
    return E.reshape(N, L, -1)


def _forward_backward_scaled(rho, T, E, warnings):
    N, L, S = E.shape
    alpha = np.empty((N, L, S))
    scale = np.empty((N, L))
    a = rho[None, :] * E[:, 0]
    for t in range(L):
        if t > 0:
            a = (alpha[:, t - 1] @ T.T) * E[:, t]
        c = a.sum(axis=1)
        dead = ~(c > 0)
        if dead.any():
            warnings.append(f"zero likelihood at t={t} in {int(dead.sum())} sequence(s); "
                            "posterior set to uniform")
            a[dead] = 1.0 / S
            c[dead] = 1.0
        alpha[:, t] = a / c[:, None]
        scale[:, t] = c
    beta = np.ones((N, S))
    gamma = np.empty((N, L, S))
    for t in range(L - 1, -1, -1):
        if t < L - 1:
            beta = ((beta * E[:, t + 1]) @ T) / scale[:, t + 1][:, None]
            beta[~np.isfinite(beta)] = 1.0
        g = alpha[:, t] * beta
        z = g.sum(axis=1)
        bad = ~(z > 0)
        if bad.any():
            g[bad] = 1.0 / S
            z[bad] = 1.0
        gamma[:, t] = g / z[:, None]
    return gamma


def _forward_backward_log(rho, T, E, warnings):
    N, L, S = E.shape
    with np.errstate(divide="ignore"):
        logT = np.log(T)
        logE = np.log(E)
        logrho = np.log(rho)
    la = np.empty((N, L, S))
    la[:, 0] = logrho[None, :] + logE[:, 0]
    for t in range(1, L):
        la[:, t] = logsumexp(la[:, t - 1][:, None, :] + logT[None], axis=2) + logE[:, t]
    lb = np.zeros((N, L, S))
    for t in range(L - 2, -1, -1):
        lb[:, t] = logsumexp(logT.T[None] + (logE[:, t + 1] + lb[:, t + 1])[:, None, :], axis=2)
    lg = la + lb
    norm = logsumexp(lg, axis=2, keepdims=True)
    dead = ~np.isfinite(norm[..., 0])
    with np.errstate(invalid="ignore"):
        gamma = np.exp(lg - norm)
    if dead.any():
        warnings.append(f"zero likelihood at {int(dead.sum())} position(s); posterior set to uniform")
        gamma[dead] = 1.0 / S
    return gamma


def posterior_decode(params: ThsHmmParams, tree: TreeStructure, batch: SequenceBatch,
                     cap: int = META_STATE_CAP, log_space: bool = False) -> PosteriorTrace:
    ensure_valid(params, tree)
    if batch.num_nodes != tree.size:
        raise ValueError(f"batch has {batch.num_nodes} nodes, model has {tree.size}")
    if batch.n > params.n:
        raise ValueError(f"batch alphabet {batch.n} exceeds model alphabet {params.n}")
    m = params.m
    assignment = decoding_paths(tree)
    for path in set(assignment.values()):
        meta_cap_check(m, len(path), cap)
    trace = PosteriorTrace({}, {}, assignment)
    fb = _forward_backward_log if log_space else _forward_backward_scaled
    for path in sorted(set(assignment.values())):
        rho = meta_initial(params, tree, path, cap)
        T = meta_transition(params, tree, path, cap)
        E = _meta_emissions(params, batch, path)
        gamma = fb(rho, T, E, trace.warnings)
        N, L = gamma.shape[:2]
        G = gamma.reshape((N, L) + (m,) * len(path))
        for k, u in enumerate(path):
            if assignment[u] != path:
                continue
            other = tuple(2 + j for j in range(len(path)) if j != k)
            post = G.sum(axis=other) if other else G
            trace.posteriors[u] = post
            trace.labels[u] = post.argmax(axis=-1)
    for w in trace.warnings:
        logger.warning(w)
    return trace


def label_accuracy(trace: PosteriorTrace, truth: StateTrace, alignment: Optional[dict] = None) -> dict:
    """Per-node fraction of positions where the (aligned) argmax equals the true state.

    ``alignment[u]`` is a permutation with ``O_hat[:, perm] ~ O`` as returned by
    :func:`spectree.evaluation.align`; ``None`` means labels already agree.
    """
    out = {}
    for u, labels in trace.labels.items():
        true = np.asarray(truth.states[u])
        if true.shape != labels.shape:
            raise ValueError(f"node {u}: length mismatch {labels.shape} vs {true.shape}")
        pred = labels
        if alignment is not None:
            perm = np.asarray(alignment[u])
            inverse = np.empty_like(perm)
            inverse[perm] = np.arange(perm.size)
            pred = inverse[labels]
        out[u] = float(np.mean(pred == true))
    return out


def constant_baseline(truth: StateTrace) -> dict:
    """Best accuracy achievable by predicting one fixed state per node."""
    return {u: float(np.bincount(np.ravel(s), minlength=truth.m).max() / np.size(s))
            for u, s in enumerate(truth.states)}
