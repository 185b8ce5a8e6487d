"""Initial distributions and transition tensors from learned emission matrices.

Every quantity is a low-order moment pushed through the pseudoinverses of the
learned emission matrices.  The moments are taken with those pseudoinverses
as per-node projections, so the ``n x n x n`` raw triple is never built.
Hidden-state labels follow the column order of the learned emission matrices,
which keeps all nodes mutually consistent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import RunConfig
from .learner import LearnedObservations, LearnerError, simplex_project, learn_observations
from .model import ThsHmmParams, TreeStructure
from .moments import _source
from .tensor_core import pinv, singular_values

logger = logging.getLogger(__name__)


@dataclass
class LearnedTransitions:
    init: dict
    joint: dict
    trans: dict
    warnings: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)


def _pinv_proj(O: np.ndarray, config: RunConfig, node: int) -> np.ndarray:
    """``(O^+)^T`` as an ``n x m`` per-node projection; checks full column rank."""
    m = O.shape[1]
    s = singular_values(O)
    if s[m - 1] < config.rank_threshold:
        raise LearnerError(f"learned emission matrix has sigma_{m} = {s[m - 1]:.3g}; "
                           "not full column rank", node)
    return pinv(O, config.pinv_rtol).T


def normalize_columns(Q: np.ndarray, warnings: Optional[list] = None, label: str = "") -> np.ndarray:
    """Normalise along axis 0, then simplex-round every slice.

    Slices whose total is not positive become uniform.
    """
    Q = np.asarray(Q, dtype=float)
    m = Q.shape[0]
    flat = Q.reshape(m, -1)
    out = np.empty_like(flat)
    for j in range(flat.shape[1]):
        col = flat[:, j]
        total = col.sum()
        if not total > 1e-300:
            msg = f"{label} slice {np.unravel_index(j, Q.shape[1:])} has total {total:.3g}; using uniform"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            out[:, j] = 1.0 / m
        else:
            out[:, j] = simplex_project(col / total)
    return out.reshape(Q.shape)


def recover_root(data, O_root: np.ndarray, root: int, config: Optional[RunConfig] = None,
                 warnings: Optional[list] = None):
    """``(W^r, Q^r, T^r)``; ``Q^r[z2, z1]`` is the joint of two consecutive states."""
    config = config or RunConfig()
    src = _source(data, config.window)
    proj = {root: _pinv_proj(O_root, config, root)}
    W = src.moment([((root,), 1)], proj)
    Q = src.moment([((root,), 2), ((root,), 1)], proj)
    W = simplex_project(W)
    T = normalize_columns(Q, warnings, f"root {root} transition")
    return W, Q, T


def recover_nonroot(data, O_u: np.ndarray, O_parent: np.ndarray, u: int, parent: int,
                    config: Optional[RunConfig] = None, warnings: Optional[list] = None):
    """``(W^u, Q^u, T^u)`` for a non-root node.

    ``Q^u`` comes out as the joint over ``(z_2^u, z_2^parent, z_1^u)``; the
    returned ``T^u`` is normalised over ``z_2^u`` and reordered to the model
    axes ``(next, prev, parent_next)``.
    """
    config = config or RunConfig()
    src = _source(data, config.window)
    proj = {u: _pinv_proj(O_u, config, u), parent: _pinv_proj(O_parent, config, parent)}
    Wj = src.moment([((u,), 1), ((parent,), 1)], proj)
    Q = src.moment([((u,), 2), ((parent,), 2), ((u,), 1)], proj)
    W = normalize_columns(Wj, warnings, f"node {u} initial")
    T = normalize_columns(Q, warnings, f"node {u} transition").transpose(0, 2, 1)
    return W, Q, T


def recover_transitions(data, tree: TreeStructure, obs: dict,
                        config: Optional[RunConfig] = None) -> LearnedTransitions:
    config = config or RunConfig()
    src = _source(data, config.window)
    out = LearnedTransitions({}, {}, {})
    for u in tree.topological_order():
        needed = [u] if u == tree.root else [u, tree.parent(u)]
        if any(v not in obs for v in needed):
            out.failures[u] = "emission matrix unavailable for " + ", ".join(
                str(v) for v in needed if v not in obs)
            continue
        try:
            if u == tree.root:
                W, Q, T = recover_root(src, obs[u], u, config, out.warnings)
            else:
                p = tree.parent(u)
                W, Q, T = recover_nonroot(src, obs[u], obs[p], u, p, config, out.warnings)
        except LearnerError as exc:
            logger.error("transition recovery failed: %s", exc)
            out.failures[u] = str(exc)
            continue
        out.init[u], out.joint[u], out.trans[u] = W, Q, T
    return out


@dataclass
class LearnResult:
    params: Optional[ThsHmmParams]
    observations: LearnedObservations
    transitions: Optional[LearnedTransitions]
    failures: dict


def learn(data, tree: TreeStructure, m: int, config: Optional[RunConfig] = None) -> LearnResult:
    """Full pipeline: emission matrices, then initial and transition parameters.

    ``params`` is ``None`` when any node failed; the per-node results that did
    succeed remain available on ``observations``.
    """
    config = config or RunConfig()
    src = _source(data, config.window)
    learned = learn_observations(src, tree, m, config)
    trans = recover_transitions(src, tree, learned.obs, config)
    failures = {**trans.failures, **learned.failures}
    if failures:
        return LearnResult(None, learned, trans, failures)
    order = range(tree.size)
    params = ThsHmmParams(m, src.n, [learned.obs[u] for u in order],
                          [trans.trans[u] for u in order], [trans.init[u] for u in order])
    return LearnResult(params, learned, trans, failures)
