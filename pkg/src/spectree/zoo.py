"""Named models used by the demos, the tests and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .model import ThsHmmParams, TreeStructure, ensure_valid, random_params


def _child_transition(m: int, stay: float, follow: float) -> np.ndarray:
    """``T[next, prev, parent]`` mixing persistence, parent-following and uniform noise."""
    T = np.full((m, m, m), (1.0 - stay - follow) / m)
    for prev in range(m):
        for par in range(m):
            T[prev, prev, par] += stay
            T[par, prev, par] += follow
    return T


def _root_transition(m: int, stay: float) -> np.ndarray:
    return np.full((m, m), (1.0 - stay) / (m - 1)) + np.eye(m) * (stay - (1.0 - stay) / (m - 1))


def acceptance_model():
    """Star tree with three nodes, ``m=2`` hidden states and ``n=6`` symbols."""
    tree = TreeStructure.star(3, names=("root", "left", "right"))
    profile = np.array([0.5, 0.3, 0.1, 0.05, 0.03, 0.02])
    orders = ([0, 1, 2, 3, 4, 5], [1, 0, 3, 2, 5, 4], [2, 0, 1, 4, 3, 5])
    obs = []
    for order in orders:
        col = profile[order]
        obs.append(np.stack([col, col[::-1]], axis=1))
    trans = [_root_transition(2, 0.9), _child_transition(2, 0.6, 0.3),
             _child_transition(2, 0.55, 0.35)]
    init = [np.array([0.6, 0.4]), np.array([[0.8, 0.2], [0.2, 0.8]]),
            np.array([[0.75, 0.3], [0.25, 0.7]])]
    params = ThsHmmParams(2, 6, obs, trans, init)
    ensure_valid(params, tree)
    return params, tree


def deterministic_model(tree: TreeStructure, m: int):
    """``m == n``, identity emissions, identity transitions and a fixed start.

    Every sequence is constant, so the model is fully predictable; it does
    not satisfy the path rank condition and is meant for exact sampling and
    decoding checks.
    """
    eye = np.eye(m)
    obs = [eye.copy() for _ in range(tree.size)]
    trans, init = [], []
    for u in range(tree.size):
        if u == tree.root:
            trans.append(eye.copy())
            w = np.zeros(m)
            w[0] = 1.0
            init.append(w)
        else:
            T = np.zeros((m, m, m))
            for prev in range(m):
                T[prev, prev, :] = 1.0
            trans.append(T)
            init.append(eye.copy())
    return ThsHmmParams(m, m, obs, trans, init)


def tiny_suite():
    """Six small models meeting both rank conditions, as ``(label, params, tree)``."""
    out = []
    shapes = (("single", TreeStructure.star(1)), ("chain2", TreeStructure.chain(2)),
              ("star3", TreeStructure.star(3)))
    seed = 0
    for label, tree in shapes:
        for m, n in ((2, 4), (3, 6)):
            params = random_params(tree, m, n, seed, separation=6.0, stickiness=6.0,
                                   parent_pull=3.0)
            out.append((f"{label}-m{m}-n{n}", params, tree))
            seed += 1
    return out


def scale_model(seed: int = 0):
    """Nine-node star with ``m=6`` states over ``n=256`` symbols."""
    tree = TreeStructure.star(9)
    params = random_params(tree, 6, 256, seed, separation=40.0, stickiness=20.0,
                           parent_pull=8.0, concentration=0.5)
    return params, tree
