"""Slow, direct reference computations used to check the library.

Everything here works from the model definition by enumerating hidden
configurations with plain loops, so it shares no code path with the
meta-chain or projection machinery under test.
"""

import itertools

import numpy as np


def config_probability(params, tree, Z):
    """P(z) for a full hidden configuration ``Z[node, t]``."""
    D, L = Z.shape
    pr = 1.0
    for v in range(D):
        par = tree.parent(v)
        for t in range(L):
            if t == 0:
                pr *= params.init[v][Z[v, 0]] if par < 0 else params.init[v][Z[v, 0], Z[par, 0]]
            elif par < 0:
                pr *= params.trans[v][Z[v, t], Z[v, t - 1]]
            else:
                pr *= params.trans[v][Z[v, t], Z[v, t - 1], Z[par, t]]
    return pr


def joint_states(params, tree, L=3):
    """Array ``J[z_{0,0}, ..., z_{0,L-1}, z_{1,0}, ...]``: node-major, time-minor."""
    D, m = tree.size, params.m
    J = np.zeros((m,) * (D * L))
    for flat in itertools.product(range(m), repeat=D * L):
        Z = np.array(flat).reshape(D, L)
        J[flat] = config_probability(params, tree, Z)
    return J


def dense_moment(params, tree, modes, J=None, L=3):
    """Unprojected moment over meta-observations, built from the full joint.

    ``modes`` is a list of ``(nodes, lag)`` with lag in 1..L.
    """
    D = tree.size
    if J is None:
        J = joint_states(params, tree, L)
    axis = lambda v, lag: v * L + (lag - 1)
    keep = sorted({axis(v, lag) for nodes, lag in modes for v in nodes})
    drop = tuple(a for a in range(D * L) if a not in keep)
    marg = J.sum(axis=drop)
    letters = "abcdefghijklmnopqrstuvwxyz"
    state = {a: letters[k] for k, a in enumerate(keep)}
    subs, ops, outs, dims = ["".join(state[a] for a in keep)], [marg], [], []
    k = len(keep)
    for nodes, lag in modes:
        d = 1
        for v in nodes:
            f = letters[k].upper()
            k += 1
            subs.append(f + state[axis(v, lag)])
            ops.append(params.obs[v])
            outs.append(f)
            d *= params.n
        dims.append(d)
    out = np.einsum(",".join(subs) + "->" + "".join(outs), *ops)
    return out.reshape(dims)


def count_moment(batch, modes, window_rows):
    """Empirical moment by explicit counting over windows ``window_rows[v] (N, 3)``."""
    n = batch.n
    dims = [n ** len(nodes) for nodes, _ in modes]
    out = np.zeros(dims)
    N = window_rows[0].shape[0]
    for i in range(N):
        idx = []
        for nodes, lag in modes:
            k = 0
            for v in nodes:
                k = k * n + window_rows[v][i, lag - 1]
            idx.append(k)
        out[tuple(idx)] += 1
    return out / N


def path_posteriors(params, tree, obs_seq, path, node):
    """Posterior of ``node`` at each time given only the observations of ``path``.

    ``obs_seq[v]`` is a length-L symbol sequence.  Enumerates every hidden
    configuration of the whole tree.
    """
    D, m = tree.size, params.m
    L = len(obs_seq[0])
    post = np.zeros((L, m))
    for flat in itertools.product(range(m), repeat=D * L):
        Z = np.array(flat).reshape(D, L)
        pr = config_probability(params, tree, Z)
        for v in path:
            for t in range(L):
                pr *= params.obs[v][obs_seq[v][t], Z[v, t]]
        for t in range(L):
            post[t, Z[node, t]] += pr
    return post / post.sum(axis=1, keepdims=True)


def state_marginal(params, tree, node, t, L=3):
    """P(z_t^node) by enumeration."""
    J = joint_states(params, tree, L)
    a = node * L + (t - 1)
    return J.sum(axis=tuple(k for k in range(J.ndim) if k != a))


def orthogonal_tensor(rng, m, ratio=10.0):
    """Symmetric ``sum_i lam_i v_i^{x3}`` with orthonormal ``v_i`` and ``max/min lam <= ratio``."""
    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    lam = rng.uniform(1.0, ratio, size=m)
    G = np.einsum("r,ir,jr,kr->ijk", lam, Q, Q, Q)
    return G, lam, Q


def match_columns(V_true, V_est):
    """Max column error after greedy best-match pairing (columns are unit vectors)."""
    err = 0.0
    used = set()
    for i in range(V_true.shape[1]):
        dists = [np.linalg.norm(V_true[:, i] - V_est[:, j]) if j not in used else np.inf
                 for j in range(V_est.shape[1])]
        j = int(np.argmin(dists))
        used.add(j)
        err = max(err, dists[j])
    return err
