"""Tree structures, THS-HMM parameters, validation and rank diagnostics.

Conventions
-----------
Nodes are integers ``0 .. D-1``; ``parents[root] == -1``.  For every node ``u``:

* ``obs[u]`` is ``n x m`` with ``obs[u][x, z] = P(x_t^u = x | z_t^u = z)``.
* The root's ``trans`` entry is ``m x m`` with ``T[next, prev]``.
* Non-root ``trans`` entries are ``m x m x m`` with axes
  ``(next_state, prev_state, parent_next_state)``.
* The root's ``init`` entry is an ``m``-vector; non-root entries are ``m x m``
  with ``W[z_1^u, z_1^parent]``.

Meta-states over a root-first path are indexed with the root as the most
significant digit, matching :func:`spectree.tensor_core.kron`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tensor_core import kron_all, singular_values

PROB_ATOL = 1e-9
RANK_THRESHOLD = 1e-8
META_STATE_CAP = 4096


class ModelError(ValueError):
    """Malformed tree or parameters."""


class CapExceeded(ModelError):
    """An exact computation would enumerate more meta-states than allowed."""


@dataclass(frozen=True)
class TreeStructure:
    parents: tuple
    names: Optional[tuple] = None

    def __post_init__(self):
        parents = tuple(int(p) for p in self.parents)
        object.__setattr__(self, "parents", parents)
        D = len(parents)
        if D == 0:
            raise ModelError("tree has no nodes")
        roots = [u for u, p in enumerate(parents) if p < 0]
        if len(roots) != 1:
            raise ModelError(f"tree must have exactly one root, found {len(roots)}")
        for u, p in enumerate(parents):
            if p >= D:
                raise ModelError(f"node {u} has unknown parent {p}")
        # reachability doubles as the acyclicity check
        seen = set(self._bfs(roots[0]))
        if len(seen) != D:
            missing = sorted(set(range(D)) - seen)
            raise ModelError(f"nodes {missing} are not reachable from the root (cycle?)")
        if self.names is not None:
            names = tuple(str(s) for s in self.names)
            if len(names) != D:
                raise ModelError("names must have one entry per node")
            if len(set(names)) != D:
                raise ModelError("node names must be unique")
            object.__setattr__(self, "names", names)

    def _bfs(self, root):
        children = [[] for _ in self.parents]
        for u, p in enumerate(self.parents):
            if p >= 0:
                children[p].append(u)
        order, queue = [], deque([root])
        while queue:
            u = queue.popleft()
            order.append(u)
            queue.extend(children[u])
        return order

    @classmethod
    def star(cls, D: int, names=None) -> "TreeStructure":
        return cls((-1,) + (0,) * (D - 1), names)

    @classmethod
    def chain(cls, d: int, names=None) -> "TreeStructure":
        return cls(tuple(range(-1, d - 1)), names)

    @property
    def size(self) -> int:
        return len(self.parents)

    @property
    def root(self) -> int:
        return self.parents.index(-1)

    def parent(self, u: int) -> int:
        return self.parents[self._check(u)]

    def children(self, u: int) -> list:
        self._check(u)
        return [v for v, p in enumerate(self.parents) if p == u]

    def topological_order(self) -> list:
        """Breadth-first order from the root; parents precede children."""
        return self._bfs(self.root)

    def leaves(self) -> list:
        return [u for u in range(self.size) if not self.children(u)]

    def path_to(self, u: int) -> list:
        """Root-first list of the nodes from the root down to ``u``."""
        self._check(u)
        path = [u]
        while self.parents[path[-1]] >= 0:
            path.append(self.parents[path[-1]])
        return path[::-1]

    def depth(self, u: Optional[int] = None) -> int:
        """Number of nodes on the path to ``u``; the tree depth if ``u`` is None."""
        if u is None:
            return max(len(self.path_to(v)) for v in range(self.size))
        return len(self.path_to(u))

    def closure(self, nodes) -> list:
        """Smallest root-containing connected node set covering ``nodes``, in topological order."""
        keep = set()
        for u in nodes:
            keep.update(self.path_to(u))
        return [u for u in self.topological_order() if u in keep]

    def label(self, u: int) -> str:
        return self.names[u] if self.names is not None else str(u)

    def index_of(self, label) -> int:
        if self.names is not None and str(label) in self.names:
            return self.names.index(str(label))
        try:
            u = int(label)
        except (TypeError, ValueError):
            raise ModelError(f"unknown node {label!r}") from None
        return self._check(u)

    def _check(self, u) -> int:
        if not isinstance(u, (int, np.integer)) or not 0 <= u < self.size:
            raise ModelError(f"unknown node id {u!r}")
        return int(u)


@dataclass
class ThsHmmParams:
    m: int
    n: int
    obs: list
    trans: list
    init: list

    def copy(self) -> "ThsHmmParams":
        return ThsHmmParams(self.m, self.n, [o.copy() for o in self.obs],
                            [t.copy() for t in self.trans], [w.copy() for w in self.init])

    def permuted(self, tree: TreeStructure, perms) -> "ThsHmmParams":
        """Relabel hidden states: new state ``k`` of node ``u`` is old state ``perms[u][k]``."""
        perms = [np.asarray(p, dtype=int) for p in perms]
        out = self.copy()
        for u in range(tree.size):
            p = perms[u]
            out.obs[u] = self.obs[u][:, p]
            if u == tree.root:
                out.trans[u] = self.trans[u][np.ix_(p, p)]
                out.init[u] = self.init[u][p]
            else:
                q = perms[tree.parent(u)]
                out.trans[u] = self.trans[u][np.ix_(p, p, q)]
                out.init[u] = self.init[u][np.ix_(p, q)]
        return out


@dataclass(frozen=True)
class Violation:
    node: int
    item: str
    where: tuple
    message: str

    def __str__(self):
        return f"node {self.node} {self.item}{list(self.where)}: {self.message}"


def validate(params: ThsHmmParams, tree: TreeStructure, atol: float = PROB_ATOL) -> list:
    """Return every shape/stochasticity violation; an empty list means valid."""
    out = []
    m, n = params.m, params.n
    for name in ("obs", "trans", "init"):
        if len(getattr(params, name)) != tree.size:
            out.append(Violation(-1, name, (), f"expected {tree.size} entries"))
    if out:
        return out

    def check(u, item, arr, shape, axis):
        arr = np.asarray(arr, dtype=float)
        if arr.shape != shape:
            out.append(Violation(u, item, (), f"shape {arr.shape} != {shape}"))
            return
        if not np.all(np.isfinite(arr)):
            out.append(Violation(u, item, (), "non-finite entries"))
            return
        for idx in zip(*np.nonzero(arr < -atol)):
            out.append(Violation(u, item, tuple(int(i) for i in idx),
                                 f"negative entry {arr[idx]:.3g}"))
        sums = arr.sum(axis=axis)
        bad = np.abs(sums - 1.0) > atol
        for idx in zip(*np.nonzero(np.atleast_1d(bad))):
            s = np.atleast_1d(sums)[idx]
            out.append(Violation(u, item, tuple(int(i) for i in idx),
                                 f"sums to {s:.6g} along the conditional axis"))

    for u in range(tree.size):
        check(u, "obs", params.obs[u], (n, m), 0)
        if u == tree.root:
            check(u, "trans", params.trans[u], (m, m), 0)
            check(u, "init", params.init[u], (m,), 0)
        else:
            check(u, "trans", params.trans[u], (m, m, m), 0)
            check(u, "init", params.init[u], (m, m), 0)
    return out


def ensure_valid(params: ThsHmmParams, tree: TreeStructure) -> None:
    problems = validate(params, tree)
    if problems:
        listing = "; ".join(str(v) for v in problems[:5])
        more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
        raise ModelError(f"invalid parameters: {listing}{more}")


def path_to(tree: TreeStructure, u: int) -> list:
    return tree.path_to(u)


# ---------------------------------------------------------------------------
# meta-chain views of a root-closed node set


def _check_closed(tree, nodes):
    nodes = list(nodes)
    pos = {v: k for k, v in enumerate(nodes)}
    for k, v in enumerate(nodes):
        p = tree.parent(v)
        if p >= 0 and (p not in pos or pos[p] >= k):
            raise ModelError(f"node set {nodes} is not root-closed in topological order")
    return nodes, pos


def meta_cap_check(m: int, size: int, cap: int = META_STATE_CAP) -> None:
    if m ** size > cap:
        raise CapExceeded(f"{m}^{size} = {m ** size} meta-states exceeds the cap of {cap}")


def meta_initial(params: ThsHmmParams, tree: TreeStructure, nodes, cap: int = META_STATE_CAP) -> np.ndarray:
    """Joint distribution of ``z_1`` over a root-closed node set (root-first index)."""
    nodes, pos = _check_closed(tree, nodes)
    meta_cap_check(params.m, len(nodes), cap)
    m = params.m
    joint = np.ones((m,) * len(nodes))
    for k, v in enumerate(nodes):
        shape = [1] * len(nodes)
        if v == tree.root:
            shape[k] = m
            joint = joint * params.init[v].reshape(shape)
        else:
            W = params.init[v]
            kp = pos[tree.parent(v)]
            shape[k] = m
            shape[kp] = m
            # parent axis precedes the child axis positionally
            joint = joint * W.T.reshape(shape)
    return joint.reshape(-1)


def meta_transition(params: ThsHmmParams, tree: TreeStructure, nodes, cap: int = META_STATE_CAP) -> np.ndarray:
    """``T^S[next, prev]`` for the coalesced chain over a root-closed node set."""
    nodes, pos = _check_closed(tree, nodes)
    meta_cap_check(params.m, len(nodes), cap)
    m, s = params.m, len(nodes)
    # axes 0..s-1 are next states, s..2s-1 previous states
    joint = np.ones((m,) * (2 * s))
    for k, v in enumerate(nodes):
        shape = [1] * (2 * s)
        shape[k] = m
        shape[s + k] = m
        if v == tree.root:
            joint = joint * params.trans[v].reshape(shape)
        else:
            shape[pos[tree.parent(v)]] = m
            # positional axis order is (parent_next, next, prev)
            joint = joint * params.trans[v].transpose(2, 0, 1).reshape(shape)
    return joint.reshape(m ** s, m ** s)


def meta_emission(params: ThsHmmParams, nodes) -> np.ndarray:
    return kron_all(params.obs[v] for v in nodes)


def stationary_distribution(T: np.ndarray) -> np.ndarray:
    """Stationary vector of a column-stochastic matrix ``T[next, prev]``."""
    vals, vecs = np.linalg.eig(T)
    k = int(np.argmin(np.abs(vals - 1.0)))
    v = np.real(vecs[:, k])
    v = v / v.sum()
    return np.clip(v, 0.0, None) / np.clip(v, 0.0, None).sum()


# ---------------------------------------------------------------------------
# rank conditions


@dataclass
class RankReport:
    threshold: float
    sigma_obs: dict = field(default_factory=dict)
    sigma_pair: dict = field(default_factory=dict)
    sigma_path: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)

    def node_pass(self, u) -> bool:
        return self.sigma_obs[u] >= self.threshold and self.sigma_pair[u] >= self.threshold

    def path_pass(self, u) -> bool:
        return self.sigma_path[u] >= self.threshold

    @property
    def ok(self) -> bool:
        return all(self.node_pass(u) and self.path_pass(u) for u in self.sigma_obs)


def range_basis(O: np.ndarray) -> np.ndarray:
    """Orthonormal ``n x m`` basis whose span contains ``range(O)``."""
    U, _, _ = np.linalg.svd(O, full_matrices=False)
    return U


def check_rank_conditions(params: ThsHmmParams, tree: TreeStructure,
                          threshold: float = RANK_THRESHOLD,
                          cap: int = META_STATE_CAP) -> RankReport:
    """Smallest relevant singular values for the node-wise and path-wise conditions.

    The population co-occurrence matrices are evaluated in the orthonormal
    product basis of the emission ranges, which preserves their singular
    values exactly while keeping the cost at ``m^|H|`` per side.
    """
    from .moments import PopulationMoments

    ensure_valid(params, tree)
    m = params.m
    for u in range(tree.size):
        meta_cap_check(m, tree.depth(u), cap)
    pop = PopulationMoments(params, tree, cap=cap)
    bases = {u: range_basis(params.obs[u]) for u in range(tree.size)}
    report = RankReport(threshold=threshold)
    for u in range(tree.size):
        H = tuple(tree.path_to(u))
        report.paths[u] = H
        s = singular_values(params.obs[u])
        report.sigma_obs[u] = float(s[m - 1]) if s.size >= m else 0.0
        P21 = pop.moment([((u,), 2), ((u,), 1)], bases)
        report.sigma_pair[u] = float(singular_values(P21)[m - 1])
        P12 = pop.moment([(H, 1), (H, 2)], bases)
        report.sigma_path[u] = float(singular_values(P12)[m ** len(H) - 1])
    return report


# ---------------------------------------------------------------------------
# parameter construction helpers


def _normalize(a, axis=0):
    a = np.asarray(a, dtype=float)
    return a / a.sum(axis=axis, keepdims=True)


def uniform_params(tree: TreeStructure, m: int, n: int) -> ThsHmmParams:
    obs = [np.full((n, m), 1.0 / n) for _ in range(tree.size)]
    trans, init = [], []
    for u in range(tree.size):
        if u == tree.root:
            trans.append(np.full((m, m), 1.0 / m))
            init.append(np.full(m, 1.0 / m))
        else:
            trans.append(np.full((m, m, m), 1.0 / m))
            init.append(np.full((m, m), 1.0 / m))
    return ThsHmmParams(m, n, obs, trans, init)


def random_params(tree: TreeStructure, m: int, n: int, rng=None, *,
                  separation: float = 4.0, stickiness: float = 3.0,
                  parent_pull: float = 2.0, concentration: float = 1.0) -> ThsHmmParams:
    """Draw a random, reasonably well-conditioned THS-HMM.

    Emission column ``k`` puts extra Dirichlet mass ``separation`` on a block
    of symbols owned by state ``k``; transitions favour staying put
    (``stickiness``) and following the parent's current state
    (``parent_pull``).  Larger values give better-separated models.
    """
    if m > n:
        raise ModelError(f"m={m} hidden states cannot be identified from n={n} symbols")
    rng = np.random.default_rng(rng)
    alpha = np.full((n, m), concentration)
    owners = np.arange(n) % m
    alpha[np.arange(n), owners] += separation
    obs, trans, init = [], [], []
    for u in range(tree.size):
        perm = rng.permutation(n)
        O = np.stack([rng.dirichlet(alpha[perm, k]) for k in range(m)], axis=1)
        obs.append(O)
        if u == tree.root:
            base = np.ones((m, m)) * concentration + stickiness * np.eye(m)
            trans.append(np.stack([rng.dirichlet(base[:, j]) for j in range(m)], axis=1))
            init.append(rng.dirichlet(np.full(m, 2.0 * concentration + 1.0)))
        else:
            T = np.empty((m, m, m))
            for j in range(m):
                for q in range(m):
                    a = np.full(m, concentration)
                    a[j] += stickiness
                    a[q] += parent_pull
                    T[:, j, q] = rng.dirichlet(a)
            trans.append(T)
            W = np.empty((m, m))
            for q in range(m):
                a = np.full(m, concentration + 1.0)
                a[q] += parent_pull
                W[:, q] = rng.dirichlet(a)
            init.append(W)
    return ThsHmmParams(m, n, obs, trans, init)
