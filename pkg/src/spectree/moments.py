"""Co-occurrence moments of observation triples.

A *mode* is a pair ``(nodes, lag)``: the meta-observation of ``nodes`` (a
root-first tuple) at position ``lag`` in {1, 2, 3} of a triple window.  A
moment over modes ``(A, B[, C])`` is the expected outer product of their
one-hot encodings, optionally projected per node: with ``proj = {v: M_v}``
the encoding of ``x^v`` becomes the row ``M_v[x^v]`` and a multi-node mode
uses the row-wise Kronecker product of those rows (root most significant).

With projections the cost per sample is the product of the projected mode
sizes; the ``n^|H|``-sized meta co-occurrence is never formed.  That is the
whole trick behind learning on long paths with large alphabets.

Two sources implement the same ``moment`` method:

* :class:`EmpiricalMoments` averages over the triples of a batch.
* :class:`PopulationMoments` sums the model's exact joint distribution and
  serves as the test oracle.
"""

from __future__ import annotations

import string
from typing import Mapping, Optional

import numpy as np

from .model import (META_STATE_CAP, CapExceeded, ThsHmmParams, TreeStructure,
                    meta_initial, meta_transition, stationary_distribution)
from .simulator import SequenceBatch
from .tensor_core import row_kron, track

# Keeps any per-chunk working buffer small; see EmpiricalMoments.moment.
CHUNK_ELEMENTS = 1 << 16
RAW_CAP = 1 << 24


class EmptyBatchError(ValueError):
    pass


def _normalize_modes(modes):
    out = []
    for nodes, lag in modes:
        nodes = (nodes,) if isinstance(nodes, (int, np.integer)) else tuple(int(v) for v in nodes)
        if lag not in (1, 2, 3):
            raise ValueError(f"lag {lag} outside the triple window")
        out.append((nodes, int(lag)))
    if not 1 <= len(out) <= 3:
        raise ValueError("moments of order 1 to 3 only")
    return out


def _mode_dims(modes, proj, n):
    dims = []
    for nodes, _ in modes:
        k = 1
        for v in nodes:
            k *= n if proj is None else proj[v].shape[1]
        dims.append(k)
    return dims


class _PairwiseSum:
    """Binary-counter pairwise summation of equally shaped partial sums."""

    def __init__(self):
        self._stack = []

    def add(self, x):
        level = 0
        while self._stack and self._stack[-1][0] == level:
            _, y = self._stack.pop()
            x = x + y
            level += 1
        self._stack.append((level, x))

    def total(self):
        out = None
        for _, x in reversed(self._stack):
            out = x if out is None else out + x
        return out


class EmpiricalMoments:
    """Moments averaged over the observation triples of a batch."""

    def __init__(self, batch: SequenceBatch, window: str = "overlap"):
        self.batch = batch
        self.n = batch.n
        self.window = window
        self._triples = batch.windows(window)
        self.sample_count = self._triples[0].shape[0]
        if self.sample_count == 0:
            raise EmptyBatchError("batch contains no observation triples")

    def _features(self, nodes, lag, proj, sl):
        F = None
        for v in nodes:
            rows = proj[v][self._triples[v][sl, lag - 1]]
            F = rows if F is None else row_kron(F, rows)
        return F

    def _raw(self, modes):
        dims = [self.n ** len(nodes) for nodes, _ in modes]
        size = int(np.prod(dims))
        if size > RAW_CAP:
            raise CapExceeded(f"raw moment with {size} entries exceeds {RAW_CAP}")
        idx = np.zeros(self.sample_count, dtype=np.int64)
        for nodes, lag in modes:
            for v in nodes:
                idx = idx * self.n + self._triples[v][:, lag - 1]
        counts = np.bincount(idx, minlength=size).astype(float)
        return track(counts.reshape(dims) / self.sample_count)

    def moment(self, modes, proj: Optional[Mapping] = None) -> np.ndarray:
        modes = _normalize_modes(modes)
        if proj is None:
            return self._raw(modes)
        dims = _mode_dims(modes, proj, self.n)
        N = self.sample_count
        # largest per-sample working row: the mode-(2,3) product for triples
        width = dims[-1] if len(dims) < 3 else dims[1] * dims[2]
        width = max(width, max(dims))
        chunk = max(1, min(N, CHUNK_ELEMENTS // width))
        acc = _PairwiseSum()
        for start in range(0, N, chunk):
            sl = slice(start, min(N, start + chunk))
            F = [track(self._features(nodes, lag, proj, sl)) for nodes, lag in modes]
            if len(F) == 1:
                part = F[0].sum(axis=0)
            elif len(F) == 2:
                part = F[0].T @ F[1]
            else:
                part = (F[0].T @ track(row_kron(F[1], F[2]))).reshape(dims)
            acc.add(track(part))
        return acc.total() / N


class PopulationMoments:
    """Exact moments of iid triples (``start='initial'``) or of the stationary chain."""

    def __init__(self, params: ThsHmmParams, tree: TreeStructure, start: str = "initial",
                 cap: int = META_STATE_CAP):
        if start not in ("initial", "stationary"):
            raise ValueError(f"unknown start {start!r}")
        self.params = params
        self.tree = tree
        self.n = params.n
        self.start = start
        self.cap = cap
        self.sample_count = float("inf")

    def _joint(self, nodes, times):
        """Joint state distribution over ``times`` x ``nodes``, axes time-major."""
        p, tree, m = self.params, self.tree, self.params.m
        s = len(nodes)
        if m ** (s * len(times)) > RAW_CAP:
            raise CapExceeded(f"joint over {s} nodes at {len(times)} times is too large")
        T = meta_transition(p, tree, nodes, self.cap)
        if self.start == "initial":
            rho = meta_initial(p, tree, nodes, self.cap)
        else:
            rho = stationary_distribution(T)
        J = np.linalg.matrix_power(T, times[0] - 1) @ rho
        for prev, t in zip(times, times[1:]):
            step = np.linalg.matrix_power(T, t - prev)
            J = J[..., None] * step.T.reshape((1,) * (J.ndim - 1) + step.T.shape)
        return J.reshape((m,) * (s * len(times)))

    def moment(self, modes, proj: Optional[Mapping] = None) -> np.ndarray:
        modes = _normalize_modes(modes)
        used = [(v, lag) for nodes, lag in modes for v in nodes]
        if len(set(used)) != len(used):
            raise ValueError("modes must not repeat a (node, lag) pair")
        closure = self.tree.closure({v for v, _ in used})
        s = len(closure)
        pos = {v: k for k, v in enumerate(closure)}
        times = sorted({lag for _, lag in modes})
        J = self._joint(closure, times)
        letters = iter(string.ascii_letters)
        state = [next(letters) for _ in range(len(times) * s)]
        operands, subs, out_sub, dims = [J], ["".join(state)], [], []
        for nodes, lag in modes:
            k = 1
            for v in nodes:
                E = self.params.obs[v] if proj is None else proj[v].T @ self.params.obs[v]
                f = next(letters)
                operands.append(E)
                subs.append(f + state[times.index(lag) * s + pos[v]])
                out_sub.append(f)
                k *= E.shape[0]
            dims.append(k)
        expr = ",".join(subs) + "->" + "".join(out_sub)
        out = np.einsum(expr, *operands, optimize="greedy")
        return out.reshape(dims)


# ---------------------------------------------------------------------------
# operation-level helpers


def _source(data, window="overlap"):
    if isinstance(data, (EmpiricalMoments, PopulationMoments)):
        return data
    if isinstance(data, SequenceBatch):
        return EmpiricalMoments(data, window)
    raise TypeError(f"cannot take moments of {type(data).__name__}")


def raw_pair(data, node_a: int, node_b: int, lag_a: int, lag_b: int, window="overlap") -> np.ndarray:
    """``n x n`` co-occurrence frequencies of ``(x_{lag_a}^a, x_{lag_b}^b)``."""
    return _source(data, window).moment([((node_a,), lag_a), ((node_b,), lag_b)])


def raw_triple(data, modes, window="overlap") -> np.ndarray:
    """Unprojected third-order co-occurrence; for small alphabets and tests only."""
    return _source(data, window).moment(modes)


def projected_pair(data, basis: Mapping, nodes_a, nodes_b, lag_a: int, lag_b: int,
                   window="overlap") -> np.ndarray:
    """``(U^A)^T P (U^B)`` with ``U^A`` the Kronecker product of the per-node bases."""
    return _source(data, window).moment([(tuple(nodes_a), lag_a), (tuple(nodes_b), lag_b)], basis)


def projected_triple(data, basis: Mapping, path, u: int, window="overlap") -> np.ndarray:
    """Projected ``P_{1,2,3}^{H,u,H}``, shape ``(m^|H|, m, m^|H|)``."""
    path = tuple(path)
    return _source(data, window).moment([(path, 1), ((u,), 2), (path, 3)], basis)


def population_moments(params: ThsHmmParams, tree: TreeStructure, start: str = "initial",
                       cap: int = META_STATE_CAP) -> PopulationMoments:
    return PopulationMoments(params, tree, start, cap)
