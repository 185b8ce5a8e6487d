"""Seeded synthetic data from a THS-HMM.

Random numbers come from a ``numpy`` ``SeedSequence`` tree.  iid sequences
are generated in fixed-size blocks, each block owning an independent child
stream, so output never depends on how blocks are scheduled.  Within a block
the uniforms are drawn as one array of shape ``(L, 2, D, block)``: time step,
then (state, observation), then node, then sequence.  A single long chain
draws ``(L, 2, D)`` from the same first child stream, which makes a length-3
chain with no burn-in identical to one iid triple under the same seed.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ThsHmmParams, TreeStructure, ensure_valid

BLOCK_SIZE = 65536
DEFAULT_BURN_IN = 1000

IID = "iid-triples"
LONG = "long-sequence"


@dataclass
class SequenceBatch:
    """Observed symbols; ``symbols[u]`` has shape ``(num_sequences, length)``."""

    symbols: list
    n: int
    mode: str = IID
    seed: Optional[int] = None

    def __post_init__(self):
        self.symbols = [np.ascontiguousarray(s, dtype=np.int64) for s in self.symbols]
        if not self.symbols:
            raise ValueError("batch has no nodes")
        shape = self.symbols[0].shape
        for u, s in enumerate(self.symbols):
            if s.ndim != 2:
                raise ValueError(f"node {u}: symbols must be 2-d (sequences x time)")
            if s.shape != shape:
                raise ValueError(f"node {u}: shape {s.shape} differs from node 0 {shape}")
            if s.size and (s.min() < 0 or s.max() >= self.n):
                raise ValueError(f"node {u}: symbols outside [0, {self.n})")
        if self.mode not in (IID, LONG):
            raise ValueError(f"unknown batch mode {self.mode!r}")

    @property
    def num_nodes(self) -> int:
        return len(self.symbols)

    @property
    def num_sequences(self) -> int:
        return self.symbols[0].shape[0]

    @property
    def length(self) -> int:
        return self.symbols[0].shape[1]

    def subset(self, nodes) -> "SequenceBatch":
        return SequenceBatch([self.symbols[u] for u in nodes], self.n, self.mode, self.seed)

    def windows(self, mode: str = "overlap") -> list:
        """Per-node ``(N, 3)`` arrays of consecutive observation triples.

        iid batches contribute their first three time steps.  Long sequences
        contribute every start ``t`` (``overlap``) or every third start
        (``disjoint``).
        """
        if self.length < 3:
            raise ValueError(f"sequences of length {self.length} have no triples")
        if self.mode == IID:
            return [s[:, :3] for s in self.symbols]
        if mode not in ("overlap", "disjoint"):
            raise ValueError(f"unknown window mode {mode!r}")
        out = []
        for s in self.symbols:
            L = s.shape[1]
            starts = np.arange(0, L - 2, 1 if mode == "overlap" else 3)
            rows = [np.stack([seq[starts], seq[starts + 1], seq[starts + 2]], axis=1) for seq in s]
            out.append(np.concatenate(rows, axis=0))
        return out


@dataclass
class StateTrace:
    states: list
    m: int


def _cumulative(params: ThsHmmParams, tree: TreeStructure):
    """Cumulative tables along the next-state axis, last entry pinned to 1."""
    def cum(a):
        c = np.cumsum(a, axis=0)
        c[-1] = 1.0
        return c
    return ([cum(o) for o in params.obs], [cum(t) for t in params.trans],
            [cum(w) for w in params.init])


def _draw(cum_cols: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Categorical draw per column: count of cumulative entries <= u."""
    k = (cum_cols <= u[None, :]).sum(axis=0)
    return np.minimum(k, cum_cols.shape[0] - 1)


def _sample_block(params, tree, order, cums, length, u):
    """Vectorised sampling for ``b`` sequences given uniforms ``(length, 2, D, b)``."""
    cobs, ctrans, cinit = cums
    D, b = tree.size, u.shape[-1]
    z = np.empty((D, b, length), dtype=np.int64)
    x = np.empty((D, b, length), dtype=np.int64)
    root = tree.root
    for t in range(length):
        for v in order:
            if t == 0:
                if v == root:
                    table = np.repeat(cinit[v][:, None], b, axis=1)
                else:
                    table = cinit[v][:, z[tree.parent(v), :, 0]]
            elif v == root:
                table = ctrans[v][:, z[v, :, t - 1]]
            else:
                table = ctrans[v][:, z[v, :, t - 1], z[tree.parent(v), :, t]]
            z[v, :, t] = _draw(table, u[t, 0, v])
        for v in range(D):
            x[v, :, t] = _draw(cobs[v][:, z[v, :, t]], u[t, 1, v])
    return z, x


def _seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def sample_triples(params: ThsHmmParams, tree: TreeStructure, N: int, seed=0,
                   length: int = 3):
    """``N`` iid sequences (length 3 by default) started from the initial distributions."""
    ensure_valid(params, tree)
    if N < 1:
        raise ValueError("N must be positive")
    order = tree.topological_order()
    cums = _cumulative(params, tree)
    nblocks = -(-N // BLOCK_SIZE)
    streams = _seed_sequence(seed).spawn(nblocks)
    zs, xs = [], []
    for k, ss in enumerate(streams):
        b = min(BLOCK_SIZE, N - k * BLOCK_SIZE)
        u = np.random.default_rng(ss).random((length, 2, tree.size, b))
        z, x = _sample_block(params, tree, order, cums, length, u)
        zs.append(z)
        xs.append(x)
    z = np.concatenate(zs, axis=1)
    x = np.concatenate(xs, axis=1)
    batch = SequenceBatch(list(x), params.n, IID, seed if isinstance(seed, int) else None)
    return batch, StateTrace(list(z), params.m)


def sample_long(params: ThsHmmParams, tree: TreeStructure, T: int,
                burn_in: int = DEFAULT_BURN_IN, seed=0):
    """One chain of length ``T`` kept after discarding ``burn_in`` steps."""
    ensure_valid(params, tree)
    if T < 3:
        raise ValueError("T must be at least 3")
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")
    order = tree.topological_order()
    root = tree.root
    parent = list(tree.parents)
    D, L = tree.size, T + burn_in
    stream = _seed_sequence(seed).spawn(1)[0]
    u = np.random.default_rng(stream).random((L, 2, D))

    cobs, ctrans, cinit = _cumulative(params, tree)
    # plain lists make the sequential state recursion several times faster
    init_root = cinit[root].tolist()
    init_child = [None if v == root else cinit[v].T.tolist() for v in range(D)]
    trans_root = ctrans[root].T.tolist()
    trans_child = [None if v == root else ctrans[v].transpose(1, 2, 0).tolist()
                   for v in range(D)]
    last = params.m - 1
    us = u[:, 0, :].tolist()
    z = np.empty((L, D), dtype=np.int64)
    cur = [0] * D
    for v in order:
        r = us[0][v]
        if v == root:
            cur[v] = min(bisect_right(init_root, r), last)
        else:
            cur[v] = min(bisect_right(init_child[v][cur[parent[v]]], r), last)
    z[0] = cur
    for t in range(1, L):
        prev = cur
        cur = [0] * D
        row = us[t]
        for v in order:
            if v == root:
                cur[v] = min(bisect_right(trans_root[prev[v]], row[v]), last)
            else:
                cur[v] = min(bisect_right(trans_child[v][prev[v]][cur[parent[v]]], row[v]), last)
        z[t] = cur
    z = z[burn_in:]
    uo = u[burn_in:, 1, :]
    x = np.empty_like(z)
    for v in range(D):
        x[:, v] = _draw(cobs[v][:, z[:, v]], uo[:, v])
    batch = SequenceBatch([x[None, :, v] for v in range(D)], params.n, LONG,
                          seed if isinstance(seed, int) else None)
    return batch, StateTrace([z[None, :, v] for v in range(D)], params.m)
