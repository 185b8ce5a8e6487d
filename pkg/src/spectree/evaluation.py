"""Recovery quality: permutation alignment, parameter errors, F1, consistency curves.

Spectral estimates identify hidden states only up to relabelling, so every
comparison starts by matching learned columns to true columns.  Throughout,
a permutation is stored as an index array ``perm`` with
``O_hat[:, perm] ~ O``; the corresponding permutation matrix ``Pi`` has
``Pi[perm[k], k] = 1`` so that ``O_hat @ Pi == O_hat[:, perm]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import RunConfig
from .learner import LearnerError, learn_observations
from .model import ThsHmmParams, TreeStructure
from .simulator import sample_long, sample_triples

logger = logging.getLogger(__name__)


@dataclass
class AlignmentResult:
    perm: np.ndarray
    error_op: float
    error_fro: float
    error_max: float

    @property
    def matrix(self) -> np.ndarray:
        k = self.perm.size
        P = np.zeros((k, k))
        P[self.perm, np.arange(k)] = 1.0
        return P


def align(O_true, O_hat) -> AlignmentResult:
    """Minimum-cost column matching on Euclidean column distances."""
    O_true = np.asarray(O_true, dtype=float)
    O_hat = np.asarray(O_hat, dtype=float)
    if O_true.shape != O_hat.shape:
        raise ValueError(f"shape mismatch: {O_true.shape} vs {O_hat.shape}")
    diff = O_true[:, :, None] - O_hat[:, None, :]
    cost = np.sqrt((diff ** 2).sum(axis=0))
    rows, cols = linear_sum_assignment(cost)
    perm = cols[np.argsort(rows)]
    R = O_true - O_hat[:, perm]
    return AlignmentResult(perm, float(np.linalg.norm(R, 2)), float(np.linalg.norm(R)),
                           float(np.abs(R).max()))


@dataclass
class ModelComparison:
    alignments: dict
    obs_max: dict
    trans_max: dict
    init_max: dict
    aligned: ThsHmmParams

    @property
    def max_error(self) -> float:
        return max(max(d.values()) for d in (self.obs_max, self.trans_max, self.init_max))

    @property
    def max_obs_fro(self) -> float:
        return max(a.error_fro for a in self.alignments.values())


def compare_models(true: ThsHmmParams, learned: ThsHmmParams, tree: TreeStructure,
                   perms: Optional[dict] = None) -> ModelComparison:
    """Align every node by its emission matrix and report entrywise errors of all parameters."""
    if (true.m, true.n) != (learned.m, learned.n):
        raise ValueError(f"models differ in shape: m,n = {true.m},{true.n} vs {learned.m},{learned.n}")
    alignments = {}
    for u in range(tree.size):
        if perms is None:
            alignments[u] = align(true.obs[u], learned.obs[u])
        else:
            p = np.asarray(perms[u])
            R = true.obs[u] - learned.obs[u][:, p]
            alignments[u] = AlignmentResult(p, float(np.linalg.norm(R, 2)),
                                            float(np.linalg.norm(R)), float(np.abs(R).max()))
    aligned = learned.permuted(tree, [alignments[u].perm for u in range(tree.size)])
    obs_max = {u: float(np.abs(true.obs[u] - aligned.obs[u]).max()) for u in range(tree.size)}
    trans_max = {u: float(np.abs(true.trans[u] - aligned.trans[u]).max()) for u in range(tree.size)}
    init_max = {u: float(np.abs(true.init[u] - aligned.init[u]).max()) for u in range(tree.size)}
    return ModelComparison(alignments, obs_max, trans_max, init_max, aligned)


def align_labels(labels: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Map learned state labels to true labels given ``O_hat[:, perm] ~ O``."""
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.size)
    return inverse[np.asarray(labels)]


@dataclass(frozen=True)
class F1Entry:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def f1(pred, truth, positive: int) -> F1Entry:
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {truth.size} labels")
    p = pred == positive
    t = truth == positive
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    score = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return F1Entry(precision, recall, score, tp, fp, fn)


def f1_report(pred, truth, m: int) -> dict:
    return {k: f1(pred, truth, k) for k in range(m)}


# ---------------------------------------------------------------------------
# consistency curves


@dataclass
class CurveRow:
    N: int
    node: int
    errors: list
    failures: int

    def quantile(self, q):
        return float(np.quantile(self.errors, q)) if self.errors else float("nan")

    @property
    def median(self):
        return float(np.median(self.errors)) if self.errors else float("nan")


@dataclass
class ConsistencyCurve:
    rows: list = field(default_factory=list)

    def medians(self, node=None) -> dict:
        """Median error per ``N``; per node, or the max over nodes when ``node`` is None."""
        out = {}
        for N in sorted({r.N for r in self.rows}):
            rows = [r for r in self.rows if r.N == N]
            if node is not None:
                out[N] = next(r.median for r in rows if r.node == node)
            else:
                out[N] = max(r.median for r in rows)
        return out


def consistency_curve(params: ThsHmmParams, tree: TreeStructure, ladder: Sequence[int],
                      trials: int, seed: int = 0, mode: str = "triples",
                      config: Optional[RunConfig] = None, metric: str = "fro") -> ConsistencyCurve:
    """Simulate, learn and align for every ``N`` in ``ladder`` and every trial.

    Trial seeds derive from ``seed`` alone, so a table is reproducible.  A
    failed learner run is counted in ``failures`` for its cell.
    """
    config = config or RunConfig()
    master = np.random.SeedSequence(seed)
    curve = ConsistencyCurve()
    cells = {(N, u): CurveRow(N, u, [], 0) for N in ladder for u in range(tree.size)}
    for N, rung in zip(ladder, master.spawn(len(ladder))):
        for trial, ss in enumerate(rung.spawn(trials)):
            data_seed, learn_seed = ss.spawn(2)
            if mode == "triples":
                batch, _ = sample_triples(params, tree, int(N), data_seed)
            else:
                batch, _ = sample_long(params, tree, int(N), config.burn_in, data_seed)
            cfg = config.replace(seed=int(learn_seed.generate_state(1)[0]))
            try:
                res = learn_observations(batch, tree, params.m, cfg)
            except LearnerError as exc:
                logger.warning("N=%d trial %d failed: %s", N, trial, exc)
                for u in range(tree.size):
                    cells[N, u].failures += 1
                continue
            for u in range(tree.size):
                if u in res.failures:
                    cells[N, u].failures += 1
                    continue
                a = align(params.obs[u], res.obs[u])
                cells[N, u].errors.append(a.error_fro if metric == "fro" else a.error_op)
    curve.rows = [cells[N, u] for N in ladder for u in range(tree.size)]
    return curve
