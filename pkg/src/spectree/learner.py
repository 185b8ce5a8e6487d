"""Observation-matrix recovery for THS-HMMs.

Each node is learned independently from the moments of its root path.  The
per-node pipeline:

1. ``estimate_ranges``: top-``m`` left singular vectors of ``P_{1,2}^{u,u}``.
2. ``projected_moments``: the path moments, taken directly in the product
   of the per-node range bases.
3. ``build_symmetrizers`` / ``build_skeletensor``: fold the path-sized views
   onto the node so the result is a symmetric ``m x m`` / ``m x m x m`` pair
   whose components are the node's projected emission columns.
4. ``decompose_node``: whiten, run the robust tensor power method, undo the
   whitening.
5. ``unproject_and_round``: map back to symbol space and project each column
   onto the probability simplex.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import RunConfig
from .model import TreeStructure, meta_cap_check
from .moments import EmpiricalMoments, PopulationMoments, _source
from .tensor_core import contract3, pinv, singular_values, truncated_svd

logger = logging.getLogger(__name__)


class LearnerError(RuntimeError):
    """A per-node learning step failed."""

    def __init__(self, message, node: Optional[int] = None):
        super().__init__(message if node is None else f"node {node}: {message}")
        self.node = node


class RankConditionError(LearnerError):
    pass


class DecompositionError(LearnerError):
    pass


@dataclass
class ProjectedMoments:
    node: int
    path: tuple
    A: np.ndarray          # U^u' P_{2,3}^{u,H} U^H
    B13: np.ndarray        # U^H' P_{1,3}^{H,H} U^H
    C: np.ndarray          # U^u' P_{2,1}^{u,H} U^H
    B31: np.ndarray        # U^H' P_{3,1}^{H,H} U^H
    P12: np.ndarray        # U^H' P_{1,2}^{H,u} U^u
    T123: np.ndarray       # P_{1,2,3}^{H,u,H}(U^H, U^u, U^H)
    sample_count: float


@dataclass
class SkeletensorPair:
    node: int
    M2: np.ndarray
    M3: np.ndarray


@dataclass
class DecompositionResult:
    theta: np.ndarray
    weights: np.ndarray
    raw_weights: np.ndarray
    eigenvalues: np.ndarray
    diagnostics: dict = field(default_factory=dict)


@dataclass
class LearnedObservations:
    obs: dict
    raw: dict
    basis: dict
    weights: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


# ---------------------------------------------------------------------------
# ranges and projected moments


def estimate_ranges(data, m: int, nodes=None, config: Optional[RunConfig] = None):
    """Per-node orthonormal ``n x m`` bases plus the singular values of ``P_{1,2}^{u,u}``."""
    config = config or RunConfig()
    src = _source(data, config.window)
    if m > src.n:
        raise RankConditionError(
            f"m={m} exceeds the alphabet size n={src.n}; an n x m emission matrix "
            "cannot have rank m (node-wise rank condition)")
    if nodes is None:
        nodes = range(src.tree.size) if isinstance(src, PopulationMoments) else range(src.batch.num_nodes)
    basis, spectra, warnings = {}, {}, []
    for u in nodes:
        P = src.moment([((u,), 1), ((u,), 2)])
        svd = truncated_svd(P, m)
        basis[u] = svd.left
        spectra[u] = singular_values(P)[: m + 1]
        if svd.values[m - 1] < config.rank_threshold:
            msg = (f"node {u}: sigma_{m}(P_12) = {svd.values[m - 1]:.3g} below "
                   f"{config.rank_threshold:g}; node-wise rank condition likely violated")
            warnings.append(msg)
            logger.warning(msg)
    return basis, spectra, warnings


def projected_moments(data, basis, tree: TreeStructure, u: int,
                      config: Optional[RunConfig] = None) -> ProjectedMoments:
    config = config or RunConfig()
    src = _source(data, config.window)
    H = tuple(tree.path_to(u))
    meta_cap_check(basis[u].shape[1], len(H), config.meta_state_cap)
    uu = (u,)
    A = src.moment([(uu, 2), (H, 3)], basis)
    B13 = src.moment([(H, 1), (H, 3)], basis)
    C = src.moment([(uu, 2), (H, 1)], basis)
    P12 = src.moment([(H, 1), (uu, 2)], basis)
    T123 = src.moment([(H, 1), (uu, 2), (H, 3)], basis)
    return ProjectedMoments(u, H, A, B13, C, B13.T.copy(), P12, T123, src.sample_count)


def build_symmetrizers(pm: ProjectedMoments, config: Optional[RunConfig] = None):
    """``S1 = A B13^+`` and ``S3 = C B31^+``, each ``m x m^|H|``."""
    config = config or RunConfig()
    s = singular_values(pm.B13)
    if s[-1] < config.rank_threshold:
        raise RankConditionError(
            f"projected P_13 over path {list(pm.path)} has sigma_min = {s[-1]:.3g} < "
            f"{config.rank_threshold:g}; path-wise rank condition violated or too few samples",
            pm.node)
    S1 = pm.A @ pinv(pm.B13, config.pinv_rtol)
    S3 = pm.C @ pinv(pm.B31, config.pinv_rtol)
    return S1, S3


def build_skeletensor(pm: ProjectedMoments, S1: np.ndarray, S3: np.ndarray) -> SkeletensorPair:
    if S1.shape[1] != pm.P12.shape[0] or S3.shape[1] != pm.T123.shape[2]:
        raise LearnerError("symmetrizer shapes do not match the projected moments", pm.node)
    X = S1 @ pm.P12
    M2 = (X + X.T) / 2
    M3 = contract3(pm.T123, S1.T, np.eye(pm.T123.shape[1]), S3.T)
    return SkeletensorPair(pm.node, M2, M3)


# ---------------------------------------------------------------------------
# decomposition


def whiten(M2: np.ndarray, m: int):
    """``W = U_m D_m^{-1/2}`` from the top-``m`` eigenpairs, so ``W' M2 W = I``."""
    M2 = np.asarray(M2, dtype=float)
    vals, vecs = np.linalg.eigh((M2 + M2.T) / 2)
    order = np.argsort(vals)[::-1][:m]
    vals, vecs = vals[order], vecs[:, order]
    if vals[-1] <= 0:
        raise DecompositionError(
            f"M2 has a nonpositive eigenvalue {vals[-1]:.3g} among its top {m}; "
            "too few samples or a rank condition is violated")
    W = vecs / np.sqrt(vals)
    return W, {"m2_eigenvalues": vals, "m2_condition": float(vals[0] / vals[-1])}


def _apply(G, V):
    """``G(I, v, v)`` for every column ``v`` of ``V``."""
    return np.einsum("ijk,jl,kl->il", G, V, V)


def _power(G, V, iters):
    for _ in range(iters):
        V = _apply(G, V)
        norms = np.linalg.norm(V, axis=0)
        # a start that maps to zero stays put; it scores lam = 0 and loses
        V = V / np.where(norms > 0, norms, 1.0)
    return V


def robust_tensor_power(G, m: int, restarts: int = 50, iters: int = 100, polish: int = 20,
                        rng=None):
    """Orthogonal eigenpairs of a (nearly) symmetric ``m x m x m`` tensor.

    Returns ``(eigenvalues, eigenvectors as columns, diagnostics)``.
    """
    rng = np.random.default_rng(rng)
    G = np.array(G, dtype=float)
    k = G.shape[0]
    lams, vecs, residuals = [], [], []
    for r in range(m):
        V = rng.standard_normal((k, restarts))
        V /= np.linalg.norm(V, axis=0)
        V = _power(G, V, iters)
        lam = np.einsum("il,il->l", V, _apply(G, V))
        best = int(np.argmax(lam))
        v = _power(G, V[:, [best]], polish)[:, 0]
        lam_v = float(v @ _apply(G, v[:, None])[:, 0])
        if not lam_v > 0:
            raise DecompositionError(f"power iteration round {r + 1} found eigenvalue {lam_v:.3g} <= 0")
        G = G - lam_v * np.einsum("i,j,k->ijk", v, v, v)
        lams.append(lam_v)
        vecs.append(v)
        residuals.append(float(np.linalg.norm(G)))
    diag = {"deflation_residuals": residuals, "restarts": restarts, "iterations": iters,
            "polish": polish}
    return np.array(lams), np.stack(vecs, axis=1), diag


def decompose_node(sk: SkeletensorPair, m: int, config: Optional[RunConfig] = None,
                   rng=None) -> DecompositionResult:
    config = config or RunConfig()
    W, wdiag = whiten(sk.M2, m)
    G = contract3(sk.M3, W, W, W)
    lams, V, pdiag = robust_tensor_power(G, m, config.restarts, config.iterations,
                                         config.polish, rng)
    # Z_i = 1 / lambda_i;  theta_i = (W')^+ v_i / Z_i;  pi_i = Z_i^2
    theta = pinv(W.T, config.pinv_rtol) @ V * lams
    raw_weights = 1.0 / lams ** 2
    weights = raw_weights / raw_weights.sum()
    return DecompositionResult(theta, weights, raw_weights, lams, {**wdiag, **pdiag})


# ---------------------------------------------------------------------------
# back to symbol space


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def simplex_project_columns(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.stack([simplex_project(A[:, j]) for j in range(A.shape[1])], axis=1)


def unproject_and_round(theta: np.ndarray, basis: np.ndarray):
    """Return ``(rounded, raw)`` where ``raw = basis @ theta``."""
    if basis.shape[1] != theta.shape[0]:
        raise LearnerError(f"basis {basis.shape} and theta {theta.shape} do not align")
    raw = basis @ theta
    return simplex_project_columns(raw), raw


# ---------------------------------------------------------------------------
# orchestration


def node_rng(seed: int, u: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(u)])


def learn_node(src, basis, tree: TreeStructure, u: int, m: int, config: RunConfig):
    pm = projected_moments(src, basis, tree, u, config)
    S1, S3 = build_symmetrizers(pm, config)
    sk = build_skeletensor(pm, S1, S3)
    dec = decompose_node(sk, m, config, node_rng(config.seed, u))
    rounded, raw = unproject_and_round(dec.theta, basis[u])
    return rounded, raw, dec, sk


def learn_observations(data, tree: TreeStructure, m: int,
                       config: Optional[RunConfig] = None) -> LearnedObservations:
    """Learn every node's emission matrix; failures are collected per node."""
    config = config or RunConfig()
    src = data if isinstance(data, (EmpiricalMoments, PopulationMoments)) \
        else EmpiricalMoments(data, config.window)
    if isinstance(src, EmpiricalMoments) and src.batch.num_nodes != tree.size:
        raise LearnerError(f"batch has {src.batch.num_nodes} nodes, tree has {tree.size}")
    if m > src.n:
        raise RankConditionError(
            f"m={m} exceeds n={src.n}: an n x m emission matrix cannot have rank m "
            "(node-wise rank condition)")
    nodes = list(range(tree.size))
    basis, spectra, warns = estimate_ranges(src, m, nodes, config)
    result = LearnedObservations({}, {}, basis)
    result.diagnostics["range_singular_values"] = spectra
    result.diagnostics["warnings"] = list(warns)

    def task(u):
        try:
            return u, learn_node(src, basis, tree, u, m, config), None
        except (LearnerError, np.linalg.LinAlgError) as exc:
            return u, None, exc

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            outcomes = list(pool.map(task, nodes))
    else:
        outcomes = [task(u) for u in nodes]
    for u, out, exc in outcomes:
        if exc is not None:
            logger.error("node %d failed: %s", u, exc)
            result.failures[u] = str(exc)
            continue
        rounded, raw, dec, _ = out
        result.obs[u] = rounded
        result.raw[u] = raw
        result.weights[u] = dec.weights
        result.diagnostics[u] = {"raw_weights": dec.raw_weights, "tensor_eigenvalues": dec.eigenvalues,
                                 **dec.diagnostics}
    return result
