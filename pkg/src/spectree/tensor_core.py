"""Dense order-2 / order-3 tensor algebra used throughout the learner.

Everything here is a thin, contract-checked layer over numpy so the rest of
the package never has to think about index conventions.  Two conventions
matter elsewhere:

* ``kron`` indexes row ``(i_a, i_b)`` as ``i_a * rows(B) + i_b`` (first factor
  most significant).  Meta-observation and meta-state indices along a tree
  path use the same ordering, root first.
* Left singular vectors are sign-fixed so that the largest-magnitude entry of
  every vector is positive.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

PINV_RTOL = 1e-12


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


@dataclass(frozen=True)
class SvdResult:
    left: np.ndarray
    values: np.ndarray
    right: np.ndarray


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got ndim={a.ndim}")
    return a


def contract3(M, V1, V2, V3) -> np.ndarray:
    """Multilinear map ``M(V1, V2, V3)``.

    Entry ``(i, j, k)`` of the output is
    ``sum_{a,b,c} M[a, b, c] V1[a, i] V2[b, j] V3[c, k]``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 3:
        raise DimensionError(f"expected an order-3 tensor, got ndim={M.ndim}")
    Vs = [_as_matrix(V, f"V{k + 1}") for k, V in enumerate((V1, V2, V3))]
    for k, V in enumerate(Vs):
        if V.shape[0] != M.shape[k]:
            raise DimensionError(
                f"V{k + 1} has {V.shape[0]} rows but mode {k + 1} has size {M.shape[k]}")
    out = np.tensordot(M, Vs[0], axes=([0], [0]))      # (b, c, i)
    out = np.tensordot(out, Vs[1], axes=([0], [0]))    # (c, i, j)
    out = np.tensordot(out, Vs[2], axes=([0], [0]))    # (i, j, k)
    track(out)
    return out


def contract2(M, V1, V2) -> np.ndarray:
    """``M(V1, V2) = V1^T M V2``."""
    M = _as_matrix(M, "M")
    V1 = _as_matrix(V1, "V1")
    V2 = _as_matrix(V2, "V2")
    if V1.shape[0] != M.shape[0] or V2.shape[0] != M.shape[1]:
        raise DimensionError(
            f"cannot contract {M.shape} with V1 {V1.shape} and V2 {V2.shape}")
    return V1.T @ M @ V2


def kron(A, B) -> np.ndarray:
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    return np.kron(A, B)


def kron_all(mats) -> np.ndarray:
    """Kronecker product of a sequence of matrices, first factor outermost."""
    mats = list(mats)
    if not mats:
        raise DimensionError("kron_all needs at least one factor")
    out = _as_matrix(mats[0], "factor 0")
    for k, B in enumerate(mats[1:], start=1):
        out = np.kron(out, _as_matrix(B, f"factor {k}"))
    return out


def row_kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker (face-splitting) product of two ``N x *`` arrays."""
    if A.shape[0] != B.shape[0]:
        raise DimensionError("row_kron needs equal row counts")
    out = (A[:, :, None] * B[:, None, :]).reshape(A.shape[0], A.shape[1] * B.shape[1])
    return out


def _fix_signs(U: np.ndarray, Vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, Vt * signs[:, None]


def truncated_svd(A, k: int) -> SvdResult:
    """Top-``k`` singular triplets of ``A`` (dense LAPACK SVD)."""
    A = _as_matrix(A, "A")
    if not 1 <= k <= min(A.shape):
        raise ValueError(f"k={k} out of range for a {A.shape[0]}x{A.shape[1]} matrix")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    U, Vt = _fix_signs(U[:, :k], Vt[:k])
    return SvdResult(left=U, values=s[:k].copy(), right=Vt.T)


def singular_values(A) -> np.ndarray:
    return np.linalg.svd(_as_matrix(A, "A"), compute_uv=False)


def pinv(A, rtol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse.

    Singular values below ``max(rows, cols) * sigma_1 * rtol`` are treated as
    zero.
    """
    A = _as_matrix(A, "A")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(A.shape[::-1])
    cutoff = max(A.shape) * s[0] * rtol
    keep = s >= cutoff
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def outer3(a, b, c) -> np.ndarray:
    return np.einsum("i,j,k->ijk", a, b, c)


# ---------------------------------------------------------------------------
# allocation accounting
#
# The learner promises never to build an object whose size grows like n^d.
# Every moment/tensor buffer created on the learning path is reported here so
# a test can bound the largest one.

_probes: list["AllocationProbe"] = []


class AllocationProbe:
    def __init__(self) -> None:
        self.peak = 0
        self.peak_shape: Optional[tuple] = None

    def record(self, arr: np.ndarray) -> None:
        if arr.size > self.peak:
            self.peak = int(arr.size)
            self.peak_shape = tuple(arr.shape)


def track(arr: np.ndarray) -> np.ndarray:
    for probe in _probes:
        probe.record(arr)
    return arr


@contextlib.contextmanager
def allocation_probe() -> Iterator[AllocationProbe]:
    """Record the element count of the largest tracked array in the block."""
    probe = AllocationProbe()
    _probes.append(probe)
    try:
        yield probe
    finally:
        _probes.remove(probe)
