"""Banded LU with partial pivoting for the coarse-grid direct solve.

Storage follows the LAPACK ``gbtrf`` layout: entry ``A[i, j]`` lives at
``ab[kl + ku + i - j, j]``; the top ``kl`` rows hold the fill-in created by
row interchanges.  Lexicographic numbering of a structured grid gives a
bandwidth of about one grid row, so factorization costs
``O(N * kl * (kl + ku))``.
"""

from __future__ import annotations

import warnings

import numba as nb
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import FactorizationError

DENSE_THRESHOLD = 2000

_jit = {"nogil": True, "cache": True}


@nb.njit(**_jit)
def _gbtrf(ab, kl, ku):
    n = ab.shape[1]
    kv = kl + ku
    ipiv = np.empty(n, dtype=np.int64)
    ju = 0
    for j in range(n):
        km = min(kl, n - 1 - j)
        piv = 0
        best = abs(ab[kv, j])
        for i in range(1, km + 1):
            v = abs(ab[kv + i, j])
            if v > best:
                best = v
                piv = i
        ipiv[j] = j + piv
        if best == 0.0:
            return ipiv, j
        ju = max(ju, min(j + ku + piv, n - 1))
        if piv != 0:
            for c in range(j, ju + 1):
                r1 = kv + j - c
                r2 = r1 + piv
                tmp = ab[r1, c]
                ab[r1, c] = ab[r2, c]
                ab[r2, c] = tmp
        if km > 0:
            inv = 1.0 / ab[kv, j]
            for i in range(1, km + 1):
                ab[kv + i, j] *= inv
            for c in range(j + 1, ju + 1):
                u = ab[kv + j - c, c]
                if u != 0:
                    base = kv + j - c
                    for i in range(1, km + 1):
                        ab[base + i, c] -= ab[kv + i, j] * u
    return ipiv, -1


@nb.njit(**_jit)
def _gbtrs(ab, kl, ku, ipiv, b):
    n = ab.shape[1]
    kv = kl + ku
    x = b.copy()
    for j in range(n):
        p = ipiv[j]
        if p != j:
            tmp = x[j]
            x[j] = x[p]
            x[p] = tmp
        xj = x[j]
        if xj != 0:
            km = min(kl, n - 1 - j)
            for i in range(1, km + 1):
                x[j + i] -= ab[kv + i, j] * xj
    for j in range(n - 1, -1, -1):
        x[j] /= ab[kv, j]
        xj = x[j]
        if xj != 0:
            i0 = max(0, j - kv)
            for i in range(i0, j):
                x[i] -= ab[kv + i - j, j] * xj
    return x


def bandwidths(A: sp.spmatrix) -> tuple[int, int]:
    coo = A.tocoo()
    if coo.nnz == 0:
        return 0, 0
    d = coo.row - coo.col
    return int(max(d.max(), 0)), int(max(-d.min(), 0))


def to_band_storage(A: sp.spmatrix, kl: int, ku: int) -> np.ndarray:
    coo = A.tocoo()
    n = A.shape[0]
    ab = np.zeros((2 * kl + ku + 1, n), dtype=np.complex128)
    np.add.at(ab, (kl + ku + coo.row - coo.col, coo.col), coo.data)
    return ab


class BandedLU:
    """Partial-pivoting LU of a square sparse band matrix."""

    def __init__(self, A: sp.spmatrix):
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.n = A.shape[0]
        self.kl, self.ku = bandwidths(A)
        self.ab = to_band_storage(A, self.kl, self.ku)
        self.ipiv, bad = _gbtrf(self.ab, self.kl, self.ku)
        if bad >= 0:
            raise FactorizationError(f"zero pivot in column {bad}")

    def solve(self, b: np.ndarray) -> np.ndarray:
        return _gbtrs(self.ab, self.kl, self.ku, self.ipiv, np.asarray(b, dtype=np.complex128))


class DenseLU:
    """LAPACK dense LU, used for small coarse problems."""

    def __init__(self, A):
        dense = A.toarray() if sp.issparse(A) else np.asarray(A)
        self.n = dense.shape[0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            self.lu, self.piv = sla.lu_factor(dense.astype(np.complex128), check_finite=True)
        if np.any(np.diag(self.lu) == 0):
            raise FactorizationError("matrix is exactly singular")

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.lu_solve((self.lu, self.piv), np.asarray(b, dtype=np.complex128))


def factorize(A, dense_threshold: int = DENSE_THRESHOLD):
    """Dense LU below ``dense_threshold`` unknowns, banded LU above."""
    if A.shape[0] < dense_threshold:
        return DenseLU(A)
    return BandedLU(sp.csr_matrix(A))
