"""Banded storage and LU solves (LAPACK gbtrf/gbtrs with partial pivoting)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, pivot: int, context: str = ""):
        self.pivot = pivot
        msg = f"matrix is singular: zero pivot at index {pivot}"
        super().__init__(f"{msg} ({context})" if context else msg)


@dataclass(frozen=True, eq=False)
class BandedMatrix:
    """Square matrix in LAPACK general-band layout with room for LU fill-in.

    ``data[kl + ku + i - j, j] = A[i, j]``; the first ``kl`` rows are workspace.
    """

    n: int
    kl: int
    ku: int
    data: np.ndarray

    @classmethod
    def from_sparse(cls, A) -> "BandedMatrix":
        A = sp.coo_matrix(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"matrix must be square, got {A.shape}")
        offs = A.row - A.col
        kl = int(max(offs.max(initial=0), 0))
        ku = int(max((-offs).max(initial=0), 0))
        data = np.zeros((2 * kl + ku + 1, n))
        np.add.at(data, (kl + ku + offs, A.col), A.data)
        return cls(n, kl, ku, data)

    @classmethod
    def from_triplets(cls, n: int, rows, cols, data) -> "BandedMatrix":
        """Sum duplicate (row, col, value) entries straight into band storage."""
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        offs = rows - cols
        kl = int(max(offs.max(initial=0), 0))
        ku = int(max((-offs).max(initial=0), 0))
        height = 2 * kl + ku + 1
        flat = (kl + ku + offs) * n + cols
        data = np.bincount(flat, weights=data, minlength=height * n).reshape(height, n)
        return cls(n, kl, ku, data)

    @classmethod
    def from_dense(cls, A) -> "BandedMatrix":
        return cls.from_sparse(sp.coo_matrix(np.asarray(A, dtype=float)))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for r in range(self.kl, self.data.shape[0]):
            off = r - self.kl - self.ku  # i - j
            j = np.arange(max(0, -off), min(self.n, self.n - off))
            out[j + off, j] = self.data[r, j]
        return out

    def factorize(self) -> "BandedLU":
        lu, piv, info = lapack.dgbtrf(self.data.copy(), self.kl, self.ku)
        if info > 0:
            raise SingularMatrixError(info - 1)
        if info < 0:
            raise ValueError(f"illegal argument {-info} to dgbtrf")
        return BandedLU(self, lu, piv)


@dataclass(frozen=True, eq=False)
class BandedLU:
    matrix: BandedMatrix
    lu: np.ndarray
    piv: np.ndarray

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x, info = lapack.dgbtrs(self.lu, self.matrix.kl, self.matrix.ku, b, self.piv)
        if info != 0:
            raise ValueError(f"dgbtrs failed with info={info}")
        return x

    @property
    def growth(self) -> float:
        """max |U| / max |A|, a cheap pivot-growth indicator."""
        kl, ku = self.matrix.kl, self.matrix.ku
        u = self.lu[: kl + ku + 1]
        return float(np.abs(u).max() / np.abs(self.matrix.data).max())


def banded_solve(A, b) -> np.ndarray:
    """Solve A x = b with banded LU; ``A`` may be a BandedMatrix, sparse or dense."""
    if not isinstance(A, BandedMatrix):
        A = BandedMatrix.from_sparse(A) if sp.issparse(A) else BandedMatrix.from_dense(A)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.n:
        raise ValueError(f"right-hand side has length {b.shape[0]}, matrix has size {A.n}")
    return A.factorize().solve(b)
