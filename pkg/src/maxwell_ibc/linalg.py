"""Sparse direct solves shared by the Maxwell and nodal Poisson problems."""
from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_RTOL = 1e-8


class SingularSystemError(RuntimeError):
    """Factorization failed or the solve residual is unacceptable."""


def relative_residual(A, x, b) -> float:
    bn = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return float(r / bn) if bn > 0 else float(r)


class Factorization:
    """LU factorization of a square sparse matrix (SuperLU)."""

    PIVOT_TOL = 64 * np.finfo(float).eps

    def __init__(self, A, scale: float | None = None):
        """``scale`` sets the size below which a pivot counts as zero
        (``PIVOT_TOL * scale``); it defaults to the largest entry of A."""
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.A = A
        self.shape = A.shape
        if A.shape[0] == 0:
            self._lu = None
            return
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                self._lu = spla.splu(A, permc_spec="COLAMD")
            except (RuntimeError, spla.MatrixRankWarning) as exc:
                raise SingularSystemError(f"factorization failed: {exc}") from None
        scale = float(abs(A).max()) if scale is None else float(scale)
        pivots = np.abs(self._lu.U.diagonal())
        self.min_pivot = float(pivots.min())
        if self.min_pivot <= self.PIVOT_TOL * scale:
            raise SingularSystemError(f"numerically singular: pivot {self.min_pivot:.3e} "
                                      f"against matrix scale {scale:.3e}")

    def _apply(self, b):
        if np.iscomplexobj(b) and not np.iscomplexobj(self.A.data):
            # a real factor only accepts real right-hand sides
            return self._lu.solve(np.ascontiguousarray(b.real)) + 1j * self._lu.solve(np.ascontiguousarray(b.imag))
        return self._lu.solve(np.asarray(b, dtype=np.result_type(self.A.dtype, b.dtype)))

    def solve(self, b, rtol: float = DEFAULT_RTOL) -> np.ndarray:
        b = np.asarray(b)
        if b.shape[0] != self.shape[0]:
            raise ValueError(f"rhs has length {b.shape[0]}, matrix is {self.shape}")
        if self._lu is None:
            return np.zeros(0, dtype=complex)
        x = self._apply(b)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("solve produced non-finite values")
        res = relative_residual(self.A, x, b)
        if res > rtol:
            # one step of iterative refinement before giving up
            x = x + self._apply(b - self.A @ x)
            res = relative_residual(self.A, x, b)
            if res > rtol:
                raise SingularSystemError(f"relative residual {res:.3e} exceeds {rtol:.1e}")
        return x


def solve_linear(A, b, tol: float = DEFAULT_RTOL) -> np.ndarray:
    """Direct sparse solve of ``A x = b`` with a residual check."""
    return Factorization(A).solve(b, tol)
