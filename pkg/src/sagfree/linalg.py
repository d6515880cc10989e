"""Sparse SPD direct solves for the strand systems.

Both the forward-step Hessian and the rest-shape Gauss-Newton matrix are
banded once their unknowns are put in stencil order, so a bandwidth-reducing
reverse Cuthill-McKee permutation followed by LAPACK banded Cholesky is a
sparse direct solve with near-linear cost.
"""
import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .errors import SolveFailure


def fill_reducing_order(A):
    return reverse_cuthill_mckee(sp.csr_matrix(A), symmetric_mode=True)


def to_lower_banded(A):
    """LAPACK lower banded storage of a symmetric sparse matrix."""
    A = sp.tril(sp.coo_matrix(A))
    n = A.shape[0]
    width = int(np.max(A.row - A.col)) if A.nnz else 0
    ab = np.zeros((width + 1, n))
    np.add.at(ab, (A.row - A.col, A.col), A.data)
    return ab


class BandedCholesky:
    """Factorization ``P A P^T = L L^T`` with a reverse Cuthill-McKee ``P``.

    Pass ``order`` to reuse a permutation across matrices sharing a pattern.
    """

    def __init__(self, A, order=None):
        A = sp.csr_matrix(A)
        self.order = fill_reducing_order(A) if order is None else np.asarray(order)
        permuted = A[self.order][:, self.order]
        ab = to_lower_banded(permuted)
        self.bandwidth = ab.shape[0] - 1
        try:
            self.factor = cholesky_banded(ab, lower=True, check_finite=False)
        except LinAlgError as exc:
            raise SolveFailure(f"Cholesky factorization failed: {exc}") from exc
        if not np.all(np.isfinite(self.factor)):
            raise SolveFailure("Cholesky factor is not finite")

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        y = cho_solve_banded((self.factor, True), b[self.order], check_finite=False)
        x = np.empty_like(y)
        x[self.order] = y
        return x


def spd_solve(A, b, order=None):
    return BandedCholesky(A, order).solve(b)


def nonzero_magnitudes(A):
    """(min, max) absolute value over structurally stored nonzeros."""
    A = sp.csr_matrix(A)
    vals = np.abs(A.data)
    vals = vals[vals > 0]
    if vals.size == 0:
        return 0.0, 0.0
    return float(vals.min()), float(vals.max())
