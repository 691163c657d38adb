"""Sparse direct solvers for the saddle-point and Ritz-Galerkin systems."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9


class SolverError(RuntimeError):
    """Factorization failed or the solution misses the residual contract."""

    def __init__(self, message, info: "SolveInfo | None" = None):
        super().__init__(message)
        self.info = info


@dataclass
class SolveInfo:
    n: int
    residual: float  # ||Mx - b||_inf
    residual_bound: float  # RESIDUAL_TOL * (||M||_max ||x||_inf + ||b||_inf)
    pivot_ratio: float  # min |pivot| / max |pivot|
    fill: int  # nonzeros of L + U
    refinements: int = 0

    @property
    def ok(self) -> bool:
        return self.residual <= self.residual_bound


def _as_csc(matrix):
    if sp.issparse(matrix):
        return sp.csc_matrix(matrix, dtype=float)
    return sp.csc_matrix(np.asarray(matrix, dtype=float))


def _equilibrate(M):
    """Symmetric diagonal scaling ``D M D`` with ``D = 1/sqrt(max_j |M_ij|)``."""
    rowmax = abs(M).max(axis=1).toarray().ravel()
    rowmax[rowmax == 0] = 1.0
    d = 1.0 / np.sqrt(rowmax)
    D = sp.diags(d)
    return sp.csc_matrix(D @ M @ D), d


def _factor_and_solve(M, b, *, ordering, diag_pivot_thresh, symmetric_mode, scale, max_refine,
                      check_positive=False):
    n = M.shape[0]
    b = np.asarray(b, dtype=float)
    if scale:
        Ms, d = _equilibrate(M)
    else:
        Ms, d = M, np.ones(n)
    try:
        lu = splu(Ms, permc_spec=ordering, diag_pivot_thresh=diag_pivot_thresh,
                  options={"SymmetricMode": symmetric_mode})
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise SolverError(f"factorization failed: {exc}") from exc

    piv = np.abs(lu.U.diagonal())
    pivot_ratio = float(piv.min() / piv.max()) if n else 1.0
    if check_positive and np.any(lu.U.diagonal() <= 0):
        raise SolverError("non-positive pivot: matrix is not symmetric positive definite")

    x = d * lu.solve(d * b)
    mmax = abs(M).max() if M.nnz else 0.0
    refinements = 0
    r = b - M @ x
    res = float(np.abs(r).max()) if n else 0.0
    # refine past the contract while the residual keeps dropping; it is cheap next to the factorization
    while refinements < max_refine and res > 0:
        x_new = x + d * lu.solve(d * r)
        r_new = b - M @ x_new
        res_new = float(np.abs(r_new).max())
        if not res_new < 0.5 * res:
            break
        x, r, res = x_new, r_new, res_new
        refinements += 1
    bound = RESIDUAL_TOL * (mmax * float(np.abs(x).max(initial=0.0)) + float(np.abs(b).max(initial=0.0)))

    info = SolveInfo(n=n, residual=res, residual_bound=bound, pivot_ratio=pivot_ratio,
                     fill=int(lu.L.nnz + lu.U.nnz), refinements=refinements)
    if not np.all(np.isfinite(x)):
        raise SolverError("solution is not finite; system is singular or ill-posed", info)
    if not info.ok:
        raise SolverError(
            f"residual {res:.3e} exceeds bound {bound:.3e} (pivot ratio {pivot_ratio:.3e}); "
            "check that the coefficient is SPD", info)
    log.debug("solved n=%d residual=%.2e pivot_ratio=%.2e fill=%d", n, res, pivot_ratio, info.fill)
    return x, info


def solve_symmetric_indefinite(matrix, rhs, *, scale: bool = True, max_refine: int = 3):
    """Solve a symmetric (possibly indefinite) system ``M x = b``.

    Uses a column approximate minimum degree ordering with threshold partial
    pivoting, so zero diagonal blocks are handled. A symmetric ordering on
    ``M + M^T`` fills in badly here because the multiplier block has no usable
    diagonal pivots. Returns ``(x, SolveInfo)``.
    """
    M = _as_csc(matrix)
    return _factor_and_solve(M, rhs, ordering="COLAMD", diag_pivot_thresh=0.1, symmetric_mode=True,
                             scale=scale, max_refine=max_refine)


def solve_spd(matrix, rhs, *, scale: bool = True, max_refine: int = 3):
    """Solve a symmetric positive definite system without row pivoting.

    Raises :class:`SolverError` when a non-positive pivot appears.
    """
    M = _as_csc(matrix)
    return _factor_and_solve(M, rhs, ordering="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, symmetric_mode=True,
                             scale=scale, max_refine=max_refine, check_positive=True)
