"""Direct and iterative solvers and conditioning diagnostics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from sparsebem.sparse import SparseComplexMatrix

COND_SIZE_LIMIT = 6000


class SolverError(RuntimeError):
    """Linear solver failure."""


@dataclass
class SolveReport:
    """Solution vector plus solver diagnostics."""

    solution: np.ndarray
    method: str
    residual: float
    iterations: int | None = None
    converged: bool = True
    wall_time: float = 0.0
    residual_history: list = field(default_factory=list)


def _relative_residual(matvec, x: np.ndarray, b: np.ndarray) -> float:
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return float(np.linalg.norm(matvec(x)))
    return float(np.linalg.norm(matvec(x) - b) / nb)


def dense_solve(A: np.ndarray, b: np.ndarray) -> SolveReport:
    """LU with partial pivoting; raises SolverError on a singular pivot."""
    A = np.asarray(A)
    b = np.asarray(b)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != len(b):
        raise SolverError("dense_solve requires a square matrix matching b")
    if not np.all(np.isfinite(A.view(float))):
        raise SolverError("matrix contains non-finite entries")
    t0 = time.perf_counter()
    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            x = scipy.linalg.solve(A, b)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"singular pivot in LU factorization: {exc}") from exc
    if not np.all(np.isfinite(x.view(float))):
        raise SolverError("singular pivot in LU factorization")
    dt = time.perf_counter() - t0
    return SolveReport(solution=x, method="direct",
                       residual=_relative_residual(lambda v: A @ v, x, b),
                       wall_time=dt)


def sparse_direct_solve(M: SparseComplexMatrix, b: np.ndarray) -> SolveReport:
    """Sparse LU (SuperLU) on the stored pattern."""
    t0 = time.perf_counter()
    try:
        lu = scipy.sparse.linalg.splu(M.to_csr().tocsc())
        x = lu.solve(np.asarray(b, dtype=complex))
    except RuntimeError as exc:
        raise SolverError(f"sparse LU failed: {exc}") from exc
    dt = time.perf_counter() - t0
    if not np.all(np.isfinite(x.view(float))):
        raise SolverError("sparse LU produced non-finite solution")
    return SolveReport(solution=x, method="direct",
                       residual=_relative_residual(M.matvec, x, b),
                       wall_time=dt)


def gmres(matvec, b: np.ndarray, tol: float = 1e-5,
          max_iter: int | None = None) -> SolveReport:
    """Non-restarted GMRES with modified Gram-Schmidt and reorthogonalization.

    ``matvec`` is a callable, a dense matrix, or a SparseComplexMatrix.
    Iterates from the zero vector until the relative residual drops below
    ``tol``; hitting ``max_iter`` (default: the system size) is reported as
    non-convergence, not raised.
    """
    if isinstance(matvec, SparseComplexMatrix):
        op = matvec.matvec
    elif isinstance(matvec, np.ndarray):
        A = matvec
        op = lambda v: A @ v
    else:
        op = matvec
    b = np.asarray(b, dtype=complex)
    n = len(b)
    m = n if max_iter is None else min(max_iter, n)

    t0 = time.perf_counter()
    beta = np.linalg.norm(b)
    if beta == 0.0:
        return SolveReport(solution=np.zeros(n, dtype=complex), method="gmres",
                           residual=0.0, iterations=1, wall_time=time.perf_counter() - t0,
                           residual_history=[0.0])
    cap = min(m, 128)
    V = np.empty((cap + 1, n), dtype=complex)
    H = np.zeros((cap + 1, cap), dtype=complex)
    cs = np.zeros(m, dtype=complex)
    sn = np.zeros(m, dtype=complex)
    g = np.zeros(m + 1, dtype=complex)
    g[0] = beta
    V[0] = b / beta

    history = []
    j_done = 0
    converged = False
    for j in range(m):
        if j >= cap:  # grow the Krylov workspace geometrically
            new_cap = min(m, 2 * cap)
            V = np.vstack([V, np.empty((new_cap - cap, n), dtype=complex)])
            H2 = np.zeros((new_cap + 1, new_cap), dtype=complex)
            H2[:cap + 1, :cap] = H
            H = H2
            cap = new_cap
        w = op(V[j])
        if w.shape != (n,):
            raise SolverError("operator output length mismatch")
        # Modified Gram-Schmidt with one reorthogonalization pass.
        for i in range(j + 1):
            hij = np.vdot(V[i], w)
            w -= hij * V[i]
            H[i, j] = hij
        for i in range(j + 1):
            corr = np.vdot(V[i], w)
            w -= corr * V[i]
            H[i, j] += corr
        hnext = np.linalg.norm(w)
        H[j + 1, j] = hnext

        # Apply accumulated Givens rotations, then form the new one.
        for i in range(j):
            tmp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + np.conj(cs[i]) * H[i + 1, j]
            H[i, j] = tmp
        denom = np.sqrt(np.abs(H[j, j]) ** 2 + np.abs(hnext) ** 2)
        if denom == 0.0:
            cs[j], sn[j] = 1.0, 0.0
        else:
            cs[j] = np.conj(H[j, j]) / denom
            sn[j] = np.conj(hnext) / denom
        H[j, j] = cs[j] * H[j, j] + sn[j] * hnext
        H[j + 1, j] = 0.0
        g[j + 1] = -np.conj(sn[j]) * g[j]
        g[j] = cs[j] * g[j]

        j_done = j + 1
        rel = abs(g[j + 1]) / beta
        history.append(float(rel))
        if rel <= tol:
            converged = True
            break
        if hnext == 0.0:  # lucky breakdown: Krylov space is invariant
            converged = True
            break
        V[j + 1] = w / hnext

    y = scipy.linalg.solve_triangular(H[:j_done, :j_done], g[:j_done])
    x = V[:j_done].T @ y
    dt = time.perf_counter() - t0
    true_res = _relative_residual(op, x, b)
    return SolveReport(solution=x, method="gmres", residual=true_res,
                       iterations=j_done, converged=converged or true_res <= tol,
                       wall_time=dt, residual_history=history)


def cond_estimate(M) -> float:
    """2-norm condition number via full SVD (desk-scale sizes only)."""
    if isinstance(M, SparseComplexMatrix):
        if M.n > COND_SIZE_LIMIT:
            raise SolverError(f"condition estimate limited to n <= {COND_SIZE_LIMIT}")
        dense = M.to_dense()
    else:
        dense = np.asarray(M)
        if dense.shape[0] > COND_SIZE_LIMIT:
            raise SolverError(f"condition estimate limited to n <= {COND_SIZE_LIMIT}")
    s = np.linalg.svd(dense, compute_uv=False)
    if s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])


def sparse_matvec(M: SparseComplexMatrix, x: np.ndarray) -> np.ndarray:
    """Exact CSR product M @ x."""
    return M.matvec(x)
