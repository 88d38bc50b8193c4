"""Sparse matrices, Krylov solvers and a dense LU oracle for saddle point systems.

Matrices are :class:`scipy.sparse.csr_matrix` instances; the iterative
solvers and the dense LU factorisation are implemented here so that every
sparse solve can be cross-checked against an independent dense route.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

SparseMatrixCSR = sp.csr_matrix

DENSE_LIMIT = 4000


class NotConverged(RuntimeError):
    """Iterative solver stopped before reaching the requested tolerance."""

    def __init__(self, message: str, residual: float, history: list[float] | None = None):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual
        self.history = list(history or [])


class SingularMatrix(np.linalg.LinAlgError):
    """Pivot below the singularity threshold during LU factorisation."""


def as_csr(A) -> sp.csr_matrix:
    """Convert to canonical CSR: sorted, duplicate-free column indices."""
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def check_csr(A: sp.csr_matrix) -> None:
    """Raise ``ValueError`` if ``A`` violates the CSR invariants."""
    if not sp.isspmatrix_csr(A):
        raise ValueError("not a CSR matrix")
    if np.any(np.diff(A.indptr) < 0):
        raise ValueError("row offsets are not monotone")
    for i in range(A.shape[0]):
        cols = A.indices[A.indptr[i] : A.indptr[i + 1]]
        if np.any(np.diff(cols) <= 0):
            raise ValueError(f"column indices not strictly increasing in row {i}")
    if not np.all(np.isfinite(A.data)):
        raise ValueError("matrix has non-finite values")


def spmv(A, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape} times vector {x.shape}")
    return A @ x


def cg_solve(A, b, tol: float = 1e-10, maxiter: int | None = None, x0=None, preconditioner=None):
    """Preconditioned conjugate gradients for symmetric positive definite ``A``.

    Stops once ``||A x - b|| <= tol * ||b||``. ``preconditioner`` is a callable
    applying an SPD approximation of ``A^{-1}``.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    maxiter = 10 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    apply_P = preconditioner or (lambda r: r)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = apply_P(r)
    p = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / bnorm]
    for _ in range(maxiter):
        if history[-1] <= tol:
            return x
        Ap = A @ p
        a = rz / (p @ Ap)
        x += a * p
        r -= a * Ap
        z = apply_P(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        history.append(np.linalg.norm(r) / bnorm)
    if history[-1] <= tol:
        return x
    raise NotConverged("CG did not converge", history[-1], history)


def gmres_solve(
    operator,
    b,
    tol: float = 1e-10,
    restart: int = 200,
    maxiter: int | None = None,
    preconditioner: Callable[[np.ndarray], np.ndarray] | None = None,
    callback: Callable[[float], None] | None = None,
):
    """Restarted GMRES with right preconditioning.

    ``operator`` is a matrix or a callable ``x -> A x``. Right preconditioning
    keeps the monitored residual equal to the true residual, so on return
    ``||A x - b|| <= tol * ||b||``. ``maxiter`` bounds the total number of
    Arnoldi steps (default ``50 * n``). ``callback`` receives the relative
    residual after each inner iteration.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    matvec = operator if callable(operator) else (lambda v: operator @ v)
    apply_P = preconditioner or (lambda v: v)
    maxiter = 50 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    x = np.zeros(n)
    history: list[float] = []
    total = 0
    m = max(1, min(restart, n))
    while True:
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        history.append(beta / bnorm)
        if history[-1] <= tol:
            return x
        if total >= maxiter:
            raise NotConverged("GMRES did not converge", history[-1], history)
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            w = matvec(apply_P(V[j]))
            # modified Gram-Schmidt, applied twice for robustness
            for _ in range(2):
                for i in range(j + 1):
                    hij = V[i] @ w
                    H[i, j] += hij
                    w -= hij * V[i]
            hnext = np.linalg.norm(w)
            H[j + 1, j] = hnext
            if hnext > 0:
                V[j + 1] = w / hnext
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_done = j + 1
            res = abs(g[j + 1]) / bnorm
            if callback is not None:
                callback(res)
            if res <= tol or total >= maxiter or hnext == 0:
                break
        k = j_done
        y = _back_substitute(H[:k, :k], g[:k])
        x += apply_P(V[:k].T @ y)


def _back_substitute(U: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = y.shape[0]
    x = np.zeros_like(y)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - U[i, i + 1 :] @ x[i + 1 :]) / U[i, i]
    return x


def lu_factor_dense(A, block: int = 64):
    """Blocked right-looking LU with partial pivoting, ``P A = L U``.

    Returns ``(LU, perm)`` with unit-lower ``L`` and ``U`` packed in ``LU``
    and ``perm`` the row permutation. Raises :class:`SingularMatrix` when a
    pivot falls below ``1e-14 * max|A|``.
    """
    LU = np.array(A, dtype=float)
    n = LU.shape[0]
    if LU.ndim != 2 or LU.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {LU.shape}")
    if n > DENSE_LIMIT:
        raise ValueError(f"dense oracle limited to dimension {DENSE_LIMIT}, got {n}")
    scale = np.max(np.abs(LU)) if n else 0.0
    threshold = 1e-14 * scale
    perm = np.arange(n)
    for k0 in range(0, n, block):
        k1 = min(k0 + block, n)
        # unblocked factorisation of the panel LU[k0:, k0:k1]
        for k in range(k0, k1):
            p = k + int(np.argmax(np.abs(LU[k:, k])))
            if not abs(LU[p, k]) >= threshold or scale == 0.0:
                raise SingularMatrix(f"pivot {LU[p, k]:.3e} below threshold at column {k}")
            if p != k:
                LU[[k, p]] = LU[[p, k]]
                perm[[k, p]] = perm[[p, k]]
            LU[k + 1 :, k] /= LU[k, k]
            LU[k + 1 :, k + 1 : k1] -= np.outer(LU[k + 1 :, k], LU[k, k + 1 : k1])
        if k1 < n:
            # U12 = L11^{-1} A12 by forward substitution, then Schur update
            for k in range(k0, k1):
                LU[k + 1 : k1, k1:] -= np.outer(LU[k + 1 : k1, k], LU[k, k1:])
            LU[k1:, k1:] -= LU[k1:, k0:k1] @ LU[k0:k1, k1:]
    return LU, perm


def lu_solve_dense(LU: np.ndarray, perm: np.ndarray, b) -> np.ndarray:
    y = np.asarray(b, dtype=float)[perm].copy()
    n = y.shape[0]
    for i in range(n):
        y[i] -= LU[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - LU[i, i + 1 :] @ y[i + 1 :]) / LU[i, i]
    return y


def dense_lu_solve(A_dense, b) -> np.ndarray:
    """Solve ``A x = b`` by partial-pivoting LU; the verification oracle."""
    LU, perm = lu_factor_dense(A_dense)
    return lu_solve_dense(LU, perm, b)


@dataclass
class SaddleSystem:
    """Block system ``[[K, C^T], [C, 0]] [x; lam] = [f; g]``."""

    K: sp.csr_matrix
    C: sp.csr_matrix
    f: np.ndarray
    g: np.ndarray | None = None

    def __post_init__(self):
        n, m = self.K.shape[0], self.C.shape[0]
        if self.K.shape != (n, n) or self.C.shape != (m, n):
            raise ValueError(f"inconsistent blocks K{self.K.shape}, C{self.C.shape}")
        self.f = np.asarray(self.f, dtype=float)
        self.g = np.zeros(m) if self.g is None else np.asarray(self.g, dtype=float)
        if self.f.shape != (n,) or self.g.shape != (m,):
            raise ValueError("right-hand side does not match block sizes")

    @property
    def n_primal(self) -> int:
        return self.K.shape[0]

    @property
    def dim(self) -> int:
        return self.K.shape[0] + self.C.shape[0]

    def block_matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.K, self.C.T], [self.C, None]], format="csr")

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.f, self.g])


class SaddleSolution(NamedTuple):
    xdot: np.ndarray
    lam: np.ndarray
    iterations: int


SOLVER_METHODS = ("direct", "gmres", "dense")


def block_jacobi_preconditioner(system: SaddleSystem) -> Callable[[np.ndarray], np.ndarray]:
    """Jacobi on the ``K`` block and on ``C diag(K)^{-1} C^T`` for the multipliers."""
    dK = system.K.diagonal()
    inv_dK = 1.0 / dK
    schur = np.asarray((system.C.multiply(system.C)) @ inv_dK).ravel()
    inv_s = 1.0 / schur
    n = system.n_primal

    def apply(v):
        return np.concatenate([v[:n] * inv_dK, v[n:] * inv_s])

    return apply


def solve_saddle(system: SaddleSystem, tol: float = 1e-10, method: str = "direct") -> SaddleSolution:
    """Solve the saddle point system.

    ``method`` is ``"direct"`` (sparse LU), ``"gmres"`` (restarted GMRES with
    block Jacobi preconditioning) or ``"dense"`` (dense LU oracle). The
    result satisfies a relative block residual of ``tol``.
    """
    if method not in SOLVER_METHODS:
        raise ValueError(f"unknown solver method {method!r}; choose from {SOLVER_METHODS}")
    n = system.n_primal
    rhs = system.rhs()
    if not np.any(rhs):
        return SaddleSolution(np.zeros(n), np.zeros(system.C.shape[0]), 0)
    B = system.block_matrix()
    iterations = 0
    if method == "dense":
        sol = dense_lu_solve(B.toarray(), rhs)
    elif method == "direct":
        sol = spla.splu(B.tocsc()).solve(rhs)
        iterations = 1
    else:
        count = [0]

        def cb(_):
            count[0] += 1

        sol = gmres_solve(
            B, rhs, tol=tol, restart=200, preconditioner=block_jacobi_preconditioner(system), callback=cb
        )
        iterations = count[0]
    res = np.linalg.norm(B @ sol - rhs) / np.linalg.norm(rhs)
    if not res <= max(tol, 1e-12) * 10:
        raise NotConverged(f"saddle solve ({method}) residual too large", res)
    return SaddleSolution(sol[:n], sol[n:], iterations)
