"""Tensor-product Lagrange finite elements on box meshes.

Provides the scalar space ``V_h`` of continuous piecewise polynomials of
degree ``r`` per direction, Gauss quadrature, and vectorised assembly of the
mass, stiffness, skew (precession) and constraint matrices used by the
tangent-plane scheme.

Vector fields in ``V_h^3`` are stored as nodal arrays of shape ``(N, 3)``.
Whenever they are flattened for linear algebra the ordering is
component-blocked, ``[x-values, y-values, z-values]``, so that block
operators read ``I (x) M``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh

VectorFunction = Callable[[np.ndarray], np.ndarray]

UNIT_TOL = 1e-8


def shape_eval_1d(r: int, xi):
    """Lagrange basis of degree ``r`` on equispaced nodes ``j/r`` of ``[0, 1]``.

    Returns ``(values, derivatives)``. For scalar ``xi`` both have shape
    ``(r+1,)``; for an array of points the shape is ``(len(xi), r+1)``.
    """
    if r < 1:
        raise ValueError("degree must be >= 1")
    scalar = np.ndim(xi) == 0
    x = np.atleast_1d(np.asarray(xi, dtype=float))
    nodes = np.arange(r + 1) / r
    diff = x[:, None] - nodes[None, :]  # (n, r+1)
    vals = np.empty((x.size, r + 1))
    ders = np.zeros((x.size, r + 1))
    for j in range(r + 1):
        others = [m for m in range(r + 1) if m != j]
        denom = np.prod(nodes[j] - nodes[others])
        vals[:, j] = np.prod(diff[:, others], axis=1) / denom
        for l in others:
            rest = [m for m in others if m != l]
            ders[:, j] += np.prod(diff[:, rest], axis=1) / denom
    if scalar:
        return vals[0], ders[0]
    return vals, ders


def gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def quadrature_rule(r: int, cell_size=(1.0, 1.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre rule with ``r + 2`` points per direction.

    Points are offsets inside a cell of the given size (x fastest); the
    weights sum to the cell volume. Exact for per-direction degree ``2r+3``.
    """
    if r < 1:
        raise ValueError("degree must be >= 1")
    x, w = gauss_legendre_01(r + 2)
    hx, hy, hz = cell_size
    Z, Y, X = np.meshgrid(x * hz, x * hy, x * hx, indexing="ij")
    WZ, WY, WX = np.meshgrid(w * hz, w * hy, w * hx, indexing="ij")
    points = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    weights = (WX * WY * WZ).ravel()
    return points, weights


class FiniteElementSpace:
    """Scalar degree-``r`` Lagrange space over a :class:`Mesh`.

    Global nodes form the lattice ``(r*nx+1) x (r*ny+1) x (r*nz+1)`` numbered
    with x fastest; local nodes of a cell follow the same convention.
    """

    def __init__(self, mesh: Mesh, degree: int):
        if int(degree) != degree or degree < 1:
            raise ValueError(f"degree must be a positive integer, got {degree!r}")
        self.mesh = mesh
        self.degree = r = int(degree)
        self.shape = (r * mesh.nx + 1, r * mesh.ny + 1, r * mesh.nz + 1)
        px, py, pz = self.shape
        self.n_dofs = px * py * pz
        self.n_local = (r + 1) ** 3

        xs = np.linspace(0.0, 1.0, px)
        ys = np.linspace(0.0, 1.0, py)
        zs = np.linspace(0.0, mesh.L, pz)
        Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
        self.nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

        cz, cy, cx = np.meshgrid(
            np.arange(mesh.nz), np.arange(mesh.ny), np.arange(mesh.nx), indexing="ij"
        )
        cx, cy, cz = (c.ravel() * r for c in (cx, cy, cz))
        local = [(a, b, c) for c in range(r + 1) for b in range(r + 1) for a in range(r + 1)]
        self.cell_dofs = np.column_stack(
            [(cx + a) + px * ((cy + b) + py * (cz + c)) for a, b, c in local]
        )

        # reference data, identical for every cell
        h = np.array(mesh.cell_size)
        self.quad_offsets, self.quad_weights = quadrature_rule(r, mesh.cell_size)
        xq, _ = gauss_legendre_01(r + 2)
        v1, d1 = shape_eval_1d(r, xq)  # (nq1, r+1)
        nq1 = r + 2
        qidx = [(i, j, k) for k in range(nq1) for j in range(nq1) for i in range(nq1)]
        qi, qj, qk = (np.array(t) for t in zip(*qidx))
        la, lb, lc = (np.array(t) for t in zip(*local))
        vx, vy, vz = v1[qi][:, la], v1[qj][:, lb], v1[qk][:, lc]
        dx, dy, dz = d1[qi][:, la], d1[qj][:, lb], d1[qk][:, lc]
        self.basis = vx * vy * vz  # (nq, nloc)
        self.basis_grad = np.stack(
            [dx * vy * vz / h[0], vx * dy * vz / h[1], vx * vy * dz / h[2]], axis=-1
        )  # (nq, nloc, 3)
        self.n_quad = self.basis.shape[0]

    def __repr__(self):
        m = self.mesh
        return f"FiniteElementSpace(r={self.degree}, mesh={m.nx}x{m.ny}x{m.nz}, L={m.L}, N={self.n_dofs})"

    @cached_property
    def quad_points(self) -> np.ndarray:
        """Physical quadrature points, shape ``(n_cells, n_quad, 3)``."""
        return self.mesh.cell_origins()[:, None, :] + self.quad_offsets[None, :, :]

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        return assemble_mass(self)

    @cached_property
    def stiffness_matrix(self) -> sp.csr_matrix:
        return assemble_stiffness(self)

    @cached_property
    def _pattern(self):
        N = self.n_dofs
        rows = np.repeat(self.cell_dofs, self.n_local, axis=1).ravel()
        cols = np.tile(self.cell_dofs, (1, self.n_local)).ravel()
        keys, inverse = np.unique(rows * N + cols, return_inverse=True)
        indices = (keys % N).astype(np.int32)
        indptr = np.zeros(N + 1, dtype=np.int64)
        np.cumsum(np.bincount(keys // N, minlength=N), out=indptr[1:])
        return indptr, indices, inverse.ravel()

    def scatter(self, local: np.ndarray) -> sp.csr_matrix:
        """Sum per-cell ``(n_cells, nloc, nloc)`` blocks into an ``N x N`` CSR matrix.

        Entries are reduced with :func:`numpy.bincount` over a fixed ordering,
        so repeated assembly is bit-for-bit reproducible.
        """
        indptr, indices, inverse = self._pattern
        data = np.bincount(inverse, weights=np.ravel(local), minlength=indices.size)
        N = self.n_dofs
        return sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(N, N))

    def weighted_mass(self, weight: np.ndarray | float = 1.0) -> sp.csr_matrix:
        """Matrix ``(w phi_j, phi_i)`` for a weight given at quadrature points."""
        w = np.broadcast_to(np.asarray(weight, dtype=float), (self.mesh.n_cells, self.n_quad))
        bb = (self.basis[:, :, None] * self.basis[:, None, :]).reshape(self.n_quad, -1)
        local = (w * self.quad_weights) @ bb
        return self.scatter(local)

    def eval_at_quad(self, values: np.ndarray) -> np.ndarray:
        """Evaluate nodal values ``(N,)`` or ``(N, 3)`` at all quadrature points."""
        v = np.asarray(values)[self.cell_dofs]  # (nc, nloc, ...)
        if v.ndim == 2:
            return v @ self.basis.T
        return np.einsum("qa,cak->cqk", self.basis, v)

    def grad_at_quad(self, values: np.ndarray) -> np.ndarray:
        """Gradients of a nodal ``(N, 3)`` field, shape ``(nc, nq, 3 comps, 3 dirs)``."""
        v = np.asarray(values)[self.cell_dofs]
        return np.einsum("qad,cak->cqkd", self.basis_grad, v)

    def integrate(self, qvalues: np.ndarray) -> float:
        """Integral of a quantity sampled at quadrature points ``(nc, nq)``."""
        return float(np.sum(qvalues @ self.quad_weights))

    def load_vector(self, qvalues: np.ndarray) -> np.ndarray:
        """Vector ``(f, phi_i)`` for ``f`` of shape ``(nc, nq, 3)``; returns ``(N, 3)``."""
        local = np.einsum("cqk,q,qa->cak", qvalues, self.quad_weights, self.basis)
        out = np.zeros((self.n_dofs, 3))
        for k in range(3):
            out[:, k] = np.bincount(
                self.cell_dofs.ravel(), weights=local[:, :, k].ravel(), minlength=self.n_dofs
            )
        return out


@dataclass
class NodalField:
    """Vector field in ``V_h^3``: one 3-vector per scalar node."""

    space: FiniteElementSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.n_dofs, 3):
            raise ValueError(
                f"expected values of shape {(self.space.n_dofs, 3)}, got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("nodal field has non-finite entries")

    def as_vector(self) -> np.ndarray:
        """Component-blocked coefficient vector of length ``3N``."""
        return self.values.T.ravel().copy()

    @classmethod
    def from_vector(cls, space: FiniteElementSpace, x: np.ndarray) -> "NodalField":
        return cls(space, np.asarray(x, dtype=float).reshape(3, space.n_dofs).T)

    @classmethod
    def constant(cls, space: FiniteElementSpace, v) -> "NodalField":
        return cls(space, np.tile(np.asarray(v, dtype=float), (space.n_dofs, 1)))

    def at_quad(self) -> np.ndarray:
        return self.space.eval_at_quad(self.values)


def assemble_mass(space: FiniteElementSpace) -> sp.csr_matrix:
    """Scalar mass matrix ``(phi_i, phi_j)``."""
    return space.weighted_mass(1.0)


def assemble_stiffness(space: FiniteElementSpace) -> sp.csr_matrix:
    """Scalar stiffness matrix ``(grad phi_i, grad phi_j)``."""
    G = space.basis_grad
    local = np.einsum("q,qad,qbd->ab", space.quad_weights, G, G)
    return space.scatter(np.broadcast_to(local, (space.mesh.n_cells,) + local.shape))


def check_unit_field(space: FiniteElementSpace, mhat: np.ndarray) -> np.ndarray:
    mhat = np.asarray(mhat, dtype=float)
    expected = (space.mesh.n_cells, space.n_quad, 3)
    if mhat.shape != expected:
        raise ValueError(f"quadrature field must have shape {expected}, got {mhat.shape}")
    dev = np.max(np.abs(np.linalg.norm(mhat, axis=-1) - 1.0))
    if not dev <= UNIT_TOL:
        raise ValueError(f"field is not of unit length at quadrature points (max deviation {dev:.3e})")
    return mhat


def assemble_skew(space: FiniteElementSpace, mhat: np.ndarray) -> sp.csr_matrix:
    """Precession matrix ``S`` of size ``3N x 3N`` for a quadrature-point unit field.

    ``S @ x`` returns the coefficients ``(mhat x x_h, phi_j)``, i.e. row indices
    label test functions. Built from three weighted mass matrices placed with
    opposite signs, so ``S.T == -S`` holds exactly.
    """
    mhat = check_unit_field(space, mhat)
    Mx, My, Mz = (space.weighted_mass(mhat[..., k]) for k in range(3))
    # (mhat x e_b) . e_a  for row (test) component a, column (trial) component b
    return sp.bmat(
        [[None, -Mz, My], [Mz, None, -Mx], [-My, Mx, None]], format="csr"
    )


def assemble_constraint(space: FiniteElementSpace, mhat: np.ndarray) -> sp.csr_matrix:
    """Constraint matrix ``C`` of size ``N x 3N`` with ``(C x)_j = (mhat . x_h, phi_j)``."""
    mhat = check_unit_field(space, mhat)
    return sp.hstack([space.weighted_mass(mhat[..., k]) for k in range(3)], format="csr")


def interpolate(space: FiniteElementSpace, f: VectorFunction) -> NodalField:
    """Nodal interpolant of a vectorised function ``f(points) -> (n, 3)``."""
    values = np.asarray(f(space.nodes), dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("function is not finite at all nodes")
    return NodalField(space, values.reshape(space.n_dofs, 3))


def error_norms(
    space: FiniteElementSpace,
    field: NodalField,
    f_exact: VectorFunction,
    grad_f_exact: Callable[[np.ndarray], np.ndarray],
) -> tuple[float, float]:
    """Quadrature approximations of the L2 and full H1 errors.

    ``grad_f_exact(points)`` returns the Jacobian with shape ``(n, 3, 3)``
    indexed as ``[point, component, direction]``.
    """
    pts = space.quad_points.reshape(-1, 3)
    nc, nq = space.mesh.n_cells, space.n_quad
    u = np.asarray(f_exact(pts), dtype=float).reshape(nc, nq, 3)
    du = np.asarray(grad_f_exact(pts), dtype=float).reshape(nc, nq, 3, 3)
    eu = field.at_quad() - u
    edu = space.grad_at_quad(field.values) - du
    l2_sq = space.integrate(np.sum(eu**2, axis=-1))
    semi_sq = space.integrate(np.sum(edu**2, axis=(-1, -2)))
    return float(np.sqrt(l2_sq)), float(np.sqrt(l2_sq + semi_sq))


def l2_norm(space: FiniteElementSpace, values: np.ndarray) -> float:
    """L2 norm of a nodal ``(N, 3)`` field."""
    return float(np.sqrt(space.integrate(np.sum(space.eval_at_quad(values) ** 2, axis=-1))))


def grad_l2_norm(space: FiniteElementSpace, values: np.ndarray) -> float:
    """L2 norm of the gradient of a nodal ``(N, 3)`` field."""
    return float(np.sqrt(space.integrate(np.sum(space.grad_at_quad(values) ** 2, axis=(-1, -2)))))
