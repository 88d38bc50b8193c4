"""Discrete tangent space ``T_h(m)`` and the L2-orthogonal projection onto it.

``T_h(m)`` consists of the fields ``v_h`` in ``V_h^3`` whose pointwise
product ``m . v_h`` has vanishing L2 projection onto the scalar space
``V_h``. The projection ``P_h(m) v`` is the saddle point solution with the
block mass matrix as the primal block.
"""
from __future__ import annotations

from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .fem import FiniteElementSpace, NodalField, assemble_constraint, check_unit_field
from .linalg import SaddleSystem, cg_solve, solve_saddle

FieldLike = Union[NodalField, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def constraint_at_quad(space: FiniteElementSpace, m: FieldLike) -> np.ndarray:
    """Unit field at quadrature points from a quadrature array, nodal field or function.

    Nodal fields and functions are evaluated at the quadrature points and
    normalised there; quadrature arrays must already be of unit length.
    """
    if isinstance(m, NodalField):
        mq = m.at_quad()
    elif callable(m):
        pts = space.quad_points.reshape(-1, 3)
        mq = np.asarray(m(pts), dtype=float).reshape(space.mesh.n_cells, space.n_quad, 3)
    else:
        return check_unit_field(space, m)
    norm = np.linalg.norm(mq, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise ValueError("constraint field vanishes at a quadrature point")
    return mq / norm


def _load(space: FiniteElementSpace, v: FieldLike) -> np.ndarray:
    """Block load vector ``(v, w_h)`` for all ``w_h`` in ``V_h^3``."""
    if isinstance(v, NodalField):
        vq = v.at_quad()
    elif callable(v):
        pts = space.quad_points.reshape(-1, 3)
        vq = np.asarray(v(pts), dtype=float).reshape(space.mesh.n_cells, space.n_quad, 3)
    else:
        vq = np.asarray(v, dtype=float)
        if vq.shape == (space.n_dofs, 3):
            vq = space.eval_at_quad(vq)
    return space.load_vector(vq).T.ravel()


def project_tangent(
    space: FiniteElementSpace, m: FieldLike, v: FieldLike, tol: float = 1e-10, method: str = "direct"
) -> NodalField:
    """L2-orthogonal projection of ``v`` onto ``T_h(m)``.

    ``v`` may be a nodal field (or ``(N, 3)`` array) or a function of the
    points, in which case the right-hand side ``(v, w_h)`` is integrated by
    quadrature.
    """
    mq = constraint_at_quad(space, m)
    K = sp.kron(sp.identity(3, format="csr"), space.mass_matrix, format="csr")
    C = assemble_constraint(space, mq)
    sol = solve_saddle(SaddleSystem(K, C, _load(space, v)), tol=tol, method=method)
    return NodalField.from_vector(space, sol.xdot)


def tangent_residual(space: FiniteElementSpace, m: FieldLike, v_h: NodalField | np.ndarray) -> float:
    """L2 norm of ``Pi_h(m . v_h)``, i.e. ``sqrt(c^T M^{-1} c)`` with ``c = C(m) v_h``."""
    mq = constraint_at_quad(space, m)
    values = v_h.values if isinstance(v_h, NodalField) else np.asarray(v_h, dtype=float)
    c = assemble_constraint(space, mq) @ values.T.ravel()
    if not np.any(c):
        return 0.0
    y = cg_solve(space.mass_matrix, c, tol=1e-13, preconditioner=lambda r: r / space.mass_matrix.diagonal())
    return float(np.sqrt(max(c @ y, 0.0)))


def pointwise_projection(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Continuous projection ``v - (m . v) m`` for arrays of unit vectors ``m``."""
    return v - np.sum(m * v, axis=-1, keepdims=True) * m


def projection_error(
    space: FiniteElementSpace,
    m: Callable[[np.ndarray], np.ndarray],
    v: Callable[[np.ndarray], np.ndarray],
    tol: float = 1e-12,
) -> float:
    """``||(P_h(m) - P(m)) v||_{L2}`` for smooth functions ``m`` (unit) and ``v``."""
    pts = space.quad_points.reshape(-1, 3)
    shape = (space.mesh.n_cells, space.n_quad, 3)
    mq = np.asarray(m(pts), dtype=float).reshape(shape)
    vq = np.asarray(v(pts), dtype=float).reshape(shape)
    ph = project_tangent(space, mq / np.linalg.norm(mq, axis=-1, keepdims=True), v, tol=tol)
    diff = ph.at_quad() - pointwise_projection(mq, vq)
    return float(np.sqrt(space.integrate(np.sum(diff**2, axis=-1))))
