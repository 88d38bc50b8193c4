"""Linearly implicit BDF time stepping for the Landau-Lifshitz-Gilbert equation.

Each step extrapolates the previous magnetisations to a normalised field
``mhat``, solves the saddle point system for the time derivative ``mdot``
in the discrete tangent space ``T_h(mhat)``, and recovers the new
magnetisation from the backward difference formula.
"""
from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .coefficients import bdf_coefficients, extrapolation_coefficients
from .fem import (
    FiniteElementSpace,
    NodalField,
    assemble_constraint,
    assemble_skew,
    grad_l2_norm,
    l2_norm,
)
from .linalg import SaddleSystem, solve_saddle
from .stability import MultiplierData, g_matrix

log = logging.getLogger(__name__)

FALLBACK_DIRECTION = np.array([0.0, 0.0, 1.0])
DEGENERATE_NORM = 1e-12


@dataclass(frozen=True)
class BdfScheme:
    """Coefficients of the k-step linearly implicit BDF method."""

    k: int
    delta: tuple[float, ...]
    gamma: tuple[float, ...]
    eta: float
    alpha_threshold: float
    gmatrix: np.ndarray | None = field(default=None, compare=False)

    @classmethod
    def of_order(cls, k: int) -> "BdfScheme":
        delta = bdf_coefficients(k)
        gamma = extrapolation_coefficients(k)
        mult = MultiplierData.for_order(k)
        G = g_matrix(k) if k <= 2 else None
        return cls(k, delta, gamma, mult.eta, mult.alpha, G)


class StepHistory:
    """The ``k`` most recent magnetisations ``m^{n-k}, ..., m^{n-1}`` (oldest first)."""

    def __init__(self, scheme: BdfScheme, tau: float, fields: Sequence[NodalField], times: Sequence[float]):
        if len(fields) != scheme.k or len(times) != scheme.k:
            raise ValueError(f"order {scheme.k} needs exactly {scheme.k} starting values")
        if scheme.k > 1 and not np.allclose(np.diff(times), tau, rtol=1e-9, atol=1e-14):
            raise ValueError("history times must be uniformly spaced by tau")
        self.scheme = scheme
        self.tau = float(tau)
        self.fields: deque[NodalField] = deque(fields, maxlen=scheme.k)
        self.times: deque[float] = deque((float(t) for t in times), maxlen=scheme.k)

    @property
    def space(self) -> FiniteElementSpace:
        return self.fields[-1].space

    @property
    def next_time(self) -> float:
        return self.times[-1] + self.tau

    def previous(self, j: int) -> NodalField:
        """``m^{n-j}`` for ``j = 1..k``."""
        return self.fields[-j]

    def push(self, m: NodalField, t: float) -> None:
        self.fields.append(m)
        self.times.append(float(t))


def extrapolate_normalized(history: StepHistory) -> np.ndarray:
    """Normalised extrapolation ``sum_j gamma_j m^{n-j-1}`` at quadrature points.

    Where the extrapolated vector is shorter than 1e-12 the fixed direction
    ``(0, 0, 1)`` is used instead.
    """
    space = history.space
    w = sum(g * history.previous(j + 1).values for j, g in enumerate(history.scheme.gamma))
    wq = space.eval_at_quad(w)
    norm = np.linalg.norm(wq, axis=-1, keepdims=True)
    degenerate = norm < DEGENERATE_NORM
    out = np.where(degenerate, FALLBACK_DIRECTION, wq / np.where(degenerate, 1.0, norm))
    return out


class StepResult(NamedTuple):
    m: NodalField
    mdot: NodalField
    lam: np.ndarray
    iterations: int
    constraint_residual: float


def _blocked(M: sp.csr_matrix, values: np.ndarray) -> np.ndarray:
    """``(I (x) M) x`` for nodal ``(N, 3)`` values, returned component-blocked."""
    return (M @ values).T.ravel()


def bdf_step(
    scheme: BdfScheme,
    space: FiniteElementSpace,
    history: StepHistory,
    H_n: NodalField,
    tau: float,
    alpha: float,
    tol: float = 1e-10,
    method: str = "direct",
) -> StepResult:
    """Advance ``history`` by one step and return the new magnetisation."""
    if not alpha > 0 or not tau > 0:
        raise ValueError("alpha and tau must be positive")
    k, d0 = scheme.k, scheme.delta[0]
    M, A = space.mass_matrix, space.stiffness_matrix
    mhat = extrapolate_normalized(history)

    I3 = sp.identity(3, format="csr")
    K = (sp.kron(I3, alpha * M + (tau / d0) * A) + assemble_skew(space, mhat)).tocsr()
    C = assemble_constraint(space, mhat)
    known = sum(scheme.delta[j] * history.previous(j).values for j in range(1, k + 1))
    f = _blocked(M, H_n.values) + _blocked(A, known) / d0

    sol = solve_saddle(SaddleSystem(K, C, f), tol=tol, method=method)
    mdot = NodalField.from_vector(space, sol.xdot)
    m_new = NodalField(space, (tau * mdot.values - known) / d0)
    residual = float(np.linalg.norm(C @ sol.xdot) / max(1.0, np.linalg.norm(sol.xdot)))
    history.push(m_new, history.next_time)
    return StepResult(m_new, mdot, sol.lam, sol.iterations, residual)


@dataclass
class Trajectory:
    """Time levels and per-level diagnostics of a BDF run.

    ``grad_norms``, ``normality_l2``, ``unit_deviation``, ``nodal_deviation``
    and ``times`` cover
    every level including the starting values; ``mdot_norms``, ``H_norms``,
    ``iterations`` and ``constraint_residuals`` cover the computed levels
    ``k, k+1, ...`` only.
    """

    k: int
    tau: float
    times: list[float] = field(default_factory=list)
    fields: list[NodalField] = field(default_factory=list)
    mdots: list[NodalField] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    normality_l2: list[float] = field(default_factory=list)
    unit_deviation: list[float] = field(default_factory=list)
    nodal_deviation: list[float] = field(default_factory=list)
    mdot_norms: list[float] = field(default_factory=list)
    H_norms: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    constraint_residuals: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def final(self) -> NodalField:
        return self.fields[-1]

    def record_level(self, m: NodalField, t: float, keep: bool) -> None:
        space = m.space
        self.times.append(float(t))
        if keep or len(self.fields) <= self.k:
            self.fields.append(m)
        else:
            self.fields[-1] = m
        self.grad_norms.append(grad_l2_norm(space, m.values))
        self.normality_l2.append(normality_deviation(space, m.values))
        self.unit_deviation.append(unit_length_deviation(space, m.values))
        self.nodal_deviation.append(nodal_unit_deviation(m.values))


def normality_deviation(space: FiniteElementSpace, values: np.ndarray) -> float:
    """``|| 1 - |m_h| ||_{L2}`` by quadrature."""
    mq = space.eval_at_quad(values)
    return float(np.sqrt(space.integrate((1.0 - np.linalg.norm(mq, axis=-1)) ** 2)))


def nodal_unit_deviation(values: np.ndarray) -> float:
    """``max |1 - |m_h|^2|`` over finite element nodes."""
    return float(np.max(np.abs(1.0 - np.sum(values**2, axis=-1))))


def unit_length_deviation(space: FiniteElementSpace, values: np.ndarray) -> float:
    """``max |1 - |m_h|^2|`` over finite element nodes and quadrature points."""
    nodal = nodal_unit_deviation(values)
    quad = np.max(np.abs(1.0 - np.sum(space.eval_at_quad(values) ** 2, axis=-1)))
    return float(max(nodal, quad))


class StepFailure(RuntimeError):
    """A time step failed; carries the step index and time."""

    def __init__(self, n: int, t: float, cause: Exception):
        super().__init__(f"step n={n} (t={t:.6g}) failed: {cause}")
        self.n = n
        self.t = t
        self.__cause__ = cause


def run_trajectory(
    scheme: BdfScheme,
    space: FiniteElementSpace,
    initial: Sequence[NodalField],
    H: Callable[[float], NodalField],
    tau: float,
    n_steps: int,
    alpha: float,
    tol: float = 1e-10,
    t0: float = 0.0,
    method: str = "direct",
    keep_fields: bool = False,
) -> Trajectory:
    """Run ``n_steps`` BDF steps from ``k`` starting values at ``t0, ..., t0+(k-1)tau``.

    ``H(t)`` returns the nodal external field at time ``t``. The last time
    level reached is ``t0 + (k - 1 + n_steps) * tau``. With ``keep_fields``
    every magnetisation is stored, otherwise only the starting values and
    the latest one.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    k = scheme.k
    times = [t0 + i * tau for i in range(k)]
    history = StepHistory(scheme, tau, list(initial), times)
    traj = Trajectory(k, tau)
    for m, t in zip(initial, times):
        traj.record_level(m, t, keep=True)
    start = time.perf_counter()
    for step in range(n_steps):
        n = k + step
        t = t0 + n * tau
        try:
            H_n = H(t)
            res = bdf_step(scheme, space, history, H_n, tau, alpha, tol, method)
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise StepFailure(n, t, exc) from exc
        traj.record_level(res.m, t, keep=keep_fields)
        if keep_fields:
            traj.mdots.append(res.mdot)
        traj.mdot_norms.append(l2_norm(space, res.mdot.values))
        traj.H_norms.append(l2_norm(space, H_n.values))
        traj.iterations.append(res.iterations)
        traj.constraint_residuals.append(res.constraint_residual)
        log.debug("step %d t=%.4g |grad m|=%.6g", n, t, traj.grad_norms[-1])
    traj.wall_time = time.perf_counter() - start
    return traj
