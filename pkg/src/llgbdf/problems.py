"""Exact solutions, forcing fields and nonsmooth data for the LLG experiments.

All evaluators are vectorised: points are arrays of shape ``(n, 3)`` (a
single point of shape ``(3,)`` is accepted as well) and time is a scalar.
Both manufactured solutions are independent of ``z``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DEFAULT_ALPHA = 0.2
DEFAULT_T_FINAL = 0.2
DEFAULT_C = 400.0
EXP_CLAMP = -700.0


def _points(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def _out(v: np.ndarray, single: bool) -> np.ndarray:
    return v[0] if single else v


def _disk_distance(x: np.ndarray) -> np.ndarray:
    return (x[:, 0] - 0.5) ** 2 + (x[:, 1] - 0.5) ** 2


def _g(t: float, t_final: float) -> tuple[float, float]:
    """``g(t) = (T + 0.1) / (T + 0.1 - t)`` and its derivative."""
    a = t_final + 0.1
    return a / (a - t), a / (a - t) ** 2


def _bump(x: np.ndarray, t: float, t_final: float, C: float):
    """Amplitude ``C exp(-g(t) / (1/4 - d))`` inside the disk, 0 outside.

    Returns ``(E, s, d)`` with ``s = 1/4 - d``. Exponents below -700
    are replaced by an exact zero amplitude.
    """
    d = _disk_distance(x)
    s = 0.25 - d
    inside = s > 0
    g, _ = _g(t, t_final)
    expo = np.full_like(d, -np.inf)
    expo[inside] = -g / s[inside]
    E = np.zeros_like(d)
    ok = inside & (expo > EXP_CLAMP)
    E[ok] = C * np.exp(expo[ok])
    return E, s, d


def exact_solution_1(x, t: float, t_final: float = DEFAULT_T_FINAL, C: float = DEFAULT_C) -> np.ndarray:
    """Radially localised profile, ``(0, 0, 1)`` outside the disk ``d(x) >= 1/4``."""
    x, single = _points(x)
    E, _, d = _bump(x, t, t_final, C)
    m = np.empty((x.shape[0], 3))
    m[:, 0] = E * (x[:, 0] - 0.5)
    m[:, 1] = E * (x[:, 1] - 0.5)
    m[:, 2] = np.sqrt(1.0 - E**2 * d)
    return _out(m, single)


def exact_solution_1_dt(x, t: float, t_final: float = DEFAULT_T_FINAL, C: float = DEFAULT_C) -> np.ndarray:
    x, single = _points(x)
    E, s, d = _bump(x, t, t_final, C)
    _, dg = _g(t, t_final)
    rate = np.zeros_like(E)
    nz = E > 0
    rate[nz] = -dg / s[nz]  # dE/dt = rate * E
    m3 = np.sqrt(1.0 - E**2 * d)
    v = np.empty((x.shape[0], 3))
    v[:, 0] = rate * E * (x[:, 0] - 0.5)
    v[:, 1] = rate * E * (x[:, 1] - 0.5)
    v[:, 2] = -rate * E**2 * d / m3
    return _out(v, single)


def exact_solution_1_grad(x, t: float, t_final: float = DEFAULT_T_FINAL, C: float = DEFAULT_C) -> np.ndarray:
    """Jacobian ``[point, component, direction]`` of :func:`exact_solution_1`."""
    x, single = _points(x)
    E, s, d = _bump(x, t, t_final, C)
    g, _ = _g(t, t_final)
    u = x[:, 0] - 0.5
    w = x[:, 1] - 0.5
    nz = E > 0
    coef = np.zeros_like(E)
    coef[nz] = -2.0 * g / s[nz] ** 2  # dE/dx_i = coef * E * (x_i - 1/2)
    Ex = coef * E * u
    Ey = coef * E * w
    m3 = np.sqrt(1.0 - E**2 * d)
    J = np.zeros((x.shape[0], 3, 3))
    J[:, 0, 0] = E + u * Ex
    J[:, 0, 1] = u * Ey
    J[:, 1, 0] = w * Ex
    J[:, 1, 1] = E + w * Ey
    J[:, 2, 0] = -(E * Ex * d + E**2 * u) / m3
    J[:, 2, 1] = -(E * Ey * d + E**2 * w) / m3
    return _out(J, single)


def _cubic(x1: np.ndarray):
    p = x1**3 - 1.5 * x1**2 + 0.25
    dp = 3.0 * x1**2 - 3.0 * x1
    return p, dp


def exact_solution_2(x, t: float, t_final: float = DEFAULT_T_FINAL) -> np.ndarray:
    """Rotating profile depending on ``x_1`` only."""
    x, single = _points(x)
    p, _ = _cubic(x[:, 0])
    th = 3.0 * np.pi * t / t_final
    m = np.column_stack([-p * np.sin(th), np.sqrt(1.0 - p**2), -p * np.cos(th)])
    return _out(m, single)


def exact_solution_2_dt(x, t: float, t_final: float = DEFAULT_T_FINAL) -> np.ndarray:
    x, single = _points(x)
    p, _ = _cubic(x[:, 0])
    w = 3.0 * np.pi / t_final
    th = w * t
    v = np.column_stack([-p * w * np.cos(th), np.zeros_like(p), p * w * np.sin(th)])
    return _out(v, single)


def exact_solution_2_grad(x, t: float, t_final: float = DEFAULT_T_FINAL) -> np.ndarray:
    x, single = _points(x)
    p, dp = _cubic(x[:, 0])
    th = 3.0 * np.pi * t / t_final
    J = np.zeros((x.shape[0], 3, 3))
    J[:, 0, 0] = -dp * np.sin(th)
    J[:, 1, 0] = -p * dp / np.sqrt(1.0 - p**2)
    J[:, 2, 0] = -dp * np.cos(th)
    return _out(J, single)


def nonsmooth_initial(x) -> np.ndarray:
    """Continuous, non-C^1 initial magnetisation; ``(0, 0, 1)`` where ``d(x) > 1/4``."""
    x, single = _points(x)
    d = _disk_distance(x)
    inside = d <= 0.25
    m = np.zeros((x.shape[0], 3))
    m[:, 2] = 1.0
    m[inside, 0] = x[inside, 0] - 0.5
    m[inside, 1] = x[inside, 1] - 0.5
    m[inside, 2] = np.sqrt(1.0 - d[inside])
    return _out(m, single)


def constant_field(value) -> Callable:
    value = np.asarray(value, dtype=float)

    def f(x, t=0.0):
        x, single = _points(x)
        return _out(np.tile(value, (x.shape[0], 1)), single)

    return f


@dataclass
class ProblemSpec:
    """An LLG test problem.

    Manufactured problems provide ``exact``, ``exact_dt`` and ``exact_grad``
    (each ``(x, t) -> array``) and derive ``H`` from them; problems with an
    unknown solution provide ``m0`` and ``external_field`` directly.
    """

    label: str
    alpha: float = DEFAULT_ALPHA
    t_final: float = DEFAULT_T_FINAL
    exact: Callable | None = None
    exact_dt: Callable | None = None
    exact_grad: Callable | None = None
    m0: Callable | None = None
    external_field: Callable | None = None
    fd_step: float = 1e-5
    params: dict = field(default_factory=dict)

    @property
    def manufactured(self) -> bool:
        return self.exact is not None

    def initial(self, x) -> np.ndarray:
        if self.m0 is not None:
            return self.m0(x)
        return self.exact(x, 0.0)

    def H(self, x, t: float) -> np.ndarray:
        if self.external_field is not None:
            return self.external_field(x, t)
        return forcing_field(self, x, t, self.fd_step)


def laplacian_fd(f: Callable, x, t: float, step: float = 1e-5) -> np.ndarray:
    """Second-order central difference Laplacian of ``f(., t)`` in all three axes."""
    x, single = _points(x)
    center = f(x, t)
    lap = np.zeros_like(center)
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = step
        lap += f(x + e, t) - 2.0 * center + f(x - e, t)
    return _out(lap / step**2, single)


def forcing_field(spec: ProblemSpec, x, t: float, step: float = 1e-5) -> np.ndarray:
    """External field ``alpha dm/dt + m x dm/dt - Laplace(m)`` reproducing the exact solution."""
    if not spec.manufactured:
        raise ValueError(f"problem {spec.label!r} has no exact solution")
    m = spec.exact(x, t)
    dm = spec.exact_dt(x, t)
    return spec.alpha * dm + np.cross(m, dm) - laplacian_fd(spec.exact, x, t, step)


def manufactured_problem_1(alpha=DEFAULT_ALPHA, t_final=DEFAULT_T_FINAL, C=DEFAULT_C) -> ProblemSpec:
    return ProblemSpec(
        "exact1",
        alpha,
        t_final,
        exact=lambda x, t: exact_solution_1(x, t, t_final, C),
        exact_dt=lambda x, t: exact_solution_1_dt(x, t, t_final, C),
        exact_grad=lambda x, t: exact_solution_1_grad(x, t, t_final, C),
        params={"C": C},
    )


def manufactured_problem_2(alpha=DEFAULT_ALPHA, t_final=DEFAULT_T_FINAL) -> ProblemSpec:
    return ProblemSpec(
        "exact2",
        alpha,
        t_final,
        exact=lambda x, t: exact_solution_2(x, t, t_final),
        exact_dt=lambda x, t: exact_solution_2_dt(x, t, t_final),
        exact_grad=lambda x, t: exact_solution_2_grad(x, t, t_final),
    )


def nonsmooth_problem(alpha=DEFAULT_ALPHA, t_final=DEFAULT_T_FINAL, H=(0.0, 1.0, 1.0)) -> ProblemSpec:
    return ProblemSpec("nonsmooth", alpha, t_final, m0=nonsmooth_initial, external_field=constant_field(H))


def equilibrium_problem(alpha=DEFAULT_ALPHA, t_final=DEFAULT_T_FINAL) -> ProblemSpec:
    """Constant ``m = e_z`` with zero forcing."""
    ez = constant_field((0.0, 0.0, 1.0))
    zero = constant_field((0.0, 0.0, 0.0))
    return ProblemSpec(
        "equilibrium",
        alpha,
        t_final,
        exact=ez,
        exact_dt=zero,
        exact_grad=lambda x, t: np.zeros(np.shape(np.atleast_2d(x))[:1] + (3, 3)),
    )


PROBLEMS = {
    "exact1": manufactured_problem_1,
    "exact2": manufactured_problem_2,
    "nonsmooth": nonsmooth_problem,
    "equilibrium": equilibrium_problem,
}


def get_problem(label: str, **kwargs) -> ProblemSpec:
    try:
        factory = PROBLEMS[label]
    except KeyError:
        raise ValueError(f"unknown problem {label!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**kwargs)
