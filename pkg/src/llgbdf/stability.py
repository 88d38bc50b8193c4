"""Energy-technique tools for BDF methods.

Dahlquist G-matrices for the A-stable orders 1 and 2, Nevanlinna-Odeh
multipliers for orders 3 to 5, the resulting damping thresholds, and a
checker for the discrete energy inequality of computed trajectories.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coefficients import MAX_ORDER, _check_order, bdf_coefficients

# Tabulated smallest multipliers (4 decimals).
MULTIPLIER_ETA = {1: 0.0, 2: 0.0, 3: 0.0836, 4: 0.2878, 5: 0.8160}

POSITIVITY_TOL = 1e-12


@dataclass(frozen=True)
class MultiplierData:
    k: int
    eta: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.eta < 1.0:
            raise ValueError(f"multiplier must lie in [0, 1), got {self.eta}")

    @classmethod
    def for_order(cls, k: int) -> "MultiplierData":
        eta = multiplier_eta(k)
        return cls(k, eta, eta / (1.0 - eta))


def g_matrix(k: int) -> np.ndarray:
    """G-matrix of the k-step BDF method for ``k`` in {1, 2}.

    Indices follow the telescoping identity ``sum g_ij (v_i, v_j)`` with
    ``v_k`` the newest value.
    """
    if k == 1:
        return np.array([[1.0]])
    if k == 2:
        return 0.25 * np.array([[1.0, -2.0], [-2.0, 5.0]])
    raise ValueError(f"G-matrix is only available for k in {{1, 2}}, got {k!r}")


def multiplier_eta(k: int) -> float:
    _check_order(k)
    return MULTIPLIER_ETA[k]


def alpha_threshold(k: int, decimals: int = 4) -> float:
    """Damping threshold ``eta_k / (1 - eta_k)`` for ``k`` in 3..5.

    The ratio is rounded *up* to ``decimals`` places, since it is a lower
    bound on admissible damping; this reproduces 0.0913, 0.4041, 4.4348.
    """
    if k not in (3, 4, 5):
        raise ValueError(f"damping threshold is defined for k in 3..5, got {k!r}")
    eta = multiplier_eta(k)
    scale = 10**decimals
    # guard against ratios that are exact at `decimals` places up to roundoff
    return math.ceil(round(eta / (1.0 - eta) * scale, 6)) / scale


def _boundary_values(k: int, n_samples: int):
    delta = np.array(bdf_coefficients(k))
    theta = 2.0 * np.pi * np.arange(n_samples) / n_samples
    zeta = np.exp(1j * theta)
    return theta, zeta, np.polyval(delta[::-1], zeta)


def check_positivity(k: int, eta: float, n_samples: int = 100_000) -> tuple[float, bool]:
    """Minimum of ``Re delta(z) / (1 - eta z)`` over ``n_samples`` points of ``|z| = 1``.

    The quotient is analytic on the closed unit disk for ``eta < 1``, so its
    real part attains the minimum on the boundary.
    """
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"eta must lie in [0, 1), got {eta}")
    if n_samples < 1000:
        raise ValueError("use at least 1000 boundary samples")
    _, zeta, d = _boundary_values(k, n_samples)
    vmin = float(np.min((d / (1.0 - eta * zeta)).real))
    return vmin, vmin >= -POSITIVITY_TOL


def optimal_multiplier(k: int, n_samples: int = 200_000) -> float:
    """Smallest ``eta >= 0`` with ``Re delta(z)/(1 - eta z) >= 0`` on the unit circle.

    On ``|z| = 1`` the condition reads ``Re delta(z) >= eta Re(delta(z) / z)``,
    which is linear in ``eta``; the bound from each sample is refined with a
    bounded scalar maximisation around the worst sample.
    """
    from scipy.optimize import minimize_scalar

    _check_order(k)
    delta = np.array(bdf_coefficients(k))

    def lower_bound(theta):
        z = np.exp(1j * np.asarray(theta))
        d = np.polyval(delta[::-1], z)
        a, b = d.real, (d / z).real
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(b < 0, a / b, -np.inf)

    theta = 2.0 * np.pi * (np.arange(n_samples) + 0.5) / n_samples
    lb = lower_bound(theta)
    i = int(np.argmax(lb))
    if not lb[i] > 0:
        return 0.0
    step = 2.0 * np.pi / n_samples
    res = minimize_scalar(
        lambda t: -float(lower_bound(t)),
        bounds=(theta[i] - step, theta[i] + step),
        method="bounded",
        options={"xatol": 1e-14},
    )
    return max(float(lb[i]), -float(res.fun))


def verify_g_inequality(
    k: int,
    eta: float = 0.0,
    G: np.ndarray | None = None,
    trials: int = 10_000,
    dim: int = 5,
    rng: np.random.Generator | int | None = 0,
) -> float:
    """Largest violation of the multiplier inequality over random samples.

    For random ``v_0..v_k`` in ``R^dim`` evaluates
    ``(|V_k|_G^2 - |V_{k-1}|_G^2) - <sum_i delta_i v_{k-i}, v_k - eta v_{k-1}>``
    with ``V_j = (v_{j-k+1}, ..., v_j)``; a non-positive result means no
    violation. Returns the maximum over all trials.
    """
    G = g_matrix(k) if G is None else np.asarray(G, dtype=float)
    rng = np.random.default_rng(rng)
    delta = np.array(bdf_coefficients(k))
    v = rng.standard_normal((trials, k + 1, dim))  # v[:, j] = v_j
    lhs = np.einsum("i,tid->td", delta, v[:, ::-1])
    lhs = np.einsum("td,td->t", lhs, v[:, k] - eta * v[:, k - 1])
    new = np.einsum("ij,tid,tjd->t", G, v[:, 1:], v[:, 1:])
    old = np.einsum("ij,tid,tjd->t", G, v[:, :-1], v[:, :-1])
    return float(np.max(new - old - lhs))


def energy_constants(k: int) -> tuple[float, float]:
    """``(gamma_k^-, gamma_k^+)``, the extreme eigenvalues of ``g_matrix(k)``."""
    ev = np.linalg.eigvalsh(g_matrix(k))
    return float(ev[0]), float(ev[-1])


def discrete_energy_report(trajectory, k: int, alpha: float, tau: float, H_norms=None) -> list[float]:
    """Per-step margins RHS - LHS of the discrete energy inequality (k <= 2).

    LHS is ``gamma^- |grad m^n|^2 + (alpha tau / 2) sum_{j=k}^n |mdot^j|^2`` and
    RHS is ``gamma^+ sum_{i<k} |grad m^i|^2 + (tau / (2 alpha)) sum_{j=k}^n |H^j|^2``.
    ``trajectory`` supplies ``grad_norms`` (all time levels), ``mdot_norms`` and
    ``H_norms`` (levels ``k..n``); ``H_norms`` may be overridden.
    """
    g_minus, g_plus = energy_constants(k)
    grad = np.asarray(trajectory.grad_norms, dtype=float)
    mdot = np.asarray(trajectory.mdot_norms, dtype=float)
    H = np.asarray(trajectory.H_norms if H_norms is None else H_norms, dtype=float)
    start = g_plus * np.sum(grad[:k] ** 2)
    lhs = g_minus * grad[k:] ** 2 + 0.5 * alpha * tau * np.cumsum(mdot**2)
    rhs = start + tau / (2.0 * alpha) * np.cumsum(H**2)
    return list(rhs - lhs)


def energy_rhs(trajectory, k: int, alpha: float, tau: float) -> list[float]:
    _, g_plus = energy_constants(k)
    grad = np.asarray(trajectory.grad_norms, dtype=float)
    H = np.asarray(trajectory.H_norms, dtype=float)
    return list(g_plus * np.sum(grad[:k] ** 2) + tau / (2.0 * alpha) * np.cumsum(H**2))


def stability_table(n_samples: int = 100_000) -> list[dict]:
    """Rows ``(k, eta_k, alpha_k, min boundary value)`` for k = 1..5."""
    rows = []
    for k in range(1, MAX_ORDER + 1):
        eta = multiplier_eta(k)
        vmin, holds = check_positivity(k, eta, n_samples)
        rows.append(
            {
                "k": k,
                "eta": eta,
                "eta_optimal": optimal_multiplier(k),
                "alpha": alpha_threshold(k) if k >= 3 else 0.0,
                "min_boundary": vmin,
                "positive": holds,
            }
        )
    return rows
