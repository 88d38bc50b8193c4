"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
Tolerances are the stated ones; nothing is relaxed when a check fails.
"""
from __future__ import annotations

import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

sys.path.insert(0, str(Path(__file__).parent))

from oracles import block_perm, brute_force_matrices, match_dofs  # noqa: E402

from llgbdf import experiments as ex  # noqa: E402
from llgbdf.bdf import BdfScheme, run_trajectory  # noqa: E402
from llgbdf.coefficients import bdf_coefficients, extrapolation_coefficients, extrapolation_coefficients_exact  # noqa: E402
from llgbdf.fem import (  # noqa: E402
    FiniteElementSpace,
    NodalField,
    assemble_constraint,
    assemble_mass,
    assemble_skew,
    assemble_stiffness,
    interpolate,
    l2_norm,
)
from llgbdf.linalg import SaddleSystem, dense_lu_solve, solve_saddle  # noqa: E402
from llgbdf.mesh import build_box_mesh  # noqa: E402
from llgbdf.problems import manufactured_problem_2  # noqa: E402
from llgbdf.stability import (  # noqa: E402
    alpha_threshold,
    check_positivity,
    energy_constants,
    g_matrix,
    multiplier_eta,
    verify_g_inequality,
)
from llgbdf.tangent import project_tangent, projection_error  # noqa: E402


def _fmt(values) -> str:
    return "[" + ", ".join(f"{v:.3f}" for v in values) + "]"


# ---------------------------------------------------------------- criterion 1

def criterion_1():
    worst = 0.0
    abs_sum_ok = True
    for k in range(1, 6):
        d = bdf_coefficients(k)
        g = extrapolation_coefficients(k)
        for l in range(k + 1):
            target = l * k ** (l - 1) if l else 0.0
            lhs = sum((k - i) ** l * d[i] for i in range(k + 1))
            mid = l * sum((k - i - 1) ** (l - 1) * g[i] for i in range(k)) if l else 0.0
            worst = max(worst, abs(lhs - target), abs(mid - target))
        abs_sum_ok &= sum(abs(c) for c in extrapolation_coefficients_exact(k)) == Fraction(2**k - 1)
        abs_sum_ok &= sum(abs(c) for c in g) == 2**k - 1
    ok = worst <= 1e-12 and abs_sum_ok
    return ok, f"max order-condition defect {worst:.2e}; sum|gamma| = 2^k-1 exactly: {abs_sum_ok}"


# ---------------------------------------------------------------- criterion 2

def criterion_2():
    alphas = {k: alpha_threshold(k) for k in (3, 4, 5)}
    alpha_ok = alphas == {3: 0.0913, 4: 0.4041, 5: 4.4348}
    lo, hi = energy_constants(2)
    eig_ok = abs(lo - (3 - 2 * math.sqrt(2)) / 4) <= 1e-12 and abs(hi - (3 + 2 * math.sqrt(2)) / 4) <= 1e-12
    with_eta = {k: check_positivity(k, multiplier_eta(k), 100_000) for k in range(1, 6)}
    without = {k: check_positivity(k, 0.0, 100_000) for k in (3, 4, 5)}
    pos_ok = all(h for _, h in with_eta.values())
    neg_ok = not any(h for _, h in without.values())
    failing = [k for k, (_, h) in with_eta.items() if not h]
    detail = (
        f"alpha {alphas}; G(2) eigenvalues ok: {eig_ok}; positivity with eta_k fails for k={failing} "
        f"(min {min(v for v, _ in with_eta.values()):.2e}); fails for eta=0, k=3..5: {neg_ok}"
    )
    return alpha_ok and eig_ok and pos_ok and neg_ok, detail


# ---------------------------------------------------------------- criterion 3

def criterion_3():
    viol = {k: verify_g_inequality(k, G=g_matrix(k), trials=10_000, dim=5, rng=0) for k in (1, 2)}
    ok = all(v <= 1e-10 for v in viol.values())
    return ok, "max violation " + ", ".join(f"k={k}: {v:.3e}" for k, v in viol.items())


# ---------------------------------------------------------------- criterion 4

def _twist(x):
    a = 1.3 * x[:, 0] + 0.4
    b = 2.1 * x[:, 1] - 0.7 * x[:, 2]
    return np.column_stack([np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)])


def criterion_4():
    worst = 0.0
    props = True
    for (nx, ny, nz), r in [((1, 1, 1), 1), ((2, 1, 1), 1), ((2, 2, 1), 1), ((1, 1, 1), 2), ((2, 2, 1), 2)]:
        L = 0.3
        V = FiniteElementSpace(build_box_mesh(nx, ny, nz, L), r)
        nodes, Mo, Ao, So, Co = brute_force_matrices(nx, ny, nz, L, r, _twist)
        p = match_dofs(nodes, V.nodes)
        bp = block_perm(p)
        mq = _twist(V.quad_points.reshape(-1, 3))
        mq = (mq / np.linalg.norm(mq, axis=1, keepdims=True)).reshape(V.mesh.n_cells, V.n_quad, 3)
        M, A = assemble_mass(V), assemble_stiffness(V)
        S, C = assemble_skew(V, mq), assemble_constraint(V, mq)
        pairs = [
            (M.toarray()[np.ix_(p, p)], Mo), (A.toarray()[np.ix_(p, p)], Ao),
            (S.toarray()[np.ix_(bp, bp)], So), (C.toarray()[np.ix_(p, bp)], Co),
        ]
        worst = max(worst, *(np.max(np.abs(a - b)) for a, b in pairs))
        props &= abs(S + S.T).max() == 0.0
        props &= np.max(np.abs(A @ np.ones(V.n_dofs))) <= 1e-12
        Md = M.toarray()
        props &= np.allclose(Md, Md.T, rtol=0, atol=1e-16) and np.linalg.eigvalsh(Md).min() > 0
    return worst <= 1e-12 and props, f"max |entry difference| {worst:.2e}; S^T=-S, A1=0, M SPD: {props}"


# ---------------------------------------------------------------- criterion 5

def criterion_5():
    rng = np.random.default_rng(5)
    worst, dims = 0.0, []
    for n, nz, r in [(2, 1, 1), (3, 1, 2), (4, 2, 1), (5, 1, 2)]:
        V = FiniteElementSpace(build_box_mesh(n, n, nz, 0.05), r)
        mq = rng.standard_normal((V.mesh.n_cells, V.n_quad, 3))
        mq /= np.linalg.norm(mq, axis=-1, keepdims=True)
        K = sp.kron(sp.identity(3), 0.2 * V.mass_matrix + 0.01 / 1.5 * V.stiffness_matrix) + assemble_skew(V, mq)
        system = SaddleSystem(K.tocsr(), assemble_constraint(V, mq), rng.standard_normal(3 * V.n_dofs))
        dims.append(system.dim)
        ref = dense_lu_solve(system.block_matrix().toarray(), system.rhs())
        sol = solve_saddle(system, tol=1e-10)
        got = np.concatenate([sol.xdot, sol.lam])
        worst = max(worst, np.linalg.norm(got - ref) / np.linalg.norm(ref))
    tol = 1e-10
    prob = manufactured_problem_2()
    V = FiniteElementSpace(build_box_mesh(4, 4, 1, 0.01), 2)
    res = []
    for k in (1, 2, 3, 4):
        tau = 0.2 / 16
        init = [interpolate(V, lambda x, t=i * tau: prob.exact(x, t)) for i in range(k)]
        H = lambda t: interpolate(V, lambda x: prob.H(x, t))  # noqa: E731
        traj = run_trajectory(BdfScheme.of_order(k), V, init, H, tau, 17 - k, prob.alpha, tol)
        res.extend(traj.constraint_residuals)
    ok = worst <= 1e-7 and max(dims) <= 2000 and max(res) <= 10 * tol
    return ok, f"dims {dims}; max relative difference {worst:.2e}; max constraint residual {max(res):.2e} over {len(res)} steps"


# ---------------------------------------------------------------- criterion 6

def _smooth_m(x):
    a, b = np.pi * x[:, 0], np.pi * x[:, 1]
    return np.column_stack([np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)])


def _smooth_v(x):
    return np.column_stack([np.cos(2 * x[:, 1]), x[:, 0] ** 2, np.sin(x[:, 0] + x[:, 1])])


def criterion_6():
    rng = np.random.default_rng(6)
    idem = adj = 0.0
    for r in (1, 2):
        V = FiniteElementSpace(build_box_mesh(2, 2, 1, 0.5), r)
        m = NodalField(V, rng.standard_normal((V.n_dofs, 3)))
        v = NodalField(V, rng.standard_normal((V.n_dofs, 3)))
        w = NodalField(V, rng.standard_normal((V.n_dofs, 3)))
        pv = project_tangent(V, m, v, tol=1e-12)
        pw = project_tangent(V, m, w, tol=1e-12)
        idem = max(idem, l2_norm(V, project_tangent(V, m, pv, tol=1e-12).values - pv.values))
        M = V.mass_matrix
        adj = max(adj, abs(np.sum(pv.values * (M @ w.values)) - np.sum(v.values * (M @ pw.values))))
    eocs = {}
    for r in (1, 2):
        errs = [projection_error(FiniteElementSpace(build_box_mesh(n, n, n, 1.0), r), _smooth_m, _smooth_v) for n in (2, 4, 8)]
        eocs[r] = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    rate_ok = all(abs(e - (r + 1)) <= 0.5 for r, es in eocs.items() for e in es)
    ok = idem <= 1e-8 and adj <= 1e-9 and rate_ok
    return ok, f"idempotence {idem:.1e}; self-adjointness {adj:.1e}; EOC " + "; ".join(
        f"r={r}: {_fmt(es)}" for r, es in eocs.items()
    )


# ---------------------------------------------------------------- criterion 7

def criterion_7():
    rows = ex.run_convergence_tau(ex.tau_defaults())
    eocs = ex.last_eocs(rows)
    checks = {}
    for k in (1, 2):
        checks[k] = all(abs(e - k) <= 0.4 for e in eocs[k][-2:])
    checks[3] = abs(eocs[3][-1] - 3) <= 0.5
    # k = 4 runs below its damping threshold; only EOC >= 2.5 is required
    checks[4] = eocs[4][-1] >= 2.5
    k4_note = "" if abs(eocs[4][-1] - 4) <= 0.5 else " (k=4 outside +-0.5, reported only)"
    detail = "; ".join(f"k={k}: {_fmt(eocs[k])} {'ok' if checks[k] else 'FAIL'}" for k in sorted(eocs)) + k4_note
    return all(checks.values()), detail


# ---------------------------------------------------------------- criterion 8

def criterion_8():
    rows = ex.run_convergence_h(ex.h_defaults())
    eocs = ex.last_eocs(rows)
    # the coarsest level 1/2 does not resolve the localised profile; the finest pair is judged
    checks = {r: abs(eocs[r][-1] - r) <= 0.4 for r in (1, 2)}
    detail = "; ".join(f"r={r}: {_fmt(eocs[r])} {'ok' if checks[r] else 'FAIL'}" for r in sorted(eocs))
    return all(checks.values()), detail


# ------------------------------------------------------------ criteria 9, 10

_ENERGY_CACHE: dict = {}


def _energy_rows():
    if not _ENERGY_CACHE:
        cfg = ex.energy_defaults(taus=[1e-2, 5e-3])
        _ENERGY_CACHE["rows"] = ex.run_energy_decay(cfg)
    return _ENERGY_CACHE["rows"]


def criterion_9():
    rows = [r for r in _energy_rows() if r.tau == 1e-2]
    parts, ok = [], True
    for k in (1, 2):
        sel = [r for r in rows if r.k == k]
        rel = min(r.margin / r.rhs for r in sel if r.margin is not None)
        decay = sel[-1].grad_norm < sel[0].grad_norm
        ok &= rel >= -1e-6 and decay
        parts.append(f"k={k}: min margin/RHS {rel:.3e}, energy {sel[0].grad_norm:.4f} -> {sel[-1].grad_norm:.4f}")
    return ok, "; ".join(parts)


def criterion_10():
    rows = _energy_rows()
    parts, ok = [], True
    for k in (1, 2):
        coarse = [r for r in rows if r.k == k and r.tau == 1e-2]
        fine = [r for r in rows if r.k == k and r.tau == 5e-3]
        linf = (max(r.unit_deviation_nodes for r in coarse), max(r.unit_deviation_nodes for r in fine))
        l2 = (max(r.normality_l2 for r in coarse), max(r.normality_l2 for r in fine))
        ok &= linf[1] <= 1.2 * linf[0] and l2[1] <= 1.2 * l2[0]
        parts.append(f"k={k}: max|1-|m|^2| {linf[0]:.3e} -> {linf[1]:.3e}, ||1-|m|||_L2 {l2[0]:.3e} -> {l2[1]:.3e}")
    return ok, "; ".join(parts)


CRITERIA = {
    1: ("coefficient exactness", criterion_1),
    2: ("stability tables", criterion_2),
    3: ("multiplier inequality", criterion_3),
    4: ("assembly oracle equivalence", criterion_4),
    5: ("saddle solver oracle", criterion_5),
    6: ("projection properties", criterion_6),
    7: ("tau-convergence", criterion_7),
    8: ("h-convergence", criterion_8),
    9: ("energy inequality", criterion_9),
    10: ("normality", criterion_10),
}


def run_criterion(n: int) -> tuple[bool, str]:
    name, fn = CRITERIA[n]
    ok, detail = fn()
    line = f"CRITERION {n:2d} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    return ok, line


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    ok, line = run_criterion(n)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [run_criterion(n) for n in sorted(CRITERIA)]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
