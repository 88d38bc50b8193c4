import numpy as np
import pytest
import sympy as sy
from hypothesis import given, strategies as st

from oracles import fd_jacobian

from llgbdf.problems import (
    exact_solution_1,
    exact_solution_1_dt,
    exact_solution_1_grad,
    exact_solution_2,
    exact_solution_2_dt,
    exact_solution_2_grad,
    forcing_field,
    get_problem,
    laplacian_fd,
    manufactured_problem_1,
    manufactured_problem_2,
    nonsmooth_initial,
)

points = st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 0.01)).map(np.array)
times = st.floats(0.0, 0.2)


@given(points, times)
def test_exact_solutions_are_unit(x, t):
    assert abs(np.linalg.norm(exact_solution_1(x, t)) - 1) < 1e-12
    assert abs(np.linalg.norm(exact_solution_2(x, t)) - 1) < 1e-12


@given(points, times)
def test_time_derivatives_tangent(x, t):
    for m, dm in ((exact_solution_1, exact_solution_1_dt), (exact_solution_2, exact_solution_2_dt)):
        assert abs(m(x, t) @ dm(x, t)) < 1e-9 * max(1.0, np.linalg.norm(dm(x, t)))


def test_time_derivatives_by_finite_differences():
    x = np.random.default_rng(0).random((50, 3)) * [1, 1, 0.01]
    for t in (0.0, 0.07, 0.19):
        e = 1e-6
        for m, dm in ((exact_solution_1, exact_solution_1_dt), (exact_solution_2, exact_solution_2_dt)):
            fd = (m(x, t + e) - m(x, t - e)) / (2 * e)
            np.testing.assert_allclose(dm(x, t), fd, atol=1e-5 * max(1, np.abs(fd).max()))


@pytest.mark.parametrize("t", [0.0, 0.1, 0.2])
def test_spatial_jacobians_by_finite_differences(t):
    x = np.random.default_rng(1).random((60, 3)) * [1, 1, 0.01]
    for m, J in ((exact_solution_1, exact_solution_1_grad), (exact_solution_2, exact_solution_2_grad)):
        fd = fd_jacobian(lambda y: m(y, t), x)
        np.testing.assert_allclose(J(x, t), fd, atol=1e-6 * max(1, np.abs(fd).max()))


def test_solution1_profile_values():
    # at the disk centre the bump has zero in-plane part; outside it is e_z
    np.testing.assert_allclose(exact_solution_1(np.array([0.5, 0.5, 0]), 0.0), [0, 0, 1])
    np.testing.assert_allclose(exact_solution_1(np.array([0.0, 0.0, 0]), 0.1), [0, 0, 1])
    # amplitude C exp(-g/(1/4 - d)) at d = 1/16, t = 0: 400 exp(-1/(3/16))
    x = np.array([0.75, 0.5, 0.0])
    assert np.isclose(exact_solution_1(x, 0.0)[0], 400 * np.exp(-16 / 3) * 0.25)


def test_solution2_rotation():
    x = np.array([0.0, 0.3, 0.0])  # p = 1/4
    np.testing.assert_allclose(exact_solution_2(x, 0.0), [0, np.sqrt(1 - 1 / 16), -0.25])
    np.testing.assert_allclose(exact_solution_2(x, 0.2 / 6), [-0.25, np.sqrt(1 - 1 / 16), 0], atol=1e-15)


def symbolic_forcing_2(alpha=0.2, t_final=0.2):
    x1, x2, x3, t = sy.symbols("x1 x2 x3 t", real=True)
    p = x1**3 - sy.Rational(3, 2) * x1**2 + sy.Rational(1, 4)
    th = 3 * sy.pi * t / t_final
    m = sy.Matrix([-p * sy.sin(th), sy.sqrt(1 - p**2), -p * sy.cos(th)])
    dm = m.diff(t)
    lap = m.diff(x1, 2) + m.diff(x2, 2) + m.diff(x3, 2)
    H = alpha * dm + m.cross(dm) - lap
    return sy.lambdify((x1, x2, x3, t), H, "numpy")


def test_forcing_matches_symbolic_oracle():
    H = symbolic_forcing_2()
    prob = manufactured_problem_2()
    x = np.random.default_rng(2).random((40, 3)) * [1, 1, 0.01]
    for t in (0.0, 0.05, 0.13):
        ref = np.array([np.asarray(H(*xi, t), dtype=float).ravel() for xi in x])
        np.testing.assert_allclose(forcing_field(prob, x, t), ref, atol=2e-5)


def test_forcing_fd_step_sanity():
    for prob in (manufactured_problem_1(), manufactured_problem_2()):
        x = np.random.default_rng(3).random((40, 3)) * [1, 1, 0.01]
        a = forcing_field(prob, x, 0.1, 1e-5)
        b = forcing_field(prob, x, 0.1, 5e-6)
        assert np.max(np.abs(a - b)) < 1e-5 * max(1.0, np.abs(a).max())


def test_laplacian_of_quadratic():
    f = lambda x, t: np.column_stack([x[:, 0] ** 2, x[:, 1] ** 2 + x[:, 2] ** 2, 0 * x[:, 0]])  # noqa: E731
    lap = laplacian_fd(f, np.array([[0.3, 0.4, 0.5]]), 0.0, 1e-3)
    np.testing.assert_allclose(lap, [[2, 4, 0]], atol=1e-6)


def test_nonsmooth_initial():
    assert np.allclose(nonsmooth_initial(np.array([0.5, 0.5, 0])), [0, 0, 1])
    assert np.allclose(nonsmooth_initial(np.array([0.9, 0.9, 0])), [0, 0, 1])
    # d = 1/4 exactly is inside the disk; the field is continuous there
    inside = nonsmooth_initial(np.array([1.0, 0.5, 0]))
    np.testing.assert_allclose(inside, [0.5, 0, np.sqrt(0.75)])
    x = np.random.default_rng(4).random((100, 3))
    np.testing.assert_allclose(np.linalg.norm(nonsmooth_initial(x), axis=1), 1.0)


def test_problem_registry():
    assert get_problem("exact2").manufactured
    p = get_problem("nonsmooth")
    np.testing.assert_allclose(p.H(np.zeros((2, 3)), 0.0), [[0, 1, 1]] * 2)
    with pytest.raises(ValueError):
        get_problem("unknown")
    with pytest.raises(ValueError):
        forcing_field(p, np.zeros(3), 0.0)
    eq = get_problem("equilibrium")
    np.testing.assert_allclose(eq.H(np.random.default_rng(0).random((5, 3)), 0.1), 0.0, atol=1e-12)
