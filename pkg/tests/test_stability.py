import math
from types import SimpleNamespace

import numpy as np
import pytest

from llgbdf.stability import (
    MultiplierData,
    alpha_threshold,
    check_positivity,
    discrete_energy_report,
    energy_constants,
    g_matrix,
    multiplier_eta,
    optimal_multiplier,
    stability_table,
    verify_g_inequality,
)

# Smallest multipliers computed independently by bisection on the dense
# boundary minimum (see test_optimal_multiplier_by_bisection).
ETA_OPTIMAL = {3: 0.0835921, 4: 0.2878066, 5: 0.8159802}


def test_alpha_thresholds():
    assert alpha_threshold(3) == 0.0913
    assert alpha_threshold(4) == 0.4041
    assert alpha_threshold(5) == 4.4348
    with pytest.raises(ValueError):
        alpha_threshold(2)


def test_g2_eigenvalues():
    lo, hi = energy_constants(2)
    assert abs(lo - (3 - 2 * math.sqrt(2)) / 4) < 1e-12
    assert abs(hi - (3 + 2 * math.sqrt(2)) / 4) < 1e-12
    with pytest.raises(ValueError):
        g_matrix(3)


@pytest.mark.parametrize("k", [3, 4, 5])
def test_positivity_fails_without_multiplier(k):
    vmin, ok = check_positivity(k, 0.0)
    assert not ok and vmin < -1e-3


@pytest.mark.parametrize("k", [1, 2])
def test_a_stable_orders_positive(k):
    assert check_positivity(k, 0.0)[1]


@pytest.mark.parametrize("k", [3, 5])
def test_tabulated_multipliers_positive(k):
    assert check_positivity(k, multiplier_eta(k))[1]


def test_tabulated_eta4_is_rounded_down():
    vmin, ok = check_positivity(4, multiplier_eta(4))
    assert not ok and -2e-5 < vmin < 0
    assert check_positivity(4, 0.2879)[1]


@pytest.mark.parametrize("k", [3, 4, 5])
def test_optimal_multiplier_by_bisection(k):
    lo, hi = 0.0, 0.99
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if check_positivity(k, mid, 200_000)[0] >= 0:
            hi = mid
        else:
            lo = mid
    assert abs(hi - ETA_OPTIMAL[k]) < 2e-7
    assert abs(optimal_multiplier(k) - ETA_OPTIMAL[k]) < 2e-7
    assert round(optimal_multiplier(k), 4) == multiplier_eta(k)


def test_g_inequality_k2_holds():
    assert verify_g_inequality(2) <= 1e-10


def test_g_inequality_k1_needs_half():
    assert verify_g_inequality(1, G=np.array([[0.5]])) <= 1e-10
    assert verify_g_inequality(1) > 1.0


def test_g_inequality_with_multiplier_has_violations_for_k3():
    # without a G-matrix of matching size the routine still evaluates the form
    with pytest.raises((ValueError, IndexError)):
        verify_g_inequality(3, eta=0.1, G=np.eye(2))


def test_multiplier_data():
    d = MultiplierData.for_order(3)
    assert d.eta == 0.0836 and abs(d.alpha - 0.0836 / 0.9164) < 1e-15
    with pytest.raises(ValueError):
        MultiplierData(3, 1.0, 0.0)
    with pytest.raises(ValueError):
        check_positivity(3, 1.5)
    with pytest.raises(ValueError):
        check_positivity(3, 0.1, n_samples=10)


def test_energy_report_on_synthetic_trajectory():
    traj = SimpleNamespace(grad_norms=[1.0, 0.9, 0.8], mdot_norms=[0.5, 0.4], H_norms=[0.0, 0.0])
    margins = discrete_energy_report(traj, 1, alpha=0.5, tau=0.1)
    # level 1: 1 - (0.81 + 0.025 * 0.25) ; level 2: 1 - (0.64 + 0.025 * 0.41)
    np.testing.assert_allclose(margins, [1 - 0.81 - 0.00625, 1 - 0.64 - 0.01025])


def test_stability_table_rows():
    rows = stability_table(n_samples=2000)
    assert [r["k"] for r in rows] == [1, 2, 3, 4, 5]
    assert rows[4]["alpha"] == 4.4348
