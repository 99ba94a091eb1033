import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import simanca
from cscx.ale_models import (ale_rescale, burns_potential, calabi_grid_func, calabi_profile,
                             calabi_zm_potential, fit_refined_asymptotics, simanca_decay,
                             solve_simanca_ode, weighted_ale)
from cscx.errors import (BranchError, IllConditionedFit, InsufficientWindow, InvalidParameter)
from cscx.kahler_calculus import GridPotential, radial_scalar_curvature, scalar_curvature_grid
from cscx.profiles import flat_profile

# asymptotic slopes of the Simanca potentials; reference: mpmath quadrature of
# log lam = -int_1^inf (x^(m-1)/P(x) - 1/(x-1)) dx (tests/oracles.py)
LAMBDA = {3: 2.3650942707412270201, 4: 4.5001389437474705728, 5: 7.4527006424686696152}


def test_burns_values():
    d = burns_potential(1.0).derivatives(np.array([1.0]))[:3, 0]
    assert d == pytest.approx([1.0, 2.0, -1.0], abs=1e-14)


def test_burns_rejects_nonpositive_lambda():
    with pytest.raises(InvalidParameter):
        burns_potential(0.0)


@given(st.floats(0.2, 5.0))
def test_burns_rescaled_form(lam):
    # after u = sqrt(2 lam) v: |u|^2/2 + log|u|^2 + const
    G = ale_rescale(burns_potential(lam), lam)
    s = np.geomspace(0.1, 100, 9)
    rest = G(s) - 0.5 * s - np.log(s)
    assert np.ptp(rest) < 1e-11 * (1 + abs(rest[0]))


def test_flat_rescale_is_flat():
    G = ale_rescale(flat_profile(3, 0.5), 0.5)
    s = np.geomspace(0.1, 10, 5)
    assert np.allclose(G(s), 0.5 * s, rtol=1e-14)


@pytest.mark.parametrize("m", [3, 4, 5])
def test_simanca_lambda_matches_quadrature(m):
    assert simanca(m).lam == pytest.approx(LAMBDA[m], rel=1e-11)


@pytest.mark.parametrize("m", [3, 4])
def test_simanca_zeta_monotone_and_bounded(m):
    p = simanca(m)
    s = np.concatenate([[0.0], np.geomspace(1e-6, 1e4, 400)])
    z = p.zeta(s)
    assert z[0] == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.diff(z) >= -1e-12)
    assert np.all((z >= 1 - 1e-12) & (z <= p.lam + 1e-12))


@pytest.mark.parametrize("m", [3, 4])
def test_simanca_scalar_flat(m):
    p = simanca(m)
    s = np.geomspace(0.1, 100, 60)
    assert np.max(np.abs(radial_scalar_curvature(p.A, s))) <= 10 * p.tol


def test_simanca_ode_residual_within_tolerance():
    p = solve_simanca_ode(3, tol=1e-10)
    assert p.ode_residual_max <= 10 * p.tol


def test_simanca_preconditions():
    with pytest.raises(InvalidParameter):
        solve_simanca_ode(2)
    with pytest.raises(InvalidParameter):
        solve_simanca_ode(3, s_max=10.0)


def test_simanca_to_dict():
    d = simanca(3).to_dict(max_nodes=50)
    assert d["lambda"] == simanca(3).lam and 0 < len(d["nodes"]) <= 50


def test_simanca_m3_leading_decay():
    rep = simanca_decay(simanca(3))
    assert rep.slope_literal <= -2 + 0.3
    assert "slope_literal" in rep.to_csv()


@pytest.mark.parametrize("m", [3, 4, 5])
def test_simanca_corrected_coefficient_decay(m):
    # A - lam s = -lam^(2-m) s^(2-m) / (m-2) + O(s^(1-m))
    assert simanca_decay(simanca(m)).slope_corrected <= 1 - m + 0.3


def test_simanca_decay_window():
    with pytest.raises(InsufficientWindow):
        simanca_decay(simanca(3), 1e2, 1e6)


@pytest.mark.parametrize("m", [3, 4])
def test_simanca_rescaled_decay_coefficient(m):
    p = simanca(m)
    R = np.geomspace(3, 100, 40)
    s = R**2
    fit = fit_refined_asymptotics(R, ale_rescale(p.A, p.lam)(s) - s / 2, m)
    # -2^(m-2)/(m-2): -2 for both m = 3 and m = 4
    assert fit.c_decay == pytest.approx(-(2 ** (m - 2)) / (m - 2), rel=1e-2)
    assert abs(fit.b_const) < 1e-4


def test_fit_burns_exact_basis():
    R = np.geomspace(3, 100, 30)
    s = R**2
    fit = fit_refined_asymptotics(R, ale_rescale(burns_potential(1.0), 1.0)(s) - s / 2, 2)
    assert fit.c_decay == pytest.approx(1.0, rel=1e-12)
    assert fit.remainder_order == -math.inf


def test_fit_synthetic_remainder():
    R = np.geomspace(1, 100, 40)
    fit = fit_refined_asymptotics(R, R**-2.0 + 0.1 * R**-3.0, 3)
    assert fit.c_decay == pytest.approx(1.0, rel=1e-6)
    assert abs(fit.remainder_order + 3) < 0.3


def test_fit_linear_term_in_full_mode():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 6))
    R = np.geomspace(2, 200, 60)
    X *= (R / np.linalg.norm(X, axis=1))[:, None]
    y = 0.3 * X[:, 0] - 0.2 * X[:, 3] + 1.5 + 2.0 * R**-2.0
    fit = fit_refined_asymptotics(R, y, 3, points=X)
    assert fit.a_lin[0] == pytest.approx(0.3, abs=1e-9)
    assert fit.a_lin[1].imag == pytest.approx(0.2, abs=1e-9)
    assert fit.c_decay == pytest.approx(2.0, rel=1e-9)


def test_fit_window_checks():
    with pytest.raises(InsufficientWindow):
        fit_refined_asymptotics(np.linspace(1, 2, 10), np.ones(10), 3)
    with pytest.raises(IllConditionedFit):
        fit_refined_asymptotics(np.geomspace(1, 100, 10), np.ones(10), 3, cond_max=1.0)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_calabi_real_and_ale(m):
    r = np.array([10.0, 20.0, 40.0, 80.0])
    d = calabi_zm_potential(m, r) - r**2
    # phi - r^2 -> const + O(r^-2)
    steps = np.abs(np.diff(d))
    assert np.all(steps[1:] < steps[:-1] / 3)
    with pytest.raises(BranchError):
        calabi_zm_potential(m, np.array([0.0]))


@pytest.mark.parametrize("m", [2, 3, 4])
def test_calabi_profile_scalar_flat(m):
    s = np.geomspace(0.05, 50, 30)
    assert np.max(np.abs(radial_scalar_curvature(calabi_profile(m), s))) < 1e-9


def test_calabi_grid_oracle_m2():
    P = GridPotential(2, 1.0, 3.0, 1e-2, calabi_grid_func(2))
    assert abs(scalar_curvature_grid(P, np.array([2.0, 0, 0, 0]))) < 1e-6


def test_weighted_ale_scaling():
    G = weighted_ale(ale_rescale(burns_potential(1.0), 1.0), 4.0)
    s = np.geomspace(1e2, 1e4, 5)
    # still |u|^2/2 + (a c) log|u|^2 + O(1) with O(1) -> 0 normalization preserved
    rest = G(s) - 0.5 * s - 4.0 * np.log(s)
    base = ale_rescale(burns_potential(1.0), 1.0)
    rest0 = base(s) - 0.5 * s - np.log(s)
    assert np.allclose(rest, 4.0 * rest0, atol=1e-9)
    assert np.max(np.abs(radial_scalar_curvature(G, s))) < 1e-12
