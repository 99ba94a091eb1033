import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cscx.ale_models import burns_potential
from cscx.errors import DomainError, InvalidParameter
from cscx.profiles import (ChebyshevProfile, MomentumPolynomial, SplineProfile, jet_to_s_derivatives,
                           log1p_profile, polynomial_profile, s_derivatives_to_jet)


@given(st.lists(st.floats(-10, 10), min_size=5, max_size=5), st.floats(1e-2, 1e2))
def test_stirling_round_trip(d, s):
    d = np.array(d)[:, None]
    back = jet_to_s_derivatives(s_derivatives_to_jet(d, np.array([s])), np.array([s]))
    w = s ** np.arange(5)[:, None]  # the k-th derivative carries roundoff of order s^-k
    assert np.allclose(w * back, w * d, rtol=1e-10, atol=1e-12 * np.max(np.abs(w * d)))


def test_log1p_derivatives():
    s = np.array([0.5, 2.0])
    d = log1p_profile(2).derivatives(s)
    assert np.allclose(d[1], 1 / (1 + s)) and np.allclose(d[4], -6 / (1 + s) ** 4)


def test_spline_round_trip_and_derivative_consistency():
    F = burns_potential(1.0)
    spl = SplineProfile.from_profile(F, 0.1, 10.0, nodes_per_decade=200)
    back = SplineProfile.from_json(json.dumps(spl.to_dict()))
    s = np.geomspace(0.12, 9.0, 50)
    assert np.allclose(back(s), F(s), rtol=1e-12)
    assert np.allclose(spl.derivatives(s)[1], F.derivatives(s)[1], rtol=1e-8)
    # log part is analytic, never stored
    assert spl.c_log == 1.0 and np.all(np.isfinite(spl.F_values))
    h = 1e-5
    fd = (spl(s * (1 + h)) - spl(s * (1 - h))) / (2 * h * s)
    assert np.max(np.abs(fd - spl.derivatives(s)[1])) < 1e-6 + spl.interpolation_error_bound()


def test_positivity_check():
    with pytest.raises(Exception):
        polynomial_profile(2, [0, 1.0, -1.0]).check_positivity(np.array([1.0]))
    burns_potential(1.0).check_positivity(np.geomspace(1e-3, 1e3, 50))


def test_domain_checks():
    with pytest.raises(InvalidParameter):
        polynomial_profile(1, [0, 1])
    with pytest.raises(DomainError):
        SplineProfile.from_profile(log1p_profile(2), 1, 2)(5.0)


def test_chebyshev_profile_interpolates():
    n = 24
    t = 0.5 * (0 + 2) + 1.0 * (-np.cos(np.pi * np.arange(n + 1) / n))
    p = ChebyshevProfile.from_values(2, 0.0, 2.0, np.exp(t))
    tt = np.linspace(0.1, 1.9, 7)
    assert np.allclose(p.jet(tt), np.exp(tt), rtol=1e-10)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1), st.floats(0.5, 3.0))
def test_momentum_polynomial_shift(C, D, nu, xr):
    p = MomentumPolynomial.make(3, C, D, nu, x_ref=xr)
    q = MomentumPolynomial.make(3, C, D, nu)
    x = np.linspace(0.5, 3, 5)
    assert np.allclose(p.P(x), q.P(x), atol=1e-10)
    assert np.allclose(p.P(x, 1), q.P(x, 1), atol=1e-10)
