import math

import numpy as np
import pytest

import oracles
from cscx.errors import (FixedPointDivergence, InvalidParameter, NeckCollision, WrongDimension)
from cscx.kahler_calculus import radial_scalar_curvature
from cscx.mode_analysis import CauchyData
from cscx.neck_gluing import (GluingConfig, StudyResult, convergence_study, match, momentum_reference,
                              m2_log_shift, neck_radii, solve_inner, solve_outer)

# nu of the exact radial csc metric (closing on the divisor, flat data at r0 = 1);
# reference: 40-digit mpmath solve in tests/oracles.py
NU_BURNS = {0.1: -0.4805689936885272697, 0.03: -0.043200419404186913569,
            0.01: -0.0048000005759232693014, 0.003: -0.00043200000041989897955}
NU_SIMANCA3 = {0.1: -0.038017198302090490291, 0.03: -0.00031076007123962419113}


def burns(eps, **kw):
    kw.setdefault("neck_exponent", 0.5)
    return GluingConfig(m=2, eps=eps, ale="burns", **kw)


def test_neck_radii_default_theta():
    r, R = neck_radii(GluingConfig(m=2, eps=1e-2))
    assert r == pytest.approx(10**-1.5, rel=1e-14) and R == pytest.approx(10**0.5, rel=1e-14)


def test_neck_radii_shrink():
    rs = [neck_radii(GluingConfig(m=3, eps=e, ale="simanca")) for e in (1e-1, 1e-3, 1e-6)]
    assert rs[0][0] > rs[1][0] > rs[2][0] and rs[0][1] < rs[1][1] < rs[2][1]


def test_neck_collision():
    with pytest.raises(NeckCollision):
        neck_radii(GluingConfig(m=2, eps=0.5, R0=10.0, r0=0.1))


def test_config_validation():
    with pytest.raises(WrongDimension):
        GluingConfig(m=3, eps=0.1, ale="burns")
    with pytest.raises(WrongDimension):
        GluingConfig(m=2, eps=0.1, ale="simanca")
    for bad in ({"eps": 1.5}, {"neck_exponent": 1.0}, {"relaxation": 0.0}, {"method": "x"}):
        with pytest.raises(InvalidParameter):
            GluingConfig(**{"m": 2, "eps": 0.1, **bad})


def test_m2_log_shift():
    cfg = GluingConfig(m=2, eps=1e-2, neck_exponent=0.75)
    assert m2_log_shift(cfg, 0.0) == pytest.approx(-1e-4 * 0.5 * math.log(10), rel=1e-13)
    # linear in the weight, so it vanishes with it
    small = GluingConfig(m=2, eps=1e-2, neck_exponent=0.75, a_weight=1e-9)
    assert abs(m2_log_shift(small, 0.0)) < 1e-12
    with pytest.raises(WrongDimension):
        m2_log_shift(GluingConfig(m=3, eps=0.1, ale="simanca"), 0.0)


def test_outer_zero_data():
    cfg = burns(1e-2)
    sol = solve_outer(cfg, CauchyData.radial(2, 0.0, 0.0))
    assert sol.nu == 0.0 and np.max(np.abs(sol.values)) == 0.0


def test_inner_zero_data_burns():
    cfg = burns(1e-2)
    sol = solve_inner(cfg, CauchyData.radial(2, 0.0, 0.0), 0.0)
    assert np.max(np.abs(sol.values)) < 1e-12


def test_outer_constant_curvature():
    cfg = burns(1e-2)
    r, _ = neck_radii(cfg)
    sol = solve_outer(cfg, CauchyData.radial(2, 1e-6, -1e-5))
    s = np.geomspace(1.05 * r**2, 0.95, 25)
    assert np.max(np.abs(radial_scalar_curvature(sol.profile, s) - sol.nu)) < 1e-8
    assert sol.nu != 0.0


def test_inner_constant_curvature():
    cfg = burns(1e-2)
    _, R = neck_radii(cfg)
    nu = -4.8e-3
    sol = solve_inner(cfg, CauchyData.radial(2, 1e-7, -1e-6), nu)
    err = lambda s: np.max(np.abs(radial_scalar_curvature(sol.profile, s) / cfg.eps**2 - nu))
    # off-node interpolation is weakest next to the degenerate bolt
    assert err(np.geomspace(0.06**2, 0.95 * R**2, 25)) < 1e-3 * abs(nu)
    assert err(np.geomspace(0.1, 0.95 * R**2, 25)) < 1e-5 * abs(nu)


@pytest.fixture(scope="module")
def burns_01():
    return match(burns(1e-2, match_tol=1e-12))


def test_match_converges_to_exact_nu(burns_01):
    g = burns_01
    assert np.max(g.mismatch) <= 1e-12
    assert g.nu == pytest.approx(NU_BURNS[0.01], rel=1e-7)
    assert np.max(g.c4_jump) < 1e-7
    assert 0 < g.contraction_factor < 1
    assert g.picard_status == "converged"


def test_glued_potentials_share_constant(burns_01):
    g = burns_01
    s_out = np.geomspace(1.1 * g.r_eps**2, 0.9, 15)
    assert np.max(np.abs(radial_scalar_curvature(g.outer, s_out) - g.nu)) < 1e-7
    s_in = np.geomspace(0.1**2, 0.9 * g.R_eps**2, 15)
    assert np.max(np.abs(radial_scalar_curvature(g.inner, s_in) - g.eps**2 * g.nu)) < 1e-10


def test_momentum_reference_matches_oracle():
    for eps, nu in NU_BURNS.items():
        assert momentum_reference(burns(eps)).nu == pytest.approx(nu, rel=1e-10)


@pytest.mark.parametrize("eps", [0.1, 0.03])
def test_simanca_exact_nu(eps):
    g = match(GluingConfig(m=3, eps=eps, ale="simanca", neck_exponent=2 / 3, match_tol=1e-12))
    assert g.nu == pytest.approx(NU_SIMANCA3[eps], rel=1e-6)


def test_weight_scaling_equivalence():
    # a * Burns at eps equals Burns at eps sqrt(a) once the neck radius is the same
    a, eps = 4.0, 0.05
    r = eps**0.5
    eps1 = eps * math.sqrt(a)
    g_a = match(burns(eps, a_weight=a, match_tol=1e-12, method="auto"))
    g_1 = match(burns(eps1, neck_exponent=math.log(r) / math.log(eps1), match_tol=1e-12,
                      method="auto"))
    assert g_a.nu == pytest.approx(g_1.nu, rel=1e-7)
    assert g_a.nu == pytest.approx(NU_BURNS[0.1], rel=1e-6)


def test_newton_cross_check():
    g = match(burns(3e-2, accelerate=True, match_tol=1e-12))
    assert g.newton_cross_check is not None and g.newton_cross_check < 1e-8


def test_default_theta_picard_diverges_auto_recovers():
    cfg = GluingConfig(m=2, eps=1e-2)
    with pytest.raises(FixedPointDivergence):
        match(cfg)
    g = match(GluingConfig(m=2, eps=1e-2, method="auto", match_tol=1e-12))
    assert np.max(g.mismatch) <= 1e-12 and g.picard_status.startswith("aborted")
    assert g.nu == pytest.approx(float(oracles.momentum_nu(2, 1e-2)), rel=1e-6)


@pytest.mark.parametrize("m", [2, 3])
def test_calabi_converges(m):
    g = match(GluingConfig(m=m, eps=0.03, ale="calabi", neck_exponent=(m - 1) / m))
    assert np.max(g.mismatch) <= 1e-9 and g.nu < 0


def test_gate():
    with pytest.raises(InvalidParameter):
        match(burns(0.6, R0=0.01))


def test_study_empty_and_ordering():
    res = convergence_study(burns(0.1), [])
    assert res.rows == [] and res.slope_nu is None
    with pytest.raises(InvalidParameter):
        convergence_study(burns(0.1), [1e-2, 1e-1])


def test_study_records_failures():
    res = convergence_study(GluingConfig(m=2, eps=0.1, method="picard"), [1e-1, 1e-2])
    assert any(r["status"].startswith("failed") for r in res.rows)
    assert isinstance(res, StudyResult) and "# theta" in res.to_csv()


def test_lipschitz_ratio_measures_S_not_relaxation():
    cfg = GluingConfig(m=3, eps=0.01, ale="simanca", neck_exponent=2 / 3, method="picard")
    sol = match(cfg)
    # the relaxed iteration cannot contract faster than 1 - w; S itself can
    assert sol.contraction_factor > 0.25
    assert 0 < sol.lipschitz_ratio < 0.05
    assert len(sol.lipschitz) == sol.iterations


def test_lipschitz_ratio_nan_without_picard():
    sol = match(GluingConfig(m=2, eps=0.01, ale="burns", neck_exponent=0.5, method="newton"))
    assert math.isnan(sol.lipschitz_ratio)
