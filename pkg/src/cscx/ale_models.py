"""Explicit ALE model potentials and their asymptotics.

* Burns (m = 2): ``log s + lam s``, scalar flat.
* Calabi-Simanca (m >= 3): defined by the ODE
  ``s^2 (s A')^(m-1) A'' + (m-1) s A' - (m-2) = 0``, integrated through
  ``zeta = A' - 1/s``, which obeys
  ``(1 + s zeta)^(m-1) s^2 zeta' = (1 + s zeta)^(m-1) - 1 - (m-1) s zeta``
  with ``zeta(0) = 1``.
* Calabi Z_m: the Ricci-flat closed form on the total space of O(-m).

All three are momentum profiles: the moment coordinate ``tau = F_t`` obeys an
autonomous ODE ``tau_t = P(tau) / tau^(m-1)`` (see
:class:`cscx.profiles.MomentumPolynomial`), which gives every derivative
beyond the first in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar
from scipy.special import comb

from .errors import (BranchError, DomainError, IllConditionedFit, InsufficientWindow, IntegrationFailure,
                     InvalidParameter, NonConvergence)
from .profiles import MomentumPolynomial, MomentumProfile, RadialKahlerPotential, RescaledProfile

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


# -----------------------------------------------------------------------------
# Burns
# -----------------------------------------------------------------------------
def burns_potential(lam: float = 1.0) -> MomentumProfile:
    """Burns potential ``log s + lam s`` on C^2 (c_log = 1)."""
    if not lam > 0:
        raise InvalidParameter(f"lambda must be positive, got {lam}")
    lam = float(lam)
    poly = MomentumPolynomial.make(2, C=-1.0, D=0.0, x_ref=1.0)
    return MomentumProfile(
        2,
        tau_fn=lambda t: 1.0 + lam * np.exp(t),
        value_fn=lambda t: lam * np.exp(t),
        poly=poly, c_log=1.0,
        metadata={"kind": "burns", "lambda": lam},
    )


# -----------------------------------------------------------------------------
# Calabi Z_m
# -----------------------------------------------------------------------------
def calabi_zm_potential(m: int, r, dtype=float):
    """Calabi potential ``rho + (1/m) sum_j w^j log(rho - w^j)``, ``rho = (r^{2m}+1)^{1/m}``.

    ``w = exp(2 pi i / m)``. Every log argument has real part
    ``rho - cos(2 pi j / m) >= rho - 1 > 0`` for ``r > 0``, so the principal
    branch is continuous on the whole domain. Conjugate roots pair up and the
    sum is real; an imaginary part above ``1e-12`` (relative) raises
    :class:`BranchError`.
    """
    if int(m) != m or m < 2:
        raise InvalidParameter("m must be an integer >= 2")
    dtype = np.dtype(dtype).type
    r = np.asarray(r, dtype=dtype)
    if np.any(r <= 0):
        raise BranchError("the Calabi potential is defined for r > 0 only")
    one = dtype(1)
    s_m = r ** (2 * m)
    rho_minus_one = np.expm1(np.log1p(s_m) / m)
    rho = one + rho_minus_one
    total = rho + np.log(rho_minus_one) / m
    imag = np.zeros_like(rho)
    for j in range(1, m):
        ang = dtype(2) * dtype(np.pi) * j / m
        w = np.cos(ang) + 1j * np.sin(ang)
        term = w * np.log(rho - w) / m
        total = total + np.real(term)
        imag = imag + np.imag(term)
    if np.any(np.abs(imag) > 1e-12 * np.maximum(1.0, np.abs(total))):
        raise BranchError("imaginary part of the Calabi sum did not cancel")
    return total


def calabi_profile(m: int) -> MomentumProfile:
    """Radial profile of the Calabi Z_m potential in s = r^2 (c_log = 1 near the bolt)."""
    poly = MomentumPolynomial.make(m, C=0.0, D=-1.0, x_ref=1.0)

    def tau(t):
        return np.exp(np.log1p(np.exp(m * t)) / m)

    def value(t):
        return calabi_zm_potential(m, np.exp(0.5 * t)) - t
    return MomentumProfile(m, tau, value, poly, c_log=1.0,
                           metadata={"kind": "calabi", "m": m})


def calabi_grid_func(m: int):
    """Potential on interleaved real coordinates for the grid oracle."""
    def func(x):
        r = np.sqrt(np.sum(x * x, axis=-1))
        return calabi_zm_potential(m, r, dtype=x.dtype)
    return func


# -----------------------------------------------------------------------------
# Calabi-Simanca
# -----------------------------------------------------------------------------
def simanca_polynomial(m: int) -> MomentumPolynomial:
    """``P(x) = x^m - (m-1) x + (m-2)``; the bolt sits at ``x = 1``."""
    return MomentumPolynomial.make(m, C=-(m - 1.0), D=m - 2.0, x_ref=1.0)


def _zeta_rhs(m):
    ks = np.arange(2, m)
    cs = comb(m - 1, ks)

    def rhs(s, z):
        y = s * z[0]
        q = np.sum(cs * y ** (ks - 2))
        return [z[0] ** 2 * q / (1.0 + y) ** (m - 1)]
    return rhs


class _SimancaTail:
    """Large-s closure of the Simanca profile in the moment coordinate ``x = tau``.

    With ``u = 1/x``, ``q = (m-1) u^{m-1} - (m-2) u^m`` and
    ``K(x) = int_x^inf ((m-1)y - (m-2)) / (y P(y)) dy`` (a power series in u),

    * ``lam s = x exp(-K(x))``
    * ``A - lam s = int_x^inf expm1(-K(y)) / (1 - q(y)) dy``.

    Neither formula involves lam, so the deviation ``A - lam s`` keeps full
    relative accuracy however small it is.
    """

    def __init__(self, m: int, degree: int | None = None):
        self.m = m
        N = degree or 10 * m
        P = np.polynomial.polynomial
        q = np.zeros(m + 1)
        q[m - 1], q[m] = m - 1.0, -(m - 2.0)
        geo = np.zeros(N + 1)
        geo[0] = 1.0
        term = np.array([1.0])
        while True:  # 1/(1-q) truncated at degree N
            term = P.polymul(term, q)[: N + 1]
            if not np.any(term):
                break
            geo[: term.size] += term
        num = np.zeros(m + 2)
        num[m], num[m + 1] = m - 1.0, -(m - 2.0)
        k = P.polymul(num, geo)[: N + 1]
        # K(x) = sum_n k_n x^{1-n}/(n-1) = sum_n k_n u^{n-1}/(n-1)
        self.K_coef = np.zeros(N)
        n = np.arange(2, k.size)
        self.K_coef[n - 1] = k[n] / (n - 1)
        self.q = q
        self.gx, self.gw = np.polynomial.legendre.leggauss(24)

    def K(self, x):
        return np.polynomial.polynomial.polyval(1.0 / np.asarray(x, dtype=float), self.K_coef)

    def x_of_lams(self, lam_s):
        x = np.asarray(lam_s, dtype=float).copy()
        for _ in range(8):
            x = lam_s * np.exp(self.K(x))
        return x

    def deviation_x(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ub = 1.0 / x
        u = 0.5 * ub[:, None] * (1.0 + self.gx[None, :])
        P = np.polynomial.polynomial
        integrand = np.expm1(-P.polyval(u, self.K_coef)) / (1.0 - P.polyval(u, self.q)) / u**2
        return 0.5 * ub * (integrand @ self.gw)


@dataclass
class SimancaProfile:
    """Integrated Calabi-Simanca potential and its asymptotic constant.

    Attributes
    ----------
    A : RadialKahlerPotential
        Potential ``A_m(s)``, normalised so that ``A - lam s -> 0``.
    zeta : callable
        ``s -> zeta(s)`` from the dense ODE output.
    lam : float
        ``lim zeta`` by Richardson extrapolation.
    lam_direct : float
        Cross-check ``zeta(s_max) + 1/s_max``.
    deviation : callable
        ``s -> A(s) - lam s`` computed directly (accurate far below ``lam s``).
    """

    m: int
    A: RadialKahlerPotential
    zeta: object
    lam: float
    s_max: float
    tol: float
    ode_residual_max: float
    lam_direct: float
    s_steps: np.ndarray
    deviation: object = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self, max_nodes: int = 400) -> dict:
        idx = np.unique(np.linspace(0, self.s_steps.size - 1, min(max_nodes, self.s_steps.size)).astype(int))
        s = self.s_steps[idx]
        s = s[s > 0]
        A = self.A(s)
        return {
            "m": self.m, "lambda": self.lam, "s_max": self.s_max, "tol": self.tol,
            "ode_residual_max": self.ode_residual_max,
            "nodes": [{"s": float(a), "zeta": float(b), "A": float(c)}
                      for a, b, c in zip(s, self.zeta(s), A)],
            "metadata": dict(self.metadata),
        }


def richardson_limit(s: np.ndarray, z: np.ndarray, rates: tuple) -> float:
    """Limit of ``z(s) = L + sum_i c_i s^{rates_i}`` from ``len(rates)+1`` samples."""
    M = np.column_stack([np.ones_like(s)] + [s**p for p in rates])
    return float(np.linalg.solve(M, z)[0])


def solve_simanca_ode(m: int, s_max: float = 1e4, tol: float = 1e-12,
                      settle_tol: float = 1e-3, s_min: float = 1e-10) -> SimancaProfile:
    """Integrate the zeta-equation and assemble the Simanca potential.

    The right-hand side ``zeta^2 sum_{j>=2} C(m-1,j) (s zeta)^{j-2} / (1+s zeta)^{m-1}``
    is regular at ``s = 0``, so the integration starts exactly at ``zeta(0) = 1``.
    ``lam`` is extrapolated from ``zeta`` at ``s_max, s_max/2, s_max/4`` with
    the rates ``s^-1`` and ``s^{1-m}`` of the large-s expansion.

    Raises
    ------
    InvalidParameter
        m outside 3..8 or ``s_max < 1e3``.
    IntegrationFailure
        The adaptive integrator could not meet ``tol``.
    NonConvergence
        ``|zeta(s_max) - zeta(s_max/2)| > settle_tol``.
    """
    if int(m) != m or not 3 <= m <= 8:
        raise InvalidParameter("Simanca profiles need m in 3..8 (m = 2 is the Burns metric)")
    if s_max < 1e3:
        raise InvalidParameter("s_max must be at least 1e3")
    if not 0 < tol < 1e-3:
        raise InvalidParameter("tol must lie in (0, 1e-3)")
    m = int(m)
    sol = solve_ivp(_zeta_rhs(m), (0.0, s_max), [1.0], method="DOP853",
                    rtol=tol, atol=tol * 1e-2, dense_output=True)
    if sol.status != 0:
        raise IntegrationFailure(f"zeta integration failed: {sol.message}")
    dense = sol.sol

    def zeta(s):
        return np.asarray(dense(np.asarray(s, dtype=float)))[0]

    zs = zeta(np.array([s_max / 4, s_max / 2, s_max]))
    if abs(zs[2] - zs[1]) > settle_tol:
        raise NonConvergence(f"zeta has not settled: |zeta(s_max)-zeta(s_max/2)| = {abs(zs[2]-zs[1]):.3g}")
    if np.any(np.diff(sol.y[0]) < -10 * tol):
        raise IntegrationFailure("zeta failed to be nondecreasing")
    s3 = np.array([s_max / 4, s_max / 2, s_max])
    lam = richardson_limit(s3, zs, (-1.0, 1.0 - m))
    lam_direct = float(zs[2] + 1.0 / s_max)

    poly = simanca_polynomial(m)
    t_max = math.log(s_max)
    t_min = math.log(s_min)

    def tau(t):
        s = np.exp(t)
        return 1.0 + s * zeta(s)

    # D = A - lam s: closed large-s series above s_switch, and below it
    # dD/dt = 1 + s (zeta - lam) integrated down from s_switch (no cancellation of lam s).
    tail = _SimancaTail(m)
    s_switch = min(100.0, s_max)
    t_sw = math.log(s_switch)
    x_sw = float(tail.x_of_lams(lam * s_switch))
    D_top = float(tail.deviation_x(x_sw)[0])

    def dev_rate(t):
        s = np.exp(t)
        return 1.0 + s * (zeta(s) - lam)

    n_panels = int(math.ceil((t_sw - t_min) / 0.05))
    T = np.linspace(t_min, t_sw, n_panels + 1)

    def panel_integrals(lo, hi):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        pts = mid[:, None] + half[:, None] * _GL_X[None, :]
        return half * (dev_rate(pts.ravel()).reshape(pts.shape) @ _GL_W)

    J = panel_integrals(T[:-1], T[1:])
    D_nodes = np.empty_like(T)
    D_nodes[-1] = D_top
    D_nodes[:-1] = D_top - np.cumsum(J[::-1])[::-1]

    def D_low(t):
        k = np.clip(np.searchsorted(T, t, side="left"), 0, T.size - 1)
        return D_nodes[k] - panel_integrals(t, T[k])

    def D_value(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t)
        hi = t >= t_sw
        if np.any(hi):
            out[hi] = tail.deviation_x(tail.x_of_lams(lam * np.exp(t[hi])))
        if np.any(~hi):
            out[~hi] = D_low(t[~hi])
        return out

    def tau_value(t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        hi = t >= t_sw
        out[hi] = tail.x_of_lams(lam * np.exp(t[hi]))
        out[~hi] = tau(t[~hi])
        return out

    def deviation(s):
        """``A(s) - lam s`` without the cancellation of the large linear term."""
        s = np.asarray(s, dtype=float)
        if np.any(s < s_min) or np.any(s > s_max):
            raise DomainError("s outside the integrated range")
        return D_value(np.log(s)).reshape(s.shape)

    prof = MomentumProfile(m, tau_value, lambda t: lam * np.exp(t) + D_value(t) - t, poly, s_min=s_min, s_max=s_max,
                           c_log=1.0,
                           metadata={"kind": "simanca", "m": m, "lambda": lam,
                                     "lambda_rate_assumption": "zeta = lam - 1/s + O(s^(1-m))"})

    # relative residual of tau_t = Phi(tau) with tau_t from the interpolant
    s_nodes = sol.t[sol.t > 0]
    t_nodes = np.log(s_nodes)
    h = 1e-3
    st = np.array([tau(t_nodes + k * h) for k in (-2, -1, 1, 2)])
    tau_t = (st[0] - 8 * st[1] + 8 * st[2] - st[3]) / (12 * h)
    tn = tau(t_nodes)
    phi0 = poly.phi(tn)[0]
    resid = float(np.max(np.abs(tau_t - phi0) / tn)) if tn.size else 0.0
    return SimancaProfile(m, prof, zeta, lam, float(s_max), float(tol), resid, lam_direct,
                          sol.t.copy(), deviation,
                          metadata={"lambda_rate_assumption": "zeta = lam - 1/s + c s^(1-m)",
                                    "lambda_richardson_minus_direct": lam - lam_direct,
                                    "n_steps": int(sol.t.size)})


# -----------------------------------------------------------------------------
# rescaling and weights
# -----------------------------------------------------------------------------
def ale_rescale(profile: RadialKahlerPotential, lam: float) -> RescaledProfile:
    """Change of variables ``u = sqrt(2 lam) v``.

    A profile with linear growth ``lam s_v`` becomes one with leading term
    ``|u|^2 / 2``. This is a holomorphic linear change of coordinates, so the
    Kahler form, and with it the scalar curvature at corresponding points,
    is unchanged.
    """
    if not lam > 0:
        raise InvalidParameter("lambda must be positive")
    return RescaledProfile(profile, alpha=1.0, shift=-math.log(2.0 * lam),
                           metadata={**profile.metadata, "rescaled_lambda": lam})


def weighted_ale(profile: RadialKahlerPotential, a: float) -> RescaledProfile:
    """Potential of ``a * eta`` in coordinates where it is again ``|u|^2/2 + ...``.

    For ``G = |u|^2/2 + c log|u|^2 + o(1)`` the result is
    ``a G(|u|^2 / a)`` with the additive constant reset so the O(1) term at
    infinity stays zero.
    """
    if not a > 0:
        raise InvalidParameter("ALE weight must be positive")
    return RescaledProfile(profile, alpha=a, shift=-math.log(a),
                           const=a * profile.c_log * math.log(a),
                           metadata={**profile.metadata, "weight": a})


# -----------------------------------------------------------------------------
# refined asymptotics
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class AsymptoticFit:
    """``phi = a . u + b + c |u|^{4-2m} + remainder`` (``c log|u|^2`` when m = 2)."""

    a_lin: tuple
    b_const: float
    c_decay: float
    remainder_order: float
    fit_window: tuple
    condition: float

    def to_dict(self) -> dict:
        return {"a": [list(map(float, (z.real, z.imag))) for z in self.a_lin],
                "b": self.b_const, "c": self.c_decay,
                "remainder_order": self.remainder_order, "window": list(self.fit_window)}


def fit_refined_asymptotics(radii, values, m: int, points=None, cond_max: float = 1e10,
                            remainder_floor: float = 1e-12) -> AsymptoticFit:
    """Least-squares fit of the refined ALE expansion on outer shells.

    Parameters
    ----------
    radii, values : array_like
        Sample radii ``|u|`` and potential values (the part beyond ``|u|^2/2``).
    m : int
        Complex dimension.
    points : array_like, optional
        Full-mode input: sample points in interleaved real coordinates
        ``(n, 2m)``. When given, the linear term ``a . u`` is fitted too;
        otherwise the input is radial and ``a = 0``.
    cond_max : float
        Largest accepted condition number of the column-scaled design matrix.
    remainder_floor : float
        Residuals of the pure basis fit below this (relative to the data)
        count as exact; the remainder order is then ``-inf``.

    Notes
    -----
    The remainder is modelled as ``d |u|^p`` with ``p`` below the decay
    exponent and solved by variable projection: for each trial ``p`` the
    coefficients are a linear least-squares problem, and ``p`` minimises the
    residual. Without this term the leading remainder leaks into ``c``.
    """
    R = np.asarray(radii, dtype=float)
    y = np.asarray(values, dtype=float)
    if R.size < 6 or np.any(R <= 0):
        raise InsufficientWindow("need at least six positive radii")
    if math.log10(R.max() / R.min()) < 1.5 - 1e-9:
        raise InsufficientWindow("samples must cover at least 1.5 decades of radius")
    lead = 0.0 if m == 2 else 4.0 - 2 * m
    decay = 2.0 * np.log(R) if m == 2 else R ** lead
    cols = [np.ones_like(R), decay]
    n_lin = 0
    if points is not None:
        X = np.asarray(points, dtype=float)
        if X.shape != (R.size, 2 * m):
            raise InvalidParameter("points must have shape (n, 2m)")
        cols = [X[:, k] for k in range(2 * m)] + cols
        n_lin = 2 * m
    M = np.column_stack(cols)
    cond = float(np.linalg.cond(M / _col_scale(M)))
    if not np.isfinite(cond) or cond > cond_max:
        raise IllConditionedFit(f"design matrix condition number {cond:.3g} exceeds {cond_max:.3g}")

    coef, resid = _lstsq(M, y)
    ref = max(np.max(np.abs(y)), 1.0)
    order = -math.inf
    if np.max(np.abs(resid)) > remainder_floor * ref:
        def cost(p):
            return float(np.sum(_lstsq(np.column_stack([M, R**p]), y)[1] ** 2))
        res = minimize_scalar(cost, bounds=(lead - 6.0, lead - 0.05), method="bounded",
                              options={"xatol": 1e-10})
        order = float(res.x)
        coef = _lstsq(np.column_stack([M, R**order]), y)[0]
    lin = tuple(complex(coef[2 * k], -coef[2 * k + 1]) for k in range(n_lin // 2))
    return AsymptoticFit(lin, float(coef[n_lin]), float(coef[n_lin + 1]), order,
                         (float(R.min()), float(R.max())), cond)


def _col_scale(M):
    sc = np.max(np.abs(M), axis=0)
    sc[sc == 0] = 1.0
    return sc


def _lstsq(M, y):
    sc = _col_scale(M)
    c = np.linalg.lstsq(M / sc, y, rcond=None)[0] / sc
    return c, y - M @ c


@dataclass(frozen=True)
class DecayReport:
    """Log-log slopes of ``A - lam s`` after removing the ``s^(2-m)`` term.

    ``literal`` subtracts ``-lam^(2-m) s^(2-m)``; ``corrected`` subtracts the
    true coefficient ``-lam^(2-m) s^(2-m) / (m-2)``. They coincide at m = 3.
    """

    m: int
    lam: float
    s: np.ndarray
    deviation: np.ndarray
    residual_literal: np.ndarray
    residual_corrected: np.ndarray
    slope_literal: float
    slope_corrected: float

    def to_csv(self) -> str:
        rows = ["s,deviation,residual_literal,residual_corrected"]
        for r in zip(self.s, self.deviation, self.residual_literal, self.residual_corrected):
            rows.append(",".join(f"{v:.17g}" for v in r))
        rows.append(f"# slope_literal,{self.slope_literal:.17g}")
        rows.append(f"# slope_corrected,{self.slope_corrected:.17g}")
        return "\n".join(rows) + "\n"


def simanca_decay(profile: SimancaProfile, s_lo: float = 1e2, s_hi: float = 1e4,
                  n: int = 41) -> DecayReport:
    """Fit the decay of ``A_m(s) - lam s`` beyond its leading ``s^(2-m)`` term on ``[s_lo, s_hi]``."""
    if not 0 < s_lo < s_hi <= profile.s_max:
        raise InsufficientWindow("need 0 < s_lo < s_hi <= s_max")
    m, lam = profile.m, profile.lam
    s = np.geomspace(s_lo, s_hi, n)
    dev = np.asarray(profile.deviation(s), dtype=float)
    lead = lam ** (2 - m) * s ** (2.0 - m)
    lit = dev + lead
    cor = dev + lead / (m - 2)

    def slope(y):
        return float(np.polyfit(np.log(s), np.log(np.abs(y)), 1)[0])

    return DecayReport(m, lam, s, dev, lit, cor, slope(lit), slope(cor))
