"""Radial neck gluing of a scaled ALE model into a flat cell.

Geometry (all radial, eigenmode gamma = 0):

* outer side: ``|z|^2/2 + phi_o`` on ``r_eps <= |z| <= r0``, scalar curvature
  ``s_base + nu`` with ``phi_o`` and its first two t-derivatives zero at ``r0``;
* inner side: ``G_a + u_t`` in ALE coordinates ``u = z / eps`` on
  ``R0 <= |u| <= R_eps``, scalar curvature ``eps^2 nu``; ``G_a`` is the weighted
  model with leading term ``|u|^2/2``; at ``R0`` the perturbation is
  ``c0 + c1 (tau - tau_b)`` to leading order, as a function smooth across the
  exceptional divisor must be (``tau`` the model's moment coordinate);
* matching sphere ``|z| = r_eps``, described in ``v = z / r_eps`` so that it is
  the unit sphere of :mod:`cscx.mode_analysis`.

Both sides take the same Cauchy data ``(h, k)`` (value and ``Delta_v`` of the
perturbation at ``|v| = 1``). Subtracting the biharmonic extensions leaves
remainders ``R^o, R^i`` in the normal traces, and continuity of
``(d_v, d_v Delta_v)`` becomes ``P(h, k) = R^o - R^i``. The matching map is
``S(h, k) = P^{-1}(R^o - R^i)``, iterated to a fixed point.

Each side is solved by Chebyshev collocation in ``t = log |z|^2`` with damped
Newton steps; the Jacobian comes from :func:`cscx.kahler_calculus.scal_jet_partials`.
"""
from __future__ import annotations

import functools
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from numpy.polynomial import polynomial as npoly

from .ale_models import (ale_rescale, burns_potential, calabi_profile, solve_simanca_ode,
                         weighted_ale)
from .errors import (CscxError, DegenerateMetric, FixedPointDivergence, InvalidParameter,
                     NeckCollision, NewtonDivergence, WrongDimension)
from .kahler_calculus import scal_from_jet, scal_jet_partials
from .mode_analysis import (CauchyData, GroupDescriptor, ModeVector, biharmonic_inner,
                            biharmonic_outer, evaluate_extension, invert_P)
from .profiles import (ChebyshevProfile, MomentumPolynomial, RadialKahlerPotential,
                       flat_profile)

ALE_KINDS = ("burns", "simanca", "calabi")


# -----------------------------------------------------------------------------
# configuration
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class GluingConfig:
    """Parameters of one gluing run.

    ``neck_exponent`` defaults to ``(2m-1)/(2m)``; ``(m-1)/m`` is the value
    for which the neck data scale like ``r_eps^4`` (see the README).
    """

    m: int
    eps: float
    ale: str = "burns"
    neck_exponent: float | None = None
    r0: float = 1.0
    R0: float = 0.05
    a_weight: float = 1.0
    gamma_max: int = 0
    kappa: float = 1e3
    n_outer: int = 48
    n_inner: int = 56
    newton_tol: float = 1e-10
    match_tol: float = 1e-9
    max_iter: int = 200
    accelerate: bool = False
    contraction_abort: float = 0.9
    relaxation: float = 0.7
    method: str = "picard"
    eps_gate: float = 0.5
    base_scal: float = 0.0
    simanca_s_max: float = 1e4
    simanca_tol: float = 1e-12

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise InvalidParameter("m must be an integer >= 2")
        if self.ale not in ALE_KINDS:
            raise InvalidParameter(f"ale must be one of {ALE_KINDS}")
        if self.ale == "burns" and self.m != 2:
            raise WrongDimension("the Burns model lives in m = 2")
        if self.ale == "simanca" and self.m < 3:
            raise WrongDimension("Simanca models need m >= 3")
        if not 0 < self.eps < 1:
            raise InvalidParameter("eps must lie in (0, 1)")
        if not 0 < self.theta < 1:
            raise InvalidParameter("neck exponent must lie in (0, 1)")
        if not (self.a_weight > 0 and self.r0 > 0 and self.R0 > 0):
            raise InvalidParameter("a_weight, r0 and R0 must be positive")
        if self.method not in ("picard", "newton", "auto"):
            raise InvalidParameter("method must be picard, newton or auto")
        if not 0 < self.relaxation <= 1:
            raise InvalidParameter("relaxation must lie in (0, 1]")
        if self.n_outer < 12 or self.n_inner < 12:
            raise InvalidParameter("at least 12 collocation nodes per side")

    @property
    def theta(self) -> float:
        if self.neck_exponent is None:
            return (2 * self.m - 1) / (2 * self.m)
        return float(self.neck_exponent)

    def check_gate(self) -> None:
        if self.eps >= self.eps_gate:
            raise InvalidParameter(f"eps = {self.eps} is not below the gate {self.eps_gate}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["neck_exponent"] = self.theta
        return d


def neck_radii(cfg: GluingConfig) -> tuple[float, float]:
    """``r_eps = eps^theta`` and ``R_eps = r_eps / eps``; requires ``eps R0 < r_eps < r0``."""
    r_eps = cfg.eps ** cfg.theta
    R_eps = r_eps / cfg.eps
    if not cfg.eps * cfg.R0 < r_eps < cfg.r0:
        raise NeckCollision(f"need eps*R0 < r_eps < r0, got {cfg.eps * cfg.R0:.4g}, "
                            f"{r_eps:.4g}, {cfg.r0:.4g}")
    return r_eps, R_eps


def m2_log_shift(cfg: GluingConfig, k0: float) -> float:
    """Constant ``-eps^2 a log R_eps + (k0/2) log r_eps`` added to the inner potential (m = 2)."""
    if cfg.m != 2:
        raise WrongDimension("the logarithmic shift exists only for m = 2")
    r_eps, R_eps = neck_radii(cfg)
    return -cfg.eps**2 * cfg.a_weight * math.log(R_eps) + 0.5 * k0 * math.log(r_eps)


@functools.lru_cache(maxsize=16)
def _simanca(m: int, s_max: float, tol: float):
    return solve_simanca_ode(m, s_max, tol)


def ale_model(cfg: GluingConfig) -> RadialKahlerPotential:
    """Weighted ALE potential in coordinates where it is ``|u|^2/2 + o(|u|^2)``."""
    if cfg.ale == "burns":
        base = ale_rescale(burns_potential(1.0), 1.0)
    elif cfg.ale == "calabi":
        base = ale_rescale(calabi_profile(cfg.m), 1.0)
    else:
        sp = _simanca(cfg.m, cfg.simanca_s_max, cfg.simanca_tol)
        base = ale_rescale(sp.A, sp.lam)
    return weighted_ale(base, cfg.a_weight)


# -----------------------------------------------------------------------------
# collocation
# -----------------------------------------------------------------------------
class _Cheb:
    """Integral-form Chebyshev collocation on ``[t_a, t_b]``.

    The unknown is ``y = (v, c0, c1, c2, c3)``: ``v`` holds the nodal values
    of the fourth t-derivative on ascending Lobatto nodes and ``c_j`` is the
    j-th derivative at ``t_a``. Integrating ``v`` four times gives a degree
    ``n + 4`` polynomial, so ``M[j] @ y`` is the j-th derivative at the nodes
    without differentiation matrices (whose conditioning grows like ``n^8``).
    """

    def __init__(self, n: int, t_a: float, t_b: float):
        x = -np.cos(np.pi * np.arange(n + 1) / n)
        half = 0.5 * (t_b - t_a)
        deg = n + 4
        fit = npcheb.chebfit(x, np.eye(n + 1), n)
        integ = npcheb.chebint(fit, m=4, lbnd=-1, scl=half)
        taylor = np.zeros((deg + 1, 4))
        for j in range(4):
            pw = npoly.polypow([1.0, 1.0], j) * half**j / math.factorial(j)
            taylor[: j + 1, j] = npcheb.poly2cheb(pw)
        self.coef_map = np.hstack([integ, taylor])
        vander = npcheb.chebvander(x, deg)
        self.M = []
        c = self.coef_map
        for _ in range(5):
            self.M.append(vander @ c)
            c = np.vstack([npcheb.chebder(c, scl=1.0 / half), np.zeros((1, c.shape[1]))])
        self.n, self.t_a, self.t_b = n, float(t_a), float(t_b)
        self.size = n + 5
        self.t = t_a + half * (x + 1.0)
        self.t[0], self.t[-1] = t_a, t_b

    def jet(self, y):
        return np.array([Mk @ y for Mk in self.M])

    def profile(self, m, y, base, side):
        return ChebyshevProfile(m, self.t_a, self.t_b, self.coef_map @ y, c_log=base.c_log,
                                base=base, metadata={"side": side})


def cauchy_traces(jet, m: int) -> np.ndarray:
    """``(f, d_v f, Delta_v f, d_v Delta_v f)`` on the unit v-sphere from a t-jet there."""
    f0, f1, f2, f3 = jet[0], jet[1], jet[2], jet[3]
    return np.array([f0, 2 * f1, 4 * (f2 + (m - 1) * f1), 8 * (f3 + (m - 2) * f2 - (m - 1) * f1)])


def _trace_rows(ch: _Cheb, idx: int, m: int) -> np.ndarray:
    """Linear functionals of ``y`` giving the four Cauchy traces at node ``idx``."""
    D = [ch.M[k][idx] for k in range(4)]
    return np.array([D[0], 2 * D[1], 4 * (D[2] + (m - 1) * D[1]),
                     8 * (D[3] + (m - 2) * D[2] - (m - 1) * D[1])])


@dataclass
class SideSolution:
    """Converged solution on one side of the neck."""

    profile: RadialKahlerPotential
    nu: float
    iterations: int
    residual: float
    neck_jet: np.ndarray
    nodes: np.ndarray = field(repr=False, default=None)
    values: np.ndarray = field(repr=False, default=None)


def _newton(residual_and_jacobian, x0, tol, max_iter=40, label="Newton", floor=1e-11):
    """Damped Newton with backtracking on the residual's max-norm.

    Converged once the residual is below ``tol``, or once it is below the
    roundoff ``floor`` and a full step no longer halves it.
    """
    x = np.array(x0, dtype=float)
    F, J = residual_and_jacobian(x)
    res = float(np.max(np.abs(F)))
    if res <= tol:
        return x, 0, res
    res0, tiny_steps = res, 0
    for it in range(1, max_iter + 1):
        dx = np.linalg.solve(J, -F)
        lam = 1.0
        while True:
            try:
                F_new, J_new = residual_and_jacobian(x + lam * dx)
                res_new = float(np.max(np.abs(F_new)))
            except DegenerateMetric:
                res_new = math.inf
            if res_new <= (1 - 1e-4 * lam) * res or res_new <= max(tol, floor) or lam < 1e-3:
                break
            lam *= 0.5
        if not math.isfinite(res_new):
            raise NewtonDivergence(f"{label}: iterate left the positive cone", res)
        stalled = res_new > 0.5 * res
        x, F, J, res = x + lam * dx, F_new, J_new, res_new
        if res <= tol or (res <= floor and stalled):
            return x, it, res
        tiny_steps = tiny_steps + 1 if lam < 1e-2 else 0
        if res > 1e4 * res0 or tiny_steps >= 4:
            raise NewtonDivergence(f"{label}: diverging (residual {res:.3g})", res)
    raise NewtonDivergence(f"{label}: no convergence in {max_iter} steps", res)


def _continuation(make, x0, tol, label, floor, max_halvings=3):
    """Newton on ``make(1)``; on failure, march the data fraction from 0 to 1.

    ``make(frac)`` returns the residual/Jacobian callable with boundary data
    and forcing scaled by ``frac``. The step in ``frac`` is halved on each
    failure, at most ``max_halvings`` times in a row.
    """
    try:
        return _newton(make(1.0), x0, tol, label=label, floor=floor)
    except NewtonDivergence:
        pass
    x, frac, dfrac, total, halvings = np.zeros_like(x0), 0.0, 0.25, 0, 0
    while frac < 1.0:
        nxt = min(1.0, frac + dfrac)
        try:
            x_try, its, res = _newton(make(nxt), x, tol, label=label, floor=floor)
        except NewtonDivergence:
            halvings += 1
            if halvings > max_halvings:
                raise
            dfrac *= 0.5
            continue
        x, frac, total, halvings = x_try, nxt, total + its, 0
        dfrac *= 1.5
    return x, total, res


def solve_outer(cfg: GluingConfig, boundary: CauchyData, target_const: float | None = None,
                U0=None) -> SideSolution:
    """Flat-cell perturbation with traces ``(h, k)`` at ``r_eps`` and zero data at ``r0``.

    Unknowns are the collocation vector of ``phi_o`` and ``nu``; the scalar
    curvature is ``target_const + nu`` with ``target_const`` the base value.
    """
    r_eps, _ = neck_radii(cfg)
    m = cfg.m
    base_const = cfg.base_scal if target_const is None else target_const
    h, k = boundary.h.get(0), boundary.k.get(0)
    ch = _Cheb(cfg.n_outer, 2 * math.log(r_eps), 2 * math.log(cfg.r0))
    N = ch.size
    e = 0.5 * np.exp(ch.t)
    tr = _trace_rows(ch, 0, m)
    w = e**2  # fourth-order terms scale like tau^-2
    n1 = ch.n + 1

    def make(frac):
        h_, k_ = frac * h, frac * k

        def F_J(x):
            y, nu = x[:-1], x[-1]
            jet = ch.jet(y) + e
            if np.any(jet[1] <= 0) or np.any(jet[2] <= 0):
                raise DegenerateMetric("outer iterate lost positivity")
            F = np.empty(N + 1)
            J = np.zeros((N + 1, N + 1))
            F[:n1] = (scal_from_jet(jet, m) - base_const - nu) * w
            d = scal_jet_partials(jet, m)
            J[:n1, :-1] = sum(d[j][:, None] * ch.M[j + 1] for j in range(4)) * w[:, None]
            J[:n1, -1] = -w
            rows = [(tr[0], h_), (tr[2], k_), (ch.M[0][-1], 0.0), (ch.M[1][-1], 0.0),
                    (ch.M[2][-1], 0.0)]
            for i, (row, val) in enumerate(rows):
                F[n1 + i] = row @ y - val
                J[n1 + i, :-1] = row
            return F, J
        return F_J

    x0 = np.zeros(N + 1) if U0 is None else U0
    data = max(abs(h), abs(k))
    tol = cfg.newton_tol * data + 1e-15
    x, its, res = _continuation(make, x0, tol, "outer Newton", 1e-13)
    y = x[:-1]
    prof = ch.profile(m, y, flat_profile(m), "outer")
    return SideSolution(prof, float(x[-1]), its, res, ch.jet(y)[:, 0], ch.t, x)


def solve_inner(cfg: GluingConfig, boundary_tilde: CauchyData, nu: float,
                shift: float = 0.0, U0=None) -> SideSolution:
    """Scaled ALE perturbation with scalar curvature ``eps^2 nu``.

    ``boundary_tilde`` holds the v-unit traces ``(eps^2 u_t, eps^2 R_eps^2 Delta_u u_t)``
    of the perturbation alone at ``|u| = R_eps``; the model's own tail and the
    additive ``shift`` are accounted for by the caller.
    """
    _, R_eps = neck_radii(cfg)
    m, eps = cfg.m, cfg.eps
    G = ale_model(cfg)
    ch = _Cheb(cfg.n_inner, 2 * math.log(cfg.R0), 2 * math.log(R_eps))
    N, n1 = ch.size, ch.n + 1
    Gjet = G.jet(ch.t)
    tr = _trace_rows(ch, ch.n, m)
    target = eps**2 * nu
    ht, kt = boundary_tilde.h.get(0) / eps**2, boundary_tilde.k.get(0) / eps**2
    w = 1.0 / np.abs(scal_jet_partials(Gjet, m)[3])  # unit leading coefficient
    M = ch.M
    # near the divisor tau - tau_b is a series in exp(kappa t), so a smooth
    # perturbation is sum_j c_j exp(j kappa t); annihilate j = 1, 2 in U' and U''
    # (what is left is O(exp(3 kappa t)) relative to the leading term)
    kappa = Gjet[3][0] / Gjet[2][0]
    bolt = [M[j + 2][0] - 3 * kappa * M[j + 1][0] + 2 * kappa**2 * M[j][0] for j in (1, 2)]

    def make(frac):
        ht_, kt_, target_ = frac * ht, frac * kt, frac * target

        def F_J(y):
            jet = Gjet + ch.jet(y)
            if np.any(jet[1] <= 0) or np.any(jet[2] <= 0):
                raise DegenerateMetric("inner iterate lost positivity")
            F = np.empty(N)
            J = np.zeros((N, N))
            F[:n1] = (scal_from_jet(jet, m) - target_) * w
            d = scal_jet_partials(jet, m)
            J[:n1] = sum(d[j][:, None] * M[j + 1] for j in range(4)) * w[:, None]
            rows = [(tr[0], ht_), (tr[2], kt_), (bolt[0], 0.0), (bolt[1], 0.0)]
            for i, (row, val) in enumerate(rows):
                F[n1 + i] = row @ y - val
                J[n1 + i] = row
            return F, J
        return F_J

    y0 = np.zeros(N) if U0 is None else U0
    data = max(abs(ht), abs(kt), abs(target) * R_eps**4)
    tol = cfg.newton_tol * data + 1e-15
    y, its, res = _continuation(make, y0, tol, "inner Newton", 1e-11)
    prof = ch.profile(m, y, G, "inner")
    return SideSolution(prof, float(nu), its, res, (Gjet + ch.jet(y))[:, -1], ch.t, y)

# -----------------------------------------------------------------------------
# matching
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class BoundaryState:
    """Cauchy data on both sides and the scalar-curvature offset, with the ball checks."""

    data: CauchyData
    data_tilde: CauchyData
    nu: float
    outer_ball_ratio: float
    inner_ball_ratio: float
    nu_bound_ok: bool


@dataclass
class GluedSolution:
    """Matched outer and inner potentials across ``|z| = r_eps``."""

    config: GluingConfig
    outer: RadialKahlerPotential
    inner: RadialKahlerPotential
    eps: float
    r_eps: float
    R_eps: float
    nu: float
    mismatch: np.ndarray
    iterations: int
    m2_log_shift: float | None
    pre_iteration_defect: float
    contraction: list
    c4_jump: np.ndarray
    boundary: BoundaryState
    newton_cross_check: float | None = None
    picard_status: str = "converged"
    lipschitz: list = field(default_factory=list)

    @property
    def contraction_factor(self) -> float:
        """Final empirical contraction estimate (0 if converged within two steps)."""
        return self.contraction[-1] if self.contraction else 0.0

    @property
    def lipschitz_ratio(self) -> float:
        """Geometric mean of ``|S(x_{n+1}) - S(x_n)| / |x_{n+1} - x_n|`` over the Picard run.

        Unlike :attr:`contraction_factor` this measures ``S`` itself, so it is
        not bounded below by the relaxation floor ``1 - w``. NaN when Picard
        did not run or took a single step.
        """
        L = [q for q in self.lipschitz if q > 0]
        return float(np.exp(np.mean(np.log(L)))) if L else math.nan

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "eps": self.eps, "r_eps": self.r_eps, "R_eps": self.R_eps,
            "nu": self.nu, "mismatch": [float(v) for v in self.mismatch],
            "iterations": self.iterations, "m2_log_shift": self.m2_log_shift,
            "pre_iteration_defect": self.pre_iteration_defect,
            "contraction": [float(q) for q in self.contraction],
            "lipschitz": [float(q) for q in self.lipschitz],
            "c4_jump": [float(v) for v in self.c4_jump],
            "boundary": {"h": self.boundary.data.h.get(0), "k": self.boundary.data.k.get(0),
                         "h_tilde": self.boundary.data_tilde.h.get(0),
                         "k_tilde": self.boundary.data_tilde.k.get(0),
                         "outer_ball_ratio": self.boundary.outer_ball_ratio,
                         "inner_ball_ratio": self.boundary.inner_ball_ratio,
                         "nu_bound_ok": self.boundary.nu_bound_ok},
            "newton_cross_check": self.newton_cross_check,
            "picard_status": self.picard_status,
            "profiles": {"outer": "outer potential on [r_eps, r0] (t = log|z|^2)",
                         "inner": "inner potential on [R0, R_eps] (t = log|u|^2)"},
        }


class _Matcher:
    """Evaluates the matching map ``S`` and keeps warm starts between calls."""

    def __init__(self, cfg: GluingConfig):
        self.cfg = cfg
        self.r_eps, self.R_eps = neck_radii(cfg)
        m = cfg.m
        self.group = GroupDescriptor("trivial", m)
        G = ale_model(cfg)
        t_neck = 2 * math.log(self.R_eps)
        tail_jet = G.jet(np.array([t_neck]))[:, 0] - 0.5 * self.R_eps**2
        self.tail = cfg.eps**2 * cauchy_traces(tail_jet, m)
        self._warm_o = None
        self._warm_i = None
        self.newton_steps = 0

    def norm(self, dx) -> float:
        """Step norm ``max(|h|, w |k|)``; for m = 2 the weight ``w = 1 + |log r_eps|``
        balances the logarithmic coupling of ``k`` into the value trace."""
        w = 1.0 + abs(math.log(self.r_eps)) if self.cfg.m == 2 else 1.0
        return float(max(abs(dx[0]), w * abs(dx[1])))

    def data(self, h, k) -> CauchyData:
        return CauchyData.radial(self.cfg.m, h, k, self.group)

    def shift(self, k) -> float:
        return m2_log_shift(self.cfg, k) if self.cfg.m == 2 else 0.0

    def solve(self, x):
        cfg, m = self.cfg, self.cfg.m
        h, k = x
        out = solve_outer(cfg, self.data(h, k), U0=self._warm_o)
        self._warm_o = out.values
        shift = self.shift(k)
        tilde = self.data(h - shift - self.tail[0], k - self.tail[2])
        inn = solve_inner(cfg, tilde, out.nu, shift, U0=self._warm_i)
        self._warm_i = inn.values
        To = cauchy_traces(out.neck_jet, m)
        Ti = cfg.eps**2 * cauchy_traces(inn.neck_jet - np.array([0.5 * self.R_eps**2] * 5), m)
        Ti[0] += shift
        return out, inn, To, Ti, tilde

    def S(self, x):
        out, inn, To, Ti, tilde = self.solve(x)
        data = self.data(*x)
        No = evaluate_extension(biharmonic_outer(data), 1.0)
        Ni = evaluate_extension(biharmonic_inner(data), 1.0)
        Ro = np.array([To[1] - No.dr[0], To[3] - No.dr_laplacian[0]])
        Ri = np.array([Ti[1] - Ni.dr[0], Ti[3] - Ni.dr_laplacian[0]])
        d = Ro - Ri
        zero = ModeVector(m := self.cfg.m, self.group, {0: 0.0}, 0)
        new = invert_P(zero._like({0: d[0]}), zero._like({0: d[1]}))
        return np.array([new.h.get(0), new.k.get(0)]), (out, inn, To, Ti, tilde)


def match(cfg: GluingConfig) -> GluedSolution:
    """Fixed-point matching of Cauchy data across the neck.

    ``cfg.method`` selects the solver for the fixed point ``x = S(x)``:

    ``"picard"``
        relaxed Picard iteration ``x <- x + w (S(x) - x)`` from ``x_0 = 0``
        with ``w = cfg.relaxation`` (``w = 1`` is the plain iteration). Steps
        are measured in the norm of :meth:`_Matcher.norm`. The linearised map
        is far from normal (nearly imaginary eigenvalues), so single-step
        ratios oscillate; the contraction estimate reported at iteration n is
        the running geometric mean ``(|dx_n| / |dx_1|)^(1/(n-1))``, and the
        run aborts with :class:`FixedPointDivergence` once it exceeds
        ``cfg.contraction_abort`` (checked from the third step on).
    ``"newton"``
        damped Newton on ``x - S(x)`` from ``x_0 = 0``.
    ``"auto"``
        Picard, falling back to Newton if Picard aborts; the abort message
        is kept in :attr:`GluedSolution.picard_status`.

    With ``cfg.accelerate`` a Newton solve also runs from the Picard result;
    the distance between the two solutions is ``newton_cross_check``.
    """
    cfg.check_gate()
    M = _Matcher(cfg)
    x0 = np.zeros(2)
    defect = float(np.max(np.abs(M.S(x0)[0])))
    ratios: list = []
    lips: list = []
    picard_status = "not run"
    newton_dx = None
    if cfg.method in ("picard", "auto"):
        try:
            x, it, ratios, lips = _picard(M, cfg)
            picard_status = "converged"
        except FixedPointDivergence as exc:
            if cfg.method == "picard":
                raise
            picard_status = f"aborted: {exc}"
            ratios = []
    if picard_status != "converged":
        x = _newton_match(M, x0)
        it = M.newton_steps
    elif cfg.accelerate:
        xn = _newton_match(M, x)
        newton_dx = float(np.max(np.abs(xn - x)))
    sol = _assemble(M, cfg, x, it, defect, ratios, newton_dx, picard_status)
    sol.lipschitz = lips if picard_status == "converged" else []
    return sol


def _picard(M: _Matcher, cfg: GluingConfig):
    w = cfg.relaxation
    x = np.zeros(2)
    steps, ratios, lips = [], [], []
    prev = None
    it = 0
    while True:
        try:
            x_new, (_, _, To, Ti, _) = M.S(x)
        except (NewtonDivergence, DegenerateMetric) as exc:
            if it == 0:
                raise
            raise FixedPointDivergence(f"iterate {it} left the solvable region ({exc})",
                                       ratios[-1] if ratios else None) from exc
        if prev is not None and M.norm(x - prev[0]) > 0:
            lips.append(M.norm(x_new - prev[1]) / M.norm(x - prev[0]))
        prev = (x, x_new)
        if np.max(np.abs(Ti - To)) <= cfg.match_tol:
            return x, it, ratios, lips
        if it >= cfg.max_iter:
            raise FixedPointDivergence(f"no convergence in {cfg.max_iter} iterations",
                                       ratios[-1] if ratios else None)
        dx = w * (x_new - x)
        steps.append(M.norm(dx))
        if len(steps) >= 2 and steps[0] > 0:
            q = (steps[-1] / steps[0]) ** (1.0 / (len(steps) - 1))
            ratios.append(q)
            if len(steps) >= 3 and q > cfg.contraction_abort:
                raise FixedPointDivergence(f"contraction factor {q:.3g} at iteration {it}", q)
        x = x + dx
        it += 1


def _assemble(M: _Matcher, cfg: GluingConfig, x, it, defect, ratios, newton_dx, picard_status):
    m = cfg.m
    out, inn, To, Ti, tilde = M.solve(x)
    jump = Ti - To
    # a-posteriori C^4 check of the full potentials in t = log|z|^2: the
    # t-derivatives of eps^2 G(t - 2 log eps) are eps^2 times those in u
    shift = M.shift(x[1])
    jo = out.neck_jet + 0.5 * M.r_eps**2
    ji = cfg.eps**2 * inn.neck_jet
    c4 = np.abs(jo - ji) / np.maximum(np.abs(jo), 1e-300)
    c4[0] = abs(jump[0])

    r_eps, R_eps = M.r_eps, M.R_eps
    bstate = BoundaryState(
        M.data(*x), tilde, out.nu,
        max(abs(x[0]), abs(x[1])) / (cfg.kappa * r_eps**4),
        max(abs(tilde.h.get(0)), abs(tilde.k.get(0))) / cfg.eps**2 / (cfg.kappa * R_eps ** (4 - 2 * m)),
        abs(out.nu) <= abs(cfg.base_scal) + 1,
    )
    return GluedSolution(cfg, out.profile, inn.profile, cfg.eps, r_eps, R_eps, out.nu,
                         np.abs(jump), it, shift if m == 2 else None, defect, ratios, c4,
                         bstate, newton_dx, picard_status)


def _newton_match(M: _Matcher, x0, tol=1e-13, max_iter=40):
    """Damped Newton on ``x - S(x)`` with a forward-difference Jacobian.

    Steps are halved when ``S`` cannot be evaluated (a side solve fails) or
    the residual does not decrease.
    """
    x = np.array(x0, dtype=float)
    M.newton_steps = 0
    Sx = M.S(x)[0]
    F = x - Sx
    res = M.norm(F)
    scale = max(np.max(np.abs(Sx)), 1e-14)
    for _ in range(max_iter):
        J = np.eye(2)
        for j in range(2):
            e = np.zeros(2)
            e[j] = 1e-7 * scale
            J[:, j] -= (M.S(x + e)[0] - Sx) / e[j]
        step = np.linalg.solve(J, -F)
        lam = 1.0
        while True:
            try:
                S_try = M.S(x + lam * step)[0]
                F_try = x + lam * step - S_try
                if M.norm(F_try) < res or M.norm(lam * step) <= tol * scale:
                    break
            except (NewtonDivergence, DegenerateMetric):
                pass
            lam *= 0.5
            if lam < 1e-4:
                raise FixedPointDivergence("Newton matching: line search failed", None)
        x, Sx, F = x + lam * step, S_try, F_try
        res = M.norm(F)
        M.newton_steps += 1
        if M.norm(lam * step) <= tol * scale or res <= tol * scale:
            return x
    raise FixedPointDivergence(f"Newton matching: no convergence in {max_iter} steps", None)


# -----------------------------------------------------------------------------
# sweeps
# -----------------------------------------------------------------------------
STUDY_COLUMNS = ("eps", "r_eps", "pre_iteration_defect", "converged_mismatch", "nu",
                 "iterations", "contraction", "lipschitz", "status")


@dataclass
class StudyResult:
    """Rows of a convergence study and the fitted log-log slopes against ``r_eps``."""

    rows: list
    slope_defect: float | None
    slope_nu: float | None
    theta: float

    @property
    def slope_nu_eps(self) -> float | None:
        """Slope of ``|nu|`` against ``eps`` itself (``theta`` times the ``r_eps`` slope)."""
        return None if self.slope_nu is None else self.theta * self.slope_nu

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(STUDY_COLUMNS) + "\n")
        for r in self.rows:
            buf.write(",".join(v if isinstance(v, str) else (str(v) if isinstance(v, int) else f"{v:.17g}")
                               for v in (r[c] for c in STUDY_COLUMNS)) + "\n")
        buf.write(f"# theta,{self.theta:.17g}\n")
        buf.write(f"# slope_defect,{'' if self.slope_defect is None else f'{self.slope_defect:.17g}'}\n")
        buf.write(f"# slope_nu,{'' if self.slope_nu is None else f'{self.slope_nu:.17g}'}\n")
        buf.write(f"# slope_nu_eps,{'' if self.slope_nu_eps is None else f'{self.slope_nu_eps:.17g}'}\n")
        return buf.getvalue()


def _slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _study_row(cfg: GluingConfig) -> dict:
    try:
        g = match(cfg)
        return {"eps": cfg.eps, "r_eps": g.r_eps, "pre_iteration_defect": g.pre_iteration_defect,
                "converged_mismatch": float(np.max(g.mismatch)), "nu": g.nu,
                "iterations": g.iterations, "contraction": g.contraction_factor, "lipschitz": g.lipschitz_ratio,
                "status": "ok"}
    except CscxError as exc:
        r = cfg.eps ** cfg.theta
        return {"eps": cfg.eps, "r_eps": r, "pre_iteration_defect": math.nan,
                "converged_mismatch": math.nan, "nu": math.nan, "iterations": 0,
                "contraction": math.nan, "lipschitz": math.nan, "status": f"failed: {type(exc).__name__}: {exc}"}


def convergence_study(cfg_template: GluingConfig, eps_list, threads: int | None = None) -> StudyResult:
    """Run :func:`match` over ``eps_list`` and fit slopes of the defect and ``|nu|`` in ``r_eps``.

    Failed points are kept as rows with a ``failed: ...`` status. The thread
    count defaults to the ``CSCX_THREADS`` environment variable (1 if unset).
    """
    eps_list = [float(e) for e in eps_list]
    if any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise InvalidParameter("eps_list must be strictly decreasing")
    cfgs = [replace(cfg_template, eps=e) for e in eps_list]
    if cfg_template.ale == "simanca":  # build the shared model once, outside the workers
        _simanca(cfg_template.m, cfg_template.simanca_s_max, cfg_template.simanca_tol)
    threads = threads or int(os.environ.get("CSCX_THREADS", "1") or 1)
    if threads > 1 and len(cfgs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(_study_row, cfgs))
    else:
        rows = [_study_row(c) for c in cfgs]
    ok = [r for r in rows if r["status"] == "ok"]
    return StudyResult(rows,
                       _slope([r["r_eps"] for r in ok], [r["pre_iteration_defect"] for r in ok]),
                       _slope([r["r_eps"] for r in ok], [abs(r["nu"]) for r in ok]),
                       cfg_template.theta)


# -----------------------------------------------------------------------------
# exact radial reference
# -----------------------------------------------------------------------------
def momentum_reference(cfg: GluingConfig) -> MomentumPolynomial:
    """Exact constant-scalar-curvature radial metric on the glued ball.

    A radial metric of constant scalar curvature ``nu`` has moment coordinate
    ``tau^(m-1) tau_t = P(tau)``, ``P = x^m + C x + D - nu x^(m+1) / (2m(m+1))``.
    Smooth closing on a divisor of size ``x_b = eps^2 a`` needs ``P(x_b) = 0``
    and ``P'(x_b) = x_b^(m-1)``; zero data at ``r0`` needs ``P(x_0) = x_0^m``
    with ``x_0 = r0^2/2``. The three conditions are linear in ``(C, D, nu)``.
    Only meaningful for models that close smoothly on one divisor (Burns,
    Simanca).
    """
    m = cfg.m
    xb = cfg.eps**2 * cfg.a_weight
    x0 = 0.5 * cfg.r0**2
    beta = 1.0 / (2 * m * (m + 1))
    A = np.array([[xb, 1.0, -beta * xb ** (m + 1)],
                  [1.0, 0.0, -beta * (m + 1) * xb**m],
                  [x0, 1.0, -beta * x0 ** (m + 1)]])
    rhs = np.array([-xb**m, xb ** (m - 1) - m * xb ** (m - 1), x0**m - x0**m])
    C, D, nu = np.linalg.solve(A, rhs)
    return MomentumPolynomial.make(m, C, D, nu, x_ref=xb)
