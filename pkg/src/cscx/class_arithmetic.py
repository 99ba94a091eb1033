"""Cohomological arithmetic of weighted point blow-ups.

For a blow-up at points with weights ``a_j`` and parameter ``eps``::

    vol(eps)   = vol + (-1)^(m-1) eps^(2m) sum a_j
    chern(eps) = chern - eps^(2m-2) (m-1) sum a_j
    s(eps)     = m chern(eps) / vol(eps)

The weights enter linearly in both corrections.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import InvalidParameter, NegativeVolume, NoSignChange


@dataclass(frozen=True)
class BlowupClassData:
    """Base intersection numbers ``[w]^m`` and ``c_1 . [w]^(m-1)`` plus point weights."""

    m: int
    vol_class: float
    chern_pair: float
    weights: tuple = ()

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise InvalidParameter("m must be an integer >= 2")
        if not self.vol_class > 0:
            raise NegativeVolume("vol_class must be positive")
        w = tuple(float(a) for a in self.weights)
        if any(not a > 0 for a in w):
            raise InvalidParameter("weights must be positive")
        object.__setattr__(self, "weights", w)

    @property
    def n_points(self) -> int:
        return len(self.weights)

    @property
    def weight_sum(self) -> float:
        return float(sum(self.weights))


def _check_eps(eps):
    if not eps >= 0:
        raise InvalidParameter("eps must be non-negative")


def blowup_classes(data: BlowupClassData, eps: float) -> tuple[float, float]:
    """``([w_eps]^m, c_1 . [w_eps]^(m-1))`` on the blow-up."""
    _check_eps(eps)
    m, S = data.m, data.weight_sum
    vol = data.vol_class + (-1) ** (m - 1) * eps ** (2 * m) * S
    chern = data.chern_pair - eps ** (2 * m - 2) * (m - 1) * S
    if not vol > 0:
        raise NegativeVolume(f"volume {vol:.6g} is not positive at eps = {eps}")
    return float(vol), float(chern)


def average_scal(data: BlowupClassData, eps: float) -> float:
    """Average scalar curvature ``m c_1.[w_eps]^(m-1) / [w_eps]^m``."""
    vol, chern = blowup_classes(data, eps)
    return data.m * chern / vol


def average_scal_derivative(data: BlowupClassData, eps: float) -> float:
    """``d s / d eps`` from the closed-form quotient rule."""
    vol, chern = blowup_classes(data, eps)
    m, S = data.m, data.weight_sum
    dvol = (-1) ** (m - 1) * 2 * m * eps ** (2 * m - 1) * S
    dchern = -(2 * m - 2) * (m - 1) * S * eps ** (2 * m - 3)
    return m * (dchern * vol - chern * dvol) / vol**2


@dataclass(frozen=True)
class MonotonicityReport:
    """Sign of ``ds/deps`` on ``(0, eps_max]``."""

    eps_max: float
    decreasing: bool
    constant: bool
    first_violation: float | None
    volume_breakdown: float | None


def _derivative_numerator(data: BlowupClassData) -> np.ndarray:
    """Coefficients (ascending) of ``g`` with ``ds/deps = m eps^(2m-3) g(eps) / vol^2``.

    ``g = -(2m-2) A V - 2m B c eps^2 + 2 A B eps^(2m)`` with
    ``A = (m-1) sum a``, ``B = (-1)^(m-1) sum a``.
    """
    m, S = data.m, data.weight_sum
    A, B = (m - 1) * S, (-1) ** (m - 1) * S
    g = np.zeros(2 * m + 1)
    g[0] = -(2 * m - 2) * A * data.vol_class
    g[2] += -2 * m * B * data.chern_pair
    g[2 * m] += 2 * A * B
    return g


def _first_positive_root(coeffs_ascending, upper):
    roots = np.roots(coeffs_ascending[::-1])
    real = roots[np.abs(roots.imag) <= 1e-12 * np.maximum(1.0, np.abs(roots))].real
    real = np.sort(real[(real > 0) & (real <= upper)])
    return float(real[0]) if real.size else None


def monotonicity_check(data: BlowupClassData, eps_max: float) -> MonotonicityReport:
    """Check that ``s(eps)`` decreases on ``(0, eps_max]``.

    The derivative's sign is that of a polynomial (see
    :func:`_derivative_numerator`), so violations are located exactly as its
    first positive root. The volume's first zero, if any, is reported too.
    """
    if not eps_max > 0:
        raise InvalidParameter("eps_max must be positive")
    if data.weight_sum == 0:
        return MonotonicityReport(eps_max, False, True, None, None)
    m, S = data.m, data.weight_sum
    vol_poly = np.zeros(2 * m + 1)
    vol_poly[0] = data.vol_class
    vol_poly[2 * m] = (-1) ** (m - 1) * S
    breakdown = _first_positive_root(vol_poly, eps_max)
    g = _derivative_numerator(data)
    upper = eps_max if breakdown is None else breakdown
    root = _first_positive_root(g, upper)
    decreasing = g[0] < 0 and root is None
    if g[0] >= 0:
        root = 0.0
    return MonotonicityReport(eps_max, decreasing and breakdown is None, False, root, breakdown)


def scal_sweep(data: BlowupClassData, eps_max: float, n: int = 31) -> list[tuple]:
    """Rows ``(eps, volume, chern_pair, s)`` on a uniform grid of ``[0, eps_max]``."""
    rows = []
    for e in np.linspace(0.0, eps_max, n):
        vol, chern = blowup_classes(data, float(e))
        rows.append((float(e), vol, chern, data.m * chern / vol))
    return rows


def sweep_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("eps,volume,chern_pair,s\n")
    for r in rows:
        buf.write(",".join(f"{v:.17g}" for v in r) + "\n")
    return buf.getvalue()


# -----------------------------------------------------------------------------
# zero scalar curvature solve
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class BaseFamily:
    """Sampled base scalar curvature ``t -> s(t)`` with a sign change, PCHIP-interpolated."""

    t_nodes: tuple
    s_values: tuple

    def __post_init__(self):
        t = np.asarray(self.t_nodes, dtype=float)
        s = np.asarray(self.s_values, dtype=float)
        if t.ndim != 1 or t.size < 2 or t.shape != s.shape:
            raise InvalidParameter("need matching 1-d tables with at least two samples")
        if np.any(np.diff(t) <= 0):
            raise InvalidParameter("t_nodes must be strictly increasing")
        if not (s[0] < 0 < s[-1] or s[0] > 0 > s[-1]):
            raise NoSignChange("the base family must change sign across the interval")
        object.__setattr__(self, "t_nodes", tuple(t))
        object.__setattr__(self, "s_values", tuple(s))
        object.__setattr__(self, "_interp", PchipInterpolator(t, s, extrapolate=False))

    @classmethod
    def linear(cls, t0: float = 1.0, slope: float = 1.0, n: int = 5) -> "BaseFamily":
        t = np.linspace(-t0, t0, n)
        return cls(tuple(t), tuple(slope * t))

    @property
    def interval(self) -> tuple[float, float]:
        return self.t_nodes[0], self.t_nodes[-1]

    def s_of_t(self, t: float) -> float:
        lo, hi = self.interval
        if not lo <= t <= hi:
            raise InvalidParameter("t outside the family's interval")
        return float(self._interp(t))


def zero_scal_solve(family: BaseFamily, data_template: BlowupClassData, eps: float,
                    xtol: float = 1e-15) -> float:
    """Parameter ``t`` at which the blown-up class has zero average scalar curvature.

    The base volume is held at ``data_template.vol_class``; the family fixes
    ``chern(t) = s(t) vol / m``.
    """
    _check_eps(eps)
    V, m = data_template.vol_class, data_template.m

    def f(t):
        return average_scal(replace(data_template, chern_pair=family.s_of_t(t) * V / m), eps)

    lo, hi = family.interval
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoSignChange(f"average scalar curvature has one sign on [{lo}, {hi}] at eps = {eps}")
    return float(brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))


def linear_family_root(data_template: BlowupClassData, eps: float, slope: float = 1.0) -> float:
    """Closed form for ``s(t) = slope t``: ``t = m (m-1) sum a eps^(2m-2) / (slope vol)``."""
    m = data_template.m
    return m * (m - 1) * data_template.weight_sum * eps ** (2 * m - 2) / (slope * data_template.vol_class)
