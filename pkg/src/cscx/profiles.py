"""Rotationally symmetric Kahler potentials F(s), s = |z|^2.

All profiles are evaluated through their *t-jet*: with t = log s the
derivatives ``[F, F_t, F_tt, F_ttt, F_tttt]`` are well scaled on every
decade of s, and the radial curvature formulas are rational in them. The
s-derivatives F', ..., F'''' are recovered with Stirling-number identities.

A profile may carry a singular part ``c_log * log s``. It is differentiated
analytically and is never stored in spline or polynomial coefficients.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from scipy.interpolate import make_interp_spline

from .errors import DegenerateMetric, DomainError, InvalidParameter

JET_ORDER = 4

# F_t^(k) = sum_j S2[k][j] s^j F^(j)   (Stirling numbers of the second kind)
_S2 = np.array([
    [1, 0, 0, 0, 0],
    [0, 1, 0, 0, 0],
    [0, 1, 1, 0, 0],
    [0, 1, 3, 1, 0],
    [0, 1, 7, 6, 1],
], dtype=float)
# s^k F^(k) = sum_j S1[k][j] F_t^(j)   (signed Stirling numbers of the first kind)
_S1 = np.array([
    [1, 0, 0, 0, 0],
    [0, 1, 0, 0, 0],
    [0, -1, 1, 0, 0],
    [0, 2, -3, 1, 0],
    [0, -6, 11, -6, 1],
], dtype=float)


def jet_to_s_derivatives(jet: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Convert a t-jet ``(5, n)`` into s-derivatives ``[F, F', ..., F'''']``."""
    jet = np.asarray(jet)
    n = jet.shape[0]
    out = _S1[:n, :n] @ jet
    for k in range(1, n):
        out[k] = out[k] / s**k
    return out


def s_derivatives_to_jet(ders: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Inverse of :func:`jet_to_s_derivatives`."""
    ders = np.asarray(ders, dtype=float)
    scaled = np.empty_like(ders)
    scaled[0] = ders[0]
    for k in range(1, ders.shape[0]):
        scaled[k] = ders[k] * s**k
    return _S2[: ders.shape[0], : ders.shape[0]] @ scaled


def _as_t(t) -> np.ndarray:
    return np.atleast_1d(np.asarray(t, dtype=float))


class RadialKahlerPotential:
    """Base class for radial potentials on an annulus of C^m.

    Subclasses implement :meth:`_smooth_jet`, the t-jet of the smooth part.
    The public :meth:`jet` adds the analytic ``c_log * t`` contribution.

    Parameters
    ----------
    m : int
        Complex dimension, at least 2.
    s_min, s_max : float
        Domain of the radial variable s. ``s_min = 0`` and
        ``s_max = inf`` are allowed for closed forms.
    c_log : float
        Coefficient of the singular ``log s`` part.
    """

    def __init__(self, m: int, s_min: float = 0.0, s_max: float = math.inf,
                 c_log: float = 0.0, metadata: dict | None = None):
        if int(m) != m or m < 2:
            raise InvalidParameter(f"complex dimension must be an integer >= 2, got {m}")
        if not (0.0 <= s_min < s_max):
            raise InvalidParameter(f"empty domain [{s_min}, {s_max}]")
        self.m = int(m)
        self.s_min = float(s_min)
        self.s_max = float(s_max)
        self.c_log = float(c_log)
        self.metadata = dict(metadata or {})

    # -- domain -------------------------------------------------------------
    @property
    def t_min(self) -> float:
        return -math.inf if self.s_min == 0.0 else math.log(self.s_min)

    @property
    def t_max(self) -> float:
        return math.log(self.s_max) if math.isfinite(self.s_max) else math.inf

    def _check_t(self, t: np.ndarray) -> None:
        slack = 1e-12 * max(1.0, np.max(np.abs(t[np.isfinite(t)]), initial=1.0))
        if np.any(~np.isfinite(t)) or np.any(t < self.t_min - slack) or np.any(t > self.t_max + slack):
            raise DomainError(
                f"evaluation outside profile domain s in [{self.s_min:g}, {self.s_max:g}]")

    # -- evaluation -----------------------------------------------------------
    def _smooth_jet(self, t: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def jet(self, t) -> np.ndarray:
        """Return ``[F, F_t, F_tt, F_ttt, F_tttt]`` at ``t = log s``; shape ``(5, n)``."""
        t = _as_t(t)
        self._check_t(t)
        out = np.array(self._smooth_jet(t), dtype=float, copy=True)
        if self.c_log != 0.0:
            out[0] += self.c_log * t
            out[1] += self.c_log
        return out

    def jet_s(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s <= 0):
            raise DomainError("s must be positive")
        return self.jet(np.log(s))

    def __call__(self, s):
        return self.jet_s(s)[0]

    def derivatives(self, s) -> np.ndarray:
        """s-derivatives ``[F, F', F'', F''', F'''']`` at s; shape ``(5, n)``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return jet_to_s_derivatives(self.jet_s(s), s)

    # -- invariants -----------------------------------------------------------
    def check_positivity(self, s) -> None:
        """Raise :class:`DegenerateMetric` unless F' > 0 and F' + sF'' > 0 at s."""
        j = self.jet_s(s)
        if np.any(j[1] <= 0) or np.any(j[2] <= 0):
            bad = np.atleast_1d(s)[(j[1] <= 0) | (j[2] <= 0)]
            raise DegenerateMetric(f"metric not positive at s = {bad[:3]}")

    # -- arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, RadialKahlerPotential):
            return LinearCombination([(1.0, self), (1.0, other)])
        return LinearCombination([(1.0, self)], const=float(other))

    __radd__ = __add__

    def __mul__(self, c):
        return LinearCombination([(float(c), self)])

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __neg__(self):
        return (-1.0) * self

    # -- serialization ---------------------------------------------------------
    def to_dict(self, s_min: float | None = None, s_max: float | None = None,
                nodes_per_decade: int = 400) -> dict:
        lo = self.s_min if s_min is None else s_min
        hi = self.s_max if s_max is None else s_max
        if lo <= 0 or not math.isfinite(hi):
            raise DomainError("serialization needs a finite domain with s_min > 0")
        s_nodes = chebyshev_s_nodes(lo, hi, nodes_per_decade)
        j = self.jet_s(s_nodes)
        smooth = j[0] - self.c_log * np.log(s_nodes)
        return {
            "m": self.m,
            "s_nodes": s_nodes.tolist(),
            "F_values": smooth.tolist(),
            "c_log": self.c_log,
            "metadata": dict(self.metadata),
        }


def chebyshev_s_nodes(s_min: float, s_max: float, nodes_per_decade: int = 400) -> np.ndarray:
    """Chebyshev-Lobatto nodes in t = log s, returned in s, ascending."""
    decades = max(math.log10(s_max / s_min), 1e-3)
    n = max(int(math.ceil(nodes_per_decade * decades)), 8)
    k = np.arange(n + 1)
    x = -np.cos(np.pi * k / n)
    t = 0.5 * (math.log(s_min) + math.log(s_max)) + 0.5 * (math.log(s_max) - math.log(s_min)) * x
    s = np.exp(t)
    s[0], s[-1] = s_min, s_max
    return s


# -----------------------------------------------------------------------------
# backends
# -----------------------------------------------------------------------------
class TJetProfile(RadialKahlerPotential):
    """Profile defined by a callable ``t -> (5, n)`` jet of its smooth part."""

    def __init__(self, m, jet_fn: Callable[[np.ndarray], np.ndarray], s_min=0.0,
                 s_max=math.inf, c_log=0.0, metadata=None):
        super().__init__(m, s_min, s_max, c_log, metadata)
        self._fn = jet_fn

    def _smooth_jet(self, t):
        return np.asarray(self._fn(t), dtype=float)


class SDerivativeProfile(RadialKahlerPotential):
    """Profile from a callable ``s -> [F, F', F'', F''', F'''']`` (smooth part)."""

    def __init__(self, m, sders_fn: Callable[[np.ndarray], Sequence[np.ndarray]],
                 s_min=0.0, s_max=math.inf, c_log=0.0, metadata=None):
        super().__init__(m, s_min, s_max, c_log, metadata)
        self._fn = sders_fn

    def _smooth_jet(self, t):
        s = np.exp(t)
        d = np.array([np.broadcast_to(np.asarray(v, dtype=float), s.shape)
                      for v in self._fn(s)])
        return s_derivatives_to_jet(d, s)


class SplineProfile(RadialKahlerPotential):
    """Quintic spline in t = log s through the smooth part of F.

    Fourth t-derivatives of a quintic spline are continuous, which is what the
    fourth-order curvature operator needs.
    """

    def __init__(self, m, s_nodes, F_values, c_log=0.0, metadata=None):
        s_nodes = np.asarray(s_nodes, dtype=float)
        F_values = np.asarray(F_values, dtype=float)
        if s_nodes.ndim != 1 or s_nodes.shape != F_values.shape or s_nodes.size < 8:
            raise InvalidParameter("need matching 1-d node/value arrays with >= 8 entries")
        if np.any(np.diff(s_nodes) <= 0) or s_nodes[0] <= 0:
            raise InvalidParameter("s_nodes must be positive and strictly increasing")
        super().__init__(m, s_nodes[0], s_nodes[-1], c_log, metadata)
        self.s_nodes = s_nodes
        self.F_values = F_values
        self._spl = make_interp_spline(np.log(s_nodes), F_values, k=5)

    def _smooth_jet(self, t):
        return np.array([self._spl(t, nu=k) for k in range(JET_ORDER + 1)])

    @classmethod
    def from_profile(cls, prof: RadialKahlerPotential, s_min: float, s_max: float,
                     nodes_per_decade: int = 400) -> "SplineProfile":
        d = prof.to_dict(s_min, s_max, nodes_per_decade)
        return cls.from_dict(d)

    @classmethod
    def from_dict(cls, d: dict) -> "SplineProfile":
        return cls(d["m"], d["s_nodes"], d["F_values"], d.get("c_log", 0.0), d.get("metadata"))

    @classmethod
    def from_json(cls, text: str) -> "SplineProfile":
        return cls.from_dict(json.loads(text))

    def interpolation_error_bound(self) -> float:
        """Crude a-posteriori bound: spline vs. spline built on every other node."""
        coarse = make_interp_spline(np.log(self.s_nodes[::2]), self.F_values[::2], k=5)
        t = np.log(self.s_nodes)
        return float(np.max(np.abs(coarse(t) - self.F_values)) + 1e-14)


class ChebyshevProfile(RadialKahlerPotential):
    """Chebyshev series in t on ``[t_a, t_b]`` (output format of collocation solves)."""

    def __init__(self, m, t_a, t_b, coeffs, c_log=0.0, base: RadialKahlerPotential | None = None,
                 metadata=None):
        super().__init__(m, math.exp(t_a), math.exp(t_b), c_log, metadata)
        self.t_a, self.t_b = float(t_a), float(t_b)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.base = base
        scale = 2.0 / (self.t_b - self.t_a)
        self._der = [self.coeffs]
        for _ in range(JET_ORDER):
            self._der.append(npcheb.chebder(self._der[-1]) * scale)

    @classmethod
    def from_values(cls, m, t_a, t_b, values, base=None, metadata=None):
        """Interpolate values given on Chebyshev-Lobatto nodes ordered from t_a to t_b."""
        values = np.asarray(values, dtype=float)
        n = values.size - 1
        # nodes x_k = -cos(pi k / n) run from -1 to 1
        coeffs = npcheb.chebfit(-np.cos(np.pi * np.arange(n + 1) / n), values, n)
        c_log = 0.0 if base is None else base.c_log
        return cls(m, t_a, t_b, coeffs, c_log=c_log, base=base, metadata=metadata)

    def _x(self, t):
        return (2.0 * t - (self.t_a + self.t_b)) / (self.t_b - self.t_a)

    def _smooth_jet(self, t):
        x = self._x(t)
        out = np.array([npcheb.chebval(x, c) for c in self._der])
        if self.base is not None:
            bj = self.base.jet(t)
            bj[0] -= self.base.c_log * t
            bj[1] -= self.base.c_log
            out = out + bj
        return out


class LinearCombination(RadialKahlerPotential):
    """``const + sum_i c_i F_i`` on the intersection of the domains."""

    def __init__(self, terms, const: float = 0.0, metadata=None):
        terms = [(float(c), p) for c, p in terms]
        m = terms[0][1].m
        if any(p.m != m for _, p in terms):
            raise InvalidParameter("profiles of different dimension cannot be combined")
        s_min = max(p.s_min for _, p in terms)
        s_max = min(p.s_max for _, p in terms)
        c_log = sum(c * p.c_log for c, p in terms)
        super().__init__(m, s_min, s_max, c_log, metadata)
        self.terms = terms
        self.const = float(const)

    def _smooth_jet(self, t):
        out = np.zeros((JET_ORDER + 1, t.size))
        for c, p in self.terms:
            j = p.jet(t)
            if p.c_log != 0.0:
                j[0] -= p.c_log * t
                j[1] -= p.c_log
            out += c * j
        out[0] += self.const
        return out


class RescaledProfile(RadialKahlerPotential):
    """``G(t) = alpha * F(t + shift) + const``.

    With ``alpha = eps**2`` and ``shift = -2 log eps`` this is the potential
    ``eps^2 F(s / eps^2)``; with ``alpha = 1`` and ``shift = -log(2 lam)`` it is
    the change of variables ``u = sqrt(2 lam) v``.
    """

    def __init__(self, base: RadialKahlerPotential, alpha: float = 1.0, shift: float = 0.0,
                 const: float = 0.0, metadata=None):
        s_min = base.s_min * math.exp(-shift)
        s_max = base.s_max * math.exp(-shift) if math.isfinite(base.s_max) else math.inf
        super().__init__(base.m, s_min, s_max, alpha * base.c_log, metadata)
        self.base, self.alpha, self.shift, self.const = base, float(alpha), float(shift), float(const)

    def _smooth_jet(self, t):
        j = self.base.jet(t + self.shift)
        if self.base.c_log != 0.0:
            j[0] -= self.base.c_log * (t + self.shift)
            j[1] -= self.base.c_log
        out = self.alpha * j
        # the log part of the base contributes c*log(s) + c*shift in the new variable
        out[0] += self.alpha * self.base.c_log * self.shift + self.const
        return out


# -----------------------------------------------------------------------------
# momentum profiles: tau_t = Phi(tau) with Phi = P / x^(m-1)
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class MomentumPolynomial:
    """``P(x) = x^m + C x + D - beta nu x^(m+1)`` with ``beta = 1/(2m(m+1))``.

    Every radial metric of constant scalar curvature ``nu`` satisfies
    ``tau^(m-1) tau_t = P(tau)`` for some constants C, D, where
    ``tau = F_t`` is the moment coordinate. The polynomial is stored in
    powers of ``w = x - x_ref`` so that evaluation near a root is free of
    cancellation.
    """

    m: int
    C: float
    D: float
    nu: float = 0.0
    x_ref: float = 0.0
    coeffs_w: tuple = field(default=(), compare=False)

    @staticmethod
    def make(m, C, D, nu=0.0, x_ref=0.0) -> "MomentumPolynomial":
        beta = 1.0 / (2.0 * m * (m + 1))
        c = np.zeros(m + 2)
        c[m] += 1.0
        c[1] += C
        c[0] += D
        c[m + 1] -= beta * nu
        # Taylor shift to powers of w = x - x_ref
        poly = np.polynomial.Polynomial(c)
        shifted = poly(np.polynomial.Polynomial([x_ref, 1.0]))
        cw = np.zeros(m + 2)
        cw[: shifted.coef.size] = shifted.coef
        return MomentumPolynomial(m, float(C), float(D), float(nu), float(x_ref), tuple(cw))

    def P(self, x, order=0):
        w = np.asarray(x, dtype=float) - self.x_ref
        p = np.polynomial.Polynomial(self.coeffs_w)
        if order:
            p = p.deriv(order)
        return p(w)

    def phi(self, x):
        """Return ``(Phi, Phi', Phi'')`` at x."""
        x = np.asarray(x, dtype=float)
        m = self.m
        P0, P1, P2 = self.P(x), self.P(x, 1), self.P(x, 2)
        xm1 = x ** (m - 1)
        f0 = P0 / xm1
        f1 = P1 / xm1 - (m - 1) * P0 / (xm1 * x)
        f2 = P2 / xm1 - 2 * (m - 1) * P1 / (xm1 * x) + m * (m - 1) * P0 / (xm1 * x * x)
        return f0, f1, f2


class MomentumProfile(RadialKahlerPotential):
    """Profile whose moment coordinate solves ``tau_t = Phi(tau)``.

    Parameters
    ----------
    tau_fn : callable
        ``t -> tau(t)``.
    value_fn : callable
        ``t -> F(t)`` (smooth part, i.e. without ``c_log * t``).
    poly : MomentumPolynomial
        Supplies Phi and its derivatives; the higher jet entries follow from
        the chain rule and are exact consequences of the ODE.
    """

    def __init__(self, m, tau_fn, value_fn, poly: MomentumPolynomial, s_min=0.0,
                 s_max=math.inf, c_log=0.0, metadata=None):
        super().__init__(m, s_min, s_max, c_log, metadata)
        self._tau, self._val, self.poly = tau_fn, value_fn, poly

    def _smooth_jet(self, t):
        tau = np.asarray(self._tau(t), dtype=float)
        f0, f1, f2 = self.poly.phi(tau)
        out = np.empty((JET_ORDER + 1, t.size))
        out[0] = self._val(t)
        out[1] = tau - self.c_log
        out[2] = f0
        out[3] = f1 * f0
        out[4] = (f2 * f0 + f1 * f1) * f0
        return out


# -----------------------------------------------------------------------------
# elementary closed forms
# -----------------------------------------------------------------------------
def flat_profile(m: int, coeff: float = 0.5) -> RadialKahlerPotential:
    """``coeff * s``; ``coeff = 1/2`` is the Euclidean metric."""
    def fn(t):
        e = coeff * np.exp(t)
        return np.array([e, e, e, e, e])
    return TJetProfile(m, fn, metadata={"kind": "flat", "coeff": coeff})


def power_profile(m: int, p: float, coeff: float = 1.0, s_min=0.0, s_max=math.inf) -> RadialKahlerPotential:
    """``coeff * s^p`` (so ``|z|^delta`` is ``p = delta / 2``)."""
    def fn(t):
        e = coeff * np.exp(p * t)
        return np.array([e * p**k for k in range(JET_ORDER + 1)])
    return TJetProfile(m, fn, s_min=s_min, s_max=s_max,
                       metadata={"kind": "power", "p": p, "coeff": coeff})


def polynomial_profile(m: int, coeffs: Sequence[float], s_min=0.0, s_max=math.inf) -> RadialKahlerPotential:
    """``sum_k coeffs[k] s^k`` (polynomial in s)."""
    c = np.asarray(coeffs, dtype=float)

    def fn(t):
        s = np.exp(t)
        out = np.zeros((JET_ORDER + 1, t.size))
        for k, ck in enumerate(c):
            if ck != 0.0:
                e = ck * s**k
                for j in range(JET_ORDER + 1):
                    out[j] += e * float(k) ** j
        return out
    return TJetProfile(m, fn, s_min=s_min, s_max=s_max,
                       metadata={"kind": "polynomial", "coeffs": c.tolist()})


def log1p_profile(m: int, coeff: float = 1.0) -> RadialKahlerPotential:
    """``coeff * log(1 + s)`` (Fubini-Study type potential)."""
    def sd(s):
        u = 1.0 + s
        return [coeff * np.log1p(s), coeff / u, -coeff / u**2, 2 * coeff / u**3, -6 * coeff / u**4]
    return SDerivativeProfile(m, sd, metadata={"kind": "log1p", "coeff": coeff})
