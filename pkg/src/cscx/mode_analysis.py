"""Sphere eigenmodes, indicial roots and exact biharmonic extensions.

A function on ``S^{2m-1}`` is tracked by one real coefficient per eigenvalue
index ``gamma`` (``Delta_S e_gamma = -gamma(2m-2+gamma) e_gamma``). Every map
here is diagonal in ``gamma``, so the representative coefficient carries the
whole computation.

Conventions on the unit sphere ``|z| = 1``:

* inner extension ``H^i`` on the ball, ``Delta_0^2 H^i = 0``, with
  ``H^i = h`` and ``Delta_0 H^i = k`` on the sphere;
* outer extension ``H^o`` on the complement, decaying like ``|z|^{4-2m}``
  (``m >= 3``) or in ``O(|z|^-1) + span{log|z|}`` (``m = 2``);
* the mismatch map sends ``(h, k)`` to the jumps
  ``(d_r (H^i - H^o), d_r Delta_0 (H^i - H^o))`` at ``|z| = 1``.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, InvalidParameter, SingularMode, UnsupportedGroup


# -----------------------------------------------------------------------------
# groups and modes
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class GroupDescriptor:
    """Trivial group or ``Z_k`` acting diagonally by a primitive k-th root of unity."""

    kind: str
    m: int
    k: int = 1

    def __post_init__(self):
        if self.kind not in ("trivial", "cyclic_diagonal"):
            raise UnsupportedGroup(f"unsupported group kind {self.kind!r}")
        if int(self.m) != self.m or self.m < 2:
            raise InvalidParameter("m must be an integer >= 2")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidParameter("k must be a positive integer")
        if self.kind == "trivial" and self.k != 1:
            raise InvalidParameter("the trivial group has k = 1")

    @classmethod
    def parse(cls, text: str, m: int) -> "GroupDescriptor":
        """``"trivial"``, ``"zk"`` (e.g. ``"z2"``) or ``"cyclic_diagonal(k)"``."""
        t = text.strip().lower()
        if t in ("trivial", "1", "z1"):
            return cls("trivial", m)
        if t.startswith("cyclic_diagonal(") and t.endswith(")"):
            return cls("cyclic_diagonal", m, int(t[16:-1]))
        if t.startswith("z") and t[1:].isdigit():
            return cls("cyclic_diagonal", m, int(t[1:]))
        raise UnsupportedGroup(f"cannot parse group {text!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k}


def sphere_eigenvalue(gamma: int, m: int) -> int:
    """``gamma (2m - 2 + gamma)``, minus the eigenvalue of the sphere Laplacian."""
    return int(gamma) * (2 * int(m) - 2 + int(gamma))


def _admissible(group: GroupDescriptor, gamma: int) -> bool:
    if group.kind == "trivial" or group.k == 1:
        return True
    # bidegree (p, q), p + q = gamma, is invariant iff k | (p - q); p - q = 2p - gamma
    return any((2 * p - gamma) % group.k == 0 for p in range(gamma + 1))


def invariant_gammas(group: GroupDescriptor, gamma_max: int) -> list[int]:
    """Eigenvalue indices ``gamma <= gamma_max`` carrying Gamma-invariant eigenfunctions."""
    if not isinstance(group, GroupDescriptor):
        raise UnsupportedGroup("group must be a GroupDescriptor")
    if gamma_max < 0:
        raise InvalidParameter("gamma_max must be non-negative")
    return [g for g in range(int(gamma_max) + 1) if _admissible(group, g)]


def invariant_bidegrees(group: GroupDescriptor, gamma: int) -> list[tuple[int, int]]:
    """Bidegrees ``(p, q)`` with ``p + q = gamma`` whose harmonics are invariant."""
    return [(p, gamma - p) for p in range(gamma + 1)
            if group.kind == "trivial" or (2 * p - gamma) % group.k == 0]


@dataclass(frozen=True)
class ModeVector:
    """One real coefficient per admissible eigenvalue index."""

    m: int
    group: GroupDescriptor
    coeffs: dict
    gamma_max: int

    def __post_init__(self):
        allowed = set(invariant_gammas(self.group, self.gamma_max))
        clean = {}
        for g, c in self.coeffs.items():
            g = int(g)
            if g not in allowed:
                raise InvalidParameter(f"gamma = {g} is not admissible for {self.group}")
            c = float(c)
            if not np.isfinite(c):
                raise InvalidParameter("mode coefficients must be finite")
            clean[g] = c
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @classmethod
    def zeros(cls, m, group, gamma_max):
        return cls(m, group, {g: 0.0 for g in invariant_gammas(group, gamma_max)}, gamma_max)

    @classmethod
    def from_array(cls, m, group, gamma_max, values):
        gs = invariant_gammas(group, gamma_max)
        values = np.asarray(values, dtype=float)
        if values.shape != (len(gs),):
            raise InvalidParameter("one value per admissible gamma expected")
        return cls(m, group, dict(zip(gs, values)), gamma_max)

    @property
    def gammas(self) -> list[int]:
        return invariant_gammas(self.group, self.gamma_max)

    def get(self, gamma: int) -> float:
        return self.coeffs.get(int(gamma), 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.get(g) for g in self.gammas])

    def _like(self, coeffs):
        return ModeVector(self.m, self.group, coeffs, self.gamma_max)

    def _check_compatible(self, other):
        if (self.m, self.group, self.gamma_max) != (other.m, other.group, other.gamma_max):
            raise InvalidParameter("mode vectors live on different index sets")

    def __add__(self, other):
        self._check_compatible(other)
        return self._like({g: self.get(g) + other.get(g) for g in self.gammas})

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rmul__(self, c):
        return self._like({g: c * v for g, v in self.coeffs.items()})

    __mul__ = __rmul__

    def norm(self) -> float:
        return float(np.max(np.abs(self.as_array()))) if self.coeffs else 0.0

    def to_dict(self) -> dict:
        return {"m": self.m, "group": self.group.to_dict(),
                "coeffs": {str(g): c for g, c in self.coeffs.items()}, "gamma_max": self.gamma_max}

    @classmethod
    def from_dict(cls, d: dict) -> "ModeVector":
        grp = GroupDescriptor(d["group"]["kind"], d["m"], d["group"].get("k", 1))
        return cls(d["m"], grp, {int(g): c for g, c in d["coeffs"].items()}, d["gamma_max"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModeVector":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CauchyData:
    """Position trace ``h`` and Laplacian trace ``k`` on the unit sphere."""

    h: ModeVector
    k: ModeVector

    def __post_init__(self):
        self.h._check_compatible(self.k)

    @property
    def m(self) -> int:
        return self.h.m

    @classmethod
    def radial(cls, m: int, h0: float, k0: float, group: GroupDescriptor | None = None) -> "CauchyData":
        grp = group or GroupDescriptor("trivial", m)
        return cls(ModeVector(m, grp, {0: h0}, 0), ModeVector(m, grp, {0: k0}, 0))

    def norm(self) -> float:
        return max(self.h.norm(), self.k.norm())


# -----------------------------------------------------------------------------
# indicial roots
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class IndicialRootSet:
    """Indicial roots ``gamma, gamma+2, 2-2m-gamma, 4-2m-gamma`` per admissible gamma."""

    m: int
    group: GroupDescriptor
    gamma_max: int
    rows: tuple

    @property
    def roots(self) -> list[int]:
        return sorted(r for _, rs in self.rows for r in rs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("gamma,root1,root2,root3,root4\n")
        for g, rs in self.rows:
            buf.write(f"{g}," + ",".join(str(r) for r in rs) + "\n")
        return buf.getvalue()


def indicial_roots(m: int, group: GroupDescriptor, gamma_max: int) -> IndicialRootSet:
    """Roots of the bi-Laplacian's indicial polynomial on the admissible modes."""
    rows = tuple((g, (g, g + 2, 2 - 2 * m - g, 4 - 2 * m - g))
                 for g in invariant_gammas(group, gamma_max))
    return IndicialRootSet(m, group, gamma_max, rows)


# -----------------------------------------------------------------------------
# biharmonic extensions
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class BiharmonicExtension:
    """Mode table ``gamma -> ((exponent, coefficient), ...)`` plus an optional log term.

    The radial factor of mode gamma is ``sum_j c_j r^{a_j}``; for the outer
    m = 2 extension the gamma = 0 factor also carries ``log_coefficient * log r``.
    """

    side: str
    m: int
    terms: dict
    log_coefficient: float = 0.0
    group: GroupDescriptor | None = None
    gamma_max: int = 0

    def to_dict(self) -> dict:
        return {"side": self.side, "m": self.m, "log_coefficient": self.log_coefficient,
                "terms": {str(g): [[a, c] for a, c in t] for g, t in self.terms.items()}}


def _inner_coeffs(m, g, h, k):
    w = k / (4.0 * (m + g))
    return ((g, h - w), (g + 2, w))


def _outer_coeffs(m, g, h, k):
    if g + m - 2 == 0:
        raise SingularMode("the m = 2, gamma = 0 outer mode needs the log basis")
    w = k / (4.0 * (g + m - 2))
    return ((2 - 2 * m - g, h + w), (4 - 2 * m - g, -w))


def biharmonic_inner(data: CauchyData) -> BiharmonicExtension:
    """Bounded biharmonic extension into the unit ball."""
    m = data.m
    terms = {g: _inner_coeffs(m, g, data.h.get(g), data.k.get(g)) for g in data.h.gammas}
    return BiharmonicExtension("inner", m, terms, 0.0, data.h.group, data.h.gamma_max)


def biharmonic_outer(data: CauchyData) -> BiharmonicExtension:
    """Decaying biharmonic extension to the exterior; m = 2, gamma = 0 uses ``(r^-2, log r)``."""
    m = data.m
    terms, log_c = {}, 0.0
    for g in data.h.gammas:
        h, k = data.h.get(g), data.k.get(g)
        if m == 2 and g == 0:
            terms[g] = ((-2, h),)
            log_c = 0.5 * k
        else:
            terms[g] = _outer_coeffs(m, g, h, k)
    return BiharmonicExtension("outer", m, terms, log_c, data.h.group, data.h.gamma_max)


@dataclass(frozen=True)
class ModeTraces:
    """Radial traces of each mode factor: value, Laplacian, d_r and d_r Laplacian."""

    value: dict
    laplacian: dict
    dr: dict
    dr_laplacian: dict

    def as_arrays(self) -> np.ndarray:
        gs = sorted(self.value)
        return np.array([[d[g] for g in gs] for d in (self.value, self.laplacian, self.dr, self.dr_laplacian)])


def _monomial_traces(m, g, a, r):
    lam = a * (a + 2 * m - 2) - sphere_eigenvalue(g, m)
    return (r**a, lam * r ** (a - 2), a * r ** (a - 1), lam * (a - 2) * r ** (a - 3))


def _log_traces(m, r):
    return (np.log(r), (2 * m - 2) / r**2, 1.0 / r, -2.0 * (2 * m - 2) / r**3)


def evaluate_extension(ext: BiharmonicExtension, radius: float,
                       gamma_weights: ModeVector | None = None) -> ModeTraces:
    """Analytic traces of every mode factor at ``|z| = radius``.

    ``gamma_weights`` optionally scales each mode's contribution.
    """
    r = float(radius)
    tol = 1e-12
    if not np.isfinite(r) or r <= 0:
        raise DomainError("radius must be positive")
    if ext.side == "inner" and r > 1 + tol:
        raise DomainError("inner extensions live on the unit ball")
    if ext.side == "outer" and r < 1 - tol:
        raise DomainError("outer extensions live outside the unit ball")
    out = ([{}, {}, {}, {}])
    for g, terms in ext.terms.items():
        acc = np.zeros(4)
        for a, c in terms:
            if c != 0.0:
                acc += c * np.array(_monomial_traces(ext.m, g, a, r))
        if g == 0 and ext.log_coefficient:
            acc += ext.log_coefficient * np.array(_log_traces(ext.m, r))
        wgt = 1.0 if gamma_weights is None else gamma_weights.get(g)
        for d, v in zip(out, acc * wgt):
            d[g] = float(v)
    return ModeTraces(*out)


def mode_representative(m: int, p: int, q: int) -> Callable:
    """``Re(z_1^p conj(z_2)^q)``: a harmonic polynomial of degree ``p + q``.

    Coordinates are interleaved reals ``(x_1, y_1, x_2, y_2, ...)``.
    """
    def f(x):
        z1 = x[..., 0] + 1j * x[..., 1]
        z2 = x[..., 2] - 1j * x[..., 3]
        return np.real(z1**p * z2**q)
    return f


def assemble_extension(ext: BiharmonicExtension) -> Callable:
    """Extension as a function on ``C^m`` using the representatives of :func:`mode_representative`.

    Mode gamma uses the first invariant bidegree; the factor ``r^a e_gamma``
    is written ``r^{a - gamma} Re(z_1^p conj(z_2)^q)``.
    """
    group = ext.group or GroupDescriptor("trivial", ext.m)
    reps = {g: mode_representative(ext.m, *invariant_bidegrees(group, g)[0]) for g in ext.terms}

    def f(x):
        r2 = np.sum(x * x, axis=-1)
        out = np.zeros_like(r2)
        for g, terms in ext.terms.items():
            radial = sum(c * r2 ** ((a - g) / 2) for a, c in terms)
            out = out + radial * reps[g](x)
        if ext.log_coefficient:
            out = out + 0.5 * ext.log_coefficient * np.log(r2)
        return out
    return f


# -----------------------------------------------------------------------------
# mismatch map
# -----------------------------------------------------------------------------
def mode_block(m: int, gamma: int, log_block: bool = True) -> np.ndarray:
    """2x2 matrix sending ``(h, k)`` of one mode to ``(d1, d2)``.

    Generic modes::

        d1 = 2(g+m-1) [h + k / (2 (g+m)(g+m-2))]
        d2 = 2(g+m-1) k

    For m = 2, gamma = 0 the outer basis is ``(r^-2, log r)`` and the block is
    ``[[2, -1/4], [0, 2]]``.
    """
    g = int(gamma)
    if g + m - 2 == 0:
        if not log_block:
            raise SingularMode("m = 2, gamma = 0 has no generic mismatch formula")
        return np.array([[2.0, -0.25], [0.0, 2.0]])
    c = 2.0 * (g + m - 1)
    return np.array([[c, c / (2.0 * (g + m) * (g + m - 2))], [0.0, c]])


def mismatch_map_P(data: CauchyData, log_block: bool = True) -> tuple[ModeVector, ModeVector]:
    """Jumps of ``d_r`` and ``d_r Delta_0`` between inner and outer extensions at ``|z| = 1``."""
    m = data.m
    d1, d2 = {}, {}
    for g in data.h.gammas:
        B = mode_block(m, g, log_block)
        d1[g], d2[g] = B @ np.array([data.h.get(g), data.k.get(g)])
    like = data.h
    return like._like(d1), like._like(d2)


def invert_P(d1: ModeVector, d2: ModeVector, log_block: bool = True) -> CauchyData:
    """Exact mode-wise inverse of :func:`mismatch_map_P`."""
    d1._check_compatible(d2)
    m = d1.m
    h, k = {}, {}
    for g in d1.gammas:
        B = mode_block(m, g, log_block)
        kk = d2.get(g) / B[1, 1]
        h[g] = (d1.get(g) - B[0, 1] * kk) / B[0, 0]
        k[g] = kk
    return CauchyData(d1._like(h), d1._like(k))


def mismatch_from_traces(data: CauchyData) -> tuple[ModeVector, ModeVector]:
    """Same jumps as :func:`mismatch_map_P`, computed from the extensions' analytic traces."""
    ti = evaluate_extension(biharmonic_inner(data), 1.0)
    to = evaluate_extension(biharmonic_outer(data), 1.0)
    d1 = {g: ti.dr[g] - to.dr[g] for g in ti.dr}
    d2 = {g: ti.dr_laplacian[g] - to.dr_laplacian[g] for g in ti.dr}
    return data.h._like(d1), data.h._like(d2)
