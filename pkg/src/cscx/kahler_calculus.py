"""Metric data, scalar curvature, its linearization and weighted norms.

Conventions
-----------
The Kahler metric of a potential phi is ``g_{a bbar} = d_a d_bbar phi`` and
the scalar curvature is the Riemannian one,

    s = -Delta_g log det(g),   Delta_g f = 2 g^{a bbar} d_a d_bbar f,

so ``phi = |z|^2 / 2`` is Euclidean space and the linearization of ``s`` at
the flat metric is ``-1/2 Delta_0^2``. The operator ``L_g`` is defined by
``s(F + phi) = s(F) - L_g phi + Q_g(phi)``.

For a radial potential F(s), s = |z|^2, write ``t = log s`` and
``tau = F_t``. The metric eigenvalues are ``tau/s`` (multiplicity m-1) and
``tau_t/s``, and

    log det g = (m-1) log tau + log tau_t - m t,
    s(F) = -2 [ (m-1) L_t / tau + L_tt / tau_t ],   L = log det g.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateMetric, DomainError, InvalidParameter, OutOfRegion
from .profiles import RadialKahlerPotential, _S1

# -----------------------------------------------------------------------------
# radial closed form
# -----------------------------------------------------------------------------


def scal_from_jet(jet, m: int):
    """Scalar curvature from a t-jet ``[F, tau, tau_t, tau_tt, tau_ttt]``.

    Only rational operations are used, so complex inputs give exact
    complex-step derivatives.
    """
    tau, t1, t2, t3 = jet[1], jet[2], jet[3], jet[4]
    a = t1 / tau
    b = t2 / t1
    Lt = (m - 1) * a + b - m
    Ltt = (m - 1) * (t2 / tau - a * a) + t3 / t1 - b * b
    return -2.0 * ((m - 1) * Lt / tau + Ltt / t1)


def scal_jet_partials(jet: np.ndarray, m: int) -> np.ndarray:
    """Partial derivatives of :func:`scal_from_jet` w.r.t. ``jet[1..4]``.

    Computed by complex-step differentiation, which is exact to roundoff for
    rational functions. Returns an array of shape ``(4, n)``.
    """
    h = 1e-30
    jet = np.asarray(jet, dtype=float)
    out = np.empty((4, jet.shape[1]))
    for k in range(4):
        z = jet.astype(complex)
        z[k + 1] += 1j * h
        out[k] = scal_from_jet(z, m).imag / h
    return out


def _checked_jet(F: RadialKahlerPotential, s) -> tuple[np.ndarray, np.ndarray]:
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s <= 0) or np.any(s < F.s_min) or np.any(s > F.s_max):
        raise DomainError("s must lie in the domain of the profile")
    jet = F.jet(np.log(s))
    if np.any(jet[1] <= 0) or np.any(jet[2] <= 0):
        raise DegenerateMetric("metric eigenvalues not positive")
    return s, jet


def radial_metric_data(F: RadialKahlerPotential, s):
    """Metric eigenvalues of ``i d dbar F(|z|^2)`` at radius s.

    Returns
    -------
    g_tangent : F'   (multiplicity m-1)
    g_radial  : F' + s F''
    det_g     : g_tangent^(m-1) * g_radial
    """
    s, jet = _checked_jet(F, s)
    gt = jet[1] / s
    gr = jet[2] / s
    det = gt ** (F.m - 1) * gr
    if np.ndim(s) and s.size == 1:
        return float(gt[0]), float(gr[0]), float(det[0])
    return gt, gr, det


def radial_scalar_curvature(F: RadialKahlerPotential, s):
    """Scalar curvature of ``i d dbar F(|z|^2)`` as a function of s."""
    s, jet = _checked_jet(F, s)
    return scal_from_jet(jet, F.m)


@dataclass(frozen=True)
class RadialFunction:
    """A radial function of s given by a vectorised callable."""

    fn: Callable[[np.ndarray], np.ndarray]
    s_min: float
    s_max: float
    metadata: dict = field(default_factory=dict)

    def __call__(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s < self.s_min) or np.any(s > self.s_max) or np.any(s <= 0):
            raise DomainError("radial function evaluated outside its domain")
        return self.fn(s)


def _linearized_values(F, phi, s):
    s, jet = _checked_jet(F, s)
    pj = phi.jet(np.log(s))
    d = scal_jet_partials(jet, F.m)
    return -np.einsum("kn,kn->n", d, pj[1:5])


def linearized_scal_apply(F: RadialKahlerPotential, phi: RadialKahlerPotential) -> RadialFunction:
    """``s -> L_g phi (s)``, the exact first variation of the scalar curvature.

    ``L_g phi = -(d/dt) s(F + t phi)`` at ``t = 0``, evaluated by complex-step
    forward differentiation of the radial closed form.
    """
    if F.m != phi.m:
        raise InvalidParameter("profiles must share the complex dimension")
    lo, hi = max(F.s_min, phi.s_min), min(F.s_max, phi.s_max)
    return RadialFunction(lambda s: _linearized_values(F, phi, s), lo, hi,
                          {"linearization": "complex-step forward mode"})


def nonlinear_remainder(F: RadialKahlerPotential, phi: RadialKahlerPotential) -> RadialFunction:
    """``Q(phi) = s(F + phi) - s(F) + L_g phi`` as a radial function."""
    if F.m != phi.m:
        raise InvalidParameter("profiles must share the complex dimension")
    G = F + phi

    def fn(s):
        return (radial_scalar_curvature(G, s) - radial_scalar_curvature(F, s)
                + _linearized_values(F, phi, s))
    lo, hi = max(F.s_min, phi.s_min), min(F.s_max, phi.s_max)
    return RadialFunction(fn, lo, hi)


def euclidean_laplacian_jet(jet: np.ndarray, t: np.ndarray, m: int) -> np.ndarray:
    """Euclidean Laplacian of a radial function from its t-jet (orders 0..2)."""
    return 4.0 * (jet[2] + (m - 1) * jet[1]) * np.exp(-t)


# -----------------------------------------------------------------------------
# grid oracle
# -----------------------------------------------------------------------------
_SECOND = {
    2: (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0])),
    4: (np.arange(-2, 3), np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12])),
    6: (np.arange(-3, 4), np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])),
}
_FIRST = {
    2: (np.array([-1, 1]), np.array([-0.5, 0.5])),
    4: (np.array([-2, -1, 1, 2]), np.array([1 / 12, -2 / 3, 2 / 3, -1 / 12])),
    6: (np.array([-3, -2, -1, 1, 2, 3]), np.array([-1 / 60, 3 / 20, -3 / 4, 3 / 4, -3 / 20, 1 / 60])),
}


def _hessian_stencil(dim: int, order: int):
    """Offsets (integer lattice vectors) and per-entry weights of a centred Hessian.

    Returns ``offsets`` of shape ``(p, dim)`` and ``W`` of shape
    ``(dim, dim, p)`` so that ``H_ij = sum_p W[i, j, p] f(x + h offsets[p]) / h^2``.
    """
    index: dict[tuple, int] = {}
    entries = []

    def slot(v):
        key = tuple(int(a) for a in v)
        if key not in index:
            index[key] = len(index)
        return index[key]

    so, sw = _SECOND[order]
    fo, fw = _FIRST[order]
    for i in range(dim):
        for o, w in zip(so, sw):
            v = np.zeros(dim, int)
            v[i] = o
            entries.append((i, i, slot(v), w))
    for i, j in itertools.combinations(range(dim), 2):
        for (oa, wa), (ob, wb) in itertools.product(zip(fo, fw), zip(fo, fw)):
            v = np.zeros(dim, int)
            v[i], v[j] = oa, ob
            p = slot(v)
            entries.append((i, j, p, wa * wb))
            entries.append((j, i, p, wa * wb))
    offsets = np.zeros((len(index), dim), int)
    for key, p in index.items():
        offsets[p] = key
    W = np.zeros((dim, dim, len(index)))
    for i, j, p, w in entries:
        W[i, j, p] += w
    return offsets, W


def _complex_hessian(H):
    """``g_{a bbar}`` from the real Hessian in interleaved coordinates (x1, y1, x2, y2, ...)."""
    X = H[..., 0::2, 0::2]
    Y = H[..., 1::2, 1::2]
    XY = H[..., 0::2, 1::2]
    YX = H[..., 1::2, 0::2]
    return 0.25 * ((X + Y) + 1j * (XY - YX))


def _det_small(A):
    """Determinant of stacked small complex matrices; works in extended precision."""
    n = A.shape[-1]
    if n == 1:
        return A[..., 0, 0]
    if n == 2:
        return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    if n == 3:
        return (A[..., 0, 0] * (A[..., 1, 1] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 1])
                - A[..., 0, 1] * (A[..., 1, 0] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 0])
                + A[..., 0, 2] * (A[..., 1, 0] * A[..., 2, 1] - A[..., 1, 1] * A[..., 2, 0]))
    raise InvalidParameter("grid oracle supports m in {2, 3} only")


@dataclass
class GridPotential:
    """A potential on an annular shell of C^m sampled on a lattice.

    Samples are drawn lazily: ``func`` is evaluated, in extended precision,
    at exactly those lattice points ``point + spacing * n`` a stencil needs.
    Coordinates are interleaved real parts, ``(x1, y1, x2, y2, ...)``.

    Parameters
    ----------
    m : int
        Complex dimension, 2 or 3.
    r_lo, r_hi : float
        Radii bounding the sampled shell.
    spacing : float
        Lattice step per axis.
    func : callable
        Maps an array of shape ``(..., 2m)`` to potential values.
    order : int
        Accuracy order of the centred stencils (2, 4 or 6).
    """

    m: int
    r_lo: float
    r_hi: float
    spacing: float
    func: Callable[[np.ndarray], np.ndarray]
    order: int = 4
    dtype: type = np.longdouble

    def __post_init__(self):
        if self.m not in (2, 3):
            raise InvalidParameter("grid potentials are limited to m in {2, 3}")
        if self.order not in _SECOND:
            raise InvalidParameter(f"stencil order must be one of {sorted(_SECOND)}")
        if not (0 <= self.r_lo < self.r_hi) or self.spacing <= 0:
            raise InvalidParameter("invalid grid region or spacing")

    @property
    def reach(self) -> int:
        """Stencil half-width in lattice steps for one second derivative."""
        return self.order // 2

    def values(self, points) -> np.ndarray:
        return np.asarray(self.func(np.asarray(points, dtype=self.dtype)))

    @classmethod
    def from_radial(cls, F: RadialKahlerPotential, r_lo, r_hi, spacing, order=4):
        def func(x):
            s = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
            return F(s.ravel()).reshape(s.shape)
        return cls(F.m, r_lo, r_hi, spacing, func, order, dtype=float)


def _check_region(P: GridPotential, point, layers: int):
    r = float(np.linalg.norm(np.asarray(point, dtype=float)))
    pad = layers * P.spacing * math.sqrt(2.0)
    if r - pad < P.r_lo or r + pad > P.r_hi:
        raise OutOfRegion(f"point at |z|={r:g} is within {layers} ghost layers of the shell boundary")


def _fd_hessians(P: GridPotential, centers: np.ndarray, offsets, W):
    """Real Hessians of the potential at every row of ``centers``."""
    h = P.dtype(P.spacing)
    pts = centers[:, None, :] + h * offsets[None, :, :].astype(P.dtype)
    vals = P.values(pts)
    return np.einsum("ijp,cp->cij", W.astype(P.dtype), vals) / (h * h)


def scalar_curvature_grid(P: GridPotential, point) -> float:
    """Scalar curvature at ``point`` by nested centred finite differences.

    ``log det g`` is formed at every point of a Hessian stencil around
    ``point`` (each from a Hessian stencil of the potential) and then
    differentiated once more. With order-p stencils the error is
    ``O(spacing^p)`` until roundoff, which extended precision keeps low.
    """
    dim = 2 * P.m
    point = np.asarray(point, dtype=P.dtype)
    if point.shape != (dim,):
        raise InvalidParameter(f"point must have {dim} real coordinates")
    _check_region(P, point.astype(float), 2 * P.reach)
    offsets, W = _hessian_stencil(dim, P.order)
    h = P.dtype(P.spacing)
    outer = point[None, :] + h * offsets.astype(P.dtype)
    H = _fd_hessians(P, outer, offsets, W)
    g = _complex_hessian(H)
    det = _det_small(g)
    if np.any(np.real(det) <= 0):
        raise DegenerateMetric("non-positive metric determinant on the stencil")
    logdet = np.log(np.real(det))
    HL = np.einsum("ijp,p->ij", W.astype(P.dtype), logdet) / (h * h)
    R = _complex_hessian(HL)
    c = int(np.flatnonzero(np.all(offsets == 0, axis=1))[0])
    g0 = np.asarray(g[c], dtype=complex)
    ginv = np.linalg.inv(g0)
    s = -2.0 * np.real(np.trace(ginv @ np.asarray(R, dtype=complex)))
    return float(s)


def grid_laplacian(func: Callable, point, spacing: float, order: int = 4,
                   dtype=np.longdouble) -> float:
    """Euclidean Laplacian of ``func`` at ``point`` by centred differences."""
    point = np.asarray(point, dtype=dtype)
    dim = point.size
    so, sw = _SECOND[order]
    h = dtype(spacing)
    pts = np.repeat(point[None, :], dim * so.size, axis=0)
    for i in range(dim):
        pts[i * so.size:(i + 1) * so.size, i] += h * so.astype(dtype)
    vals = np.asarray(func(pts), dtype=dtype).reshape(dim, so.size)
    return (vals @ sw.astype(dtype)).sum() / (h * h)


def grid_bilaplacian(func: Callable, point, spacing: float, order: int = 4,
                     dtype=np.longdouble) -> float:
    """Euclidean bi-Laplacian by nesting :func:`grid_laplacian`."""
    point = np.asarray(point, dtype=dtype)
    dim = point.size
    so, sw = _SECOND[order]
    h = dtype(spacing)
    total = dtype(0)
    for i in range(dim):
        for o, w in zip(so, sw):
            q = point.copy()
            q[i] += h * dtype(o)
            total += dtype(w) * grid_laplacian(func, q, spacing, order, dtype)
    return total / (h * h)


# -----------------------------------------------------------------------------
# weighted norms
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class WeightedNormReport:
    """Dyadic-shell estimate of a weighted norm.

    ``per_shell`` holds ``(r, r^{-delta} ||phi(r .)||)`` pairs and
    ``norm_estimate`` is their maximum.
    """

    delta: float
    mode: str
    k_max: int
    norm_estimate: float
    per_shell: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "shell_value"])
        for r, v in self.per_shell:
            w.writerow([f"{r:.17g}", f"{v:.17g}"])
        return buf.getvalue()


def _scaled_radial_derivatives(phi: RadialKahlerPotential, rho: np.ndarray, k_max: int) -> np.ndarray:
    """``rho^j d^j phi / d rho^j`` for j <= k_max, from the t-jet (``r d/dr = 2 d/dt``)."""
    jet = phi.jet(2.0 * np.log(rho))
    D = np.array([2.0**i * jet[i] for i in range(5)])
    return (_S1 @ D)[: k_max + 1]


def _ray_scaled_derivatives(P: GridPotential, rho: np.ndarray, k_max: int) -> np.ndarray:
    if k_max > 2:
        raise InvalidParameter("grid potentials support k_max <= 2")
    dim = 2 * P.m
    e = np.zeros(dim)
    e[0] = 1.0
    h = P.spacing

    def f(r):
        return np.asarray(P.values(np.outer(r, e)), dtype=float)
    out = [f(rho)]
    if k_max >= 1:
        out.append(rho * (f(rho + h) - f(rho - h)) / (2 * h))
    if k_max >= 2:
        out.append(rho**2 * (f(rho + h) - 2 * f(rho) + f(rho - h)) / h**2)
    return np.array(out)


def weighted_norm(phi, delta: float, mode: str = "inner", k_max: int = 2,
                  r_bar: float = 1.0, n_shells: int = 12, samples: int = 33) -> WeightedNormReport:
    """Estimate the weighted norm of ``phi`` over dyadic shells.

    inner mode: shells ``[r, 2r]`` with ``r = r_bar 2^{-i-1}``, value
    ``r^{-delta} ||phi(r .)||``; outer mode: shells ``[R, 2R]`` with
    ``R = r_bar 2^i``, value ``R^{-delta} ||phi(R .)||``. The norm on the
    unit annulus ``1 <= |v| <= 2`` is the sum of sup-norms of radial
    derivatives through order ``k_max``; the Holder seminorm is not
    estimated.
    """
    if mode not in ("inner", "outer"):
        raise InvalidParameter("mode must be 'inner' or 'outer'")
    if not 0 <= k_max <= 4:
        raise InvalidParameter("k_max must lie in 0..4")
    if mode == "inner":
        radii = r_bar * 2.0 ** (-np.arange(n_shells) - 1.0)
    else:
        radii = r_bar * 2.0 ** np.arange(n_shells)
    shells = []
    for r in radii:
        rho = r * np.linspace(1.0, 2.0, samples)
        if isinstance(phi, GridPotential):
            if r < phi.r_lo or 2 * r > phi.r_hi:
                raise DomainError("shell leaves the sampled region")
            sd = _ray_scaled_derivatives(phi, rho, k_max)
        else:
            if rho[0] ** 2 < phi.s_min or rho[-1] ** 2 > phi.s_max:
                raise DomainError("shell leaves the profile domain")
            sd = _scaled_radial_derivatives(phi, rho, k_max)
        # d^j/dv^j phi(r v) = r^j phi^(j)(r v) = (r / rho)^j rho^j phi^(j)(rho)
        ratio = (r / rho)[None, :] ** np.arange(k_max + 1)[:, None]
        local = float(np.max(np.sum(np.abs(sd) * ratio, axis=0)))
        shells.append((float(r), r ** (-delta) * local))
    est = max(v for _, v in shells)
    return WeightedNormReport(float(delta), mode, int(k_max), est, tuple(shells))
