"""Independent high-precision references used to freeze expected values.

Nothing here imports ``cscx``; every quantity is recomputed from first
principles with mpmath or exact rationals.
"""
from __future__ import annotations

from fractions import Fraction

import mpmath as mp


def _divide_root_one(c):
    """Synthetic division of ascending coefficients by ``x - 1``; the remainder must vanish."""
    hi = list(reversed(c))
    q = [hi[0]]
    for a in hi[1:]:
        q.append(a + q[-1])
    assert q[-1] == 0, "x = 1 is not a root"
    return list(reversed(q[:-1]))


def simanca_lambda(m: int, dps: int = 40) -> mp.mpf:
    """Asymptotic slope of the Simanca potential by quadrature.

    The moment coordinate obeys ``x^(m-1) dx/dt = P(x)`` with
    ``P = x^m - (m-1) x + (m-2)``, a simple zero at the bolt ``x = 1`` and
    ``x = 1 + s + O(s^2)`` there. Integrating ``dt = x^(m-1) dx / P`` gives
    ``log lam = -int_1^inf (x^(m-1)/P(x) - 1/(x-1)) dx``. Writing
    ``P = (x-1) Q`` and ``x^(m-1) - Q = (x-1) R`` exactly turns the integrand
    into ``R/Q``, free of cancellation at the bolt.
    """
    P = [Fraction(0)] * (m + 1)
    P[m], P[1], P[0] = Fraction(1), Fraction(-(m - 1)), Fraction(m - 2)
    Q = _divide_root_one(P)
    N = [-q for q in Q]
    N[m - 1] += 1
    R = _divide_root_one(N)
    with mp.workdps(dps):
        Qm = [mp.mpf(v.numerator) / v.denominator for v in Q]
        Rm = [mp.mpf(v.numerator) / v.denominator for v in R]
        f = lambda x: mp.polyval(Rm[::-1], x) / mp.polyval(Qm[::-1], x)
        return mp.exp(-mp.quad(f, [1, 2, 10, 100, mp.inf]))


def momentum_nu(m: int, eps: float, a: float = 1.0, r0: float = 1.0, dps: int = 40) -> mp.mpf:
    """Scalar curvature of the radial csc metric that closes on a divisor and is flat data at r0.

    Unknowns ``(C, D, nu)`` of ``P(x) = x^m + C x + D - nu x^(m+1) / (2m(m+1))``:
    ``P(x_b) = 0``, ``P'(x_b) = x_b^(m-1)`` with ``x_b = eps^2 a`` and
    ``P(x_0) = x_0^m`` with ``x_0 = r0^2/2``.
    """
    with mp.workdps(dps):
        xb = mp.mpf(eps) ** 2 * a
        x0 = mp.mpf(r0) ** 2 / 2
        beta = mp.mpf(1) / (2 * m * (m + 1))
        A = mp.matrix([[xb, 1, -beta * xb ** (m + 1)],
                       [1, 0, -beta * (m + 1) * xb**m],
                       [x0, 1, -beta * x0 ** (m + 1)]])
        rhs = mp.matrix([-xb**m, xb ** (m - 1) - m * xb ** (m - 1), 0])
        return mp.lu_solve(A, rhs)[2]


def average_scal_exact(m: int, vol, chern, weight_sum, eps) -> Fraction:
    """``m chern(eps) / vol(eps)`` in exact rational arithmetic."""
    vol, chern, S, e = (Fraction(v) for v in (vol, chern, weight_sum, eps))
    v = vol + (-1) ** (m - 1) * e ** (2 * m) * S
    c = chern - e ** (2 * m - 2) * (m - 1) * S
    return m * c / v


def radial_bilaplacian_poly(m: int, coeffs, s: float) -> mp.mpf:
    """Euclidean bi-Laplacian on C^m of ``sum_k c_k s^k``, s = |z|^2.

    Uses ``Delta_0 s^k = 4 k (k + m - 1) s^(k-1)``.
    """
    total = mp.mpf(0)
    for k, c in enumerate(coeffs):
        if k >= 2:
            total += c * 16 * k * (k + m - 1) * (k - 1) * (k + m - 2) * mp.mpf(s) ** (k - 2)
    return total
