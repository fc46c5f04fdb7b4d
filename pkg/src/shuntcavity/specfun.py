"""Special functions: the square-lattice constant Pi and modified Bessel K0/K1.

K0 and K1 are evaluated together, Temme's series for ``x <= 2`` and Steed's
continued fraction (CF2) above, which gives close to full double precision
without tabulated coefficients.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.57721566490153286061
_EPS = 1e-16
_MAX_ITER = 10_000
# exp(-x) underflows below the smallest subnormal just above this
UNDERFLOW_X = 745.0


class BesselUnderflowWarning(RuntimeWarning):
    """K_n(x) is below the double-precision range and was returned as 0."""


@dataclass(frozen=True)
class SeriesTolerance:
    abs_term_cutoff: float = 1e-15
    max_terms: int = 64

    def __post_init__(self):
        if not self.abs_term_cutoff > 0:
            raise ValueError("abs_term_cutoff must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


def lattice_pi_terms(n_terms: int) -> float:
    """Partial sum of the lattice constant keeping ``n_terms`` series terms."""
    total = math.log(2 * math.pi) - math.pi / 6
    # coth(n pi) - 1 == 2 / expm1(2 n pi); avoids cancellation
    return total - math.fsum(2.0 / (n * math.expm1(2 * n * math.pi))
                             for n in range(1, n_terms + 1))


def lattice_pi(tol: SeriesTolerance = SeriesTolerance()) -> float:
    """Pi = ln(2 pi) - pi/6 - sum_n (coth(n pi) - 1)/n  (~1.3105)."""
    terms = []
    for n in range(1, tol.max_terms + 1):
        term = 2.0 / (n * math.expm1(2 * n * math.pi))
        if term < tol.abs_term_cutoff:
            break
        terms.append(term)
    return math.log(2 * math.pi) - math.pi / 6 - math.fsum(terms)


def lattice_pi_remainder_bound(n_terms: int) -> float:
    """Upper bound on the tail after ``n_terms`` terms of the Pi series."""
    return 2.0 * math.exp(-2 * math.pi * (n_terms + 1))


def _k01_scaled(x: float) -> tuple[float, float]:
    """Return (exp(x) K0(x), exp(x) K1(x)) for x > 0."""
    if x <= 2.0:
        half = 0.5 * x
        ff = -math.log(half) - EULER_GAMMA
        total = ff
        p = q = 0.5
        c = 1.0
        d = half * half
        total1 = p
        for i in range(1, _MAX_ITER):
            ff = (i * ff + p + q) / (i * i)
            c *= d / i
            p /= i
            q /= i
            delta = c * ff
            total += delta
            total1 += c * (p - i * ff)
            if abs(delta) < abs(total) * _EPS:
                break
        else:
            raise ArithmeticError(f"K0 series failed to converge at x={x}")
        scale = math.exp(x)
        return total * scale, total1 * (2.0 / x) * scale

    # Steed's method on the continued fraction for K_{1}/K_{0}
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAX_ITER):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    else:
        raise ArithmeticError(f"K0 continued fraction failed to converge at x={x}")
    h *= a1
    k0 = math.sqrt(math.pi / (2.0 * x)) / s
    k1 = k0 * (x + 0.5 - h) / x
    return k0, k1


def _check_order(order: int) -> None:
    if order not in (0, 1):
        raise ValueError(f"only orders 0 and 1 are supported, got {order!r}")


def bessel_k_scaled(order: int, x):
    """exp(x) * K_order(x); never underflows."""
    _check_order(order)
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("bessel_k requires x > 0")
    out = np.array([_k01_scaled(float(v))[order] for v in arr.ravel()]).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def bessel_k(order: int, x):
    """Modified Bessel function of the second kind, K_0 or K_1.

    Accepts scalars or arrays. Values whose magnitude falls below the double
    range (x beyond ~745) are returned as 0.0 with a
    :class:`BesselUnderflowWarning`.
    """
    scaled = np.asarray(bessel_k_scaled(order, x))
    arr = np.asarray(x, dtype=float)
    if np.any(arr > UNDERFLOW_X):
        warnings.warn(f"K_{order}(x) underflows for x > {UNDERFLOW_X}",
                      BesselUnderflowWarning, stacklevel=2)
    with np.errstate(under="ignore"):
        out = scaled * np.exp(-arr)
    return float(out) if out.ndim == 0 else out


def hankel2_of_negative_imag(order: int, x):
    """H_n^(2)(-i x) for real x > 0, through H_n^(2)(-ix) = 2 i^(n+1) K_n(x) / pi."""
    return 2 * (1j) ** (order + 1) * bessel_k(order, x) / math.pi
