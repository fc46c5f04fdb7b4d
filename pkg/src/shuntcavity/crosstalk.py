"""Enclosure-mediated qubit coupling and drive-line crosstalk below the cut-off.

Below the plasma frequency a qubit launches an evanescent radial TM00 wave
into the shunted parallel-plate guide; the field, and with it the exchange
coupling J and the drive coupling, falls off as K0(d / delta_p). Absolute
prefactors depend on the qubit geometry; the normalized profiles Gamma are
prefactor-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .core import EPS0, MU0, ModelDomainError
from .specfun import bessel_k, bessel_k_scaled, hankel2_of_negative_imag, lattice_pi


@dataclass(frozen=True)
class QubitPort:
    omega: float  # rad/s
    L: float
    C_q: float
    C_g: float

    def __post_init__(self):
        if min(self.omega, self.L, self.C_q, self.C_g) <= 0:
            raise ValueError("qubit port parameters must be positive")

    @property
    def frequency(self) -> float:
        return self.omega / (2 * math.pi)


@dataclass(frozen=True)
class WaveguideCoupling:
    delta0: float
    v: float
    z0: complex
    cg_per_length: float
    cr_per_length: float = float("nan")
    g: float = float("nan")


@dataclass(frozen=True)
class BandEdge:
    """Band edge omega = omega_b (1 + alpha (k - k0)^2); alpha in m^2."""

    omega_b: float
    alpha: float

    def __post_init__(self):
        if not (self.omega_b > 0 and self.alpha > 0):
            raise ValueError("band edge needs omega_b > 0 and alpha > 0")

    @classmethod
    def plasma(cls, omega_p: float, eps_r: float) -> "BandEdge":
        k_p = math.sqrt(EPS0 * eps_r * MU0) * omega_p
        return cls(omega_p, 0.5 / k_p ** 2)

    @classmethod
    def circuit(cls, omega_c: float, beta: float, a: float) -> "BandEdge":
        # k0^2 = 1 / (beta a^2)
        return cls(omega_c, 0.5 * beta * a ** 2)


@dataclass(frozen=True)
class CrosstalkProfile:
    indices: tuple[int, ...]
    distances: np.ndarray
    gamma: np.ndarray
    delta_p: float
    gamma_exp: np.ndarray
    reference_distance: float

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.gamma) < 0))


def penetration_depth(omega_q: float, omega_p: float, eps_r: float) -> float:
    """1/e decay length of the evanescent guide mode at omega_q < omega_p."""
    if not (0 < omega_q < omega_p):
        raise ModelDomainError("penetration depth needs 0 < omega_q < omega_p")
    return 1.0 / math.sqrt(EPS0 * eps_r * MU0 * (omega_p + omega_q) * (omega_p - omega_q))


def penetration_depth_geometric(omega_q: float, omega_p: float, a: float, r: float) -> float:
    """Same depth written through the lattice geometry; omega_p must come from (a, r)."""
    if not (0 < omega_q < omega_p):
        raise ModelDomainError("penetration depth needs 0 < omega_q < omega_p")
    log_term = math.log(a / r) - lattice_pi()
    if log_term <= 0:
        raise ModelDomainError("plasma model undefined for this r/a")
    return a * math.sqrt(log_term / (2 * math.pi)) * math.sqrt(1.0 / (1 - (omega_q / omega_p) ** 2))


def _positive_distance(d):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("qubit separation must be positive")
    return d


def coupling_J(d, g: float, omega_q: float, v: float, delta0: float, delta_p: float):
    """Exchange coupling 2 g^2 omega_q / (v/delta0)^2 K0(d/delta_p) (rad/s, hbar = 1)."""
    d = _positive_distance(d)
    return 2 * g ** 2 * omega_q / (v / delta0) ** 2 * bessel_k(0, d / delta_p)


def drive_coupling(d, prefactor: float, delta_p: float):
    """Drive-line i to qubit j coupling, prefactor x K0(d/delta_p)."""
    d = _positive_distance(d)
    return prefactor * bessel_k(0, d / delta_p)


def asymptotic_tail(d, delta_p: float):
    """Large-distance form sqrt(pi/2) exp(-x)/sqrt(x), x = d/delta_p."""
    x = np.asarray(d, dtype=float) / delta_p
    out = math.sqrt(math.pi / 2) * np.exp(-x) / np.sqrt(x)
    return float(out) if out.ndim == 0 else out


def gamma_profile(positions: Sequence[int], a: float, delta_p: float) -> CrosstalkProfile:
    """Normalized coupling from a reference qubit to qubits at ``positions * a``.

    Gamma_j = K0(j a / delta_p) / K0(a / delta_p); the pure exponential
    exp(-(j - 1) a / delta_p) is returned alongside for comparison.
    """
    if len(positions) == 0:
        raise ValueError("positions must not be empty")
    idx = np.asarray(positions, dtype=int)
    d = idx * a
    gamma = bessel_k(0, d / delta_p) / bessel_k(0, a / delta_p)
    approx = np.exp(-(d - a) / delta_p)
    return CrosstalkProfile(tuple(int(j) for j in idx), d.astype(float), np.atleast_1d(gamma),
                            delta_p, np.atleast_1d(approx), a)


def bound_state_length(edge: BandEdge, omega_q: float) -> float:
    """Localization length sqrt(alpha omega_b / (omega_b - omega_q)) of the bound state."""
    if not omega_q < edge.omega_b:
        raise ModelDomainError("bound state needs omega_q below the band edge")
    return math.sqrt(edge.alpha * edge.omega_b / (edge.omega_b - omega_q))


def trans_impedance(d, delta_p: float, delta0: float, z0_delta0: complex, C_g: float,
                    C_q1: float, C_q2: float, omega: float, *, simplified: bool = False):
    """Trans-impedance Z12 between two qubit ports coupled through the evanescent guide.

    Reflections at the far qubit are neglected. With ``simplified=True`` the
    large-coupling-impedance form ``Zq1 Zq2 Z0 / Zg^2`` is used.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= delta0) or delta0 <= 0:
        raise ValueError("trans_impedance needs d > delta0 > 0")
    zg = 1 / (1j * omega * C_g)
    zq1 = 1 / (1j * omega * C_q1)
    zq2 = 1 / (1j * omega * C_q2)
    norm = 1 / hankel2_of_negative_imag(0, delta0 / delta_p)
    wave = norm * hankel2_of_negative_imag(0, d / delta_p)
    if simplified:
        front = zq1 * zq2 * z0_delta0 / zg ** 2
    else:
        front = zq1 * zq2 * z0_delta0 / ((zg + zq2) * (zg + z0_delta0))
    out = front * wave
    return complex(out) if np.ndim(out) == 0 else out


def coupling_from_impedance(z_at_wi, z_at_wj, omega_i: float, omega_j: float,
                            L_i: float, L_j: float):
    """J = -1/4 sqrt(wi wj / (Li Lj)) Im[Z(wi)/wi + Z(wj)/wj]."""
    z_at_wi = np.asarray(z_at_wi)
    z_at_wj = np.asarray(z_at_wj)
    out = -0.25 * math.sqrt(omega_i * omega_j / (L_i * L_j)) * np.imag(
        z_at_wi / omega_i + z_at_wj / omega_j)
    return float(out) if np.ndim(out) == 0 else out


def waveguide_g(cg_per_length: float, omega_q: float, z0_delta0: complex, C_q: float,
                v: float, *, delta0: float | None = None, delta_p: float | None = None) -> float:
    """Qubit-to-guide coupling (C_g'/2) sqrt(omega_q |Z0(delta0)| / C_q) v.

    When ``delta0`` and ``delta_p`` are both given, the normalization of the
    Hankel wave is folded in, g -> g / sqrt(K0(delta0/delta_p)), so that
    :func:`coupling_J` carries a bare K0(d/delta_p).
    """
    g = 0.5 * cg_per_length * math.sqrt(omega_q * abs(z0_delta0) / C_q) * v
    if delta0 is not None and delta_p is not None:
        g /= math.sqrt(bessel_k(0, delta0 / delta_p))
    return g


@dataclass(frozen=True)
class PenetrationFit:
    delta_p: float
    residual: float
    monotone: bool


def fit_penetration_depth(profile: CrosstalkProfile) -> PenetrationFit:
    """Single-parameter least squares of log Gamma against log of the K0 profile."""
    d = np.asarray(profile.distances, dtype=float)
    gamma = np.asarray(profile.gamma, dtype=float)
    if np.unique(d).size < 3:
        raise ValueError("need at least three distinct distances to fit delta_p")
    if np.any(gamma <= 0):
        raise ValueError("profile values must be positive")
    d_ref = profile.reference_distance if np.isfinite(profile.reference_distance) else d[0]
    log_g = np.log(gamma)

    def misfit(log_delta):
        delta = math.exp(log_delta)
        model = log_k0_ratio(d, d_ref, delta)
        return float(np.sum((log_g - model) ** 2))

    span = (math.log(d.min() / 200), math.log(d.max() * 200))
    grid = np.linspace(*span, 81)
    vals = [misfit(x) for x in grid]
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = optimize.minimize_scalar(misfit, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    # a scalar minimizer stalls near sqrt(eps) in x; Gauss-Newton polish to full precision
    polish = optimize.least_squares(
        lambda x: log_g - log_k0_ratio(d, d_ref, math.exp(x[0])), [res.x],
        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    log_delta = float(polish.x[0]) if misfit(polish.x[0]) <= res.fun else float(res.x)
    rms = math.sqrt(misfit(log_delta) / d.size)
    return PenetrationFit(math.exp(log_delta), rms, profile.is_monotone())


def log_k0_ratio(d, d_ref: float, delta: float):
    """log(K0(d/delta) / K0(d_ref/delta)), safe where K0 itself underflows."""
    x = np.asarray(d, dtype=float) / delta
    x_ref = d_ref / delta
    return np.log(bessel_k_scaled(0, x)) - math.log(bessel_k_scaled(0, x_ref)) - (x - x_ref)
