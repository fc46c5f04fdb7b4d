"""Coupled-cavity circuit model of a strongly shunted enclosure.

The enclosure is an ``n x m`` array of LC cavities (``L0``, ``C0``) coupled
through shared inductors ``Lg`` (nearest neighbour) and optionally ``Lg2``
(next-nearest neighbour along each axis), with boundary inductors ``Lb`` on
the outermost meshes. Mesh analysis gives an impedance matrix

    Z(w) = i w M_L - i / (w C0) I

with a frequency-independent inductance matrix ``M_L``, so the resonances are
the eigenvalues of ``M_L`` rather than roots of ``det Z(w)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import optimize

from .core import FitError, ModelDomainError
from .spectra import ModeSpectrum

BoundaryCase = Literal["0", "Lg", "2Lg"]
TIGHT_BINDING_MAX_BETA = 0.05


@dataclass(frozen=True)
class CoupledCavityCircuit:
    n: int
    m: int
    L0: float
    C0: float
    Lg: float
    Lb: float = 0.0
    Lg2: float = 0.0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("cavity counts must be >= 1")
        if not (self.L0 > 0 and self.C0 > 0):
            raise ValueError("L0 and C0 must be positive")
        if self.Lg < 0 or self.Lb < 0:
            raise ValueError("Lg and Lb must be non-negative")

    @classmethod
    def from_frequency(cls, f0: float, beta: float, n: int, m: int, *,
                       beta1: float = 0.0, lb_ratio: float = 0.0,
                       L0: float = 1e-9) -> "CoupledCavityCircuit":
        """Circuit with uncoupled frequency ``f0``; ``Lb = lb_ratio * Lg``."""
        C0 = 1.0 / ((2 * math.pi * f0) ** 2 * L0)
        Lg = beta * L0
        return cls(n, m, L0, C0, Lg, lb_ratio * Lg, beta1 * L0)

    @property
    def f0(self) -> float:
        return 1.0 / (2 * math.pi * math.sqrt(self.L0 * self.C0))

    @property
    def beta(self) -> float:
        return self.Lg / self.L0

    @property
    def beta1(self) -> float:
        return self.Lg2 / self.L0

    @property
    def neighbour_order(self) -> int:
        return 2 if self.Lg2 != 0 else 1


@dataclass(frozen=True)
class ImpedanceMatrix:
    omega: float
    values: np.ndarray

    @property
    def dimension(self) -> int:
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def chain_matrix(size: int, self_term, g, g2=0.0, b=0.0, order: int = 1) -> np.ndarray:
    """Mesh matrix of a chain of ``size`` coupled meshes.

    Works for impedances (complex) and inductances (real) alike: the diagonal
    carries ``self_term`` plus one ``g`` per neighbouring mesh and ``b`` on
    each end mesh. With ``order=2`` the two outermost meshes at each end carry
    one ``g2`` and interior meshes two (see :func:`g2_count`).
    """
    dtype = np.result_type(self_term, g, g2, b, float)
    mat = np.zeros((size, size), dtype=dtype)
    for k in range(size):
        diag = self_term
        for off in (-1, 1):
            if 0 <= k + off < size:
                diag = diag + g
                mat[k, k + off] = -g
        if order >= 2:
            diag = diag + g2_count(k, size) * g2
            for off in (-2, 2):
                if 0 <= k + off < size:
                    mat[k, k + off] = -g2
        if k == 0 or k == size - 1:
            diag = diag + b * (2 if size == 1 else 1)
        mat[k, k] = diag
    return mat


def g2_count(k: int, size: int) -> int:
    """Next-nearest branches on the diagonal of mesh ``k``.

    Fixed end template: 1 within two meshes of an end, 2 in the interior, so
    short chains (size 2 or 3) still carry the second-neighbour term. A lone
    mesh has none.
    """
    if size < 2:
        return 0
    return 1 if min(k, size - 1 - k) < 2 else 2


def _branch_impedances(circ: CoupledCavityCircuit, omega: float):
    if not omega > 0:
        raise ValueError("omega must be positive")
    z0 = 1j * omega * circ.L0 - 1j / (omega * circ.C0)
    return z0, 1j * omega * circ.Lg, 1j * omega * circ.Lg2, 1j * omega * circ.Lb


def build_z1d(circ: CoupledCavityCircuit, omega: float, neighbour_order: int | None = None,
              size: int | None = None) -> ImpedanceMatrix:
    """Impedance matrix of the equivalent 1D chain (length ``circ.n`` by default)."""
    order = circ.neighbour_order if neighbour_order is None else neighbour_order
    if order not in (1, 2):
        raise ValueError("neighbour_order must be 1 or 2")
    z0, zg, zg2, zb = _branch_impedances(circ, omega)
    size = circ.n if size is None else size
    return ImpedanceMatrix(omega, chain_matrix(size, z0, zg, zg2, zb, order))


def kronecker_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a (+) b = I_b (x) a + b (x) I_a, with the first factor's index running fastest."""
    return np.kron(np.eye(b.shape[0]), a) + np.kron(b, np.eye(a.shape[0]))


def build_z2d(circ: CoupledCavityCircuit, omega: float) -> ImpedanceMatrix:
    """nm x nm mesh impedance matrix via Z1D(n) (+) Z1D(m) - Z0 I.

    Mesh (a, b) with 0-based a < n, b < m sits at flat index ``b * n + a``.
    """
    z0 = _branch_impedances(circ, omega)[0]
    zn = build_z1d(circ, omega, size=circ.n).values
    zm = build_z1d(circ, omega, size=circ.m).values
    return ImpedanceMatrix(omega, kronecker_sum(zn, zm) - z0 * np.eye(circ.n * circ.m))


def build_z2d_mesh(circ: CoupledCavityCircuit, omega: float) -> ImpedanceMatrix:
    """Direct mesh-analysis construction on the 2D grid (no Kronecker mapping).

    Each mesh's self-impedance collects every branch on its perimeter: one
    ``Zg`` per adjacent mesh, the :func:`g2_count` ``Zg2`` terms along each
    axis, and one ``Zb`` per side lying on the array boundary.
    """
    z0, zg, zg2, zb = _branch_impedances(circ, omega)
    n, m = circ.n, circ.m
    mat = np.zeros((n * m, n * m), dtype=complex)

    def flat(a, b):
        return b * n + a

    for b in range(m):
        for a in range(n):
            k = flat(a, b)
            diag = z0
            for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                aa, bb = a + da, b + db
                if 0 <= aa < n and 0 <= bb < m:
                    diag += zg
                    mat[k, flat(aa, bb)] = -zg
            if circ.Lg2:
                diag += (g2_count(a, n) + g2_count(b, m)) * zg2
                for da, db in ((2, 0), (-2, 0), (0, 2), (0, -2)):
                    aa, bb = a + da, b + db
                    if 0 <= aa < n and 0 <= bb < m:
                        mat[k, flat(aa, bb)] = -zg2
            sides = (a == 0) + (a == n - 1) + (b == 0) + (b == m - 1)
            mat[k, k] = diag + sides * zb
    return ImpedanceMatrix(omega, mat)


def inductance_matrix(circ: CoupledCavityCircuit) -> np.ndarray:
    """Real symmetric M_L with Z(w) = i w M_L - i/(w C0) I."""
    order = circ.neighbour_order
    ln = chain_matrix(circ.n, circ.L0, circ.Lg, circ.Lg2, circ.Lb, order)
    lm = chain_matrix(circ.m, circ.L0, circ.Lg, circ.Lg2, circ.Lb, order)
    return kronecker_sum(ln, lm) - circ.L0 * np.eye(circ.n * circ.m)


def _circuit_labels(n: int, m: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(1, n + 1) for j in range(1, m + 1)]


def numeric_mode_frequencies(circ: CoupledCavityCircuit) -> ModeSpectrum:
    """Resonances f_k = 1 / (2 pi sqrt(lambda_k C0)) from the eigenvalues of M_L.

    Labels enumerate modes in ascending order as (i, j) positions of the
    sorted spectrum; for the closed-form cases use
    :func:`closed_form_frequencies` for the physical (i, j) assignment.
    """
    lam = np.linalg.eigvalsh(inductance_matrix(circ))
    if lam[0] <= 0:
        raise ModelDomainError(
            f"inductance matrix is not positive definite (min eigenvalue {lam[0]:.3g})")
    freqs = 1.0 / (2 * math.pi * np.sqrt(lam * circ.C0))
    labels = [(k // circ.m + 1, k % circ.m + 1) for k in range(circ.n * circ.m)]
    return ModeSpectrum.from_unsorted(labels, np.sort(freqs))


def _infer_case(circ: CoupledCavityCircuit) -> BoundaryCase:
    if circ.Lb == 0:
        return "0"
    if math.isclose(circ.Lb, circ.Lg, rel_tol=1e-12):
        return "Lg"
    if math.isclose(circ.Lb, 2 * circ.Lg, rel_tol=1e-12):
        return "2Lg"
    raise ValueError("Lb must be 0, Lg or 2 Lg for a closed-form spectrum")


def closed_form_gamma(i, j, n: int, m: int, case: BoundaryCase):
    if case == "0":
        return np.cos(i * np.pi / n) + np.cos(j * np.pi / m)
    if case == "Lg":
        return np.cos(i * np.pi / (n + 1)) + np.cos(j * np.pi / (m + 1))
    if case == "2Lg":
        return np.cos((i - 1) * np.pi / n) + np.cos((j - 1) * np.pi / m)
    raise ValueError(f"unknown boundary case {case!r}")


def closed_form_frequencies(circ: CoupledCavityCircuit,
                            boundary_case: BoundaryCase | None = None) -> ModeSpectrum:
    """Nearest-neighbour spectrum f0 / sqrt(1 + 4 beta (1 + gamma_ij / 2))."""
    if circ.Lg2 != 0:
        raise ValueError("closed forms exist only for nearest-neighbour coupling (Lg2 = 0)")
    inferred = _infer_case(circ) if circ.Lg > 0 else None
    case = boundary_case if boundary_case is not None else (inferred or "0")
    if circ.Lg > 0 and case != inferred:
        raise ValueError(f"boundary case {case!r} does not match Lb/Lg of the circuit")
    if circ.Lg == 0 and circ.Lb != 0:
        raise ValueError("closed forms need Lb in {0, Lg, 2 Lg}")
    labels = _circuit_labels(circ.n, circ.m)
    ii = np.array([l[0] for l in labels], dtype=float)
    jj = np.array([l[1] for l in labels], dtype=float)
    gamma = closed_form_gamma(ii, jj, circ.n, circ.m, case)
    freqs = circ.f0 / np.sqrt(1 + 4 * circ.beta * (1 + 0.5 * gamma))
    return ModeSpectrum.from_unsorted(labels, freqs)


@dataclass(frozen=True)
class FieldMap:
    """Relative cavity field amplitudes of circuit mode (i, j), max |E| = 1."""

    i: int
    j: int
    amplitudes: np.ndarray  # shape (n, m), indexed [a-1, b-1]


def mode_field_map(circ: CoupledCavityCircuit, i: int, j: int) -> FieldMap:
    if circ.Lb != 0 or circ.Lg2 != 0:
        raise ValueError("field maps are defined for Lb = 0 and Lg2 = 0")
    if not (1 <= i <= circ.n and 1 <= j <= circ.m):
        raise ValueError(f"mode ({i}, {j}) outside 1..{circ.n} x 1..{circ.m}")
    a = np.arange(1, circ.n + 1)
    b = np.arange(1, circ.m + 1)
    ex = np.sin(i * (2 * a - 1) * np.pi / (2 * circ.n))
    ey = np.sin(j * (2 * b - 1) * np.pi / (2 * circ.m))
    field = np.outer(ex, ey)
    return FieldMap(i, j, field / np.max(np.abs(field)))


def tight_binding_frequencies(circ: CoupledCavityCircuit, a: float) -> ModeSpectrum:
    """First-order-in-beta spectrum f0 - 2t(2 + cos kx a + cos ky a), t = beta f0 / 2."""
    labels = _circuit_labels(circ.n, circ.m)
    lx, ly = circ.n * a, circ.m * a
    kx = np.array([l[0] for l in labels]) * np.pi / lx
    ky = np.array([l[1] for l in labels]) * np.pi / ly
    t = circ.beta * circ.f0 / 2
    freqs = circ.f0 - 2 * t * (2 + np.cos(kx * a) + np.cos(ky * a))
    flags = ()
    if circ.beta > TIGHT_BINDING_MAX_BETA:
        flags = (f"tight-binding outside validity: beta = {circ.beta:.3g} > {TIGHT_BINDING_MAX_BETA}",)
    return ModeSpectrum.from_unsorted(labels, freqs, flags)


def circuit_band_curvature(circ: CoupledCavityCircuit, a: float) -> tuple[float, float]:
    """Cut-off f_c = f0/sqrt(1+8 beta) and curvature wavenumber k0 = 1/(a sqrt(beta))."""
    if not circ.beta > 0:
        raise ModelDomainError("band curvature undefined for beta = 0")
    return circ.f0 / math.sqrt(1 + 8 * circ.beta), 1.0 / (a * math.sqrt(circ.beta))


def circuit_quadratic_band(k, f_c: float, k0: float):
    k = np.asarray(k, dtype=float)
    out = f_c * (1 + 0.5 * k ** 2 / k0 ** 2)
    return float(out) if out.ndim == 0 else out


def normalized_relative_error(reference, model) -> float:
    """mean(|f_ref - f_model| / f_ref) over paired modes."""
    ref = np.asarray(reference, dtype=float)
    mod = np.asarray(model, dtype=float)
    if ref.shape != mod.shape:
        raise ValueError("reference and model must have the same number of modes")
    return float(np.mean(np.abs(ref - mod) / ref))


@dataclass(frozen=True)
class CircuitFit:
    f0: float
    beta: float
    beta1: float
    nre: float
    neighbour_order: int
    lb_ratio: float
    converged: bool

    def circuit(self, n: int, m: int) -> CoupledCavityCircuit:
        return CoupledCavityCircuit.from_frequency(self.f0, self.beta, n, m, beta1=self.beta1,
                                                   lb_ratio=self.lb_ratio)


def _model_freqs(params, n, m, order, lb_ratio):
    f0, beta = params[0], params[1]
    beta1 = params[2] if order == 2 else 0.0
    if not (f0 > 0 and beta >= 0):
        return None
    circ = CoupledCavityCircuit.from_frequency(f0, beta, n, m, beta1=beta1, lb_ratio=lb_ratio)
    lam = np.linalg.eigvalsh(inductance_matrix(circ))
    if lam[0] <= 0:
        return None
    return np.sort(1.0 / (2 * math.pi * np.sqrt(lam * circ.C0)))


def fit_circuit_params(observed: ModeSpectrum | np.ndarray, n: int, m: int,
                       neighbour_order: int = 1, lb_ratio: float = 0.0,
                       starts: int = 6, seed: int = 0) -> CircuitFit:
    """Fit (f0, beta[, beta1]) of an n x m circuit to the lowest n*m observed modes.

    Nelder-Mead on the normalized relative error from several starting points
    around a closed-form inversion of the extreme modes, followed by a
    least-squares polish on relative residuals.
    """
    if neighbour_order not in (1, 2):
        raise ValueError("neighbour_order must be 1 or 2")
    freqs = observed.frequencies if isinstance(observed, ModeSpectrum) else np.asarray(observed)
    freqs = np.sort(np.asarray(freqs, dtype=float))
    count = n * m
    if freqs.size < count:
        raise ValueError(f"need at least {count} observed modes, got {freqs.size}")
    if np.any(freqs <= 0):
        raise ValueError("observed frequencies must be positive")
    target = freqs[:count]

    def nre(p):
        model = _model_freqs(p, n, m, neighbour_order, lb_ratio)
        if model is None:
            return 1e3
        return float(np.mean(np.abs(target - model) / target))

    def residuals(p):
        model = _model_freqs(p, n, m, neighbour_order, lb_ratio)
        if model is None:
            return np.full(count, 1e3)
        return (model - target) / target

    # invert the Lb = 0 closed form: top mode ~ f0, bottom mode sets beta
    f0_guess = target[-1]
    gmax = math.cos(math.pi / n) + math.cos(math.pi / m) if count > 1 else 2.0
    beta_guess = max(((f0_guess / target[0]) ** 2 - 1) / (4 * (1 + 0.5 * gmax)), 1e-4)
    rng = np.random.default_rng(seed)
    scale = np.array([f0_guess, max(beta_guess, 1e-3), max(beta_guess, 1e-3) * 0.2])[:1 + neighbour_order]
    base = np.array([f0_guess, beta_guess, 0.0])[:1 + neighbour_order]

    best = None
    for s in range(starts):
        x0 = base if s == 0 else base + scale * rng.normal(0, 0.3, size=base.size)
        x0 = np.asarray(x0, dtype=float)
        x0[0] = abs(x0[0])
        x0[1] = abs(x0[1])
        res = optimize.minimize(nre, x0, method="Nelder-Mead",
                                options={"xatol": 1e-14 * f0_guess, "fatol": 1e-16,
                                         "maxiter": 20000, "maxfev": 40000, "adaptive": True})
        cand = (res.fun, res.x, res.success)
        try:
            ls = optimize.least_squares(residuals, res.x, x_scale=scale, xtol=1e-15,
                                        ftol=1e-15, gtol=1e-15, max_nfev=2000)
            if nre(ls.x) < cand[0]:
                cand = (nre(ls.x), ls.x, res.success or ls.success)
        except ValueError:
            pass
        if best is None or cand[0] < best[0]:
            best = cand
    fun, x, ok = best
    if not np.isfinite(fun) or fun >= 1e3:
        raise FitError("circuit fit found no admissible parameters")
    beta1 = float(x[2]) if neighbour_order == 2 else 0.0
    return CircuitFit(float(x[0]), float(x[1]), beta1, float(fun), neighbour_order,
                      lb_ratio, bool(ok))
