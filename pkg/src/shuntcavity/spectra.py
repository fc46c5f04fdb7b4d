"""Analytic l=0 mode spectra: bare rectangular cavity, boundary model, plasma model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import C0, EPS0, MU0, EnclosureSpec, ModelDomainError, require_valid
from .specfun import lattice_pi

PLASMA_VALIDITY_RA = 0.1
DEGENERACY_RTOL = 1e-9


class ModeIndex(NamedTuple):
    n: int
    m: int
    l: int = 0


def _check_physical(idx: ModeIndex) -> None:
    if min(idx) < 0:
        raise ValueError(f"mode indices must be non-negative: {tuple(idx)}")
    if sum(1 for v in idx if v == 0) > 1:
        raise ValueError(f"unphysical mode {tuple(idx)}: at most one index may be zero")


@dataclass(frozen=True)
class ModeSpectrum:
    """Ascending list of mode frequencies (Hz) with their integer labels.

    Labels are ``(n, m)`` for cavity modes or ``(i, j)`` for circuit modes.
    Ties are broken lexicographically on the label.
    """

    labels: tuple[tuple[int, ...], ...]
    frequencies: np.ndarray
    flags: tuple[str, ...] = field(default=())

    @classmethod
    def from_unsorted(cls, labels: Sequence[tuple[int, ...]], freqs,
                      flags: Sequence[str] = (), rtol: float = DEGENERACY_RTOL) -> "ModeSpectrum":
        freqs = np.asarray(freqs, dtype=float)
        order = np.argsort(freqs, kind="stable")
        # regroup near-equal frequencies so tie-breaking is by label, not by rounding noise
        groups = _group_sorted(freqs[order], rtol)
        final: list[int] = []
        for g in groups:
            members = [order[k] for k in g]
            final.extend(sorted(members, key=lambda k: tuple(labels[k])))
        return cls(tuple(tuple(int(v) for v in labels[k]) for k in final),
                   freqs[final].copy(), tuple(flags))

    def __len__(self) -> int:
        return len(self.frequencies)

    @property
    def ghz(self) -> np.ndarray:
        return self.frequencies / 1e9

    @property
    def fundamental(self) -> float:
        return float(self.frequencies[0])

    def degeneracy_groups(self, rtol: float = DEGENERACY_RTOL) -> list[tuple[int, ...]]:
        """Partition of entry positions into runs of equal frequency."""
        return [tuple(g) for g in _group_sorted(self.frequencies, rtol)]


def _group_sorted(freqs: np.ndarray, rtol: float) -> list[list[int]]:
    groups: list[list[int]] = []
    for k, f in enumerate(freqs):
        if groups and abs(f - freqs[groups[-1][0]]) <= rtol * abs(f):
            groups[-1].append(k)
        else:
            groups.append([k])
    return groups


def rect_mode_frequency(idx: ModeIndex | tuple[int, ...], spec: EnclosureSpec) -> float:
    """Resonance of the unshunted rectangular cavity (Hz)."""
    idx = ModeIndex(*idx)
    _check_physical(idx)
    eps = spec.eps_eff
    s = (idx.n / spec.lx) ** 2 + (idx.m / spec.ly) ** 2 + (idx.l / spec.lz) ** 2
    return C0 / (2 * math.sqrt(eps)) * math.sqrt(s)


def boundary_model_cutoff(a: float, eps_r: float) -> float:
    """Fundamental of an a x a cell bounded by conducting walls (Hz)."""
    if not a > 0:
        raise ValueError("shunt spacing must be positive")
    return 1.0 / (a * math.sqrt(2 * EPS0 * eps_r * MU0))


def plasma_frequency(a: float, r: float, eps_r: float) -> float:
    """Plasma (cut-off) frequency of a square array of thin conducting rods (Hz).

    Returns 0 for ``r <= 0``. Raises :class:`ModelDomainError` once
    ``ln(a/r)`` no longer exceeds the lattice constant, where the formula has
    no real solution.
    """
    if r <= 0:
        return 0.0
    log_term = math.log(a / r) - lattice_pi()
    if log_term <= 0:
        raise ModelDomainError(
            f"plasma model undefined for r/a = {r / a:.4g} (needs r < a*exp(-Pi))")
    return boundary_model_cutoff(a, eps_r) / (math.sqrt(math.pi) * math.sqrt(log_term))


def plasma_permittivity(f: float, f_p: float) -> float:
    """Relative permittivity of the rod medium for z-polarised fields."""
    if not f > 0:
        raise ValueError("frequency must be positive")
    return 1.0 - (f_p / f) ** 2


@dataclass(frozen=True)
class PlasmaBand:
    """Quadratic band edge of the rod lattice near the plasma frequency."""

    plasma_frequency: float
    rel_permittivity: float

    @property
    def k_p(self) -> float:
        return math.sqrt(EPS0 * self.rel_permittivity * MU0) * 2 * math.pi * self.plasma_frequency

    @classmethod
    def from_geometry(cls, a: float, r: float, eps_r: float) -> "PlasmaBand":
        return cls(plasma_frequency(a, r, eps_r), eps_r)


def plasma_dispersion(k, band: PlasmaBand):
    """Band frequency (Hz) at in-plane wavenumber ``k`` (1/m), quadratic approximation."""
    k = np.asarray(k, dtype=float)
    out = band.plasma_frequency * (1 + 0.5 * k ** 2 / band.k_p ** 2)
    return float(out) if out.ndim == 0 else out


def exact_plasma_band(k, band: PlasmaBand):
    """sqrt(f_k^2 + f_p^2) with f_k the free-space frequency in the fill."""
    k = np.asarray(k, dtype=float)
    f_k = C0 * k / (2 * math.pi * math.sqrt(band.rel_permittivity))
    out = np.sqrt(f_k ** 2 + band.plasma_frequency ** 2)
    return float(out) if out.ndim == 0 else out


def bare_spectrum(spec: EnclosureSpec, count: int) -> ModeSpectrum:
    """Lowest ``count`` l=0 modes of the unshunted cavity."""
    require_valid(spec)
    if count < 1:
        raise ValueError("count must be >= 1")
    # the k-th lowest (n, m) mode has n <= k and m <= k
    labels = [(n, m) for n in range(1, count + 1) for m in range(1, count + 1)]
    eps = spec.eps_eff
    ns = np.array([l[0] for l in labels], dtype=float)
    ms = np.array([l[1] for l in labels], dtype=float)
    freqs = C0 / (2 * math.sqrt(eps)) * np.sqrt((ns / spec.lx) ** 2 + (ms / spec.ly) ** 2)
    full = ModeSpectrum.from_unsorted(labels, freqs)
    return ModeSpectrum(full.labels[:count], full.frequencies[:count])


def spectrum_plasma_frequency(spec: EnclosureSpec) -> float:
    if not spec.has_shunts:
        return 0.0
    return plasma_frequency(spec.shunt_spacing, spec.shunt_radius, spec.eps_eff)


def shifted_spectrum(spec: EnclosureSpec, count: int) -> ModeSpectrum:
    """Lowest ``count`` modes of the shunted cavity, sqrt(f_nm^2 + f_p^2).

    Carries a validity flag when r/a >= 0.1, where rod-lattice Bragg
    scattering makes the plasma description unreliable.
    """
    bare = bare_spectrum(spec, count)
    f_p = spectrum_plasma_frequency(spec)
    flags = []
    if spec.has_shunts and spec.shunt_radius / spec.shunt_spacing >= PLASMA_VALIDITY_RA:
        flags.append(f"plasma model outside validity: r/a = "
                     f"{spec.shunt_radius / spec.shunt_spacing:.3g} >= {PLASMA_VALIDITY_RA}")
    freqs = np.sqrt(bare.frequencies ** 2 + f_p ** 2)
    return ModeSpectrum(bare.labels, freqs, tuple(flags))
