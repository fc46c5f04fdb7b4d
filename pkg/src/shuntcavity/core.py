"""Geometry and material types shared across the package.

All quantities are SI internally (metres, hertz, farads, henries). The JSON
enclosure format and the command line use millimetres and gigahertz; the
conversion happens in :func:`EnclosureSpec.from_dict` / :meth:`to_dict`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from scipy import constants as _sc

MM = 1e-3
GHZ = 1e9


class InvalidEnclosureError(ValueError):
    """Raised when an enclosure violates one of its geometric invariants."""


class ModelDomainError(ValueError):
    """Raised when a model is evaluated outside the range where it is defined."""


class SolverError(RuntimeError):
    """Raised when an iterative eigensolver fails to converge."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class FitError(RuntimeError):
    """Raised when a parameter fit cannot produce a usable result."""


@dataclass(frozen=True)
class PhysicalConstants:
    vacuum_permittivity: float = _sc.epsilon_0
    vacuum_permeability: float = _sc.mu_0
    speed_of_light: float = _sc.c


CONSTANTS = PhysicalConstants()
EPS0 = CONSTANTS.vacuum_permittivity
MU0 = CONSTANTS.vacuum_permeability
C0 = CONSTANTS.speed_of_light


@dataclass(frozen=True)
class DielectricLayer:
    """One slab of the dielectric stack, ordered bottom-to-top along z."""

    thickness: float
    rel_permittivity: float


@dataclass(frozen=True)
class EnclosureSpec:
    """Rectangular enclosure shunted by a square array of conducting cylinders.

    ``shunt_counts`` is ``(columns, rows)``; the array is centred in the
    ``lx x ly`` footprint with pitch ``shunt_spacing`` in both directions.
    ``shunt_radius == 0`` (or zero counts) describes an unshunted cavity.
    """

    lx: float
    ly: float
    lz: float
    layers: tuple[DielectricLayer, ...]
    shunt_spacing: float
    shunt_radius: float
    shunt_counts: tuple[int, int] = (0, 0)

    @classmethod
    def uniform(cls, lx: float, ly: float, lz: float, eps_r: float, a: float,
                r: float, counts: tuple[int, int] = (0, 0)) -> "EnclosureSpec":
        return cls(lx, ly, lz, (DielectricLayer(lz, eps_r),), a, r,
                   (int(counts[0]), int(counts[1])))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EnclosureSpec":
        """Build from the JSON schema (millimetre units)."""
        try:
            layers = tuple(DielectricLayer(float(l["t_mm"]) * MM, float(l["eps_r"]))
                           for l in data["layers"])
            shunts = data.get("shunts", (0, 0))
            return cls(
                lx=float(data["lx_mm"]) * MM,
                ly=float(data["ly_mm"]) * MM,
                lz=float(data["lz_mm"]) * MM,
                layers=layers,
                shunt_spacing=float(data["a_mm"]) * MM,
                shunt_radius=float(data.get("r_mm", 0.0)) * MM,
                shunt_counts=(int(shunts[0]), int(shunts[1])),
            )
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise InvalidEnclosureError(f"malformed enclosure description: {exc!r}") from exc

    def to_dict(self) -> dict[str, Any]:
        return {
            "lx_mm": self.lx / MM,
            "ly_mm": self.ly / MM,
            "lz_mm": self.lz / MM,
            "layers": [{"t_mm": l.thickness / MM, "eps_r": l.rel_permittivity}
                       for l in self.layers],
            "a_mm": self.shunt_spacing / MM,
            "r_mm": self.shunt_radius / MM,
            "shunts": list(self.shunt_counts),
        }

    @property
    def eps_eff(self) -> float:
        return effective_permittivity(self.layers, self.lz)

    @property
    def has_shunts(self) -> bool:
        return self.shunt_radius > 0 and min(self.shunt_counts) > 0

    def with_radius(self, r: float) -> "EnclosureSpec":
        return EnclosureSpec(self.lx, self.ly, self.lz, self.layers,
                             self.shunt_spacing, r, self.shunt_counts)

    def shunt_centres(self) -> list[tuple[float, float]]:
        """Cylinder axis positions, row-major, centred in the footprint."""
        if not self.has_shunts:
            return []
        nx, ny = self.shunt_counts
        a = self.shunt_spacing
        x0 = 0.5 * self.lx - 0.5 * (nx - 1) * a
        y0 = 0.5 * self.ly - 0.5 * (ny - 1) * a
        return [(x0 + i * a, y0 + j * a) for j in range(ny) for i in range(nx)]


def effective_permittivity(layers: Sequence[DielectricLayer], lz: float) -> float:
    """Relative permittivity of a uniform fill equivalent to a layered stack.

    The l=0 modes see the stack as parallel-plate capacitors in series, so the
    result is the thickness-weighted harmonic mean ``lz / sum(t_i / eps_i)``.
    """
    if not layers:
        raise InvalidEnclosureError("dielectric stack is empty")
    total = math.fsum(l.thickness for l in layers)
    if not math.isclose(total, lz, rel_tol=1e-9, abs_tol=0.0):
        raise InvalidEnclosureError(
            f"layer thicknesses sum to {total!r} but lz is {lz!r}")
    return lz / math.fsum(l.thickness / l.rel_permittivity for l in layers)


def validate_enclosure(spec: EnclosureSpec) -> list[str]:
    """Return a list of violated invariants; empty when ``spec`` is valid."""
    problems: list[str] = []
    for name in ("lx", "ly", "lz"):
        if not getattr(spec, name) > 0:
            problems.append(f"{name} > 0")
    if not spec.layers:
        problems.append("at least one dielectric layer")
    for k, layer in enumerate(spec.layers):
        if not layer.thickness > 0:
            problems.append(f"layer {k}: thickness > 0")
        if not layer.rel_permittivity >= 1:
            problems.append(f"layer {k}: eps_r >= 1")
    if spec.layers and spec.lz > 0:
        total = math.fsum(l.thickness for l in spec.layers)
        if not math.isclose(total, spec.lz, rel_tol=1e-9, abs_tol=0.0):
            problems.append("thickness sum: layers must add up to lz")
    a, r = spec.shunt_spacing, spec.shunt_radius
    if not a > 0:
        problems.append("a > 0")
    if r < 0:
        problems.append("r >= 0")
    elif a > 0 and not r < a / 2:
        problems.append("r < a/2")
    nx, ny = spec.shunt_counts
    if nx < 0 or ny < 0:
        problems.append("shunt counts >= 0")
    elif spec.has_shunts and a > 0:
        if (nx - 1) * a + 2 * r >= spec.lx or (ny - 1) * a + 2 * r >= spec.ly:
            problems.append("shunt grid fits inside lx x ly")
    return problems


def require_valid(spec: EnclosureSpec) -> None:
    problems = validate_enclosure(spec)
    if problems:
        raise InvalidEnclosureError("; ".join(problems))

