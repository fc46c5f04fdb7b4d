"""Finite-difference eigenmode oracle for the l=0 (Ez-only) modes of a shunted cavity.

The 2D Helmholtz problem  -lap(Ez) = k^2 Ez,  k^2 = eps_eff w^2 / c^2  is
discretized with the 5-point stencil on a node grid of pitch h. Walls and
cylinders are Dirichlet (Ez = 0). Cylinder cross-sections generally span only
a few nodes, so each one is represented by a staircase node set plus a single
weight on the links that enter it; the weight is calibrated so the set has
the same logarithmic capacity (far-field effective radius) as a disk of
radius r. Without this a sub-cell wire collapses to one grounded node whose
effective radius is ~0.2 h regardless of r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import optimize

from .core import C0, EnclosureSpec, SolverError, require_valid
from .specfun import EULER_GAMMA
from .spectra import ModeSpectrum

CELLS_PER_GAP = 16
MIN_CELLS_PER_GAP = 8
MAX_UNKNOWNS = 4_000_000
RESIDUAL_TOL = 1e-10
# effective radius of one grounded node of the square 5-point lattice
SINGLE_NODE_RADIUS = math.exp(-EULER_GAMMA) / (2 * math.sqrt(2))

_NEIGHBOURS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class ResolutionError(ValueError):
    """Grid too coarse for the geometry."""


@dataclass(frozen=True)
class Grid2D:
    """Node grid x = i h (i = 0..nx), y = j h (j = 0..ny)."""

    h: float
    nx: int
    ny: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.nx + 1, self.ny + 1


@dataclass(frozen=True)
class CylinderModel:
    """Sub-cell representation of one cylinder on a grid of pitch h.

    ``offsets`` are the masked node offsets around the axis node;
    ``link_weight`` multiplies the stencil coupling on every link that
    enters the set.
    """

    r_over_h: float
    offsets: tuple[tuple[int, int], ...]
    link_weight: float
    effective_radius: float  # in units of h, as achieved


@dataclass(frozen=True)
class MetalMask:
    grid: Grid2D
    masked: np.ndarray  # bool, shape grid.shape
    cylinder: np.ndarray  # bool, nodes belonging to a cylinder
    link_weight: float = 1.0
    neumann: bool = False


@dataclass(frozen=True)
class OracleField:
    frequency: float  # Hz
    ez: np.ndarray  # shape grid.shape, zero on masked nodes, unit 2-norm
    grid: Grid2D
    residual: float = 0.0


# --------------------------------------------------------------------------
# cylinder calibration


def _disk_offsets(rho2: int) -> list[tuple[int, int]]:
    k = int(math.isqrt(rho2))
    return [(i, j) for i in range(-k, k + 1) for j in range(-k, k + 1) if i * i + j * j <= rho2]


def _lattice_current(offsets: tuple[tuple[int, int], ...], weight: float, radius: int) -> float:
    """Current drawn by a grounded node set inside a grounded-at-1 circle of given radius."""
    inside = set(offsets)
    n = 2 * radius + 1
    ii, jj = np.meshgrid(np.arange(-radius, radius + 1), np.arange(-radius, radius + 1),
                         indexing="ij")
    outer = ii ** 2 + jj ** 2 >= radius ** 2
    setmask = np.zeros((n, n), dtype=bool)
    for i, j in inside:
        setmask[i + radius, j + radius] = True
    unknown = ~(outer | setmask)
    idx = -np.ones((n, n), dtype=np.int64)
    idx[unknown] = np.arange(int(unknown.sum()))
    rows, cols, vals = [], [], []
    diag = np.zeros(int(unknown.sum()))
    rhs = np.zeros_like(diag)
    flux_w = np.zeros_like(diag)
    ui, uj = np.nonzero(unknown)
    for di, dj in _NEIGHBOURS:
        ni, nj = ui + di, uj + dj
        k = idx[ui, uj]
        nb_unknown = unknown[ni, nj]
        nb_set = setmask[ni, nj]
        nb_outer = outer[ni, nj]
        rows.append(k[nb_unknown])
        cols.append(idx[ni, nj][nb_unknown])
        diag[k[nb_unknown]] += 1.0
        diag[k[nb_set]] += weight
        flux_w[k[nb_set]] += weight
        diag[k[nb_outer]] += 1.0
        rhs[k[nb_outer]] += 1.0
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    mat = sp.csc_matrix((np.full(rows.size, -1.0), (rows, cols)), shape=(diag.size, diag.size))
    mat = mat + sp.diags(diag)
    u = spla.spsolve(mat.tocsc(), rhs)
    return float(flux_w @ u)


@lru_cache(maxsize=None)
def _reference_outer_radius(radius: int) -> float:
    current = _lattice_current(((0, 0),), 1.0, radius)
    return SINGLE_NODE_RADIUS * math.exp(2 * math.pi / current)


def log_lattice_effective_radius(offsets, weight: float, radius: int = 48) -> float:
    """log of the far-field effective radius (units of h) of a grounded node set."""
    current = _lattice_current(tuple(sorted(offsets)), weight, radius)
    return math.log(_reference_outer_radius(radius)) - 2 * math.pi / current


def lattice_effective_radius(offsets, weight: float, radius: int = 48) -> float:
    """Far-field effective radius (units of h) of a grounded node set with weighted entry links."""
    return math.exp(log_lattice_effective_radius(offsets, weight, radius))


@lru_cache(maxsize=256)
def _calibrate(r_over_h: float) -> CylinderModel:
    radius = max(48, int(math.ceil(8 * r_over_h)) + 8)
    levels = sorted({i * i + j * j for i in range(0, int(r_over_h) + 3)
                     for j in range(0, int(r_over_h) + 3)})
    # largest staircase disk whose plain (weight 1) radius does not exceed r
    chosen = 0
    for rho2 in levels:
        if lattice_effective_radius(_disk_offsets(rho2), 1.0, radius) <= r_over_h:
            chosen = rho2
        else:
            break
    offsets = tuple(_disk_offsets(chosen))

    def mismatch(log_w):
        return log_lattice_effective_radius(offsets, math.exp(log_w), radius) - math.log(r_over_h)

    lo, hi = (0.0, math.log(1e8)) if mismatch(0.0) <= 0 else (math.log(1e-300), 0.0)
    if mismatch(lo) * mismatch(hi) > 0:
        raise ResolutionError(f"cannot calibrate a cylinder of radius {r_over_h:.4g} h")
    log_w = optimize.brentq(mismatch, lo, hi, xtol=1e-13, rtol=1e-13)
    w = math.exp(log_w)
    return CylinderModel(r_over_h, offsets, w, lattice_effective_radius(offsets, w, radius))


def cylinder_model(r: float, h: float) -> CylinderModel:
    """Calibrated node set and link weight for a cylinder of radius r on pitch h."""
    if not (r > 0 and h > 0):
        raise ValueError("cylinder model needs r > 0 and h > 0")
    return _calibrate(round(r / h, 12))


# --------------------------------------------------------------------------
# grids and operators


def default_cells_per_spacing(a: float, r: float, cells_per_gap: int = CELLS_PER_GAP) -> int:
    gap = min(a - 2 * r, a)
    return int(math.ceil(cells_per_gap * a / gap - 1e-9))


def default_h(spec: EnclosureSpec, cells_per_gap: int = CELLS_PER_GAP) -> float:
    """Pitch a / N with N the smallest integer giving >= ``cells_per_gap`` cells per gap.

    Coarsened if the grid would exceed the unknown-count cap.
    """
    a, r = spec.shunt_spacing, spec.shunt_radius if spec.has_shunts else 0.0
    n = default_cells_per_spacing(a, r, cells_per_gap)
    h = a / n
    while (spec.lx / h) * (spec.ly / h) > MAX_UNKNOWNS and n > 1:
        n -= 1
        h = a / n
    return h


def make_grid(spec: EnclosureSpec, h: float) -> Grid2D:
    nx = max(2, int(round(spec.lx / h)))
    ny = max(2, int(round(spec.ly / h)))
    return Grid2D(h, nx, ny)


def build_mask(spec: EnclosureSpec, h: float) -> tuple[MetalMask, CylinderModel | None]:
    grid = make_grid(spec, h)
    masked = np.zeros(grid.shape, dtype=bool)
    masked[0, :] = masked[-1, :] = masked[:, 0] = masked[:, -1] = True
    cyl = np.zeros(grid.shape, dtype=bool)
    model = None
    if spec.has_shunts:
        gap_cells = (spec.shunt_spacing - 2 * spec.shunt_radius) / h
        if gap_cells < MIN_CELLS_PER_GAP - 1e-9:
            raise ResolutionError(
                f"only {gap_cells:.2f} cells span the gap a - 2r; need >= {MIN_CELLS_PER_GAP}")
        model = cylinder_model(spec.shunt_radius, h)
        for x, y in spec.shunt_centres():
            ci, cj = int(round(x / h)), int(round(y / h))
            for di, dj in model.offsets:
                i, j = ci + di, cj + dj
                if 0 < i < grid.nx and 0 < j < grid.ny:
                    cyl[i, j] = True
        masked |= cyl
    weight = model.link_weight if model else 1.0
    return MetalMask(grid, masked, cyl, weight), model


def _assemble(mask: MetalMask) -> tuple[sp.csr_matrix, np.ndarray]:
    """5-point operator on unmasked nodes (units 1/m^2) and their flat indices."""
    grid = mask.grid
    free = ~mask.masked
    idx = -np.ones(grid.shape, dtype=np.int64)
    n = int(free.sum())
    if n == 0:
        raise ValueError("no unmasked nodes: the grid is entirely metal")
    idx[free] = np.arange(n)
    fi, fj = np.nonzero(free)
    diag = np.zeros(n)
    rows, cols = [], []
    for di, dj in _NEIGHBOURS:
        ni, nj = fi + di, fj + dj
        inside = (ni >= 0) & (ni <= grid.nx) & (nj >= 0) & (nj <= grid.ny)
        k = idx[fi[inside], fj[inside]]
        ni, nj = ni[inside], nj[inside]
        nb_free = free[ni, nj]
        nb_cyl = mask.cylinder[ni, nj]
        nb_wall = mask.masked[ni, nj] & ~nb_cyl
        rows.append(k[nb_free])
        cols.append(idx[ni[nb_free], nj[nb_free]])
        np.add.at(diag, k[nb_free], 1.0)
        np.add.at(diag, k[nb_cyl], mask.link_weight)
        np.add.at(diag, k[nb_wall], 1.0)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    off = sp.csr_matrix((np.full(rows.size, -1.0), (rows, cols)), shape=(n, n))
    mat = (off + sp.diags(diag, format="csr")) / grid.h ** 2
    return mat.tocsr(), idx


def assemble_operator(spec: EnclosureSpec, h: float | None = None) -> sp.csr_matrix:
    """Symmetric positive definite discretization of -laplacian on the cavity cross-section."""
    require_valid(spec)
    h = default_h(spec) if h is None else h
    mask, _ = build_mask(spec, h)
    return _assemble(mask)[0]


def _factor(csc: sp.csc_matrix):
    # symmetric mode keeps the minimum-degree ordering; partial pivoting destroys it
    return spla.splu(csc, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                     options={"SymmetricMode": True})


def _eigs_smallest(mat: sp.spmatrix, k: int) -> tuple[np.ndarray, np.ndarray, float]:
    n = mat.shape[0]
    k = min(k, n - 1) if n > 1 else 1
    if n <= 400:
        vals, vecs = np.linalg.eigh(mat.toarray())
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        csc = mat.tocsc()
        lu = _factor(csc)
        op_inv = spla.LinearOperator(csc.shape, matvec=lu.solve, dtype=float)
        # deterministic start vector
        v0 = np.cos(np.arange(n) * 0.7548776662466927) + 1.5
        try:
            vals, vecs = spla.eigsh(csc, k=k, sigma=0.0, which="LM", OPinv=op_inv, v0=v0,
                                    tol=1e-13, ncv=min(n, max(2 * k + 1, 20)), maxiter=5000)
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"eigensolver did not converge ({len(exc.eigenvalues)} of {k} "
                              "eigenpairs found)") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    scale = abs(mat).sum(axis=1).max()
    resid = np.linalg.norm(mat @ vecs - vecs * vals, axis=0) / scale
    worst = float(resid.max())
    if worst > RESIDUAL_TOL:
        raise SolverError(f"eigenpair residual {worst:.2e} above {RESIDUAL_TOL:.0e}", worst)
    return vals, vecs, worst


def _to_hz(lam, eps_r: float):
    return C0 * np.sqrt(np.maximum(lam, 0.0)) / (2 * math.pi * math.sqrt(eps_r))


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    total = vec.sum()
    if abs(total) > 1e-8 * np.abs(vec).sum():
        return vec if total > 0 else -vec
    k = int(np.argmax(np.abs(vec)))
    return vec if vec[k] > 0 else -vec


def lowest_modes(spec: EnclosureSpec, h: float | None = None, k: int = 10) -> list[OracleField]:
    """The k lowest l=0 eigenmodes, ascending in frequency."""
    require_valid(spec)
    h = default_h(spec) if h is None else h
    mask, _ = build_mask(spec, h)
    mat, idx = _assemble(mask)
    vals, vecs, worst = _eigs_smallest(mat, k)
    freqs = _to_hz(vals, spec.eps_eff)
    free = idx >= 0
    fields = []
    for col in range(vals.size):
        vec = _fix_sign(vecs[:, col] / np.linalg.norm(vecs[:, col]))
        ez = np.zeros(mask.grid.shape)
        ez[free] = vec[idx[free]]
        fields.append(OracleField(float(freqs[col]), ez, mask.grid, worst))
    return fields


def oracle_spectrum(spec: EnclosureSpec, h: float | None = None, k: int = 10) -> ModeSpectrum:
    modes = lowest_modes(spec, h, k)
    freqs = np.array([m.frequency for m in modes])
    return ModeSpectrum(tuple((q,) for q in range(1, freqs.size + 1)), freqs)


@dataclass(frozen=True)
class ConvergenceStudy:
    h: tuple[float, ...]
    frequencies: np.ndarray  # (levels, modes), Hz
    order: np.ndarray  # observed order per mode (nan when non-monotone)
    extrapolated: np.ndarray  # Richardson estimate per mode (nan when suppressed)
    flags: tuple[str, ...] = field(default=())


def convergence_study(spec: EnclosureSpec, h_sequence, mode_count: int = 1) -> ConvergenceStudy:
    """Eigenfrequencies on successively halved grids with Richardson extrapolation.

    Order and extrapolation use the three finest levels.
    """
    hs = [float(h) for h in h_sequence]
    if len(hs) < 3:
        raise ValueError("convergence study needs at least three grid levels")
    for coarse, fine in zip(hs, hs[1:]):
        if not math.isclose(coarse / fine, 2.0, rel_tol=1e-9):
            raise ValueError("each grid level must halve h")
    freqs = np.array([[m.frequency for m in lowest_modes(spec, h, mode_count)] for h in hs])
    f1, f2, f3 = freqs[-3], freqs[-2], freqs[-1]
    d12, d23 = f1 - f2, f2 - f3
    monotone = (d12 * d23 > 0) & (np.abs(d23) < np.abs(d12))
    flags = []
    with np.errstate(divide="ignore", invalid="ignore"):
        order = np.where(monotone, np.log2(np.abs(d12 / d23)), np.nan)
        extrap = np.where(monotone, f3 + d23 * -1.0 / (2.0 ** order - 1.0), np.nan)
    for q in np.nonzero(~monotone)[0]:
        flags.append(f"mode {q + 1}: non-monotone convergence, extrapolation suppressed")
    return ConvergenceStudy(tuple(hs), freqs, order, extrap, tuple(flags))


# --------------------------------------------------------------------------
# infinite lattice and driven response


def infinite_lattice_fundamental(a: float, r: float, eps_r: float, h: float | None = None) -> float:
    """Lowest mode of the infinite rod lattice (Hz) from one a x a Neumann unit cell.

    The symmetric zone-centre mode has zero normal derivative on the cell
    faces, so a single cell with a centred rod and Neumann faces reproduces it.
    """
    if not 0 <= r < a / 2:
        raise ValueError("need 0 <= r < a/2")
    if r == 0:
        return 0.0
    n = default_cells_per_spacing(a, r) if h is None else int(round(a / h))
    if n % 2 == 0:
        n += 1
    hh = a / n
    if (a - 2 * r) / hh < MIN_CELLS_PER_GAP - 1e-9:
        raise ResolutionError("unit cell under-resolved")
    model = cylinder_model(r, hh)
    # nodes at cell centres of an n x n tiling; faces lie half a pitch beyond the outer nodes
    grid = Grid2D(hh, n - 1, n - 1)
    masked = np.zeros(grid.shape, dtype=bool)
    c = (n - 1) // 2
    for di, dj in model.offsets:
        masked[c + di, c + dj] = True
    mask = MetalMask(grid, masked, masked.copy(), model.link_weight, neumann=True)
    mat, _ = _assemble(mask)
    vals, _, _ = _eigs_smallest(mat, 1)
    return float(_to_hz(vals[0], eps_r))


def coupling_profile(spec: EnclosureSpec, f_q: float, count: int = 10,
                     h: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Driven response below cut-off: field at qubit sites j = 1..count from a source at j = 0.

    Qubits sit at lattice cell centres along +x from the cell nearest the
    enclosure centre. Returns (distances, Gamma) with Gamma normalized at j = 1.
    """
    require_valid(spec)
    a = spec.shunt_spacing
    n = default_cells_per_spacing(a, spec.shunt_radius) if h is None else int(round(a / h))
    if n % 2:
        n += 1
    hh = a / n
    mask, _ = build_mask(spec, hh)
    mat, idx = _assemble(mask)
    k2 = (2 * math.pi * f_q) ** 2 * spec.eps_eff / C0 ** 2
    centres = spec.shunt_centres()
    if not centres:
        raise ValueError("coupling profile needs a shunt array")
    xs = sorted({round(x / hh) for x, _ in centres})
    ys = sorted({round(y / hh) for _, y in centres})
    mid_x = xs[len(xs) // 2 - 1] + n // 2 if len(xs) > 1 else xs[0] + n // 2
    mid_y = ys[len(ys) // 2 - 1] + n // 2 if len(ys) > 1 else ys[0] + n // 2
    sites = [(mid_x + j * n, mid_y) for j in range(count + 1)]
    if sites[-1][0] >= mask.grid.nx:
        raise ValueError("qubit chain does not fit inside the enclosure")
    rhs = np.zeros(mat.shape[0])
    rhs[idx[sites[0]]] = 1.0 / hh ** 2
    shifted = (mat - k2 * sp.identity(mat.shape[0], format="csr")).tocsc()
    u = _factor(shifted).solve(rhs)
    vals = np.array([u[idx[s]] for s in sites[1:]])
    if np.any(vals <= 0):
        raise SolverError("driven response changed sign: qubit frequency not below cut-off")
    d = np.arange(1, count + 1) * a
    return d, vals / vals[0]


def export_field(field_: OracleField) -> str:
    """Plain-text field dump: header 'nx ny h_mm f_GHz', then rows of constant y."""
    g = field_.grid
    lines = [f"{g.nx + 1} {g.ny + 1} {g.h * 1e3:.9g} {field_.frequency / 1e9:.9g}"]
    for j in range(g.ny + 1):
        lines.append(" ".join(f"{v:.9g}" for v in field_.ez[:, j]))
    return "\n".join(lines) + "\n"
