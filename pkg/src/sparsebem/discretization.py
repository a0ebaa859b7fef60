"""Collocation discretization of the single-layer boundary integral.

Piecewise-polynomial bases (degree 0, 1 or 3) on a uniform periodic mesh
per obstacle, collocation at nodes (degrees 1, 3) or cell midpoints
(degree 0), and dense matrix assembly by composite Gauss-Legendre
quadrature with geometrically graded panels around the kernel singularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from sparsebem.geometry import Scene, IncidentWave, eval_incident

DEFAULT_PPW = 10.0
SUPPORTED_DEGREES = (0, 1, 3)
MIN_POINTS_PER_OBSTACLE = 16

# Regular cells: at least 8 Gauss nodes, more when a cell spans many radians
# of phase. Singular cells: geometric panels (ratio 1/2) toward the
# singularity, which resolves the logarithmic kernel to ~1e-6 relative.
GAUSS_NODES_MIN = 8
NODES_PER_UNIT_PHASE = 3.0
GRADED_LEVELS = 20
GRADED_NODES = 8


class AssemblyError(RuntimeError):
    """Quadrature or assembly failure."""


# ---------------------------------------------------------------------------
# Bases
# ---------------------------------------------------------------------------
def _bspline3(v: np.ndarray) -> np.ndarray:
    a = np.abs(v)
    out = np.zeros_like(a)
    inner = a < 1.0
    outer = (a >= 1.0) & (a < 2.0)
    out[inner] = 2.0 / 3.0 - a[inner] ** 2 + 0.5 * a[inner] ** 3
    out[outer] = (2.0 - a[outer]) ** 3 / 6.0
    return out


def _slot_values(degree: int, u: np.ndarray) -> np.ndarray:
    """Values of the basis functions active on one cell.

    ``u`` is the unit cell coordinate; column d corresponds to basis index
    (cell + d - shift) with shift 1 for cubics, 0 otherwise.
    """
    u = np.asarray(u, dtype=float)
    if degree == 0:
        return np.ones(u.shape + (1,))
    if degree == 1:
        return np.stack([1.0 - u, u], axis=-1)
    if degree == 3:
        return np.stack([_bspline3(u + 1.0), _bspline3(u),
                         _bspline3(u - 1.0), _bspline3(u - 2.0)], axis=-1)
    raise ValueError(f"unsupported basis degree {degree}")


def _n_slots(degree: int) -> int:
    return {0: 1, 1: 2, 3: 4}[degree]


def _col_shift(degree: int) -> int:
    return 1 if degree == 3 else 0


@dataclass(frozen=True)
class Basis:
    """Periodic piecewise-polynomial basis: degree and per-obstacle counts."""

    degree: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.degree not in SUPPORTED_DEGREES:
            raise ValueError(f"basis degree must be one of {SUPPORTED_DEGREES}")
        if any(n < MIN_POINTS_PER_OBSTACLE for n in self.counts):
            raise ValueError("too few basis functions per obstacle")

    def support_cells(self) -> int:
        return _n_slots(self.degree)

    def support_length(self, p: int) -> float:
        return self.support_cells() / self.counts[p]

    def eval_basis(self, p: int, j: int, tau) -> np.ndarray:
        """phi_j on obstacle p at parameters tau (periodically wrapped)."""
        n = self.counts[p]
        h = 1.0 / n
        t = np.asarray(tau, dtype=float)
        if self.degree == 0:
            u = (t - j * h) % 1.0
            return (u < h).astype(float)
        # Center the wrap on the node so the compact support is contiguous.
        v = ((t - j * h + 0.5) % 1.0 - 0.5) / h
        if self.degree == 1:
            return np.maximum(0.0, 1.0 - np.abs(v))
        return _bspline3(v)


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------
class _ObstacleQuad:
    """Per-obstacle quadrature cache: nodes, kernel weights, basis template."""

    def __init__(self, scene: Scene, p: int, n: int, degree: int, k: float, offset: int):
        curve = scene.obstacles[p]
        self.n = n
        self.h = 1.0 / n
        self.offset = offset
        speed_samples = curve.speed(np.linspace(0.0, 1.0, 512, endpoint=False))
        self.max_speed = float(np.max(speed_samples))
        cell_phase = k * self.max_speed * self.h
        self.qc = max(GAUSS_NODES_MIN, int(math.ceil(NODES_PER_UNIT_PHASE * cell_phase)))

        xg, wg = np.polynomial.legendre.leggauss(self.qc)
        self.unit_nodes = 0.5 * (xg + 1.0)           # (qc,) in (0, 1)
        self.unit_weights = 0.5 * wg                 # (qc,)

        cells = np.arange(n)[:, None]                # (n, 1)
        self.tau = ((cells + self.unit_nodes[None, :]) * self.h).ravel()   # (n*qc,)
        self.pos = curve.pos(self.tau)               # (n*qc, 2)
        self.speed = curve.speed(self.tau)           # (n*qc,)
        self.weight = np.tile(self.unit_weights, n) * self.h               # (n*qc,)
        self.sw = self.speed * self.weight           # (n*qc,)

        nslots = _n_slots(degree)
        shift = _col_shift(degree)
        self.phi = _slot_values(degree, self.unit_nodes)                   # (qc, nslots)
        self.cols = (offset
                     + (cells + np.arange(nslots)[None, :] - shift) % n)   # (n, nslots)
        self.degree = degree
        self.curve = curve

    def singular_cells(self, t: float) -> list[tuple[int, float, float]]:
        """Cells within half a cell of ``t`` (unwrapped intervals)."""
        m0 = int(math.floor(t * self.n))
        out = []
        for m in (m0 - 1, m0, m0 + 1):
            a, b = m * self.h, (m + 1) * self.h
            if a <= t <= b:
                dist = 0.0
            else:
                dist = min(abs(t - a), abs(t - b))
                dist = min(dist, 1.0 - dist)
            if dist < 0.5 * self.h:
                out.append((m, a, b))
        return out


def _graded_side(x0: float, x1: float, toward_left: bool) -> tuple[np.ndarray, np.ndarray]:
    """Gauss panels on [x0, x1], geometrically refined toward one endpoint."""
    w = x1 - x0
    ratios = 2.0 ** (-np.arange(GRADED_LEVELS, -1, -1.0))
    if toward_left:
        edges = np.concatenate([[x0], x0 + w * ratios])
    else:
        edges = np.concatenate([(x1 - w * ratios)[::-1], [x1]])
    xg, wg = np.polynomial.legendre.leggauss(GRADED_NODES)
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def _graded_cell(a: float, b: float, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Graded quadrature on the cell [a, b] with the singularity at ``s``."""
    if a < s < b:
        ln, lw = _graded_side(a, s, toward_left=False)
        rn, rw = _graded_side(s, b, toward_left=True)
        return np.concatenate([ln, rn]), np.concatenate([lw, rw])
    if s <= a:
        return _graded_side(a, b, toward_left=True)
    return _graded_side(a, b, toward_left=False)


@dataclass
class Discretization:
    """Square collocation system layout for a scene at one wavenumber."""

    scene: Scene
    k: float
    basis: Basis
    ppw: float
    row_obstacle: np.ndarray
    row_param: np.ndarray
    col_obstacle: np.ndarray
    col_param: np.ndarray
    offsets: np.ndarray
    _quads: list = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return len(self.row_param)

    def quad(self, p: int) -> _ObstacleQuad:
        return self._quads[p]

    def collocation_points(self) -> np.ndarray:
        pts = np.empty((self.n, 2))
        for p in range(self.scene.n_obstacles):
            sel = self.row_obstacle == p
            pts[sel] = self.scene.position(p, self.row_param[sel])
        return pts

    def obstacle_slice(self, p: int) -> slice:
        return slice(int(self.offsets[p]), int(self.offsets[p + 1]))


def discretize(scene: Scene, k: float, ppw: float = DEFAULT_PPW, degree: int = 1) -> Discretization:
    """Build the collocation discretization.

    The per-obstacle count is ceil(ppw * L_p * k / (2 pi)), so the system
    size grows linearly with the wavenumber at fixed points per wavelength.
    """
    if not (np.isfinite(k) and k > 0):
        raise ValueError("wavenumber must be positive and finite")
    if ppw <= 0:
        raise ValueError("points per wavelength must be positive")
    counts = []
    for ob in scene.obstacles:
        n = int(math.ceil(ppw * ob.arc_length * k / (2.0 * math.pi)))
        counts.append(max(n, MIN_POINTS_PER_OBSTACLE))
    basis = Basis(degree, tuple(counts))

    row_obs, row_par, col_obs, col_par = [], [], [], []
    offsets = [0]
    for p, n in enumerate(counts):
        idx = np.arange(n)
        node_shift = 0.5 if degree == 0 else 0.0
        row_obs.append(np.full(n, p))
        row_par.append((idx + node_shift) / n)
        col_obs.append(np.full(n, p))
        col_par.append((idx + node_shift) / n)
        offsets.append(offsets[-1] + n)

    disc = Discretization(
        scene=scene, k=k, basis=basis, ppw=ppw,
        row_obstacle=np.concatenate(row_obs),
        row_param=np.concatenate(row_par),
        col_obstacle=np.concatenate(col_obs),
        col_param=np.concatenate(col_par),
        offsets=np.array(offsets),
    )
    for p, n in enumerate(counts):
        disc._quads.append(_ObstacleQuad(scene, p, n, degree, k, offsets[p]))
    return disc


@dataclass
class DenseSystem:
    """Dense collocation matrix and right-hand side."""

    A: np.ndarray
    b: np.ndarray
    disc: Discretization

    def __post_init__(self):
        if not np.all(np.isfinite(self.A.view(float))):
            raise AssemblyError("matrix contains non-finite entries")


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------
def _kernel_values(k: float, x: np.ndarray, pos: np.ndarray, sw: np.ndarray) -> np.ndarray:
    """0.25i H0(k |x - pos|) * speed * weight for a block of source points."""
    diff = x[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    if np.any(dist == 0.0):
        raise AssemblyError("quadrature node coincides with a collocation point")
    return 0.25j * special.hankel1(0, k * dist) * sw[None, :]


def _fix_singular_row(row: np.ndarray, disc: Discretization, p: int, t: float,
                      x: np.ndarray, only_active_cells: np.ndarray | None = None) -> None:
    """Replace nearby-cell contributions in ``row`` with graded quadrature."""
    quad = disc.quad(p)
    k = disc.k
    for m, a, b in quad.singular_cells(t):
        mm = m % quad.n
        if only_active_cells is not None and not only_active_cells[mm]:
            continue
        sl = slice(mm * quad.qc, (mm + 1) * quad.qc)
        reg = _kernel_values(k, x[None, :], quad.pos[sl], quad.sw[sl])[0]
        e_reg = reg @ quad.phi

        nodes, weights = _graded_cell(a, b, t)
        pos = quad.curve.pos(nodes)
        speed = quad.curve.speed(nodes)
        diff = pos - x[None, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        keep = dist > 0.0
        kern = 0.25j * special.hankel1(0, k * dist[keep]) * (speed * weights)[keep]
        u = (nodes[keep] - m * quad.h) / quad.h
        e_sing = kern @ _slot_values(quad.degree, u)
        row[quad.cols[mm]] += e_sing - e_reg


def assemble_row(disc: Discretization, p: int, t: float) -> np.ndarray:
    """One collocation row at an arbitrary boundary parameter."""
    t = float(t) % 1.0
    x = np.asarray(disc.scene.position(p, t), dtype=float)
    row = np.zeros(disc.n, dtype=complex)
    for q in range(disc.scene.n_obstacles):
        quad = disc.quad(q)
        kern = _kernel_values(disc.k, x[None, :], quad.pos, quad.sw)[0]
        contrib = kern.reshape(quad.n, quad.qc) @ quad.phi
        for d in range(contrib.shape[1]):
            row[quad.cols[:, d]] += contrib[:, d]
    _fix_singular_row(row, disc, p, t, x)
    return row


def assemble_matrix(disc: Discretization) -> np.ndarray:
    """Dense collocation matrix; rows are independent of one another."""
    n = disc.n
    A = np.zeros((n, n), dtype=complex)
    X = disc.collocation_points()
    total_nodes = sum(disc.quad(q).tau.size for q in range(disc.scene.n_obstacles))
    chunk = max(1, min(n, 4_000_000 // max(total_nodes, 1)))
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        for q in range(disc.scene.n_obstacles):
            quad = disc.quad(q)
            kern = _kernel_values(disc.k, X[rows], quad.pos, quad.sw)
            contrib = kern.reshape(len(rows), quad.n, quad.qc) @ quad.phi
            for d in range(contrib.shape[2]):
                A[rows[:, None], quad.cols[None, :, d]] += contrib[:, :, d]
    for i in range(n):
        _fix_singular_row(A[i], disc, int(disc.row_obstacle[i]),
                          float(disc.row_param[i]), X[i])
    if not np.all(np.isfinite(A.view(float))):
        raise AssemblyError("matrix contains non-finite entries")
    return A


def assemble_rhs(disc: Discretization, wave: IncidentWave) -> np.ndarray:
    """Right-hand side: minus the incident field at the collocation points."""
    return -eval_incident(wave, disc.k, disc.collocation_points())


def assemble_system(disc: Discretization, wave: IncidentWave) -> DenseSystem:
    return DenseSystem(assemble_matrix(disc), assemble_rhs(disc, wave), disc)


def assemble_partial_row(disc: Discretization, p: int, t: float,
                         active_cols: np.ndarray) -> np.ndarray:
    """Row entries restricted to active columns; inactive entries stay zero.

    Only quadrature over cells supporting an active basis function is
    performed, so the cost scales with the number of retained entries.
    """
    t = float(t) % 1.0
    x = np.asarray(disc.scene.position(p, t), dtype=float)
    row = np.zeros(disc.n, dtype=complex)
    for q in range(disc.scene.n_obstacles):
        quad = disc.quad(q)
        cell_active = active_cols[quad.cols].any(axis=1)
        if not np.any(cell_active):
            continue
        node_mask = np.repeat(cell_active, quad.qc)
        kern = _kernel_values(disc.k, x[None, :],
                              quad.pos[node_mask], quad.sw[node_mask])[0]
        contrib = kern.reshape(-1, quad.qc) @ quad.phi
        cells = np.nonzero(cell_active)[0]
        for d in range(contrib.shape[1]):
            row[quad.cols[cells, d]] += contrib[:, d]
        if q == p:
            _fix_singular_row(row, disc, p, t, x, only_active_cells=cell_active)
    return row


# ---------------------------------------------------------------------------
# Density evaluation
# ---------------------------------------------------------------------------
def density_values(disc: Discretization, c: np.ndarray, p: int, tau) -> np.ndarray:
    """Basis expansion sum_j c_j phi_j on obstacle p at parameters tau."""
    if len(c) != disc.n:
        raise ValueError("coefficient vector length must match the system size")
    quad = disc.quad(p)
    t = np.asarray(tau, dtype=float) % 1.0
    cell = np.floor(t * quad.n).astype(int) % quad.n
    u = t * quad.n - np.floor(t * quad.n)
    vals = _slot_values(quad.degree, u)                       # (..., nslots)
    cols = quad.cols[cell]                                    # (..., nslots)
    out = np.sum(vals * c[cols], axis=-1)
    return out


def evaluate_density(disc: Discretization, c: np.ndarray, tau) -> complex:
    """Density v_N at one global parameter (obstacle index, local t)."""
    p, t = tau
    return complex(density_values(disc, c, p, np.asarray(t)))
