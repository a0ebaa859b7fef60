"""Post-processing: field evaluation, residuals, analytic circle oracle.

The boundary residual measures how well the computed density satisfies the
sound-soft boundary condition at random boundary points, using the same
singularity-split quadrature as assembly. The circle oracle is a
separation-of-variables series for the density, used to validate the
solver end to end.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from sparsebem.discretization import Discretization, assemble_row, density_values
from sparsebem.geometry import IncidentWave, PlaneWave, eval_incident, points_inside
from sparsebem.sparse import SparseComplexMatrix


class AnalysisError(ValueError):
    """Invalid post-processing request."""


@dataclass
class MetricsRecord:
    """Flat per-wavenumber result record."""

    k: float
    n: int
    nnz_fraction: float | None = None
    residual_dense: float | None = None
    residual_compressed: float | None = None
    coef_error: float | None = None
    interior_error: float | None = None
    cond_dense: float | None = None
    cond_compressed: float | None = None
    gmres_iterations_dense: int | None = None
    gmres_iterations_compressed: int | None = None
    timings: dict = field(default_factory=dict)

    _FLOAT_KEYS = ("k", "nnz_fraction", "residual_dense", "residual_compressed",
                   "coef_error", "interior_error", "cond_dense", "cond_compressed")
    _INT_KEYS = ("n", "gmres_iterations_dense", "gmres_iterations_compressed")

    def to_text(self, include_timings: bool = True) -> str:
        lines = []
        for key in self._FLOAT_KEYS + self._INT_KEYS:
            val = getattr(self, key)
            if val is not None:
                lines.append(f"{key} {val!r}")
        if include_timings:
            for phase in sorted(self.timings):
                lines.append(f"timing.{phase} {self.timings[phase]!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsRecord":
        rec = cls(k=0.0, n=0)
        for line in text.splitlines():
            parts = line.split()
            if len(parts) != 2:
                continue
            key, raw = parts
            if key.startswith("timing."):
                rec.timings[key[len("timing."):]] = float(raw)
            elif key in cls._INT_KEYS:
                setattr(rec, key, int(raw))
            elif key in cls._FLOAT_KEYS:
                setattr(rec, key, float(raw))
        return rec


# ---------------------------------------------------------------------------
# Field evaluation
# ---------------------------------------------------------------------------
def scattered_field(disc: Discretization, c: np.ndarray, points,
                    chunk_size: int = 512) -> np.ndarray:
    """Single-layer field at points off the boundary.

    Uses the composite Gauss rule of the assembly cells, which is accurate
    once the evaluation point is at least one element away from the
    boundary; closer points are rejected (near-singular quadrature is not
    implemented).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(c) != disc.n:
        raise AnalysisError("coefficient vector length must match the system size")
    min_elem = max(disc.quad(p).h * disc.quad(p).max_speed
                   for p in range(disc.scene.n_obstacles))
    dist = disc.scene.boundary_distance(pts)
    if np.any(dist < min_elem):
        bad = int(np.sum(dist < min_elem))
        raise AnalysisError(f"{bad} evaluation point(s) closer than one element "
                            "to the boundary")
    out = np.zeros(len(pts), dtype=complex)
    for p in range(disc.scene.n_obstacles):
        quad = disc.quad(p)
        vn = density_values(disc, c, p, quad.tau)      # (nodes,)
        weights = quad.sw * vn                          # (nodes,)
        for start in range(0, len(pts), chunk_size):
            sl = slice(start, min(start + chunk_size, len(pts)))
            diff = pts[sl][:, None, :] - quad.pos[None, :, :]
            r = np.sqrt(np.sum(diff * diff, axis=-1))
            out[sl] += (0.25j * special.hankel1(0, disc.k * r)) @ weights
    return out


def _offgrid_params(rng: np.random.Generator, n_points: int, n_obstacles: int,
                    counts) -> tuple[np.ndarray, np.ndarray]:
    """Random boundary parameters kept clear of quadrature cell edges."""
    obs = np.empty(n_points, dtype=int)
    par = np.empty(n_points, dtype=float)
    for i in range(n_points):
        while True:
            u = rng.uniform(0.0, n_obstacles)
            p = min(int(u), n_obstacles - 1)
            t = u - p
            n = counts[p]
            frac = t * n - np.floor(t * n)
            if 1e-3 < frac < 1.0 - 1e-3:
                obs[i], par[i] = p, t
                break
    return obs, par


def boundary_residual(disc: Discretization, c: np.ndarray, wave: IncidentWave,
                      seed: int = 0, n_points: int = 100) -> float:
    """Relative 1-norm boundary-condition defect at random boundary points."""
    rng = np.random.default_rng(seed)
    obs, par = _offgrid_params(rng, n_points, disc.scene.n_obstacles,
                               disc.basis.counts)
    total = inc_sum = 0.0
    for p, t in zip(obs, par):
        row = assemble_row(disc, int(p), float(t))
        us = complex(row @ c)
        ui = complex(eval_incident(wave, disc.k, disc.scene.position(int(p), float(t))))
        total += abs(us + ui)
        inc_sum += abs(ui)
    if inc_sum == 0.0:
        return float(total)
    return float(total / inc_sum)


def solution_error(c_ref: np.ndarray, c_test: np.ndarray) -> float:
    """Relative 2-norm coefficient error against a reference solution."""
    return float(np.linalg.norm(c_test - c_ref) / np.linalg.norm(c_ref))


# ---------------------------------------------------------------------------
# Interior extinction
# ---------------------------------------------------------------------------
def interior_points(disc: Discretization, p: int, n_points: int, seed: int = 0,
                    margin_factor: float = 2.0) -> np.ndarray:
    """Seeded random points inside obstacle p, clear of the boundary."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, 512, endpoint=False)
    poly = disc.scene.position(p, t)
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    margin = margin_factor * disc.quad(p).h * disc.quad(p).max_speed
    out = []
    while len(out) < n_points:
        cand = rng.uniform(lo, hi, size=(4 * n_points, 2))
        keep = points_inside(disc.scene, p, cand)
        cand = cand[keep]
        if len(cand):
            d = disc.scene.boundary_distance(cand)
            cand = cand[d > margin]
            out.extend(cand.tolist())
    return np.asarray(out[:n_points])


def interior_total_field(disc: Discretization, c: np.ndarray, wave: IncidentWave,
                         seed: int = 0, n_points: int = 100) -> float:
    """Mean |scattered + incident| over random interior points.

    For a sound-soft obstacle the exact total field vanishes inside, so
    this measures the overall discretization plus quadrature error.
    """
    pts = interior_points(disc, 0, n_points, seed)
    us = scattered_field(disc, c, pts)
    ui = eval_incident(wave, disc.k, pts)
    return float(np.mean(np.abs(us + ui)))


# ---------------------------------------------------------------------------
# Circle oracle
# ---------------------------------------------------------------------------
def mie_density(radius: float, k: float, wave: PlaneWave,
                truncation: int | None = None, center=(0.0, 0.0)):
    """Analytic sound-soft density on a circle for a plane wave.

    Returns a vectorized callable t -> density on the standard circle
    parameterization (cos 2 pi t, sin 2 pi t) scaled by ``radius`` around
    ``center``. Derived from the Dirichlet condition on the cylindrical
    mode expansion; the cross-mode Wronskian collapses each coefficient to
    2i / (pi a H_n(ka)).
    """
    if not isinstance(wave, PlaneWave):
        raise AnalysisError("the circle oracle is defined for plane waves")
    ka = k * radius
    m = int(np.ceil(ka)) + 30 if truncation is None else int(truncation)
    if m < ka + 20:
        raise AnalysisError("series truncation must be at least ka + 20")
    d = np.asarray(wave.direction, dtype=float)
    alpha = np.arctan2(d[1], d[0])
    orders = np.arange(-m, m + 1)
    hn = special.hankel1(orders, ka)
    tail = abs(2.0 / (np.pi * radius * hn[-1]))
    scale = np.max(np.abs(2.0 / (np.pi * radius * hn)))
    if tail > 1e-12 * scale:
        warnings.warn("circle oracle truncation tail above 1e-12 of the peak term",
                      RuntimeWarning, stacklevel=2)
    phase_c = np.exp(1j * k * (d[0] * center[0] + d[1] * center[1]))
    i_pow = 1j ** np.mod(orders, 4)
    coeff = wave.amplitude * phase_c * (2j / (np.pi * radius)) * i_pow / hn

    def density(t):
        theta = 2.0 * np.pi * np.asarray(t, dtype=float)
        return np.exp(1j * (theta[..., None] - alpha) * orders) @ coeff

    return density


def sparsity_stats(M: SparseComplexMatrix) -> dict:
    """nnz count, fill fraction, and per-row extrema."""
    rows = M.row_nnz()
    return {
        "nnz": int(M.nnz),
        "fraction": M.nnz_fraction(),
        "row_min": int(rows.min()),
        "row_max": int(rows.max()),
    }
