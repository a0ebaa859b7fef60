"""Sparsification of the collocation matrix by windowing the kernel.

A solve at a moderate wavenumber yields localized correlation magnitudes:
each row of the matrix is multiplied against the solution through a sliding
window, revealing which boundary regions actually contribute to that row's
oscillatory integral. Rows are thresholded, plateaus are built over the
retained window centers, the kernel singularity is always kept, and matrix
entries are rescaled by the resulting smooth weight. In a frequency sweep
the correlations are recomputed on the surviving pattern at every doubling
of the wavenumber, shrinking the windows as oscillations localize further.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from sparsebem.analysis import MetricsRecord, boundary_residual, solution_error
from sparsebem.discretization import (
    Discretization,
    assemble_matrix,
    assemble_partial_row,
    assemble_rhs,
    discretize,
)
from sparsebem.geometry import IncidentWave, Scene
from sparsebem.solve import SolveReport, SolverError, dense_solve, gmres, sparse_direct_solve
from sparsebem.sparse import SparseComplexMatrix
from sparsebem.windows import (
    CompoundWindow,
    ElementaryWindow,
    FULL_WINDOW,
    WindowSet,
    cyclic_runs,
    eval_chi,
    merge_windows,
    singularity_window,
)

DENSE_SOLVER_LIMIT = 3000
MIN_SWEEP_START_SIZE = 64


class CompressionError(ValueError):
    """Invalid compression request."""


class SweepAbort(RuntimeError):
    """Solver failure inside a frequency sweep; completed stages attached."""

    def __init__(self, message: str, results: list):
        super().__init__(message)
        self.results = results


@dataclass(frozen=True)
class CorrelationConfig:
    """Sliding-window geometry and thresholding parameters."""

    T: float = 0.02
    xi: float = 0.003
    centers_per_point: float = 1.5

    def __post_init__(self):
        if not 0.0 < self.T < 0.25:
            raise CompressionError("sliding-window half-width must lie in (0, 0.25)")
        if not 0.0 < self.xi < 1.0:
            raise CompressionError("threshold percentage must lie in (0, 1)")
        if self.centers_per_point <= 1.0:
            raise CompressionError("need more centers than collocation points")


def sliding_window(tau, sigma: float, T: float):
    """Pure-decay bump around a center: 1 at the center, 0 beyond distance T."""
    if T <= 0:
        raise CompressionError("sliding-window half-width must be positive")
    t = np.asarray(tau, dtype=float)
    delta = (t - sigma + 0.5) % 1.0 - 0.5
    out = eval_chi(delta, -T, 0.0, 0.0, T)
    return float(out) if np.isscalar(tau) else out


@dataclass
class CorrelationMatrix:
    """Localized correlation magnitudes: rows follow the collocation grid,
    columns are sliding-window centers (about 1.5 per collocation point)."""

    R: np.ndarray
    center_obstacle: np.ndarray
    center_param: np.ndarray
    row_obstacle: np.ndarray
    row_param: np.ndarray
    k: float
    computed: np.ndarray | None = None

    @property
    def n_rows(self) -> int:
        return self.R.shape[0]

    @property
    def n_centers(self) -> int:
        return self.R.shape[1]

    def center_slice(self, p: int) -> slice:
        idx = np.nonzero(self.center_obstacle == p)[0]
        return slice(int(idx[0]), int(idx[-1]) + 1)

    def save_grid(self, path) -> None:
        """Dense text grid of magnitudes for plotting (rows x centers)."""
        np.savetxt(path, np.abs(self.R), header=f"{self.n_rows} {self.n_centers}")


def correlation_centers(disc: Discretization, cfg: CorrelationConfig):
    """Uniform center grid per obstacle with ceil(1.5 N_p) points."""
    obs, par = [], []
    for p in range(disc.scene.n_obstacles):
        n_p = disc.basis.counts[p]
        q_p = int(math.ceil(cfg.centers_per_point * n_p))
        obs.append(np.full(q_p, p))
        par.append(np.arange(q_p) / q_p)
    return np.concatenate(obs), np.concatenate(par)


def _weight_operator(disc: Discretization, cfg: CorrelationConfig,
                     c: np.ndarray, center_obs, center_par,
                     weight_fn=None) -> sp.csc_matrix:
    """Sparse (n x q) operator with entries zeta(t_l - sigma_q) c_l."""
    n = disc.n
    q_total = len(center_par)
    blocks_r, blocks_c, blocks_v = [], [], []
    for p in range(disc.scene.n_obstacles):
        rows = np.nonzero(disc.row_obstacle == p)[0]
        cols = np.nonzero(center_obs == p)[0]
        t = disc.row_param[rows]
        s = center_par[cols]
        delta = (t[:, None] - s[None, :] + 0.5) % 1.0 - 0.5
        if weight_fn is None:
            mask = np.abs(delta) < cfg.T
            w = np.zeros_like(delta)
            if np.any(mask):
                w[mask] = eval_chi(delta[mask], -cfg.T, 0.0, 0.0, cfg.T)
        else:
            w = np.asarray(weight_fn(delta), dtype=float)
            mask = w != 0.0
        ii, jj = np.nonzero(mask)
        blocks_r.append(rows[ii])
        blocks_c.append(cols[jj])
        blocks_v.append(w[ii, jj] * c[rows[ii]])
    rows = np.concatenate(blocks_r)
    cols = np.concatenate(blocks_c)
    vals = np.concatenate(blocks_v)
    return sp.csc_matrix((vals, (rows, cols)), shape=(n, q_total))


def compute_correlations(M, c: np.ndarray, disc: Discretization,
                         cfg: CorrelationConfig, mask: np.ndarray | None = None,
                         weight_fn=None) -> CorrelationMatrix:
    """Correlation matrix R[n, q] = sum_l zeta(t_l - sigma_q) M[n, l] c[l].

    ``M`` is the dense matrix or a SparseComplexMatrix (only stored entries
    enter the sum). With ``mask`` given, entries flagged False are not
    reported (set to exactly zero); ``weight_fn`` replaces the sliding
    window for diagnostics (e.g. a constant weight collapses every column
    to the plain matrix-vector product).
    """
    if len(c) != disc.n:
        raise CompressionError("solution vector length must match the system size")
    center_obs, center_par = correlation_centers(disc, cfg)
    W = _weight_operator(disc, cfg, np.asarray(c, dtype=complex),
                         center_obs, center_par, weight_fn)
    if isinstance(M, SparseComplexMatrix):
        R = np.asarray((M.to_csr() @ W).todense())
    else:
        M = np.asarray(M)
        if M.shape != (disc.n, disc.n):
            raise CompressionError("matrix shape does not match the discretization")
        R = (W.T @ M.T).T  # scipy sparse @ dense, avoids densifying W
        R = np.asarray(R)
    computed = None
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != R.shape:
            raise CompressionError("correlation mask shape mismatch")
        R = np.where(mask, R, 0.0)
        computed = mask
    return CorrelationMatrix(R=R, center_obstacle=center_obs, center_param=center_par,
                             row_obstacle=disc.row_obstacle.copy(),
                             row_param=disc.row_param.copy(), k=disc.k,
                             computed=computed)


def correlation_mask(ws: WindowSet, disc: Discretization,
                     cfg: CorrelationConfig) -> np.ndarray:
    """Centers inside the matched row's current window support."""
    center_obs, center_par = correlation_centers(disc, cfg)
    mask = np.zeros((disc.n, len(center_par)), dtype=bool)
    col_cache: dict[tuple[int, int], np.ndarray] = {}
    for p in range(disc.scene.n_obstacles):
        rows = np.nonzero(disc.row_obstacle == p)[0]
        matched = ws.match_rows(p, disc.row_param[rows])
        for row, m in zip(rows, matched):
            for q in range(disc.scene.n_obstacles):
                key = (int(m), q)
                if key not in col_cache:
                    cols = np.nonzero(center_obs == q)[0]
                    col_cache[key] = ws.window(int(m), q).contains(center_par[cols])
                cols = np.nonzero(center_obs == q)[0]
                mask[row, cols] = col_cache[key]
    return mask


# ---------------------------------------------------------------------------
# Window synthesis from correlations
# ---------------------------------------------------------------------------
def _clip_window(w: ElementaryWindow, intervals) -> ElementaryWindow | None:
    """Clip a window to the support interval containing its plateau."""
    mid = 0.5 * (w.l + w.r)
    for lo, hi in intervals:
        if (mid - lo) % 1.0 <= hi - lo:
            shift = mid - (lo + (mid - lo) % 1.0)
            lo, hi = lo + shift, hi + shift
            lam = max(w.lam, lo)
            rho = min(w.rho, hi)
            l = min(max(w.l, lam), w.r)
            r = max(min(w.r, rho), l)
            eps = 1e-9
            if l - lam <= 0.0:
                l = min(lam + eps, r) if lam + eps < rho else l
                lam = l - eps
            if rho - r <= 0.0:
                r = max(rho - eps, l)
                rho = r + eps
            if not (lam < l <= r < rho):
                return None
            return ElementaryWindow(lam, l, r, rho)
    return None


def windows_from_correlations(R: CorrelationMatrix, cfg: CorrelationConfig,
                              disc: Discretization,
                              clip_to: WindowSet | None = None) -> WindowSet:
    """Threshold each correlation row and synthesize smooth windows.

    Centers above ``xi`` times the row maximum form plateaus over maximal
    runs, with decay length T on each side; the kernel-singularity window
    around the row's own parameter is always added so the compressed matrix
    keeps full rank. With ``clip_to`` given (refinement during a sweep),
    synthesized windows are clipped to the matched previous support so the
    new set never grows.
    """
    mags = np.abs(R.R)
    n = R.n_rows
    rows: list[tuple[CompoundWindow, ...]] = []
    prev_rows = None
    if clip_to is not None:
        prev_rows = [clip_to.match_row(int(R.row_obstacle[i]), float(R.row_param[i]))
                     for i in range(n)]
    per_obs_cols = [np.nonzero(R.center_obstacle == p)[0]
                    for p in range(disc.scene.n_obstacles)]
    for i in range(n):
        rowmax = float(mags[i].max())
        thresh = cfg.xi * rowmax
        own = int(R.row_obstacle[i])
        per_obstacle: list[CompoundWindow] = []
        for p in range(disc.scene.n_obstacles):
            cols = per_obs_cols[p]
            sigma = R.center_param[cols]
            q_p = len(cols)
            windows: list[ElementaryWindow] = []
            full = False
            if rowmax > 0.0:
                retained = mags[i, cols] >= thresh
                for start, length in cyclic_runs(retained):
                    if length == q_p:
                        full = True
                        break
                    lo = sigma[start]
                    hi = sigma[(start + length - 1) % q_p]
                    if hi < lo:
                        hi += 1.0
                    if hi - lo + 2.0 * cfg.T >= 1.0:
                        full = True
                        break
                    windows.append(ElementaryWindow(lo - cfg.T, lo, hi, hi + cfg.T))
            if p == own:
                windows.append(singularity_window(float(R.row_param[i]), cfg.T))
            if full:
                cw = FULL_WINDOW
            else:
                if clip_to is not None:
                    prev = clip_to.window(prev_rows[i], p)
                    if not prev.full:
                        intervals = prev.support_intervals()
                        clipped = []
                        for w in windows:
                            cw_ = _clip_window(w, intervals)
                            if cw_ is not None:
                                clipped.append(cw_)
                        if p == own and not clipped:
                            clipped = [singularity_window(float(R.row_param[i]), cfg.T)]
                        windows = clipped
                cw = merge_windows(windows)
            per_obstacle.append(cw)
        rows.append(tuple(per_obstacle))
    return WindowSet(R.row_obstacle.copy(), R.row_param.copy(),
                     disc.scene.n_obstacles, rows)


# ---------------------------------------------------------------------------
# Compressed matrices
# ---------------------------------------------------------------------------
def _row_weights(ws: WindowSet, matched: int, disc: Discretization,
                 cache: dict) -> np.ndarray:
    """Window weight at every column's support center for one matched row."""
    if matched in cache:
        return cache[matched]
    w = np.empty(disc.n)
    for p in range(disc.scene.n_obstacles):
        sl = disc.obstacle_slice(p)
        w[sl] = ws.window(matched, p).eval(disc.col_param[sl])
    cache[matched] = w
    return w


def _matched_rows(ws: WindowSet, disc: Discretization) -> np.ndarray:
    out = np.empty(disc.n, dtype=int)
    for p in range(disc.scene.n_obstacles):
        rows = np.nonzero(disc.row_obstacle == p)[0]
        out[rows] = ws.match_rows(p, disc.row_param[rows])
    return out


def compress(A: np.ndarray, ws: WindowSet, disc: Discretization,
             hard: bool = False) -> SparseComplexMatrix:
    """Rescale dense entries by the window weight at the column's center.

    Entries with zero weight are dropped; plateau entries are stored
    bit-identical to the dense ones. ``hard=True`` keeps retained entries
    unmodified (block-window truncation, used in degradation experiments).
    """
    A = np.asarray(A)
    if A.shape != (disc.n, disc.n):
        raise CompressionError("matrix shape does not match the discretization")
    matched = _matched_rows(ws, disc)
    cache: dict[int, np.ndarray] = {}
    rows = []
    for i in range(disc.n):
        w = _row_weights(ws, int(matched[i]), disc, cache)
        cols = np.nonzero(w > 0.0)[0]
        if hard:
            vals = A[i, cols].copy()
        else:
            vals = np.where(w[cols] == 1.0, A[i, cols], w[cols] * A[i, cols])
        rows.append((cols, vals))
    return SparseComplexMatrix.from_rows(disc.n, rows)


def block_window_truncation(A: np.ndarray, ws: WindowSet,
                            disc: Discretization) -> SparseComplexMatrix:
    """Hard truncation: same pattern as :func:`compress`, entries unweighted."""
    return compress(A, ws, disc, hard=True)


def assemble_compressed(disc: Discretization, ws: WindowSet) -> SparseComplexMatrix:
    """Assemble only the entries inside the windows, already rescaled.

    Equivalent to compressing a dense assembly but never computes the
    dropped entries, which is where the sweep saves its time.
    """
    matched = _matched_rows(ws, disc)
    cache: dict[int, np.ndarray] = {}
    rows = []
    for i in range(disc.n):
        w = _row_weights(ws, int(matched[i]), disc, cache)
        active = w > 0.0
        row = assemble_partial_row(disc, int(disc.row_obstacle[i]),
                                   float(disc.row_param[i]), active)
        cols = np.nonzero(active)[0]
        vals = np.where(w[cols] == 1.0, row[cols], w[cols] * row[cols])
        rows.append((cols, vals))
    return SparseComplexMatrix.from_rows(disc.n, rows)


# ---------------------------------------------------------------------------
# Frequency sweep with adaptive recompression
# ---------------------------------------------------------------------------
@dataclass
class SweepPlan:
    """Strictly increasing wavenumbers with per-stage solver choices."""

    ks: tuple
    ppw: float = 10.0
    degree: int = 1
    solver: str | tuple = "direct"
    gmres_tol: float = 1e-5
    dense_compare: bool = False
    dense_cap: int = DENSE_SOLVER_LIMIT
    seed: int = 0

    def __post_init__(self):
        ks = tuple(float(k) for k in self.ks)
        if len(ks) == 0:
            raise CompressionError("sweep plan needs at least one wavenumber")
        if any(k2 <= k1 for k1, k2 in zip(ks, ks[1:])):
            raise CompressionError("sweep wavenumbers must be strictly increasing")
        self.ks = ks

    def solver_for(self, stage: int) -> str:
        if isinstance(self.solver, str):
            return self.solver
        return self.solver[stage]


@dataclass
class SweepStage:
    """Per-wavenumber sweep output.

    ``window_set`` is the set used to assemble this stage's matrix;
    ``refined_window_set`` is the shrunk set produced here when the stage
    was a recorrelation checkpoint (consumed by later stages).
    """

    k: float
    disc: Discretization
    matrix: SparseComplexMatrix
    solution: np.ndarray
    report: SolveReport
    window_set: WindowSet
    metrics: MetricsRecord
    correlations: CorrelationMatrix | None = None
    recorrelated: bool = False
    refined_window_set: WindowSet | None = None
    dense_solution: np.ndarray | None = None


def _solve_stage(M: SparseComplexMatrix, b: np.ndarray, solver: str,
                 tol: float) -> SolveReport:
    if solver == "gmres":
        rep = gmres(M, b, tol=tol)
        if not rep.converged:
            raise SolverError(f"gmres stalled at residual {rep.residual:.3e}")
        return rep
    if M.n <= DENSE_SOLVER_LIMIT:
        return dense_solve(M.to_dense(), b)
    return sparse_direct_solve(M, b)


def recompression_sweep(plan: SweepPlan, scene: Scene, wave: IncidentWave,
                        cfg: CorrelationConfig | None = None,
                        residual_seed: int | None = None) -> list[SweepStage]:
    """Run the full sweep: dense start, then windowed assembly per stage.

    The first wavenumber is solved densely and correlated in full. Each
    later stage assembles only windowed entries and solves the sparse
    system; whenever the wavenumber has doubled since the last correlation
    pass, correlations are recomputed on the surviving pattern (using the
    compressed matrix and its solution), re-thresholded, and the windows
    shrink. Solver failure aborts with the completed stages attached.
    """
    cfg = cfg or CorrelationConfig()
    seed = plan.seed if residual_seed is None else residual_seed
    results: list[SweepStage] = []

    disc1 = discretize(scene, plan.ks[0], plan.ppw, plan.degree)
    if disc1.n < MIN_SWEEP_START_SIZE:
        raise CompressionError(
            f"sweep start size {disc1.n} below minimum {MIN_SWEEP_START_SIZE}")
    t0 = time.perf_counter()
    A = assemble_matrix(disc1)
    t_asm = time.perf_counter() - t0
    b = assemble_rhs(disc1, wave)
    dense_rep = dense_solve(A, b)
    R = compute_correlations(A, dense_rep.solution, disc1, cfg)
    ws = windows_from_correlations(R, cfg, disc1)

    tilde = compress(A, ws, disc1)
    try:
        rep = _solve_stage(tilde, b, plan.solver_for(0), plan.gmres_tol)
    except SolverError as exc:
        raise SweepAbort(f"solver failed at k={plan.ks[0]}: {exc}", results) from exc
    metrics = MetricsRecord(
        k=plan.ks[0], n=disc1.n, nnz_fraction=tilde.nnz_fraction(),
        residual_dense=boundary_residual(disc1, dense_rep.solution, wave, seed),
        residual_compressed=boundary_residual(disc1, rep.solution, wave, seed),
        coef_error=solution_error(dense_rep.solution, rep.solution),
        gmres_iterations_compressed=rep.iterations,
        timings={"assemble": t_asm, "solve": rep.wall_time,
                 "dense_solve": dense_rep.wall_time},
    )
    results.append(SweepStage(k=plan.ks[0], disc=disc1, matrix=tilde,
                              solution=rep.solution, report=rep, window_set=ws,
                              metrics=metrics, correlations=R, recorrelated=True,
                              refined_window_set=ws,
                              dense_solution=dense_rep.solution))
    k_last_corr = plan.ks[0]

    for stage_idx, k in enumerate(plan.ks[1:], start=1):
        disc = discretize(scene, k, plan.ppw, plan.degree)
        t0 = time.perf_counter()
        tilde = assemble_compressed(disc, ws)
        t_asm = time.perf_counter() - t0
        b = assemble_rhs(disc, wave)
        try:
            rep = _solve_stage(tilde, b, plan.solver_for(stage_idx), plan.gmres_tol)
        except SolverError as exc:
            raise SweepAbort(f"solver failed at k={k}: {exc}", results) from exc

        metrics = MetricsRecord(
            k=k, n=disc.n, nnz_fraction=tilde.nnz_fraction(),
            residual_compressed=boundary_residual(disc, rep.solution, wave, seed),
            gmres_iterations_compressed=rep.iterations,
            timings={"assemble": t_asm, "solve": rep.wall_time},
        )
        dense_sol = None
        if plan.dense_compare and disc.n <= plan.dense_cap:
            Ad = assemble_matrix(disc)
            dense_rep = dense_solve(Ad, b)
            dense_sol = dense_rep.solution
            metrics.residual_dense = boundary_residual(disc, dense_sol, wave, seed)
            metrics.coef_error = solution_error(dense_sol, rep.solution)
            metrics.timings["dense_solve"] = dense_rep.wall_time

        stage = SweepStage(k=k, disc=disc, matrix=tilde, solution=rep.solution,
                           report=rep, window_set=ws, metrics=metrics,
                           dense_solution=dense_sol)
        if k >= 2.0 * k_last_corr * (1.0 - 1e-12):
            t0 = time.perf_counter()
            mask = correlation_mask(ws, disc, cfg)
            R = compute_correlations(tilde, rep.solution, disc, cfg, mask=mask)
            ws = windows_from_correlations(R, cfg, disc, clip_to=ws)
            metrics.timings["correlate"] = time.perf_counter() - t0
            stage.correlations = R
            stage.recorrelated = True
            stage.refined_window_set = ws
            k_last_corr = k
        results.append(stage)
    return results
