"""Field evaluation, residuals, the circle oracle, and metrics records."""

import numpy as np
import pytest
from scipy import special

import sparsebem as sb
from sparsebem.analysis import (
    AnalysisError,
    MetricsRecord,
    boundary_residual,
    interior_points,
    interior_total_field,
    mie_density,
    scattered_field,
    solution_error,
    sparsity_stats,
)
from sparsebem.sparse import SparseComplexMatrix


def test_scattered_field_zero_density(circle_k16):
    disc, _, _, _ = circle_k16
    pts = np.array([[0.2, 0.1], [3.0, 0.0]])
    assert np.all(scattered_field(disc, np.zeros(disc.n, dtype=complex), pts) == 0.0)


def test_scattered_field_linearity(circle_k16):
    disc, _, _, c = circle_k16
    pts = np.array([[0.3, -0.2], [2.5, 1.0]])
    u1 = scattered_field(disc, c, pts)
    u2 = scattered_field(disc, (2.0 - 1.0j) * c, pts)
    assert np.allclose(u2, (2.0 - 1.0j) * u1)


def test_scattered_field_rejects_near_boundary(circle_k16):
    disc, _, _, c = circle_k16
    with pytest.raises(AnalysisError):
        scattered_field(disc, c, np.array([[1.0001, 0.0]]))


def test_interior_extinction_circle_k32(circle_k32, plane_wave_x):
    # interior total field of a sound-soft scatterer vanishes; at ppw=10 the
    # discretization error dominates and stays below 1e-2 of the unit wave
    disc, _, _, c = circle_k32
    pts = interior_points(disc, 0, 20, seed=12)
    us = scattered_field(disc, c, pts)
    ui = sb.eval_incident(plane_wave_x, disc.k, pts)
    rel = np.abs(us + ui) / np.abs(ui).max()
    assert np.mean(rel) <= 1e-2


def test_interior_points_are_interior(circle_k16):
    disc, _, _, _ = circle_k16
    pts = interior_points(disc, 0, 50, seed=3)
    assert len(pts) == 50
    assert np.all(np.hypot(pts[:, 0], pts[:, 1]) < 1.0)


def test_boundary_residual_converged_dense(circle_k32, plane_wave_x):
    disc, _, _, c = circle_k32
    assert boundary_residual(disc, c, plane_wave_x, seed=0) <= 5e-3


def test_boundary_residual_deterministic(circle_k16, plane_wave_x):
    disc, _, _, c = circle_k16
    a = boundary_residual(disc, c, plane_wave_x, seed=42)
    b = boundary_residual(disc, c, plane_wave_x, seed=42)
    assert a == b
    c2 = boundary_residual(disc, c, plane_wave_x, seed=43)
    assert a != c2


# ---------------------------------------------------------------------------
# Circle density oracle
# ---------------------------------------------------------------------------
def test_mie_series_tail_decays():
    k, a = 16.0, 1.0
    m = int(k * a) + 30
    orders = np.arange(m - 2, m + 1)
    terms = np.abs(2.0 / (np.pi * a * special.hankel1(orders, k * a)))
    assert terms[-1] < 1e-12
    assert terms[-1] < terms[0]


def test_mie_truncation_too_small_rejected():
    with pytest.raises(AnalysisError):
        mie_density(1.0, 16.0, sb.PlaneWave((1.0, 0.0)), truncation=20)


def test_mie_matches_dense_bem(circle_k16, plane_wave_x):
    disc, _, _, c = circle_k16
    oracle = mie_density(1.0, disc.k, plane_wave_x)
    v_ref = oracle(disc.row_param)
    err = np.linalg.norm(c - v_ref) / np.linalg.norm(v_ref)
    assert err <= 2e-2


def test_mie_reflection_symmetry():
    # direction (1, 0): configuration symmetric under theta -> -theta
    oracle = mie_density(1.0, 12.0, sb.PlaneWave((1.0, 0.0)))
    t = np.linspace(0.01, 0.49, 25)
    assert np.allclose(oracle(t), oracle(1.0 - t), rtol=1e-10, atol=1e-12)


def test_mie_rotated_direction_consistency():
    # rotating the wave rotates the density
    t = np.linspace(0, 1, 32, endpoint=False)
    base = mie_density(1.0, 9.0, sb.PlaneWave((1.0, 0.0)))(t)
    quarter = mie_density(1.0, 9.0, sb.PlaneWave((0.0, 1.0)))((t + 0.25) % 1.0)
    assert np.allclose(base, quarter, rtol=1e-9, atol=1e-11)


# ---------------------------------------------------------------------------
# Stats and records
# ---------------------------------------------------------------------------
def test_sparsity_stats_full_matrix():
    A = np.ones((5, 5), dtype=complex)
    stats = sparsity_stats(SparseComplexMatrix.from_dense(A))
    assert stats["fraction"] == 1.0
    assert stats["row_min"] == stats["row_max"] == 5


def test_sparsity_stats_banded(circle_k16):
    disc, A, _, _ = circle_k16
    from sparsebem.windows import WindowSet, merge_windows, singularity_window
    from sparsebem.compression import compress
    T = 0.05
    rows = [(merge_windows([singularity_window(float(t), T)]),)
            for t in disc.row_param]
    ws = WindowSet(disc.row_obstacle, disc.row_param, 1, rows)
    M = compress(A, ws, disc)
    stats = sparsity_stats(M)
    # support has width 4T, so roughly 4 T n entries per row
    assert stats["row_max"] <= 4 * T * disc.n + 2
    assert stats["row_min"] >= 4 * T * disc.n - 2


def test_solution_error():
    a = np.array([1.0, 0.0, 0.0], dtype=complex)
    b = np.array([1.0, 0.1, 0.0], dtype=complex)
    assert solution_error(a, b) == pytest.approx(0.1)


def test_metrics_round_trip():
    rec = MetricsRecord(k=128.0, n=1280, nnz_fraction=0.25,
                        residual_dense=1.234e-4, residual_compressed=5.678e-4,
                        coef_error=0.01, interior_error=None,
                        cond_dense=1020.0, gmres_iterations_compressed=17,
                        timings={"assemble": 1.5, "solve": 0.25})
    back = MetricsRecord.from_text(rec.to_text())
    assert back == rec


def test_metrics_round_trip_without_timings():
    rec = MetricsRecord(k=64.0, n=640, residual_dense=3e-4)
    text = rec.to_text(include_timings=False)
    assert "timing" not in text
    back = MetricsRecord.from_text(text)
    assert back.k == rec.k and back.residual_dense == rec.residual_dense
