"""Bessel functions and the free-space kernel against independent oracles."""

import math

import mpmath as mp
import numpy as np
import pytest

import sparsebem as sb
from sparsebem.kernel import KernelError, bessel, greens_function, KernelEval

mp.mp.dps = 40


def _j0_series(x: float) -> float:
    """Power-series oracle for J0, summed in 40-digit arithmetic."""
    xm = mp.mpf(x)
    total = mp.mpf(0)
    for m in range(80):
        total += (-1) ** m * (xm / 2) ** (2 * m) / mp.factorial(m) ** 2
    return float(total)


def _y0_series(x: float) -> float:
    """Series-with-log oracle for Y0 in high precision.

    Y0 = (2/pi)[(log(x/2) + gamma) J0(x) + sum_{m>=1} (-1)^{m+1} H_m (x/2)^{2m}/(m!)^2].
    """
    xm = mp.mpf(x)
    j0 = mp.mpf(_j0_series(x))
    total = mp.mpf(0)
    harmonic = mp.mpf(0)
    for m in range(1, 80):
        harmonic += mp.mpf(1) / m
        total += (-1) ** (m + 1) * harmonic * (xm / 2) ** (2 * m) / mp.factorial(m) ** 2
    val = (2 / mp.pi) * ((mp.log(xm / 2) + mp.euler) * j0 + total)
    return float(val)


# Frozen from the 40-digit oracles above.
J0_AT_1 = 0.7651976865579666
Y0_AT_1 = 0.0882569642156770
GREENS_K1_R1 = -0.022064241053919239 + 0.191299421639491638j


def test_j0_frozen_value_matches_series_oracle():
    assert abs(_j0_series(1.0) - J0_AT_1) < 1e-15
    assert abs(bessel("J", 0, 1.0) - J0_AT_1) < 1e-10


def test_y0_frozen_value_matches_series_oracle():
    assert abs(_y0_series(1.0) - Y0_AT_1) < 1e-14
    assert abs(bessel("Y", 0, 1.0) - Y0_AT_1) < 1e-10


def test_j0_at_zero():
    assert bessel("J", 0, 0.0) == 1.0


def test_bessel_against_high_precision_sample():
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = float(rng.uniform(0.05, 50.0))
        n = int(rng.integers(0, 8))
        assert abs(bessel("J", n, x) - float(mp.besselj(n, x))) <= 1e-10 * max(1.0, abs(float(mp.besselj(n, x))))
        assert abs(bessel("Y", n, x) - float(mp.bessely(n, x))) <= 1e-10 * max(1.0, abs(float(mp.bessely(n, x))))


def test_bessel_large_argument_relative_accuracy():
    for x in (100.0, 1234.5, 9876.0):
        ref = float(mp.besselj(0, x))
        assert abs(bessel("J", 0, x) - ref) <= 1e-10 * max(abs(ref), 1e-3)


def test_y_at_zero_rejected():
    with pytest.raises(KernelError):
        bessel("Y", 0, 0.0)


def test_order_out_of_range_rejected():
    with pytest.raises(KernelError):
        bessel("J", 201, 1.0)
    with pytest.raises(KernelError):
        bessel("J", -1, 1.0)


def test_wronskian_identity():
    # J0 Y0' - J0' Y0 = 2/(pi x), derivatives via J0' = -J1, Y0' = -Y1
    rng = np.random.default_rng(3)
    xs = rng.uniform(0.01, 100.0, size=50)
    for x in xs:
        w = bessel("J", 0, x) * (-bessel("Y", 1, x)) - (-bessel("J", 1, x)) * bessel("Y", 0, x)
        assert abs(w - 2.0 / (math.pi * x)) <= 1e-9 * abs(2.0 / (math.pi * x))


def test_upward_recurrence():
    rng = np.random.default_rng(5)
    for _ in range(25):
        x = float(rng.uniform(1.0, 100.0))
        n = int(rng.integers(1, 51))
        lhs = bessel("J", n + 1, x)
        rhs = (2.0 * n / x) * bessel("J", n, x) - bessel("J", n - 1, x)
        assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), 1e-6)


def test_greens_frozen_value():
    val = greens_function(1.0, (0.0, 0.0), (1.0, 0.0))
    assert abs(val - GREENS_K1_R1) < 1e-9
    # composition from the Bessel ops
    ref = 0.25j * (bessel("J", 0, 1.0) + 1j * bessel("Y", 0, 1.0))
    assert abs(val - ref) < 1e-14


def test_greens_symmetry():
    rng = np.random.default_rng(11)
    for _ in range(10):
        x = rng.uniform(-2, 2, 2)
        y = rng.uniform(-2, 2, 2)
        if np.allclose(x, y):
            continue
        assert greens_function(3.0, x, y) == pytest.approx(greens_function(3.0, y, x))


def test_greens_log_blowup_near_coincidence():
    vals = [abs(greens_function(1.0, (0.0, 0.0), (r, 0.0))) for r in (1e-2, 1e-6, 1e-12)]
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] > 4.0  # ~ |log r| / (2 pi) keeps growing


def test_greens_coincident_rejected():
    with pytest.raises(KernelError):
        greens_function(1.0, (0.5, 0.5), (0.5, 0.5))


def test_greens_scaling_invariance():
    # K depends on k * distance only
    x, y = np.array([0.3, -0.4]), np.array([1.1, 0.9])
    a = greens_function(2.0, x, y)
    b = greens_function(1.0, 2.0 * x, 2.0 * y)
    assert a == pytest.approx(b, rel=1e-14)


def test_param_kernel_circle(circle_scene):
    ev = KernelEval(circle_scene, 1.0)
    # distance between antipodal points is 2, speed is 2 pi
    val = ev.param_kernel((0, 0.0), (0, 0.5))
    ref = greens_function(1.0, (1.0, 0.0), (-1.0, 0.0)) * 2.0 * math.pi
    assert abs(val - ref) < 1e-13


def test_param_kernel_symmetry(circle_scene):
    ev = KernelEval(circle_scene, 4.0)
    rng = np.random.default_rng(2)
    for _ in range(5):
        t, u = rng.uniform(0, 1, 2)
        a = ev.param_kernel((0, t), (0, u)) / circle_scene.speed(0, u)
        b = ev.param_kernel((0, u), (0, t)) / circle_scene.speed(0, t)
        assert abs(a - b) < 1e-13 * max(1.0, abs(a))


def test_param_kernel_diagonal_rejected(circle_scene):
    ev = KernelEval(circle_scene, 4.0)
    with pytest.raises(KernelError):
        ev.param_kernel((0, 0.25), (0, 0.25))


def test_helmholtz_residual_finite_difference():
    # (lap + k^2) applied to the kernel via 5-point stencil, away from the source
    for k in (1.0, 5.0, 20.0):
        h = 1e-3 / k
        y = np.array([0.0, 0.0])
        x = np.array([1.5 * 2 * math.pi / k + 1.0, 0.4])  # > 1 wavelength away

        def g(p):
            return greens_function(k, p, y)

        lap = (g(x + [h, 0]) + g(x - [h, 0]) + g(x + [0, h]) + g(x - [0, h])
               - 4.0 * g(x)) / h**2
        resid = abs(lap + k**2 * g(x))
        assert resid <= 1e-4 * abs(g(x))
