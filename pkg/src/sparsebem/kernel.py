"""Cylindrical Bessel functions and the 2D Helmholtz kernel.

The free-space kernel is (i/4) H0^(1)(k |x - y|), the outgoing fundamental
solution under the exp(-i omega t) time convention. In the parameter domain
the kernel picks up the speed of the integration variable's curve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import special

if TYPE_CHECKING:
    from sparsebem.geometry import GlobalParam, Scene

MAX_BESSEL_ORDER = 200
KERNEL_CONSTANT = 0.25j


class KernelError(ValueError):
    """Invalid kernel evaluation request."""


def bessel(kind: str, order: int, x):
    """Bessel function J_n or Y_n of nonnegative integer order.

    Parameters
    ----------
    kind : {"J", "Y"}
    order : int
        0 <= order <= 200.
    x : float or ndarray
        x >= 0 for J; x > 0 for Y (Y is singular at the origin).

    Returns
    -------
    float or ndarray
    """
    if kind not in ("J", "Y"):
        raise KernelError(f"bessel kind must be 'J' or 'Y', got {kind!r}")
    if not (isinstance(order, (int, np.integer)) and 0 <= order <= MAX_BESSEL_ORDER):
        raise KernelError(f"order {order} outside supported range [0, {MAX_BESSEL_ORDER}]")
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise KernelError("bessel argument must be finite")
    if kind == "J":
        if np.any(arr < 0):
            raise KernelError("J requires x >= 0")
        out = special.jv(order, arr)
    else:
        if np.any(arr <= 0):
            raise KernelError("Y is singular at x = 0 and undefined for x < 0")
        out = special.yv(order, arr)
    return float(out) if np.isscalar(x) else out


def hankel1_0(x):
    """H0^(1)(x) = J0(x) + i Y0(x) for x > 0 (vectorized)."""
    return special.hankel1(0, x)


def greens_of_distance(k: float, r):
    """Kernel value (i/4) H0^(1)(k r) as a function of point distance r > 0."""
    return KERNEL_CONSTANT * special.hankel1(0, k * np.asarray(r))


def greens_function(k: float, x, y):
    """Outgoing 2D Helmholtz kernel (i/4) H0^(1)(k |x - y|).

    ``x`` and ``y`` are points or broadcastable arrays of points with a
    trailing axis of length 2. Coincident points are rejected (the kernel
    has a logarithmic singularity there).
    """
    if not (np.isfinite(k) and k > 0):
        raise KernelError("wavenumber must be positive and finite")
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    diff = xa - ya
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    if np.any(r == 0.0):
        raise KernelError("kernel is singular at coincident points")
    out = greens_of_distance(k, r)
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class KernelEval:
    """Kernel in the parameter domain of a fixed scene and wavenumber."""

    scene: "Scene"
    k: float

    def param_kernel(self, t: "GlobalParam", tau: "GlobalParam") -> complex:
        """Kernel between boundary parameters, weighted by the target speed.

        Returns greens_function(k, kappa(t), kappa(tau)) * speed(tau); the
        diagonal t == tau is singular and rejected.
        """
        (p, tp) = t
        (q, tq) = tau
        x = self.scene.position(p, tp)
        y = self.scene.position(q, tq)
        if np.all(x == y):
            raise KernelError("param_kernel is singular on the diagonal")
        return complex(greens_function(self.k, x, y) * self.scene.speed(q, tq))


def param_kernel(ev: KernelEval, t, tau) -> complex:
    return ev.param_kernel(t, tau)
