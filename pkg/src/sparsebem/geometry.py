"""Closed boundary curves, preset scattering scenes, and incident waves.

All curves are smooth maps kappa: [0, 1) -> R^2 with positive speed and
counterclockwise orientation, so the outward unit normal is the clockwise
rotation of the tangent. A scene is an ordered list of pairwise disjoint
curves; a global boundary parameter is the pair (obstacle index, local t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate

GlobalParam = tuple[int, float]

# Sample counts for construction-time validation.
VALIDATION_SAMPLES = 1024
SELF_INTERSECTION_SEGMENTS = 512

# Smoothed 5-lobe star: truncated triangle-wave radius, r(th) = base + amp * sum.
STAR_LOBES = 5
STAR_HARMONICS = (1, 3, 5)
STAR_AMPLITUDE = 0.22


class GeometryError(ValueError):
    """Invalid curve, scene, or wave parameters."""


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------
class ParamCurve:
    """Smooth closed curve on the periodic parameter domain [0, 1).

    Parameters
    ----------
    position : callable
        Vectorized map t -> points of shape (..., 2). Arguments are
        wrapped modulo 1 before evaluation.
    derivative : callable
        Vectorized derivative dkappa/dt with the same shape convention.
    name : str
        Label used in error messages.
    """

    def __init__(self, position: Callable, derivative: Callable, name: str = "curve"):
        self._position = position
        self._derivative = derivative
        self.name = name
        self._arc_length: float | None = None

    def pos(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float) % 1.0
        return self._position(t)

    def deriv(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float) % 1.0
        return self._derivative(t)

    def speed(self, t) -> np.ndarray:
        d = self.deriv(t)
        return np.sqrt(np.sum(d * d, axis=-1))

    def normal(self, t) -> np.ndarray:
        """Outward unit normal (clockwise rotation of the unit tangent)."""
        d = self.deriv(t)
        s = np.sqrt(np.sum(d * d, axis=-1))
        n = np.stack([d[..., 1], -d[..., 0]], axis=-1)
        return n / s[..., None]

    @property
    def arc_length(self) -> float:
        """Total arc length, by adaptive quadrature of the speed."""
        if self._arc_length is None:
            val, _ = integrate.quad(lambda t: float(self.speed(t)), 0.0, 1.0, limit=200)
            self._arc_length = val
        return self._arc_length

    def validate(self, samples: int = VALIDATION_SAMPLES) -> None:
        """Check regularity, unit normals, and the derivative map.

        Raises GeometryError if the speed vanishes at any sample, if normals
        are not unit length, or if the supplied derivative disagrees with a
        central finite difference.
        """
        t = np.linspace(0.0, 1.0, samples, endpoint=False)
        s = self.speed(t)
        if not np.all(np.isfinite(s)) or np.min(s) <= 0.0:
            raise GeometryError(f"{self.name}: speed must be positive everywhere")
        n = self.normal(t)
        err = np.abs(np.sqrt(np.sum(n * n, axis=-1)) - 1.0)
        if np.max(err) > 1e-12:
            raise GeometryError(f"{self.name}: normals not unit length")
        h = 1e-5
        fd = (self.pos(t + h) - self.pos(t - h)) / (2.0 * h)
        dev = np.max(np.sqrt(np.sum((fd - self.deriv(t)) ** 2, axis=-1)))
        if dev > 1e-3 * max(1.0, float(np.max(s))):
            raise GeometryError(f"{self.name}: derivative map inconsistent with positions")


def circle_curve(center=(0.0, 0.0), radius: float = 1.0, name: str = "circle") -> ParamCurve:
    if radius <= 0:
        raise GeometryError("circle radius must be positive")
    cx, cy = float(center[0]), float(center[1])
    two_pi = 2.0 * math.pi

    def position(t):
        th = two_pi * t
        return np.stack([cx + radius * np.cos(th), cy + radius * np.sin(th)], axis=-1)

    def derivative(t):
        th = two_pi * t
        return two_pi * radius * np.stack([-np.sin(th), np.cos(th)], axis=-1)

    return ParamCurve(position, derivative, name)


def ellipse_curve(center=(0.0, 0.0), rx: float = 1.0, ry: float = 0.5,
                  name: str = "ellipse") -> ParamCurve:
    if rx <= 0 or ry <= 0:
        raise GeometryError("ellipse radii must be positive")
    cx, cy = float(center[0]), float(center[1])
    two_pi = 2.0 * math.pi

    def position(t):
        th = two_pi * t
        return np.stack([cx + rx * np.cos(th), cy + ry * np.sin(th)], axis=-1)

    def derivative(t):
        th = two_pi * t
        return two_pi * np.stack([-rx * np.sin(th), ry * np.cos(th)], axis=-1)

    return ParamCurve(position, derivative, name)


def radial_curve(radius_fn: Callable, radius_deriv_fn: Callable, center=(0.0, 0.0),
                 name: str = "radial") -> ParamCurve:
    """Star-shaped curve r(theta) (cos theta, sin theta) + center, theta = 2 pi t."""
    cx, cy = float(center[0]), float(center[1])
    two_pi = 2.0 * math.pi

    def position(t):
        th = two_pi * t
        r = radius_fn(th)
        return np.stack([cx + r * np.cos(th), cy + r * np.sin(th)], axis=-1)

    def derivative(t):
        th = two_pi * t
        r = radius_fn(th)
        dr = radius_deriv_fn(th)
        c, s = np.cos(th), np.sin(th)
        return two_pi * np.stack([dr * c - r * s, dr * s + r * c], axis=-1)

    return ParamCurve(position, derivative, name)


# ---------------------------------------------------------------------------
# Scenes
# ---------------------------------------------------------------------------
@dataclass
class Scene:
    """Ordered collection of pairwise disjoint obstacles."""

    obstacles: list[ParamCurve]
    name: str = "scene"

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    def to_global(self, p: int, t: float) -> GlobalParam:
        if not 0 <= p < self.n_obstacles:
            raise GeometryError(f"obstacle index {p} out of range")
        return (p, float(t) % 1.0)

    def to_local(self, gp: GlobalParam) -> tuple[int, float]:
        p, t = gp
        if not 0 <= p < self.n_obstacles:
            raise GeometryError(f"obstacle index {p} out of range")
        return (p, float(t) % 1.0)

    def position(self, p: int, t) -> np.ndarray:
        return self.obstacles[p].pos(t)

    def speed(self, p: int, t) -> np.ndarray:
        return self.obstacles[p].speed(t)

    def normal(self, p: int, t) -> np.ndarray:
        return self.obstacles[p].normal(t)

    def min_pair_distance(self, samples: int = 100) -> float:
        """Minimum sampled distance between distinct obstacles (inf if single)."""
        best = math.inf
        t = np.linspace(0.0, 1.0, samples, endpoint=False)
        pts = [ob.pos(t) for ob in self.obstacles]
        for a in range(self.n_obstacles):
            for b in range(a + 1, self.n_obstacles):
                d = pts[a][:, None, :] - pts[b][None, :, :]
                best = min(best, float(np.sqrt(np.sum(d * d, axis=-1)).min()))
        return best

    def bounding_box(self, samples: int = 256) -> tuple[float, float, float, float]:
        t = np.linspace(0.0, 1.0, samples, endpoint=False)
        pts = np.concatenate([ob.pos(t) for ob in self.obstacles], axis=0)
        return (float(pts[:, 0].min()), float(pts[:, 0].max()),
                float(pts[:, 1].min()), float(pts[:, 1].max()))

    def diameter(self, samples: int = 256) -> float:
        x0, x1, y0, y1 = self.bounding_box(samples)
        return math.hypot(x1 - x0, y1 - y0)

    def boundary_distance(self, points: np.ndarray, samples: int = 2048) -> np.ndarray:
        """Sampled distance from each point (shape (m, 2)) to the boundary."""
        t = np.linspace(0.0, 1.0, samples, endpoint=False)
        pts = np.concatenate([ob.pos(t) for ob in self.obstacles], axis=0)
        d = points[:, None, :] - pts[None, :, :]
        return np.sqrt(np.sum(d * d, axis=-1)).min(axis=1)


def points_inside(scene: Scene, p: int, points: np.ndarray,
                  samples: int = 1024) -> np.ndarray:
    """Even-odd interiority test against a sampled polyline of obstacle p."""
    t = np.linspace(0.0, 1.0, samples, endpoint=False)
    poly = scene.position(p, t)
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    crosses = (y0[None, :] > py) != (y1[None, :] > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0[None, :] + (py - y0[None, :]) * (x1 - x0)[None, :] / (y1 - y0)[None, :]
    hits = crosses & (xint > px)
    return (np.sum(hits, axis=1) % 2) == 1


def segments_properly_intersect(a0, a1, b0, b1) -> np.ndarray:
    """Strict crossing test for open segments a0-a1 and b0-b1 (broadcasting)."""

    def cross(o, p, q):
        return ((p[..., 0] - o[..., 0]) * (q[..., 1] - o[..., 1])
                - (p[..., 1] - o[..., 1]) * (q[..., 0] - o[..., 0]))

    d1 = cross(b0, b1, a0)
    d2 = cross(b0, b1, a1)
    d3 = cross(a0, a1, b0)
    d4 = cross(a0, a1, b1)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def _check_self_intersection(curve: ParamCurve, segments: int = SELF_INTERSECTION_SEGMENTS) -> None:
    t = np.linspace(0.0, 1.0, segments, endpoint=False)
    p = curve.pos(t)
    q = curve.pos((t + 1.0 / segments) % 1.0)
    # All non-adjacent segment pairs.
    i, j = np.triu_indices(segments, k=2)
    wrap = (i == 0) & (j == segments - 1)
    i, j = i[~wrap], j[~wrap]
    hit = segments_properly_intersect(p[i], q[i], p[j], q[j])
    if np.any(hit):
        raise GeometryError(f"{curve.name}: parameters produce a self-intersecting curve")


def _validate_scene(scene: Scene) -> Scene:
    for ob in scene.obstacles:
        ob.validate()
        _check_self_intersection(ob)
    if scene.n_obstacles > 1 and scene.min_pair_distance() <= 0.0:
        raise GeometryError(f"{scene.name}: obstacles are not pairwise disjoint")
    return scene


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------
PRESET_NAMES = ("circle", "ellipse", "almost_convex", "nonconvex_polygon",
                "near_inclusion", "two_circles", "three_ellipses")


def _get_params(params: dict | None, defaults: dict, preset: str) -> dict:
    merged = dict(defaults)
    for key, val in (params or {}).items():
        if key not in defaults:
            raise GeometryError(f"unknown parameter {key!r} for preset {preset!r}")
        merged[key] = val
    return merged


def preset_scene(name: str, params: dict | None = None) -> Scene:
    """Build a named scattering scene.

    Parameters
    ----------
    name : str
        One of ``circle``, ``ellipse``, ``almost_convex``,
        ``nonconvex_polygon``, ``near_inclusion``, ``two_circles``,
        ``three_ellipses``.
    params : dict, optional
        Preset-specific overrides (e.g. ``radius``, ``center``). Unknown
        keys are rejected.

    Returns
    -------
    Scene
        Validated scene; construction fails on self-intersecting or
        overlapping geometry.
    """
    if name == "circle":
        p = _get_params(params, {"center": (0.0, 0.0), "radius": 1.0}, name)
        scene = Scene([circle_curve(p["center"], p["radius"])], name)
    elif name == "ellipse":
        p = _get_params(params, {"center": (0.0, 0.0), "rx": 1.0, "ry": 0.5}, name)
        scene = Scene([ellipse_curve(p["center"], p["rx"], p["ry"])], name)
    elif name == "almost_convex":
        p = _get_params(params, {"center": (0.0, 0.0), "base": 1.0,
                                 "ripple": 0.15, "lobes": 3}, name)
        base, eps, m = float(p["base"]), float(p["ripple"]), int(p["lobes"])
        if base <= 0 or abs(eps) >= 1.0:
            raise GeometryError("almost_convex requires base > 0 and |ripple| < 1")
        curve = radial_curve(
            lambda th: base * (1.0 + eps * np.cos(m * th)),
            lambda th: base * (-eps * m * np.sin(m * th)),
            p["center"], name)
        scene = Scene([curve], name)
    elif name == "nonconvex_polygon":
        p = _get_params(params, {"center": (0.0, 0.0), "base": 1.0,
                                 "amplitude": STAR_AMPLITUDE, "lobes": STAR_LOBES}, name)
        base, amp, c = float(p["base"]), float(p["amplitude"]), int(p["lobes"])

        def r_fn(th):
            acc = np.zeros_like(th)
            for m in STAR_HARMONICS:
                acc = acc + np.cos(m * c * th) / m**2
            return base + amp * acc

        def dr_fn(th):
            acc = np.zeros_like(th)
            for m in STAR_HARMONICS:
                acc = acc - c * np.sin(m * c * th) / m
            return amp * acc

        scene = Scene([radial_curve(r_fn, dr_fn, p["center"], name)], name)
    elif name == "near_inclusion":
        p = _get_params(params, {"center": (0.0, 0.0), "base": 1.0,
                                 "depth": 0.55, "width": 0.2, "mouth_angle": math.pi}, name)
        base, depth, w, th0 = (float(p["base"]), float(p["depth"]),
                               float(p["width"]), float(p["mouth_angle"]))
        if depth >= base:
            raise GeometryError("near_inclusion notch depth must be below the base radius")

        def r_fn(th):
            return base - depth * np.exp((np.cos(th - th0) - 1.0) / w)

        def dr_fn(th):
            bump = np.exp((np.cos(th - th0) - 1.0) / w)
            return depth * np.sin(th - th0) / w * bump

        scene = Scene([radial_curve(r_fn, dr_fn, p["center"], name)], name)
    elif name == "two_circles":
        p = _get_params(params, {"radius": 0.5, "separation": None}, name)
        radius = float(p["radius"])
        gap = 2.0 * radius if p["separation"] is None else float(p["separation"])
        if gap <= 0:
            raise GeometryError("two_circles separation must be positive")
        c = radius + gap / 2.0
        scene = Scene([circle_curve((0.0, c), radius, "upper"),
                       circle_curve((0.0, -c), radius, "lower")], name)
    elif name == "three_ellipses":
        p = _get_params(params, {"rx": 0.8, "ry": 0.5}, name)
        rx, ry = float(p["rx"]), float(p["ry"])
        scene = Scene([ellipse_curve((-2.0, 0.0), rx, ry, "upstream"),
                       ellipse_curve((1.3, 1.1), rx, ry, "downstream_upper"),
                       ellipse_curve((1.3, -1.1), rx, ry, "downstream_lower")], name)
    else:
        raise GeometryError(f"unknown preset name {name!r}")
    return _validate_scene(scene)


# ---------------------------------------------------------------------------
# Incident waves
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PlaneWave:
    direction: tuple[float, float]
    amplitude: complex = 1.0 + 0.0j


@dataclass(frozen=True)
class PointSource:
    location: tuple[float, float]
    amplitude: complex = 1.0 + 0.0j


@dataclass(frozen=True)
class Superposition:
    parts: tuple


IncidentWave = Union[PlaneWave, PointSource, Superposition]


def plane_wave(angle: float = 0.0, amplitude: complex = 1.0) -> PlaneWave:
    """Unit plane wave travelling at the given angle (radians from +x)."""
    return PlaneWave((math.cos(angle), math.sin(angle)), amplitude)


def three_plane_waves(base_angle: float = 0.0, amplitude: complex = 1.0) -> Superposition:
    """Superposition of three unit plane waves with 2 pi / 3 angle spacing."""
    step = 2.0 * math.pi / 3.0
    return Superposition(tuple(plane_wave(base_angle + i * step, amplitude) for i in range(3)))


def _check_direction(d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if abs(math.hypot(d[0], d[1]) - 1.0) > 1e-12:
        raise GeometryError("plane wave direction must be a unit vector")
    return d


def eval_incident(wave: IncidentWave, k: float, points) -> np.ndarray:
    """Incident field at the given points.

    Plane waves give amplitude * exp(i k d . x); a point source radiates the
    outgoing free-space kernel from its location; superpositions sum their
    parts. Evaluating a point source at its own location is an error.
    """
    if not (np.isfinite(k) and k > 0):
        raise GeometryError("wavenumber must be positive and finite")
    pts = np.asarray(points, dtype=float)
    squeeze = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if isinstance(wave, PlaneWave):
        d = _check_direction(wave.direction)
        out = wave.amplitude * np.exp(1j * k * (pts @ d))
    elif isinstance(wave, PointSource):
        from sparsebem.kernel import greens_function
        src = np.asarray(wave.location, dtype=float)
        if np.any(np.all(pts == src[None, :], axis=1)):
            raise GeometryError("point source evaluated at its own location")
        out = wave.amplitude * greens_function(k, src, pts)
    elif isinstance(wave, Superposition):
        out = np.zeros(len(pts), dtype=complex)
        for part in wave.parts:
            out = out + eval_incident(part, k, pts)
    else:
        raise GeometryError(f"unsupported wave type {type(wave).__name__}")
    return out[0] if squeeze else out


def validate_wave_for_scene(wave: IncidentWave, scene: Scene) -> None:
    """Reject point sources on the boundary or inside an obstacle."""
    if isinstance(wave, PointSource):
        src = np.asarray(wave.location, dtype=float)[None, :]
        if float(scene.boundary_distance(src)[0]) <= 0.0:
            raise GeometryError("point source must lie strictly off every obstacle")
        for p in range(scene.n_obstacles):
            if bool(points_inside(scene, p, src)[0]):
                raise GeometryError("point source must lie exterior to every obstacle")
    elif isinstance(wave, Superposition):
        for part in wave.parts:
            validate_wave_for_scene(part, scene)
