"""Geometric visibility: a solution-independent way to place windows.

A boundary point can only receive a direct reflection from points it can
see, so for rows on the illuminated part of the boundary the window support
can be restricted to the visible set (dilated by a decay length), always
keeping the kernel-singularity band. Shadow rows are left uncompressed, and
in multi-obstacle scenes a row's own block is compressed only when the row
is illuminated both by the incident wave and by every other obstacle acting
as a secondary source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sparsebem.discretization import Discretization
from sparsebem.geometry import (
    IncidentWave,
    PlaneWave,
    PointSource,
    Scene,
    Superposition,
    segments_properly_intersect,
)
from sparsebem.windows import (
    CompoundWindow,
    ElementaryWindow,
    EMPTY_WINDOW,
    FULL_WINDOW,
    WindowSet,
    cyclic_runs,
    merge_windows,
    singularity_window,
)

DEFAULT_DECAY = 0.15
MIN_POLYLINE_POINTS = 256
DEFAULT_GRID_POINTS = 192
_CHORD_CHUNK = 256


class VisibilityError(ValueError):
    """Invalid visibility request."""


@dataclass(frozen=True)
class VisibilityConfig:
    """Decay length, occlusion resolution, and the shadow policy.

    ``polyline_points=None`` resolves to max(1024, 8 N_p) per obstacle.
    Shadow rows are never compressed unless ``compress_shadow`` is set.
    """

    decay: float = DEFAULT_DECAY
    polyline_points: int | None = None
    grid_points: int = DEFAULT_GRID_POINTS
    compress_shadow: bool = False

    def __post_init__(self):
        if self.decay <= 0:
            raise VisibilityError("decay length must be positive")
        if self.polyline_points is not None and self.polyline_points < MIN_POLYLINE_POINTS:
            raise VisibilityError(f"polyline resolution must be >= {MIN_POLYLINE_POINTS}")


# Chord fractions probed for interiority: a chord that runs through a body
# near one of its endpoints is invisible to the crossing test (both proper
# crossings fall inside the excluded end panels), but its interior points lie
# inside the sampled polygon.
_PROBE_FRACTIONS = np.array([0.1, 0.3, 0.5, 0.7, 0.9])


class _OcclusionTester:
    """Sampled polylines plus batch chord-occlusion tests."""

    def __init__(self, scene: Scene, points_per_obstacle: list[int]):
        self.scene = scene
        self.m = list(points_per_obstacle)
        seg0, seg1, seg_obs = [], [], []
        self.seg_offset = [0]
        self.centers = []
        for p, m in enumerate(self.m):
            params = (np.arange(m) + 0.5) / m
            verts = scene.position(p, params)
            seg0.append(verts)
            seg1.append(np.roll(verts, -1, axis=0))
            seg_obs.append(np.full(m, p))
            self.centers.append((np.arange(m) + 1.0) / m)
            self.seg_offset.append(self.seg_offset[-1] + m)
        self.seg0 = np.concatenate(seg0)
        self.seg1 = np.concatenate(seg1)
        self.seg_obs = np.concatenate(seg_obs)
        # precomputed pieces of the even-odd ray test
        with np.errstate(divide="ignore", invalid="ignore"):
            self._dxdy = ((self.seg1[:, 0] - self.seg0[:, 0])
                          / (self.seg1[:, 1] - self.seg0[:, 1]))
        self._dxdy[~np.isfinite(self._dxdy)] = 0.0

    def points_inside(self, pts: np.ndarray) -> np.ndarray:
        """Even-odd test of points against the union of polyline polygons."""
        px = pts[:, 0][:, None]
        py = pts[:, 1][:, None]
        y0 = self.seg0[:, 1][None, :]
        y1 = self.seg1[:, 1][None, :]
        crosses = (y0 > py) != (y1 > py)
        xint = self.seg0[:, 0][None, :] + (py - y0) * self._dxdy[None, :]
        hits = crosses & (xint > px)
        inside = np.zeros(len(pts), dtype=bool)
        for p in range(self.scene.n_obstacles):
            sl = slice(self.seg_offset[p], self.seg_offset[p + 1])
            inside |= (np.sum(hits[:, sl], axis=1) % 2) == 1
        return inside

    def _exclusion(self, rows: np.ndarray, obs: np.ndarray, par: np.ndarray,
                   excl: np.ndarray) -> None:
        """Mark segments owned by the given boundary endpoints as ignored."""
        for p in range(self.scene.n_obstacles):
            sel = obs == p
            if not np.any(sel):
                continue
            m = self.m[p]
            centers = self.centers[p]
            base = self.seg_offset[p]
            t = par[sel]
            own = np.floor(t * m - 0.5).astype(int)
            for shift in (-1, 0, 1):
                idx = (own + shift) % m
                d = np.abs((t - centers[idx] + 0.5) % 1.0 - 0.5)
                close = d < 0.75 / m
                excl[rows[sel][close], base + idx[close]] = True

    def occluded(self, a_pts: np.ndarray, b_pts: np.ndarray,
                 a_obs=None, a_par=None, b_obs=None, b_par=None,
                 interior_probes: bool = True) -> np.ndarray:
        """True where the open chord a->b runs through an obstacle.

        Combines a proper segment-segment crossing test against the sampled
        polylines (the local segments an endpoint sits on are excluded so a
        boundary point is not blocked by its own panel) with interiority
        probes at fixed chord fractions, which catch chords that enter a
        body right at an endpoint where the crossing falls inside the
        excluded panel.
        """
        n = len(a_pts)
        out = np.zeros(n, dtype=bool)
        for start in range(0, n, _CHORD_CHUNK):
            sl = slice(start, min(start + _CHORD_CHUNK, n))
            rows = np.arange(sl.stop - sl.start)
            hits = segments_properly_intersect(
                a_pts[sl][:, None, :], b_pts[sl][:, None, :],
                self.seg0[None, :, :], self.seg1[None, :, :])
            excl = np.zeros_like(hits)
            if a_par is not None:
                self._exclusion(rows, np.asarray(a_obs)[sl], np.asarray(a_par)[sl], excl)
            if b_par is not None:
                self._exclusion(rows, np.asarray(b_obs)[sl], np.asarray(b_par)[sl], excl)
            blocked = np.any(hits & ~excl, axis=1)
            if interior_probes:
                chunk = sl.stop - sl.start
                probes = (a_pts[sl][:, None, :]
                          + _PROBE_FRACTIONS[None, :, None]
                          * (b_pts[sl] - a_pts[sl])[:, None, :])
                inside = self.points_inside(probes.reshape(-1, 2))
                blocked |= inside.reshape(chunk, -1).any(axis=1)
            out[sl] = blocked
        return out


def _default_polyline(scene: Scene, cfg: VisibilityConfig,
                      counts=None) -> list[int]:
    out = []
    for p in range(scene.n_obstacles):
        if cfg.polyline_points is not None:
            out.append(cfg.polyline_points)
        else:
            n_p = counts[p] if counts is not None else 0
            out.append(max(1024, 8 * n_p))
    return out


def _tester(scene: Scene, cfg: VisibilityConfig, counts=None) -> _OcclusionTester:
    return _OcclusionTester(scene, _default_polyline(scene, cfg, counts))


def visible(scene: Scene, t, tau, cfg: VisibilityConfig | None = None,
            tester: _OcclusionTester | None = None) -> bool:
    """True when the open chord between the two boundary points is clear.

    ``t`` and ``tau`` are global parameters (obstacle index, local t). The
    verdict is symmetric and independent of any incident wave.
    """
    cfg = cfg or VisibilityConfig()
    p, tp = t
    q, tq = tau
    if p == q and (tp - tq) % 1.0 == 0.0:
        raise VisibilityError("visibility between coincident parameters is undefined")
    tester = tester or _tester(scene, cfg)
    a = np.atleast_2d(scene.position(p, tp))
    b = np.atleast_2d(scene.position(q, tq))
    occ = tester.occluded(a, b,
                          a_obs=np.array([p]), a_par=np.array([tp]),
                          b_obs=np.array([q]), b_par=np.array([tq]))
    return not bool(occ[0])


def _illuminated_many(scene: Scene, wave: IncidentWave, obs: np.ndarray,
                      par: np.ndarray, tester: _OcclusionTester) -> np.ndarray:
    pts = np.empty((len(obs), 2))
    nrm = np.empty((len(obs), 2))
    for p in range(scene.n_obstacles):
        sel = obs == p
        if np.any(sel):
            pts[sel] = scene.position(p, par[sel])
            nrm[sel] = scene.normal(p, par[sel])
    if isinstance(wave, PlaneWave):
        d = np.asarray(wave.direction, dtype=float)
        front = (nrm @ d) < 0.0
        ray_len = 4.0 * max(scene.diameter(), 1.0)
        far = pts - ray_len * d[None, :]
        occ = tester.occluded(pts[front], far[front],
                              a_obs=obs[front], a_par=par[front])
        out = np.zeros(len(obs), dtype=bool)
        out[front] = ~occ
        return out
    if isinstance(wave, PointSource):
        src = np.asarray(wave.location, dtype=float)
        front = np.sum(nrm * (pts - src[None, :]), axis=1) < 0.0
        occ = tester.occluded(pts[front], np.broadcast_to(src, (int(front.sum()), 2)),
                              a_obs=obs[front], a_par=par[front])
        out = np.zeros(len(obs), dtype=bool)
        out[front] = ~occ
        return out
    if isinstance(wave, Superposition):
        out = np.zeros(len(obs), dtype=bool)
        for part in wave.parts:
            out |= _illuminated_many(scene, part, obs, par, tester)
        return out
    raise VisibilityError(f"unsupported wave type {type(wave).__name__}")


def illuminated(scene: Scene, wave: IncidentWave, t,
                cfg: VisibilityConfig | None = None,
                tester: _OcclusionTester | None = None) -> bool:
    """True when the boundary point faces the wave and the ray back is clear.

    Superpositions count a point as illuminated by any component.
    """
    cfg = cfg or VisibilityConfig()
    tester = tester or _tester(scene, cfg)
    p, tp = t
    out = _illuminated_many(scene, wave, np.array([p]), np.array([tp]), tester)
    return bool(out[0])


def _pairwise_visibility(scene: Scene, grid_obs: np.ndarray, grid_par: np.ndarray,
                         tester: _OcclusionTester) -> np.ndarray:
    """Symmetric visibility matrix over the verdict grid."""
    g = len(grid_par)
    pts = np.empty((g, 2))
    for p in range(scene.n_obstacles):
        sel = grid_obs == p
        pts[sel] = scene.position(p, grid_par[sel])
    ii, jj = np.triu_indices(g, k=1)
    occ = tester.occluded(pts[ii], pts[jj],
                          a_obs=grid_obs[ii], a_par=grid_par[ii],
                          b_obs=grid_obs[jj], b_par=grid_par[jj])
    vis = np.zeros((g, g), dtype=bool)
    vis[ii, jj] = ~occ
    vis[jj, ii] = ~occ
    np.fill_diagonal(vis, True)
    return vis


def _runs_to_windows(run_mask: np.ndarray, params: np.ndarray,
                     decay: float) -> tuple[list[ElementaryWindow], bool]:
    windows: list[ElementaryWindow] = []
    q = len(run_mask)
    for start, length in cyclic_runs(run_mask):
        if length == q:
            return [], True
        lo = params[start]
        hi = params[(start + length - 1) % q]
        if hi < lo:
            hi += 1.0
        if hi - lo + 2.0 * decay >= 1.0:
            return [], True
        windows.append(ElementaryWindow(lo - decay, lo, hi, hi + decay))
    return windows, False


def visibility_windows(scene: Scene, wave: IncidentWave, disc: Discretization,
                       cfg: VisibilityConfig | None = None) -> WindowSet:
    """Window set from visibility alone (no solve required).

    Illuminated rows keep the visible part of each obstacle (dilated by the
    decay length) plus their own singularity band; occluded coupling blocks
    drop out entirely. A row's own block is compressed only when the row is
    also illuminated by every other obstacle, otherwise it stays dense.
    Rows in shadow are left uncompressed.
    """
    cfg = cfg or VisibilityConfig()
    tester = _tester(scene, cfg, disc.basis.counts)

    grid_obs, grid_par, grid_cols = [], [], []
    for p in range(scene.n_obstacles):
        v = min(disc.basis.counts[p], cfg.grid_points)
        grid_obs.append(np.full(v, p))
        grid_par.append((np.arange(v) + 0.5) / v)
    grid_obs = np.concatenate(grid_obs)
    grid_par = np.concatenate(grid_par)
    grid_cols = [np.nonzero(grid_obs == p)[0] for p in range(scene.n_obstacles)]

    vis = _pairwise_visibility(scene, grid_obs, grid_par, tester)
    illum = _illuminated_many(scene, wave, disc.row_obstacle, disc.row_param, tester)

    rows: list[tuple[CompoundWindow, ...]] = []
    window_cache: dict[tuple[int, bool], tuple[CompoundWindow, ...]] = {}
    for i in range(disc.n):
        p = int(disc.row_obstacle[i])
        t = float(disc.row_param[i])
        if not illum[i] and not cfg.compress_shadow:
            rows.append(tuple(FULL_WINDOW for _ in range(scene.n_obstacles)))
            continue
        own_cols = grid_cols[p]
        d = np.abs((t - grid_par[own_cols] + 0.5) % 1.0 - 0.5)
        g = own_cols[int(np.argmin(d))]
        cached = window_cache.get((g, True))
        per_obs: list[CompoundWindow] = []
        sees_all = all(bool(vis[g, grid_cols[b]].any())
                       for b in range(scene.n_obstacles) if b != p)
        if cached is None:
            base: list[CompoundWindow | None] = []
            for b in range(scene.n_obstacles):
                mask = vis[g, grid_cols[b]].copy()
                wins, full = _runs_to_windows(mask, grid_par[grid_cols[b]], cfg.decay)
                if b == p:
                    base.append(None)  # own block is rebuilt per row below
                    window_cache[(g, False)] = (tuple(wins), full)
                else:
                    base.append(FULL_WINDOW if full else merge_windows(wins))
            window_cache[(g, True)] = tuple(base)
            cached = window_cache[(g, True)]
        for b in range(scene.n_obstacles):
            if b != p:
                per_obs.append(cached[b])
                continue
            if not sees_all:
                per_obs.append(FULL_WINDOW)
                continue
            wins, full = window_cache[(g, False)]
            if full:
                per_obs.append(FULL_WINDOW)
            else:
                own = list(wins) + [singularity_window(t, cfg.decay)]
                per_obs.append(merge_windows(own))
        rows.append(tuple(per_obs))
    return WindowSet(disc.row_obstacle.copy(), disc.row_param.copy(),
                     scene.n_obstacles, rows)
