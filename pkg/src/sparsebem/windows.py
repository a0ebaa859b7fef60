"""Smooth cutoff windows on the periodic boundary parameter.

An elementary window rises smoothly from 0 at ``lam`` to 1 at ``l``, holds a
plateau on [l, r], and falls back to 0 at ``rho``. Per-row weights are sums
of such windows with pairwise disjoint supports, one compound window per
collocation row and target obstacle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# exp() underflows to zero below this exponent; beyond it the window is
# exactly 0/1, which avoids inf/inf at the plateau edges.
EXP_UNDERFLOW = -745.0


class WindowError(ValueError):
    """Invalid window geometry."""


def eval_chi(tau, lam: float, l: float, r: float, rho: float):
    """Smooth bump: 0 outside [lam, rho], 1 on [l, r], C-inf decay between.

    The decay lengths l - lam and rho - r must be strictly positive; the
    plateau may have zero length (l == r). Vectorized in ``tau``.
    """
    if not (lam <= l <= r <= rho):
        raise WindowError("window points must satisfy lam <= l <= r <= rho")
    if l - lam <= 0.0 or rho - r <= 0.0:
        raise WindowError("window decay lengths must be strictly positive")
    t = np.asarray(tau, dtype=float)
    out = np.zeros(t.shape, dtype=float)
    out[(t >= l) & (t <= r)] = 1.0

    rise = (t > lam) & (t < l)
    if np.any(rise):
        u = t[rise]
        # So close to lam that the progress ratio rounds to 1, the decay has
        # numerically hit its outer edge: the value is an exact 0.
        denom = (u - l) / (lam - l) - 1.0
        with np.errstate(divide="ignore"):
            arg = 2.0 * np.exp((l - lam) / (u - l)) / denom
        arg = np.where((denom >= 0.0) | (arg < EXP_UNDERFLOW), -np.inf, arg)
        out[rise] = np.exp(arg)

    fall = (t > r) & (t < rho)
    if np.any(fall):
        u = t[fall]
        denom = (u - r) / (rho - r) - 1.0
        with np.errstate(divide="ignore"):
            arg = 2.0 * np.exp((r - rho) / (u - r)) / denom
        arg = np.where((denom >= 0.0) | (arg < EXP_UNDERFLOW), -np.inf, arg)
        out[fall] = np.exp(arg)

    return float(out) if np.isscalar(tau) else out


@dataclass(frozen=True)
class ElementaryWindow:
    """One smooth bump on the periodic domain, stored unwrapped.

    Coordinates satisfy lam <= l <= r <= rho with lam in [0, 1) and
    rho - lam < 1; the support may wrap past 1. Decay lengths are strictly
    positive, the plateau may be empty.
    """

    lam: float
    l: float
    r: float
    rho: float

    def __post_init__(self):
        if not (self.lam <= self.l <= self.r <= self.rho):
            raise WindowError("window points must satisfy lam <= l <= r <= rho")
        if self.l - self.lam <= 0.0 or self.rho - self.r <= 0.0:
            raise WindowError("window decay lengths must be strictly positive")
        if self.rho - self.lam >= 1.0:
            raise WindowError("window support must be shorter than the full period")
        shift = self.lam - (self.lam % 1.0)
        if shift != 0.0:
            object.__setattr__(self, "lam", self.lam - shift)
            object.__setattr__(self, "l", self.l - shift)
            object.__setattr__(self, "r", self.r - shift)
            object.__setattr__(self, "rho", self.rho - shift)

    @property
    def width(self) -> float:
        return self.rho - self.lam

    def eval(self, tau):
        """Window value at periodic parameter(s) tau."""
        t = np.asarray(tau, dtype=float)
        x = self.lam + ((t - self.lam) % 1.0)
        out = eval_chi(x, self.lam, self.l, self.r, self.rho)
        return float(out) if np.isscalar(tau) else out

    def contains(self, tau):
        """True where the open support (lam, rho) contains tau (periodic)."""
        t = np.asarray(tau, dtype=float)
        u = (t - self.lam) % 1.0
        out = (u > 0.0) & (u < self.width)
        return bool(out) if np.isscalar(tau) else out


@dataclass(frozen=True)
class CompoundWindow:
    """Sum of elementary windows with pairwise disjoint supports.

    ``full=True`` is the trivial all-ones window (no compression on that
    obstacle). Build instances through :func:`merge_windows` so that the
    disjointness invariant holds.
    """

    elements: tuple[ElementaryWindow, ...] = ()
    full: bool = False

    @property
    def is_empty(self) -> bool:
        return not self.full and len(self.elements) == 0

    def eval(self, tau):
        t = np.asarray(tau, dtype=float)
        if self.full:
            out = np.ones(t.shape, dtype=float)
        else:
            out = np.zeros(t.shape, dtype=float)
            for el in self.elements:
                out = out + el.eval(t)
        return float(out) if np.isscalar(tau) else out

    def contains(self, tau):
        t = np.asarray(tau, dtype=float)
        if self.full:
            out = np.ones(t.shape, dtype=bool)
        else:
            out = np.zeros(t.shape, dtype=bool)
            for el in self.elements:
                out |= el.contains(t)
        return bool(out) if np.isscalar(tau) else out

    def support_intervals(self) -> list[tuple[float, float]]:
        """Unwrapped (lam, rho) support intervals; [(0, 1)] when full."""
        if self.full:
            return [(0.0, 1.0)]
        return [(el.lam, el.rho) for el in self.elements]

    def support_measure(self) -> float:
        if self.full:
            return 1.0
        return sum(el.width for el in self.elements)


FULL_WINDOW = CompoundWindow(full=True)
EMPTY_WINDOW = CompoundWindow()


def cyclic_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal cyclic runs of True as (start, length) pairs."""
    q = len(mask)
    if not np.any(mask):
        return []
    if np.all(mask):
        return [(0, q)]
    starts = np.nonzero(mask & ~np.roll(mask, 1))[0]
    ends = np.nonzero(mask & ~np.roll(mask, -1))[0]
    runs = []
    for s in starts:
        e = ends[np.searchsorted(ends, s)] if np.any(ends >= s) else ends[0]
        length = (e - s) % q + 1
        runs.append((int(s), int(length)))
    return runs


def eval_compound(cw: CompoundWindow, tau):
    return cw.eval(tau)


def singularity_window(t: float, decay: float) -> ElementaryWindow:
    """Window around a kernel singularity: plateau [t-T, t+T], decay T."""
    return ElementaryWindow(t - 2.0 * decay, t - decay, t + decay, t + 2.0 * decay)


def _join(a: ElementaryWindow, b: ElementaryWindow) -> ElementaryWindow | None:
    """Join two overlapping/adjacent unwrapped windows; None means full period."""
    lam = min(a.lam, b.lam)
    l = min(a.l, b.l)
    r = max(a.r, b.r)
    rho = max(a.rho, b.rho)
    if rho - lam >= 1.0:
        return None
    return ElementaryWindow(lam, l, r, rho)


def merge_windows(windows, eps_merge: float | None = None) -> CompoundWindow:
    """Merge windows whose supports overlap or come within ``eps_merge``.

    With ``eps_merge=None`` the proximity threshold for each pair defaults
    to half the smaller of the two facing decay lengths. Joined windows keep
    the earliest rise and the latest fall; a merged support covering the
    whole period collapses to the trivial all-ones window. The result is
    independent of input order and merging is idempotent.
    """
    els = list(windows)
    if any(w.full for w in els if isinstance(w, CompoundWindow)):
        return FULL_WINDOW
    flat: list[ElementaryWindow] = []
    for w in els:
        if isinstance(w, CompoundWindow):
            flat.extend(w.elements)
        else:
            flat.append(w)
    if not flat:
        return EMPTY_WINDOW

    def gap_threshold(left: ElementaryWindow, right: ElementaryWindow) -> float:
        if eps_merge is not None:
            return eps_merge
        return 0.5 * min(left.rho - left.r, right.l - right.lam)

    current = sorted(flat, key=lambda w: (w.lam, w.rho))
    while True:
        merged: list[ElementaryWindow] = []
        changed = False
        for w in current:
            if merged and w.lam - merged[-1].rho <= gap_threshold(merged[-1], w):
                joined = _join(merged[-1], w)
                if joined is None:
                    return FULL_WINDOW
                merged[-1] = joined
                changed = True
            else:
                merged.append(w)
        # Wrap-around: does the last window reach the first one shifted by 1?
        if len(merged) > 1:
            first, last = merged[0], merged[-1]
            shifted = ElementaryWindow.__new__(ElementaryWindow)
            object.__setattr__(shifted, "lam", first.lam + 1.0)
            object.__setattr__(shifted, "l", first.l + 1.0)
            object.__setattr__(shifted, "r", first.r + 1.0)
            object.__setattr__(shifted, "rho", first.rho + 1.0)
            if shifted.lam - last.rho <= gap_threshold(last, shifted):
                joined = _join(last, shifted)
                if joined is None:
                    return FULL_WINDOW
                merged = merged[1:-1] + [joined]
                changed = True
        elif len(merged) == 1 and merged[0].width >= 1.0:
            return FULL_WINDOW
        merged.sort(key=lambda w: (w.lam, w.rho))
        if not changed:
            return CompoundWindow(tuple(merged))
        current = merged


@dataclass
class WindowSet:
    """One compound window per collocation row and target obstacle.

    The set remembers its own row grid (obstacle index and local parameter
    per row) so it can be reused at a finer discretization: a new row is
    matched to the nearest stored row of the same obstacle.
    """

    row_obstacle: np.ndarray
    row_param: np.ndarray
    n_obstacles: int
    rows: list[tuple[CompoundWindow, ...]]
    _row_index_by_obstacle: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.row_obstacle = np.asarray(self.row_obstacle, dtype=int)
        self.row_param = np.asarray(self.row_param, dtype=float)
        for p in range(self.n_obstacles):
            self._row_index_by_obstacle[p] = np.nonzero(self.row_obstacle == p)[0]

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def window(self, row: int, obstacle: int) -> CompoundWindow:
        return self.rows[row][obstacle]

    def match_row(self, obstacle: int, t: float) -> int:
        return int(self.match_rows(obstacle, np.asarray([t]))[0])

    def match_rows(self, obstacle: int, t: np.ndarray) -> np.ndarray:
        """Nearest stored row per query parameter (periodic distance).

        Ties resolve to the smaller row index.
        """
        idx = self._row_index_by_obstacle[obstacle]
        if len(idx) == 0:
            raise WindowError(f"window set has no rows on obstacle {obstacle}")
        params = self.row_param[idx]
        d = np.abs(t[:, None] - params[None, :])
        d = np.minimum(d, 1.0 - d)
        return idx[np.argmin(d, axis=1)]

    def covers_own_singularity(self) -> np.ndarray:
        """Check the weight is positive at each row's own parameter."""
        out = np.zeros(self.n_rows, dtype=bool)
        for i in range(self.n_rows):
            cw = self.rows[i][self.row_obstacle[i]]
            out[i] = cw.full or bool(cw.contains(self.row_param[i]))
        return out

    def save(self, path) -> None:
        """Text export: one line per elementary window.

        Format: ``row obstacle lam l r rho``, or ``row obstacle full`` for a
        trivial all-ones window; a header carries the grid.
        """
        with open(path, "w") as fh:
            fh.write(f"# rows {self.n_rows} obstacles {self.n_obstacles}\n")
            for i in range(self.n_rows):
                fh.write(f"# row {i} obstacle {int(self.row_obstacle[i])} "
                         f"param {float(self.row_param[i])!r}\n")
            for i, per_obs in enumerate(self.rows):
                for p, cw in enumerate(per_obs):
                    if cw.full:
                        fh.write(f"{i} {p} full\n")
                    else:
                        for el in cw.elements:
                            fh.write(f"{i} {p} {float(el.lam)!r} {float(el.l)!r} "
                                     f"{float(el.r)!r} {float(el.rho)!r}\n")

    @classmethod
    def load(cls, path) -> "WindowSet":
        n_rows = n_obs = None
        grid: dict[int, tuple[int, float]] = {}
        payload: list[tuple[int, int, list]] = []
        with open(path) as fh:
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                if parts[0] == "#":
                    if parts[1] == "rows":
                        n_rows, n_obs = int(parts[2]), int(parts[4])
                    elif parts[1] == "row":
                        grid[int(parts[2])] = (int(parts[4]), float(parts[6]))
                    continue
                payload.append((int(parts[0]), int(parts[1]), parts[2:]))
        if n_rows is None:
            raise WindowError("window file missing header")
        per_row: list[list] = [[[] for _ in range(n_obs)] for _ in range(n_rows)]
        full_flags = [[False] * n_obs for _ in range(n_rows)]
        for i, p, rest in payload:
            if rest[0] == "full":
                full_flags[i][p] = True
            else:
                lam, l, r, rho = map(float, rest)
                per_row[i][p].append(ElementaryWindow(lam, l, r, rho))
        rows = []
        for i in range(n_rows):
            rows.append(tuple(
                FULL_WINDOW if full_flags[i][p] else CompoundWindow(tuple(per_row[i][p]))
                for p in range(n_obs)))
        row_obs = np.array([grid[i][0] for i in range(n_rows)], dtype=int)
        row_par = np.array([grid[i][1] for i in range(n_rows)], dtype=float)
        return cls(row_obs, row_par, n_obs, rows)
