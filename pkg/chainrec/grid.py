"""
Cell geometry for the finite-resolution analysis.

A ``Domain`` is a product of closed intervals, each either an ordinary
interval or a circle (periodic). A ``Grid`` splits every axis into equal
half-open pieces and numbers the resulting boxes in row-major order (the
first axis varies slowest).

All per-point operations exist in two forms: the scalar functions named in
the public API (``metric``, ``cell_of``, ``cell_center``, ``ball_cells``)
and array methods on ``Grid`` that work on ``(n, dim)`` coordinate arrays.
Graph construction and simulation use the array forms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Upper bound on (points x candidate cells) materialised at once.
CANDIDATE_BLOCK = 2_000_000


class DomainError(ValueError):
    """Invalid domain or grid, or a point outside a non-periodic axis."""


def _window_size(radius: float, width: float) -> int:
    """Cells per axis spanning the closed interval [x - r, x + r] plus both tangent boxes."""
    return int(np.floor(2.0 * radius / width)) + 3


@dataclass(frozen=True)
class Domain:
    """Product of intervals ``[lo, hi]``; periodic axes are identified ends."""

    bounds: Tuple[Tuple[float, float], ...]
    periodic: Tuple[bool, ...]

    def __post_init__(self) -> None:
        if not self.bounds:
            raise DomainError("domain needs at least one axis")
        if len(self.bounds) != len(self.periodic):
            raise DomainError(
                f"{len(self.bounds)} bounds but {len(self.periodic)} periodic flags"
            )
        for axis, (lo, hi) in enumerate(self.bounds):
            if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
                raise DomainError(f"axis {axis}: need finite lo < hi, got [{lo}, {hi}]")

    @classmethod
    def unit_circle(cls) -> "Domain":
        return cls(bounds=((0.0, 1.0),), periodic=(True,))

    @classmethod
    def unit_torus(cls) -> "Domain":
        return cls(bounds=((0.0, 1.0), (0.0, 1.0)), periodic=(True, True))

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lows(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds], dtype=float)

    @property
    def spans(self) -> np.ndarray:
        return np.array([b[1] - b[0] for b in self.bounds], dtype=float)

    @property
    def periodic_mask(self) -> np.ndarray:
        return np.array(self.periodic, dtype=bool)

    def axis_differences(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Per-axis |a - b|, taking the shorter way round on periodic axes."""
        diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        spans = self.spans
        wrapped = np.mod(diff, spans)
        wrapped = np.minimum(wrapped, spans - wrapped)
        return np.where(self.periodic_mask, wrapped, diff)

    def distances(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorised ``metric`` over the last axis of broadcastable arrays."""
        return np.sqrt(np.sum(self.axis_differences(a, b) ** 2, axis=-1))

    def reduce(self, points: np.ndarray) -> np.ndarray:
        """Bring periodic coordinates into ``[lo, hi)``."""
        pts = np.asarray(points, dtype=float)
        lows, spans = self.lows, self.spans
        offset = np.mod(pts - lows, spans)
        # mod of a tiny negative number can round up to the full span
        offset = np.where(offset >= spans, 0.0, offset)
        return np.where(self.periodic_mask, lows + offset, pts)


@dataclass(frozen=True)
class Grid:
    """Uniform subdivision of a domain into ``prod(subdivisions)`` cells."""

    domain: Domain
    subdivisions: Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.subdivisions) != self.domain.dim:
            raise DomainError(
                f"grid has {len(self.subdivisions)} axes, domain has {self.domain.dim}"
            )
        if any(int(n) < 1 for n in self.subdivisions):
            raise DomainError(f"subdivisions must be >= 1, got {self.subdivisions}")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.subdivisions))

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(int(n) for n in self.subdivisions)

    @property
    def widths(self) -> np.ndarray:
        return self.domain.spans / np.array(self.subdivisions, dtype=float)

    @property
    def strides(self) -> np.ndarray:
        """Row-major strides: cell id = sum(index_i * stride_i)."""
        n = np.array(self.subdivisions, dtype=np.int64)
        return np.concatenate([np.cumprod(n[::-1])[::-1][1:], [1]]).astype(np.int64)

    def cell_diameter(self) -> float:
        return float(np.sqrt(np.sum(self.widths**2)))

    # ---- Index conversions ----

    def multi_index(self, cells: np.ndarray) -> np.ndarray:
        """Cell ids (n,) -> per-axis indices (n, dim)."""
        ids = np.asarray(cells, dtype=np.int64)
        return np.stack(np.unravel_index(ids, self.shape), axis=-1)

    def flat_index(self, multi: np.ndarray) -> np.ndarray:
        return np.asarray(multi, dtype=np.int64) @ self.strides

    def centers(self, cells: np.ndarray) -> np.ndarray:
        """Cell ids (n,) -> center coordinates (n, dim)."""
        idx = self.multi_index(cells)
        return self.domain.lows + (idx + 0.5) * self.widths

    def all_centers(self) -> np.ndarray:
        return self.centers(np.arange(self.num_cells))

    def cells_of(self, points: np.ndarray) -> np.ndarray:
        """Coordinates (n, dim) -> containing cell ids (n,)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.dim:
            raise DomainError(f"points have {pts.shape[-1]} coordinates, grid has {self.dim}")
        dom = self.domain
        periodic = dom.periodic_mask
        lows, highs = dom.lows, dom.lows + dom.spans
        outside = ~periodic & ((pts < lows) | (pts > highs))
        if np.any(outside):
            row = int(np.argwhere(outside)[0][0])
            raise DomainError(f"point {pts[row].tolist()} lies outside the domain")
        pts = dom.reduce(pts)
        n = np.array(self.subdivisions, dtype=np.int64)
        idx = np.floor((pts - lows) / self.widths).astype(np.int64)
        # periodic: wrap; closed upper end of ordinary axes: last cell
        idx = np.where(periodic, np.mod(idx, n), np.clip(idx, 0, n - 1))
        return self.flat_index(idx)

    # ---- Neighbourhoods ----

    def box_distances(self, points: np.ndarray, cells: np.ndarray) -> np.ndarray:
        """Distance from each point to the closed box of the paired cell."""
        centers = self.centers(cells)
        gaps = self.domain.axis_differences(points, centers) - self.widths / 2.0
        return np.sqrt(np.sum(np.maximum(gaps, 0.0) ** 2, axis=-1))

    def _axis_candidates(
        self, axis: int, coords: np.ndarray, radius: float
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Index window covering ``[x - r, x + r]`` on one axis.

        Returns ``(indices, valid)`` of shape ``(n, K)``.
        """
        n_axis = int(self.subdivisions[axis])
        width = float(self.widths[axis])
        lo = self.domain.bounds[axis][0]
        periodic = self.domain.periodic[axis]
        k = _window_size(radius, width)
        if periodic and k >= n_axis:
            window = np.broadcast_to(np.arange(n_axis), (coords.shape[0], n_axis))
            return window, np.ones(window.shape, dtype=bool)
        # one cell below floor() keeps the box whose upper face touches x - r
        base = np.floor((coords - radius - lo) / width).astype(np.int64) - 1
        window = base[:, None] + np.arange(k, dtype=np.int64)[None, :]
        if periodic:
            return np.mod(window, n_axis), np.ones(window.shape, dtype=bool)
        valid = (window >= 0) & (window < n_axis)
        return np.clip(window, 0, n_axis - 1), valid

    def candidate_pairs(
        self, points: np.ndarray, radius: float
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Superset of the cells whose boxes meet the radius-r ball of each point.

        Returns flat ``(rows, cells)``: ``rows[j]`` indexes ``points``. A
        cell may repeat for a row when a periodic window wraps onto itself.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        windows = [self._axis_candidates(a, pts[:, a], radius) for a in range(self.dim)]
        sizes = [w[0].shape[1] for w in windows]
        combos = np.indices(sizes).reshape(self.dim, -1)
        n_pts = pts.shape[0]
        cells = np.zeros((n_pts, combos.shape[1]), dtype=np.int64)
        valid = np.ones((n_pts, combos.shape[1]), dtype=bool)
        for axis, (idx, ok) in enumerate(windows):
            cells += idx[:, combos[axis]] * self.strides[axis]
            valid &= ok[:, combos[axis]]
        rows = np.broadcast_to(np.arange(n_pts)[:, None], cells.shape)
        return rows[valid], cells[valid]

    def chunk_size(self, radius: float) -> int:
        """Points per block so candidate arrays stay near ``CANDIDATE_BLOCK``."""
        per_point = 1
        for axis in range(self.dim):
            k = _window_size(radius, float(self.widths[axis]))
            per_point *= min(k, int(self.subdivisions[axis])) if self.domain.periodic[axis] else k
        return max(1, CANDIDATE_BLOCK // per_point)


# ---- Public scalar API ----


def metric(domain: Domain, p: Sequence[float], q: Sequence[float]) -> float:
    """Euclidean distance, shortest way round on periodic axes."""
    p_arr = np.asarray(p, dtype=float)
    q_arr = np.asarray(q, dtype=float)
    if p_arr.shape != (domain.dim,) or q_arr.shape != (domain.dim,):
        raise DomainError(f"expected points with {domain.dim} coordinates")
    return float(domain.distances(p_arr, q_arr))


def cell_of(grid: Grid, p: Sequence[float]) -> int:
    """Cell containing ``p``; periodic coordinates are reduced first."""
    return int(grid.cells_of(np.asarray(p, dtype=float)[None, :])[0])


def cell_center(grid: Grid, c: int) -> Tuple[float, ...]:
    if not 0 <= int(c) < grid.num_cells:
        raise DomainError(f"cell {c} out of range [0, {grid.num_cells})")
    return tuple(float(x) for x in grid.centers(np.array([c]))[0])


def cell_diameter(grid: Grid) -> float:
    return grid.cell_diameter()


def ball_cells(grid: Grid, p: Sequence[float], r: float) -> List[int]:
    """Sorted ids of cells whose closed box meets the closed ball B(p, r)."""
    if r < 0:
        raise DomainError(f"radius must be >= 0, got {r}")
    point = grid.domain.reduce(np.asarray(p, dtype=float)[None, :])
    rows, cells = grid.candidate_pairs(point, r)
    hits = cells[grid.box_distances(point[rows], cells) <= r]
    return [int(c) for c in np.unique(hits)]
