"""Curvilinear (arc length s, lateral offset d) frame over a reference polyline."""

from __future__ import annotations

import numpy as np


class PathProjectionError(Exception):
    """The queried point does not project onto the reference path."""


class ReferencePath:
    """Piecewise-linear reference path with arc-length parameterization.

    Headings are constant per segment.  ``pose_at`` extrapolates linearly
    along the end segments so a trajectory horizon may run slightly past the
    last waypoint without failing.
    """

    def __init__(self, points) -> None:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("reference path needs at least two 2-D points")
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths == 0.0):
            raise ValueError("reference path has a zero-length segment")
        self.points = pts
        self._seg_dir = seg / lengths[:, None]
        self._seg_len = lengths
        self._s = np.concatenate([[0.0], np.cumsum(lengths)])
        self.length = float(self._s[-1])

    def _segment_index(self, s: float) -> int:
        idx = int(np.searchsorted(self._s, s, side="right")) - 1
        return min(max(idx, 0), len(self._seg_len) - 1)

    def heading_at(self, s: float) -> float:
        d = self._seg_dir[self._segment_index(s)]
        return float(np.arctan2(d[1], d[0]))

    def pose_at(self, s: float, d: float = 0.0) -> tuple[float, float, float]:
        """World (x, y, heading) of the point at arc length s, offset d left."""
        i = self._segment_index(s)
        t = self._seg_dir[i]
        base = self.points[i] + (s - self._s[i]) * t
        # left normal of the segment direction
        x = base[0] - d * t[1]
        y = base[1] + d * t[0]
        return float(x), float(y), float(np.arctan2(t[1], t[0]))

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Frenet coordinates (s, d) of a world point; d > 0 left of the path.

        Raises PathProjectionError when the point falls before the first or
        beyond the last waypoint along the path direction.
        """
        p = np.array([x, y])
        rel = p - self.points[:-1]
        along = np.einsum("ij,ij->i", rel, self._seg_dir)
        clamped = np.clip(along, 0.0, self._seg_len)
        foot = self.points[:-1] + clamped[:, None] * self._seg_dir
        dist2 = np.sum((foot - p) ** 2, axis=1)
        i = int(np.argmin(dist2))
        if i == 0 and along[0] < 0.0:
            raise PathProjectionError("point lies before the start of the reference path")
        if i == len(self._seg_len) - 1 and along[i] > self._seg_len[i]:
            raise PathProjectionError("point lies beyond the end of the reference path")
        t = self._seg_dir[i]
        d = -(p[0] - foot[i, 0]) * t[1] + (p[1] - foot[i, 1]) * t[0]
        return float(self._s[i] + clamped[i]), float(d)
