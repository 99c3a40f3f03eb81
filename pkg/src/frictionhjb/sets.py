"""Convex set values of the velocity fields.

Intervals are exact in 1D.  In 2D a set is the convex hull of a finite
list of extreme points; support-function queries only ever need those.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConvexSet1D:
    """Closed interval ``[lo, hi]``.

    ``convexified`` is set when the interval is the hull of a union with
    gaps; ``max_gap`` is then the widest uncovered gap.
    """

    lo: float
    hi: float
    convexified: bool = False
    max_gap: float = 0.0

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def dim(self) -> int:
        return 1

    @property
    def extreme_points(self) -> np.ndarray:
        if self.lo == self.hi:
            return np.array([[self.lo]])
        return np.array([[self.lo], [self.hi]])

    @property
    def is_singleton(self) -> bool:
        return self.lo == self.hi

    def contains(self, v, tol: float = 0.0) -> bool:
        v = float(np.asarray(v).reshape(-1)[0])
        return self.lo - tol <= v <= self.hi + tol

    def distance(self, v) -> float:
        v = float(np.asarray(v).reshape(-1)[0])
        return max(self.lo - v, v - self.hi, 0.0)

    def support(self, eta) -> float:
        """``max_{v in set} v * eta``."""
        e = float(np.asarray(eta).reshape(-1)[0])
        return max(self.lo * e, self.hi * e)

    def __iter__(self):
        yield self.lo
        yield self.hi


@dataclass(frozen=True)
class ConvexSetND:
    """Convex hull of ``extreme_points`` (rows, pairwise distinct).

    ``provenance`` is ``"exact"`` when the list is the exact vertex set of
    the represented polytope and ``"sampled-hull"`` when the polytope is
    the hull of a finite union that need not be convex.
    """

    extreme_points: np.ndarray
    provenance: str = "exact"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.extreme_points, dtype=float))
        object.__setattr__(self, "extreme_points", pts)
        if pts.shape[0] == 0:
            raise ValueError("empty extreme-point list")
        if self.provenance not in ("exact", "sampled-hull"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def dim(self) -> int:
        return self.extreme_points.shape[1]

    @property
    def convexified(self) -> bool:
        return self.provenance == "sampled-hull"

    def support(self, eta) -> float:
        return float(np.max(self.extreme_points @ np.asarray(eta, dtype=float)))

    def contains(self, v, tol: float = 1e-12) -> bool:
        return self.distance(v) <= tol

    def distance(self, v) -> float:
        v = np.asarray(v, dtype=float)
        pts = self.extreme_points
        if pts.shape[0] == 1:
            return float(np.linalg.norm(v - pts[0]))
        if pts.shape[0] == 2:
            return _seg_dist(v, pts[0], pts[1])
        # outside iff some edge separates; distance is then the nearest edge
        inside = True
        for a, b in zip(pts, np.roll(pts, -1, axis=0)):
            if _cross(b - a, v - a) < 0:
                inside = False
                break
        if inside:
            return 0.0
        return min(_seg_dist(v, a, b) for a, b in zip(pts, np.roll(pts, -1, axis=0)))


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _seg_dist(p, a, b) -> float:
    d = b - a
    den = float(d @ d)
    s = 0.0 if den == 0 else min(max(float((p - a) @ d) / den, 0.0), 1.0)
    return float(np.linalg.norm(p - (a + s * d)))


def hull_2d(points) -> np.ndarray:
    """Vertices of the convex hull in counter-clockwise order (monotone chain).

    Collinear and duplicate points are dropped; degenerate inputs return a
    single point or a segment's two endpoints.
    """
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if pts.shape[0] <= 2:
        return pts
    P = [tuple(p) for p in pts]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross(np.subtract(out[-1], out[-2]), np.subtract(p, out[-2])) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(P)
    upper = half(reversed(P))
    return np.array(lower[:-1] + upper[:-1])


def interval_union_gap(los, his) -> float:
    """Largest gap in the union of intervals ``[los[i], his[i]]`` (0 if connected)."""
    order = np.argsort(los, kind="stable")
    lo = np.asarray(los, dtype=float)[order]
    hi = np.asarray(his, dtype=float)[order]
    reach = np.maximum.accumulate(hi)
    gaps = lo[1:] - reach[:-1]
    return float(max(0.0, gaps.max())) if gaps.size else 0.0
