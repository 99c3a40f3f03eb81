"""Built-in convex friction potentials.

Every built-in is reduced to a 1D profile ``p(z) = P(z) + quad * z**2``
with ``P`` convex piecewise affine, applied separably to a subset of the
state coordinates: ``phi(x) = sum_{i in axes} p(x_i)``.  This keeps the
subdifferential, the kink locus and the proximal map exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

KINDS = ("relu", "abs", "distance_to_interval", "quadratic", "piecewise_affine")


class PotentialError(ValueError):
    """Raised for invalid potential data (non-convexity, bad parameters)."""


@dataclass(frozen=True)
class Profile:
    """Convex 1D profile ``P(z) + quad * z**2``.

    ``slopes[j]`` is the slope of ``P`` left of ``breakpoints[j]``;
    ``slopes[-1]`` is the slope right of the last breakpoint.
    """

    breakpoints: np.ndarray
    slopes: np.ndarray
    quad: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        s = np.asarray(self.slopes, dtype=float).reshape(-1)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "slopes", s)
        if s.size != b.size + 1:
            raise PotentialError(
                f"piecewise_affine needs len(slopes) == len(breakpoints) + 1, got {s.size} and {b.size}"
            )
        if b.size > 1 and np.any(np.diff(b) <= 0):
            raise PotentialError("breakpoints must be strictly increasing")
        if np.any(np.diff(s) < 0):
            raise PotentialError(f"non-convex potential: slopes {s.tolist()} are not nondecreasing")
        if not np.isfinite(self.quad) or self.quad < 0:
            raise PotentialError(f"non-convex potential: quadratic scale {self.quad} < 0")

    def value(self, z):
        z = np.asarray(z, dtype=float)
        if self.breakpoints.size == 0:
            out = self.slopes[0] * z
        else:
            out = self.slopes[0] * (z - self.breakpoints[0])
            jumps = np.diff(self.slopes)
            for b, d in zip(self.breakpoints, jumps):
                out = out + d * np.maximum(z - b, 0.0)
        return out + self.quad * z * z

    def subgradient(self, z):
        """Return ``(lo, hi)`` endpoints of the subdifferential at ``z``."""
        z = np.asarray(z, dtype=float)
        b = self.breakpoints
        idx = np.searchsorted(b, z, side="left")
        on = np.zeros(z.shape, dtype=bool)
        if b.size:
            on = (idx < b.size) & (b[np.minimum(idx, b.size - 1)] == z)
        lo = self.slopes[idx]
        hi = np.where(on, self.slopes[np.minimum(idx + 1, b.size)], lo)
        return lo + 2 * self.quad * z, hi + 2 * self.quad * z

    def slope_bound(self, radius: float) -> float:
        """Global Lipschitz constant on ``[-radius, radius]``."""
        return float(np.max(np.abs(self.slopes))) + 2.0 * self.quad * float(radius)

    def piece_slopes(self, merged: np.ndarray) -> np.ndarray:
        """Slopes of ``P`` on the pieces cut by the sorted ``merged`` breakpoints."""
        if merged.size == 0:
            return self.slopes[:1].copy()
        mids = np.empty(merged.size + 1)
        mids[0] = merged[0] - 1.0
        mids[-1] = merged[-1] + 1.0
        mids[1:-1] = 0.5 * (merged[:-1] + merged[1:])
        return self.slopes[np.searchsorted(self.breakpoints, mids, side="left")]


def make_profile(kind: str, params: Mapping | None = None) -> Profile:
    params = dict(params or {})
    if kind == "relu":
        return Profile([0.0], [0.0, 1.0])
    if kind == "abs":
        return Profile([0.0], [-1.0, 1.0])
    if kind == "distance_to_interval":
        lo, hi = float(params.get("lo", 0.0)), float(params.get("hi", 0.0))
        if hi < lo:
            raise PotentialError(f"distance_to_interval needs lo <= hi, got [{lo}, {hi}]")
        if hi == lo:
            return Profile([lo], [-1.0, 1.0])
        return Profile([lo, hi], [-1.0, 0.0, 1.0])
    if kind == "quadratic":
        scale = float(params.get("scale", 1.0))
        if scale < 0:
            raise PotentialError(f"non-convex potential: quadratic scale {scale} < 0")
        return Profile([], [0.0], quad=scale)
    if kind == "piecewise_affine":
        return Profile(params.get("breakpoints", []), params.get("slopes", [0.0]))
    raise PotentialError(f"unknown potential kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True)
class PotentialSpec:
    """Potential kind with per-atom parameter overrides.

    ``axes`` lists the state coordinates the profile acts on (all when
    ``None``).  ``overrides`` maps an atom index to parameter updates.
    """

    kind: str
    params: Mapping = field(default_factory=dict)
    axes: Sequence[int] | None = None
    overrides: Mapping[int, Mapping] = field(default_factory=dict)

    def profile(self, atom_index: int) -> Profile:
        params = dict(self.params)
        params.update(self.overrides.get(atom_index, {}))
        return make_profile(self.kind, params)

    def active_axes(self, dim: int) -> tuple[int, ...]:
        if self.axes is None:
            return tuple(range(dim))
        axes = tuple(int(a) for a in self.axes)
        if any(a < 0 or a >= dim for a in axes):
            raise PotentialError(f"potential axes {axes} out of range for dim {dim}")
        return axes

    def lipschitz(self, atom_index: int, dim: int, radius: float) -> float:
        """Euclidean Lipschitz constant of ``phi(., alpha)`` on the box of given radius.

        Quadratic profiles are only Lipschitz on bounded sets; ``radius`` is
        the largest coordinate magnitude of the declared state box.
        """
        n_axes = len(self.active_axes(dim))
        return float(np.sqrt(n_axes)) * self.profile(atom_index).slope_bound(radius)

    def kinks(self, atom_index: int) -> np.ndarray:
        return self.profile(atom_index).breakpoints
