"""Grid outer approximations of reachable sets, attainable target points and feasibility.

Each occupied cell keeps the bounding box of the continuous positions
reached inside it, so propagation does not drift to cell centres.  A step
maps a box to the bounding box of ``x + h Fbar(t, x)`` over sample points
``x`` of the box (spacing below half a cell, kink points included) and
splits the image over the cells it meets.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from .dynamics import velocity_boxes
from .integrator import time_grid
from .scenario import Scenario


class Feasibility(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE_UP_TO_HORIZON = "infeasible_up_to_horizon"


@dataclass
class ReachTable:
    """Occupied cells per time node.

    ``cells[k]`` is an integer array ``(K_k, n)`` of cell indices and
    ``boxes[k]`` the ``(K_k, n, 2)`` bounding boxes of reached positions.
    ``exit_time`` is the first node time at which an image left the
    state box (propagation is clipped there), or ``None``.
    """

    scenario_name: str
    origin: tuple
    times: np.ndarray
    lower: np.ndarray
    delta: float
    shape: tuple
    cells: list
    boxes: list
    exit_time: float | None = None

    def cell_of(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = np.floor((x - self.lower) / self.delta).astype(int)
        return np.clip(idx, 0, np.array(self.shape) - 1)

    def centers(self, k: int) -> np.ndarray:
        return self.lower + (self.cells[k] + 0.5) * self.delta

    def mask(self, k: int, inflate: int = 0) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[tuple(self.cells[k].T)] = True
        for ax in range(len(self.shape)):
            for _ in range(inflate):
                m = m | _shift(m, ax, 1) | _shift(m, ax, -1)
        return m

    def contains(self, k: int, x, inflate: int = 1) -> bool:
        """Whether ``x`` lies in an occupied cell at node ``k`` after ``inflate`` cells of dilation."""
        x = np.asarray(x, dtype=float)
        idx = np.floor((x - self.lower) / self.delta).astype(int)
        if np.any(idx < -inflate) or np.any(idx >= np.array(self.shape) + inflate):
            return False
        d = np.abs(self.cells[k] - idx).max(-1) if len(self.cells[k]) else np.array([])
        return bool(np.any(d <= inflate))

    def extent(self, k: int) -> np.ndarray:
        """Smallest box ``(n, 2)`` containing every reached position at node ``k``."""
        b = self.boxes[k]
        return np.stack([b[:, :, 0].min(0), b[:, :, 1].max(0)], axis=-1)

    def to_csv(self, path) -> None:
        n = len(self.shape)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "cell_index"] + [f"x_center_{i + 1}" for i in range(n)])
            for k, t in enumerate(self.times):
                flat = np.ravel_multi_index(tuple(self.cells[k].T), self.shape) if len(self.cells[k]) else []
                for fi, c in zip(flat, self.centers(k)):
                    w.writerow([repr(float(t)), int(fi), *map(repr, map(float, c))])


def _shift(m, ax, d):
    out = np.zeros_like(m)
    src = [slice(None)] * m.ndim
    dst = [slice(None)] * m.ndim
    if d > 0:
        src[ax], dst[ax] = slice(0, -d), slice(d, None)
    else:
        src[ax], dst[ax] = slice(-d, None), slice(0, d)
    out[tuple(dst)] = m[tuple(src)]
    return out


@dataclass
class AttainableSet:
    """Attainable target points ``(s, y)``; ``points`` is ``(N, 1 + n)``."""

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __len__(self):
        return self.points.shape[0]

    @property
    def empty(self) -> bool:
        return len(self) == 0

    def to_csv(self, path) -> None:
        n = self.points.shape[1] - 1
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s"] + [f"y_{i + 1}" for i in range(n)])
            w.writerows([[repr(float(v)) for v in row] for row in self.points])


def _grid(s: Scenario, delta: float):
    lower = s.state_box[:, 0]
    shape = tuple(int(np.ceil((b - a) / delta - 1e-9)) for a, b in s.state_box)
    return lower, shape


def _samples(s: Scenario, boxes: np.ndarray, delta: float):
    """Sample points of every box; returns ``(points (P, n), owner (P,))``."""
    n = boxes.shape[1]
    width = (boxes[:, :, 1] - boxes[:, :, 0]).max()
    m = int(np.ceil(width / (0.5 * delta))) + 1 if width > 0 else 1
    fr = np.linspace(0.0, 1.0, m) if m > 1 else np.zeros(1)
    per_axis = [boxes[:, i, 0:1] + (boxes[:, i, 1:2] - boxes[:, i, 0:1]) * fr for i in range(n)]
    if n == 1:
        pts = per_axis[0][..., None]
    else:
        a, b = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        pts = np.stack([per_axis[0][:, a.ravel()], per_axis[1][:, b.ravel()]], axis=-1)
    owner = np.repeat(np.arange(boxes.shape[0]), pts.shape[1])
    pts = pts.reshape(-1, n)
    # kink points inside a box see the largest velocity set
    extra, eown = [], []
    for i, ks in enumerate(s.kinks()):
        for kv in ks:
            inside = (boxes[:, i, 0] <= kv) & (boxes[:, i, 1] >= kv)
            for j in np.nonzero(inside)[0]:
                for p in pts[owner == j]:
                    q = p.copy()
                    q[i] = kv
                    extra.append(q)
                    eown.append(j)
    if extra:
        pts = np.vstack([pts, np.array(extra)])
        owner = np.concatenate([owner, np.array(eown)])
    return pts, owner


def _propagate(s, t, h, lower, shape, delta, boxes):
    """Image boxes of one step, split over cells; returns ``(cells, boxes, exited)``."""
    n = len(shape)
    pts, owner = _samples(s, boxes, delta)
    lo, hi = velocity_boxes(s, t, pts)
    vlo, vhi = lo.min(-2), hi.max(-2)
    K = boxes.shape[0]
    ilo = np.full((K, n), np.inf)
    ihi = np.full((K, n), -np.inf)
    np.minimum.at(ilo, owner, pts + h * vlo)
    np.maximum.at(ihi, owner, pts + h * vhi)
    upper = lower + np.array(shape) * delta
    exited = bool(np.any(ilo < lower) or np.any(ihi > upper))
    ilo = np.clip(ilo, lower, upper)
    ihi = np.clip(ihi, lower, upper)
    smax = np.array(shape) - 1
    c0 = np.clip(np.floor((ilo - lower) / delta).astype(int), 0, smax)
    c1 = np.clip(np.floor((ihi - lower) / delta).astype(int), 0, smax)
    span = (c1 - c0).max(0) + 1
    offs = np.stack(np.meshgrid(*[np.arange(sp) for sp in span], indexing="ij"), -1).reshape(-1, n)
    cand = c0[:, None, :] + offs[None, :, :]
    ok = np.all(cand <= c1[:, None, :], axis=-1)
    src = np.broadcast_to(np.arange(K)[:, None], ok.shape)[ok]
    cand = cand[ok]
    clo = lower + cand * delta
    blo = np.maximum(ilo[src], clo)
    bhi = np.minimum(ihi[src], clo + delta)
    flat = np.ravel_multi_index(tuple(cand.T), shape)
    uniq, inv = np.unique(flat, return_inverse=True)
    out_lo = np.full((uniq.size, n), np.inf)
    out_hi = np.full((uniq.size, n), -np.inf)
    np.minimum.at(out_lo, inv, blo)
    np.maximum.at(out_hi, inv, bhi)
    cells = np.stack(np.unravel_index(uniq, shape), -1)
    return cells, np.stack([out_lo, out_hi], -1), exited


def reach(s: Scenario, t0: float, x0, s_end: float, h: float | None = None, delta: float | None = None,
          stop=None) -> ReachTable:
    """Propagate occupied cells from ``(t0, x0)`` to ``s_end``.

    ``stop(k, table)`` may return True to end propagation early.
    """
    h = float(s.numerics["h"] if h is None else h)
    delta = float(s.numerics["delta"] if delta is None else delta)
    if not (h > 0 and delta > 0):
        raise ValueError("h and delta must be positive")
    ts = time_grid(float(t0), float(s_end), h)
    lower, shape = _grid(s, delta)
    x0 = np.asarray(x0, dtype=float).reshape(s.dim)
    upper = lower + np.array(shape) * delta
    if np.any(x0 < lower) or np.any(x0 > upper):
        raise ValueError(f"x0 = {x0.tolist()} lies outside the state box")
    c = np.clip(np.floor((x0 - lower) / delta).astype(int), 0, np.array(shape) - 1)
    rt = ReachTable(getattr(s, "name", ""), (float(t0), *x0.tolist()), ts[:1], lower, delta, shape,
                    [c[None, :]], [np.stack([x0, x0], -1)[None]])
    times = [ts[0]]
    for k in range(ts.size - 1):
        if stop is not None and stop(k, rt):
            break
        cells, boxes, exited = _propagate(s, ts[k], ts[k + 1] - ts[k], lower, shape, delta, rt.boxes[-1])
        if exited and rt.exit_time is None:
            rt.exit_time = float(ts[k + 1])
        rt.cells.append(cells)
        rt.boxes.append(boxes)
        times.append(ts[k + 1])
        rt.times = np.array(times)
    return rt


def _attainable_at(s: Scenario, t: float, boxes: np.ndarray) -> np.ndarray:
    if s.target.is_empty:
        return np.zeros((0, s.dim))
    centre = boxes.mean(-1)
    tt = np.full(centre.shape[0], t)
    y = s.target.project_state(tt, centre)
    y = np.clip(y, boxes[:, :, 0], boxes[:, :, 1])
    ok = s.target.contains(tt, y)
    return y[ok]


def attainable(s: Scenario, rt: ReachTable) -> AttainableSet:
    """Reached points that lie in the target at their time (exact membership)."""
    rows = []
    for k, t in enumerate(rt.times):
        y = _attainable_at(s, float(t), rt.boxes[k])
        if y.size:
            rows.append(np.column_stack([np.full(y.shape[0], t), y]))
    if not rows:
        return AttainableSet(np.zeros((0, 1 + s.dim)))
    return AttainableSet(np.vstack(rows))


def in_domain(s: Scenario, t0: float, x0, horizon: float, h: float | None = None,
              delta: float | None = None) -> Feasibility:
    """Horizon-relative feasibility: some target point is reachable by ``t0 + horizon``."""
    if t0 + horizon > s.t_max_horizon + 1e-12:
        raise ValueError("t0 + horizon exceeds t_max_horizon")
    if s.target.is_empty:
        return Feasibility.INFEASIBLE_UP_TO_HORIZON
    found = []

    def stop(k, rt):
        if _attainable_at(s, float(rt.times[k]), rt.boxes[k]).size:
            found.append(k)
            return True
        return False

    rt = reach(s, t0, x0, t0 + horizon, h, delta, stop=stop)
    if found or _attainable_at(s, float(rt.times[-1]), rt.boxes[-1]).size:
        return Feasibility.FEASIBLE
    return Feasibility.INFEASIBLE_UP_TO_HORIZON
