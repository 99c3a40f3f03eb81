"""Free-time Mayer value function by backward semi-Lagrangian dynamic programming.

At each time slice ``V = min(obstacle, transport)``: the obstacle is ``W``
on the target and ``+inf`` off it, the transport is the smallest
interpolated ``V(t + h, x + h v)`` over candidate velocities ``v`` of
``Fbar(t, x)``.  The free final time is truncated at ``t_max_horizon``
where ``V`` equals the obstacle.  Infinite values live in a boolean mask.

Feasibility is tracked by a finite level-set ``phi``: the smallest
signed distance to the target (negative inside) along the best path up
to the horizon, computed by the same recursion.  The signed form keeps
``phi`` free of kinks at its zero level, so interpolation moves the
front at the right speed.  A departure point is admissible when its
interpolated ``phi`` is (numerically) zero; the value there interpolates
the finite corners only.  A threshold on masked corner weight instead
would move the front by whole fractions of a cell, too fast or not at
all depending on the step ratio.  Queries use the strict rule (any
masked corner gives ``+inf``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dynamics import VelocityTable, velocity_table
from .integrator import ControlSignal, Trajectory, integrate, step, time_grid
from .scenario import Scenario

STOP = kernels.STOP
NONE = kernels.NONE
# finite-corner renormalization down to this corner weight
MASK_WEIGHT = 1.0 - 1e-6
PHI_TOL = 1e-9
TIE_TOL = 1e-10


class OutOfGridError(ValueError):
    """A query lies outside the tabulated time window or state box."""


class BudgetExceeded(RuntimeError):
    """The brute-force oracle would exceed its enumeration budget."""


@dataclass
class ValueTable:
    """Tabulated value function.

    ``values`` and ``inf`` have shape ``(K,) + shape``; ``choice`` holds
    the selected candidate index per node (``STOP`` for the obstacle,
    ``NONE`` where the value is infinite) for all slices but the last.
    ``tables[k]`` is the velocity table used at slice ``k`` (one shared
    table when the dynamics do not depend on time).  ``phi`` is the
    feasibility level-set (``<= 0`` on the horizon-relative domain).
    """

    times: np.ndarray
    lower: np.ndarray
    dx: np.ndarray
    shape: tuple
    values: np.ndarray
    inf: np.ndarray
    choice: np.ndarray
    tables: list
    on_target: np.ndarray
    phi: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return len(self.shape)

    def table(self, k: int) -> VelocityTable:
        return self.tables[0] if len(self.tables) == 1 else self.tables[k]

    def axes(self) -> list[np.ndarray]:
        return [self.lower[i] + self.dx[i] * np.arange(self.shape[i]) for i in range(self.dim)]

    def nodes(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(grids, axis=-1)

    def slice_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t = {t} is not a time node")
        return k

    def to_csv(self, path, time_stride: int = 1) -> None:
        n = self.dim
        pts = self.nodes().reshape(-1, n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{i + 1}" for i in range(n)] + ["value", "is_inf"])
            for k in range(0, self.times.size, max(1, int(time_stride))):
                vals = self.values[k].reshape(-1)
                infs = self.inf[k].reshape(-1)
                for p, v, m in zip(pts, vals, infs):
                    w.writerow([repr(float(self.times[k])), *map(repr, map(float, p)),
                                "inf" if m else repr(float(v)), int(m)])


def _grid(s: Scenario, delta):
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (s.dim,)).copy()
    lower = s.state_box[:, 0].copy()
    n = np.rint((s.state_box[:, 1] - lower) / delta).astype(int) + 1
    return lower, delta, tuple(int(v) for v in n)


def _interp(values, inf, lower, dx, pts):
    if values.ndim == 1:
        return kernels.interp_1d(values, inf, float(lower[0]), float(dx[0]), pts[..., 0])
    return kernels.interp_2d(values, inf, lower, dx, pts)


def _obstacle(s: Scenario, t: float, nodes: np.ndarray):
    tt = np.full(nodes.shape[:-1], t)
    inside = s.target.contains(tt, nodes)
    w = np.full(nodes.shape[:-1], np.inf)
    if inside.any():
        w[inside] = s.W(tt[inside], nodes[inside])
    bad = ~np.isfinite(w)
    return np.where(bad, 0.0, w), bad, inside


def _phi_obstacle(s: Scenario, t: float, nodes: np.ndarray, cap: float):
    d = s.target.signed_distance(np.full(nodes.shape[:-1], t), nodes)
    return np.clip(d, -cap, cap)


def _admissible(vt: ValueTable, k: int, cand: np.ndarray) -> np.ndarray:
    """Candidates of slice ``k`` whose departure point is feasible; others become NaN."""
    hk = float(vt.times[k + 1] - vt.times[k])
    pts = vt.nodes()[..., None, :] + hk * cand
    none = np.zeros(vt.shape, dtype=bool)
    if vt.dim == 1:
        ph, _ = kernels.interp_1d(vt.phi[k + 1], none, float(vt.lower[0]), float(vt.dx[0]), pts[..., 0])
    else:
        ph, _ = kernels.interp_2d(vt.phi[k + 1], none, vt.lower, vt.dx, pts)
    return np.where((ph <= PHI_TOL)[..., None], cand, np.nan)


def solve_value(s: Scenario, h: float | None = None, delta=None, t0: float | None = None,
                interior: int | None = None) -> ValueTable:
    """Backward dynamic programming from ``t_max_horizon`` down to ``t0``.

    Candidate velocities are the extreme points of ``Fbar`` plus
    ``interior`` samples per edge; ties go to the obstacle, then to the
    first candidate (smallest witnessing control).
    """
    h = float(s.numerics["h"] if h is None else h)
    delta = s.numerics["delta"] if delta is None else delta
    t0 = float(s.time_window[0] if t0 is None else t0)
    times = time_grid(t0, float(s.t_max_horizon), h)
    lower, dx, shape = _grid(s, delta)
    vt = ValueTable(times, lower, dx, shape, np.empty((times.size,) + shape), np.empty((times.size,) + shape, bool),
                    np.full((times.size,) + shape, NONE, dtype=np.int32), [], np.empty((times.size,) + shape, bool),
                    np.empty((times.size,) + shape))
    nodes = vt.nodes()
    K = times.size - 1
    cap = 10.0 * float(np.ptp(s.state_box, axis=1).max()) + 1.0
    none = np.zeros(shape, dtype=bool)
    vt.phi[K] = _phi_obstacle(s, float(times[K]), nodes, cap)
    v, m, inside = _obstacle(s, float(times[K]), nodes)
    vt.values[K], vt.inf[K], vt.on_target[K] = np.where(m, np.inf, v), m, inside
    vt.choice[K] = np.where(m, NONE, STOP)
    shared = None if s.time_dependent else velocity_table(s, float(times[0]), nodes, interior)
    tables = [None] * (K + 1)
    for k in range(K - 1, -1, -1):
        t = float(times[k])
        tab = shared if shared is not None else velocity_table(s, t, nodes, interior)
        tables[k] = tab
        ob, ob_inf, inside = _obstacle(s, t, nodes)
        pob = _phi_obstacle(s, t, nodes, cap)
        hk = float(times[k + 1] - times[k])
        cand = _admissible(vt, k, tab.cand)
        if s.dim == 1:
            vt.phi[k] = kernels.sl_min_1d(vt.phi[k + 1], none, float(lower[0]), float(dx[0]), tab.cand[..., 0], hk,
                                          pob, none)[0]
            val, vinf, ch = kernels.sl_min_1d(vt.values[k + 1], vt.inf[k + 1], float(lower[0]), float(dx[0]),
                                              cand[..., 0], hk, ob, ob_inf, MASK_WEIGHT)
        else:
            vt.phi[k] = kernels.sl_min_2d(vt.phi[k + 1], none, lower, dx, tab.cand, hk, pob, none)[0]
            val, vinf, ch = kernels.sl_min_2d(vt.values[k + 1], vt.inf[k + 1], lower, dx, cand, hk, ob, ob_inf,
                                              MASK_WEIGHT)
        vt.values[k], vt.inf[k], vt.choice[k], vt.on_target[k] = val, vinf, ch, inside
    tables[K] = shared if shared is not None else velocity_table(s, float(times[K]), nodes, interior)
    vt.tables = [shared] if shared is not None else tables
    return vt


def query_value(vt: ValueTable, t: float, x) -> float:
    """Multilinear interpolation in ``(t, x)``; ``inf`` if a relevant corner is masked."""
    x = np.asarray(x, dtype=float).reshape(vt.dim)
    upper = vt.lower + vt.dx * (np.array(vt.shape) - 1)
    tol = 1e-9
    if not (vt.times[0] - tol <= t <= vt.times[-1] + tol) or np.any(x < vt.lower - tol) or np.any(x > upper + tol):
        raise OutOfGridError(f"query ({t}, {x.tolist()}) is outside the grid")
    x = np.clip(x, vt.lower, upper)
    k = int(np.clip(np.searchsorted(vt.times, t, side="right") - 1, 0, vt.times.size - 1))
    if k == vt.times.size - 1 or abs(t - vt.times[k]) <= tol:
        f = 0.0
    else:
        f = (t - vt.times[k]) / (vt.times[k + 1] - vt.times[k])
        if abs(1 - f) <= tol:
            k, f = k + 1, 0.0
    a, ai = _interp(vt.values[k], vt.inf[k], vt.lower, vt.dx, x[None])
    if f == 0.0:
        return float(np.inf if ai[0] else a[0])
    b, bi = _interp(vt.values[k + 1], vt.inf[k + 1], vt.lower, vt.dx, x[None])
    if ai[0] or bi[0]:
        return float("inf")
    return float((1 - f) * a[0] + f * b[0])


def query_values(vt: ValueTable, t: float, X) -> np.ndarray:
    """Vectorized :func:`query_value` at one time for many states."""
    X = np.asarray(X, dtype=float).reshape(-1, vt.dim)
    return np.array([query_value(vt, t, x) for x in X])


# ----------------------------------------------------------------- oracle


def oracle_controls(s: Scenario, branching: int) -> np.ndarray:
    """``branching`` evenly spaced entries of the sorted control list."""
    idx = np.unique(np.rint(np.linspace(0, s.controls.shape[0] - 1, int(branching))).astype(int))
    return s.controls[idx]


def brute_force_value(s: Scenario, t0: float, x0, depth: int, branching: int, h_oracle: float = 0.1,
                      budget: int = 10_000, max_states: int = 2_000_000, decimals: int = 9) -> float:
    """Minimum of ``W`` over target hits of enumerated piecewise-constant controls.

    All ``branching ** depth`` control words are covered: paths reaching
    the same state (rounded to ``decimals``) at the same step share every
    continuation, so only distinct states are expanded.  The result is an
    upper bound on the value of the exact problem.
    """
    if depth * branching > budget:
        raise BudgetExceeded(f"depth * branching = {depth * branching} exceeds budget {budget}")
    U = oracle_controls(s, branching)
    X = np.asarray(x0, dtype=float).reshape(1, s.dim)
    best = np.inf
    t = float(t0)

    def hits(t, X):
        tt = np.full(X.shape[0], t)
        inside = s.target.contains(tt, X)
        if not inside.any():
            return np.inf
        w = s.W(tt[inside], X[inside])
        w = w[np.isfinite(w)]
        return float(w.min()) if w.size else np.inf

    best = min(best, hits(t, X))
    for d in range(depth):
        Xe = np.repeat(X, U.shape[0], axis=0)
        Ue = np.tile(U, (X.shape[0], 1))
        Xn = step(s, t, Xe, Ue, h_oracle)
        Xn = Xn[np.all(np.isfinite(Xn), axis=-1)]
        X = np.unique(np.round(Xn, decimals), axis=0)
        if X.shape[0] > max_states:
            raise BudgetExceeded(f"{X.shape[0]} distinct states at depth {d + 1} exceed max_states {max_states}")
        t = float(t0) + (d + 1) * h_oracle
        best = min(best, hits(t, X))
    return best


# --------------------------------------------------------------- feedback


@dataclass
class FeedbackLaw:
    """Per-node optimal synthesis from a solved table.

    ``u_star`` ``(K,) + shape + (m,)`` and ``w_star`` ``(K,) + shape + (n,)``
    hold the chosen control and velocity (``nan`` where ``V = inf``);
    ``stop`` marks nodes where the obstacle is active.  On kink nodes,
    ``limit_flag`` is set and ``limit_u`` / ``limit_w`` hold the one-sided
    limit of the neighbouring choices whose velocity points into the side
    it was taken from.
    """

    vt: ValueTable
    controls: np.ndarray
    u_star: np.ndarray
    w_star: np.ndarray
    stop: np.ndarray
    kink: np.ndarray
    limit_flag: np.ndarray
    limit_u: np.ndarray
    limit_w: np.ndarray
    kink_coords: list

    def node_index(self, t: float, x) -> tuple:
        vt = self.vt
        k = int(np.clip(np.searchsorted(vt.times, t + 1e-12, side="right") - 1, 0, vt.times.size - 1))
        x = np.asarray(x, dtype=float).reshape(vt.dim)
        j = np.rint((x - vt.lower) / vt.dx).astype(int)
        j = np.clip(j, 0, np.array(vt.shape) - 1)
        # off-kink states never take a kink node's value; use the node on their side
        for ax, ks in enumerate(self.kink_coords):
            node_x = vt.lower[ax] + vt.dx[ax] * j[ax]
            if ks.size and np.any(np.abs(ks - node_x) <= 1e-12) and not np.any(np.abs(ks - x[ax]) <= 1e-12):
                j[ax] += 1 if x[ax] > node_x else -1
        j = np.clip(j, 0, np.array(vt.shape) - 1)
        return (k, *j.tolist())

    def control(self, t: float, x):
        """Control at ``(t, x)``; ``None`` to stop, ``nan`` where infeasible."""
        idx = self.node_index(t, x)
        x = np.asarray(x, dtype=float).reshape(self.vt.dim)
        on_kink = any(ks.size and np.any(np.abs(ks - x[ax]) <= 1e-12) for ax, ks in enumerate(self.kink_coords))
        if self.stop[idx]:
            return None
        if on_kink and self.limit_flag[idx]:
            return self.limit_u[idx]
        return self.u_star[idx]

    def to_csv(self, path, time_stride: int = 1) -> None:
        vt = self.vt
        n = vt.dim
        m = self.controls.shape[1]
        pts = vt.nodes().reshape(-1, n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["t"] + [f"x_{i + 1}" for i in range(n)]
            head += ["u_star"] if m == 1 else [f"u_star_{j + 1}" for j in range(m)]
            head += [f"w_star_{i + 1}" for i in range(n)] + ["limit_flag"]
            w.writerow(head)
            for k in range(0, vt.times.size, max(1, int(time_stride))):
                us = self.u_star[k].reshape(-1, m)
                ws = self.w_star[k].reshape(-1, n)
                lf = self.limit_flag[k].reshape(-1)
                for p, u, ww, f in zip(pts, us, ws, lf):
                    w.writerow([repr(float(vt.times[k])), *map(repr, map(float, p)),
                                *map(repr, map(float, u)), *map(repr, map(float, ww)), int(f)])


def _prefer_extreme(vt: ValueTable, k: int, tab: VelocityTable, ch: np.ndarray) -> np.ndarray:
    """Move each transport choice to the first extreme candidate tying with it.

    The recursion breaks ties by candidate order, which may pick an
    interior sample; the recorded velocity must be an extreme point.
    """
    if k + 1 >= vt.times.size:
        return ch
    hk = float(vt.times[k + 1] - vt.times[k])
    cand = _admissible(vt, k, tab.cand) if vt.phi is not None else tab.cand
    pts = vt.nodes()[..., None, :] + hk * cand
    if vt.dim == 1:
        tr, ti = kernels.interp_1d(vt.values[k + 1], vt.inf[k + 1], float(vt.lower[0]), float(vt.dx[0]),
                                   pts[..., 0], MASK_WEIGHT)
    else:
        tr, ti = kernels.interp_2d(vt.values[k + 1], vt.inf[k + 1], vt.lower, vt.dx, pts, MASK_WEIGHT)
    tr = np.where(ti | np.isnan(cand[..., 0]), np.inf, tr)
    mv = ch >= 0
    best = np.take_along_axis(tr, np.where(mv, ch, 0)[..., None], axis=-1)
    tie = tab.extreme & ~np.isnan(cand[..., 0]) & (tr <= best + TIE_TOL * (1.0 + np.abs(best)))
    alt = np.argmax(tie, axis=-1)
    return np.where(mv & tie.any(-1), alt, ch).astype(ch.dtype)


def extract_feedback(s: Scenario, vt: ValueTable) -> FeedbackLaw:
    """Read the minimizing control and velocity off every node of ``vt``.

    Among candidates tying with the recursion's choice the first extreme
    point is recorded.  Stop nodes record the smallest control with
    ``0 in F`` and velocity 0.
    """
    K = vt.times.size
    n, m = vt.dim, s.ctrl_dim
    u_star = np.full((K,) + vt.shape + (m,), np.nan)
    w_star = np.full((K,) + vt.shape + (n,), np.nan)
    for k in range(K):
        tab = vt.table(k)
        ch = _prefer_extreme(vt, k, tab, vt.choice[k])
        mv = ch >= 0
        idx = np.where(mv, ch, 0)[..., None]
        wit = np.take_along_axis(tab.witness, idx, axis=-1)[..., 0]
        vel = np.take_along_axis(tab.cand, idx[..., None], axis=-2)[..., 0, :]
        u_star[k][mv] = s.controls[wit[mv]]
        w_star[k][mv] = vel[mv]
        st = ch == STOP
        has = st & (tab.stop_control >= 0)
        u_star[k][has] = s.controls[tab.stop_control[has]]
        w_star[k][st] = 0.0
    stop = vt.choice == STOP
    kinks = s.kinks()
    axes = vt.axes()
    kink = np.zeros(vt.shape, dtype=bool)
    limit_flag = np.zeros((K,) + vt.shape, dtype=bool)
    limit_u = np.full_like(u_star, np.nan)
    limit_w = np.full_like(w_star, np.nan)
    for ax, ks in enumerate(kinks):
        on = np.isclose(axes[ax][:, None], ks[None, :], rtol=0, atol=1e-12).any(-1) if ks.size else np.zeros(vt.shape[ax], bool)
        for j in np.nonzero(on)[0]:
            sl = [slice(None)] * n
            sl[ax] = j
            kink[tuple(sl)] = True
            for side in (1, -1):
                jj = j + side
                if not 0 <= jj < vt.shape[ax]:
                    continue
                nb = [slice(None)] * n
                nb[ax] = jj
                src = (slice(None),) + tuple(nb)
                dst = (slice(None),) + tuple(sl)
                w_nb = w_star[src]
                ok = (np.sign(w_nb[..., ax]) == side) & ~limit_flag[dst] & ~stop[src]
                lf = limit_flag[dst]
                lu = limit_u[dst]
                lw = limit_w[dst]
                lu[ok] = u_star[src][ok]
                lw[ok] = w_nb[ok]
                lf[ok] = True
                limit_flag[dst], limit_u[dst], limit_w[dst] = lf, lu, lw
    return FeedbackLaw(vt, s.controls, u_star, w_star, stop, kink, limit_flag, limit_u, limit_w, kinks)


@dataclass
class FollowResult:
    trajectory: Trajectory
    stop_time: float | None
    stopped: bool


def follow_feedback(s: Scenario, law: FeedbackLaw, t0: float, x0, T: float | None = None,
                    h: float | None = None) -> FollowResult:
    """Integrate under ``law`` until it says stop (or ``T``)."""
    vt = law.vt
    h = float(vt.times[1] - vt.times[0] if h is None else h)
    T = float(vt.times[-1] if T is None else T)
    x = np.asarray(x0, dtype=float).reshape(s.dim)
    t = float(t0)
    stop_time = None
    ts, xs, us = [t], [x.copy()], []
    while t < T - 1e-12:
        u = law.control(t, x)
        if u is None:
            stop_time = t
            break
        if np.any(np.isnan(u)):
            break
        hk = min(h, T - t)
        x = step(s, t, x, u, hk)
        t = t + hk
        us.append(np.asarray(u, dtype=float).reshape(s.ctrl_dim))
        ts.append(t)
        xs.append(x.copy())
    if stop_time is None and t >= T - 1e-12 and law.control(min(t, vt.times[-1]), x) is None:
        stop_time = t
    us.append(us[-1] if us else s.controls[0])
    tr = Trajectory(np.array(ts), np.array(xs), np.array(us), h, np.zeros(len(ts), dtype=bool))
    return FollowResult(tr, stop_time, stop_time is not None)


__all__ = [
    "BudgetExceeded", "ControlSignal", "FeedbackLaw", "FollowResult", "OutOfGridError", "ValueTable",
    "brute_force_value", "extract_feedback", "follow_feedback", "integrate", "oracle_controls",
    "query_value", "query_values", "solve_value",
]
