"""Splitting integrator for ``x' in F(t, x, u(t))``.

One step is an explicit drift ``y = x + h g(t, x, u)`` followed by the
exact proximal map of ``h sum_a w_a k(t, x, u, alpha_a) phi(., alpha_a)``
with ``k`` frozen at the left endpoint.  Every built-in potential is
separable and piecewise affine plus quadratic, so the prox is closed form.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .dynamics import subgradient_bounds
from .scenario import Scenario, StructuralConstants, sample_points


class IntegrationError(RuntimeError):
    """The state became nonfinite; ``time`` is the left end of the failing step."""

    def __init__(self, time: float, state):
        super().__init__(f"nonfinite state after the step from t = {time:.6g}")
        self.time = time
        self.state = state


@dataclass(frozen=True)
class ControlSignal:
    """Open-loop piecewise-constant or closed-loop feedback control.

    ``piecewise_constant``: ``values[i]`` holds on ``[times[i], times[i+1])``
    and the last value holds afterwards; times before ``times[0]`` use
    ``values[0]``.  ``feedback``: ``law(t, x) -> u``, sampled at the left
    end of each step.
    """

    kind: str
    times: np.ndarray | None = None
    values: np.ndarray | None = None
    law: Callable | None = None

    @classmethod
    def constant(cls, u):
        return cls.piecewise_constant([0.0], [u])

    @classmethod
    def piecewise_constant(cls, times, values):
        t = np.asarray(times, dtype=float).reshape(-1)
        v = np.asarray(values, dtype=float)
        v = v.reshape(t.size, -1)
        if t.size == 0:
            raise ValueError("piecewise_constant needs at least one value")
        if np.any(np.diff(t) <= 0):
            raise ValueError("control switching times must be strictly increasing")
        return cls("piecewise_constant", t, v)

    @classmethod
    def feedback(cls, law: Callable):
        return cls("feedback", law=law)

    def __call__(self, t: float, x) -> np.ndarray:
        if self.kind == "feedback":
            return np.atleast_1d(np.asarray(self.law(t, x), dtype=float))
        i = max(int(np.searchsorted(self.times, t, side="right")) - 1, 0)
        return self.values[i]

    def check(self, s: Scenario, tol: float = 1e-12) -> None:
        """Raise ``ValueError`` unless every open-loop value lies in ``U``."""
        if self.kind != "piecewise_constant":
            return
        for v in self.values:
            if np.min(np.abs(s.controls - v).max(-1)) > tol:
                raise ValueError(f"control value {v.tolist()} is not in U")


@dataclass
class Trajectory:
    """Time-stamped discrete path.

    ``controls[i]`` is the control used on the step leaving node ``i`` (the
    last row repeats the control sampled at the final node).
    ``event_flags[i]`` marks that the step into node ``i`` touched or
    crossed the kink locus.  ``witnesses`` holds, per step, the control
    and a subgradient selection ``xi`` (shape ``(A, n)``) that realize it.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    h: float
    event_flags: np.ndarray
    witnesses: list | None = None

    @property
    def events(self) -> list[tuple[float, bool]]:
        return [(float(t), True) for t, f in zip(self.times, self.event_flags) if f]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path) -> None:
        """Write to a path or an open text stream."""
        n = self.states.shape[1]
        m = self.controls.shape[1]
        header = ["t"] + [f"x_{i + 1}" for i in range(n)]
        header += ["u"] if m == 1 else [f"u_{j + 1}" for j in range(m)]
        header.append("event_flag")
        rows = [[repr(float(t)), *map(repr, map(float, x)), *map(repr, map(float, u)), int(e)]
                for t, x, u, e in zip(self.times, self.states, self.controls, self.event_flags)]
        if hasattr(path, "write"):
            w = csv.writer(path)
            w.writerow(header)
            w.writerows(rows)
            return
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)


def prox_friction_step(s: Scenario, t, x, u, h: float, y) -> np.ndarray:
    """``argmin_z |z - y|^2 / 2 + h sum_a w_a k(t, x, u, alpha_a) phi(z, alpha_a)``.

    ``x``, ``u`` and ``y`` may carry leading batch dimensions.
    """
    if not h > 0:
        raise ValueError("step size h must be positive")
    y = np.asarray(y, dtype=float)
    out = np.array(y, dtype=float, copy=True)
    if len(s.measure) == 0:
        return out
    coef = h * s.friction_coefficients(t, x, u)
    coef = np.broadcast_to(coef, y.shape[:-1] + coef.shape[-1:]).reshape(-1, coef.shape[-1])
    merged, piece, quads = s.prox_tables
    slopes = coef @ piece
    quad = coef @ quads
    flat = out.reshape(-1, s.dim)
    for i in s.potential.active_axes(s.dim):
        flat[:, i] = kernels.prox_pwl(np.ascontiguousarray(flat[:, i]), slopes, merged, quad)
    return flat.reshape(y.shape)


def step(s: Scenario, t, x, u, h: float) -> np.ndarray:
    """One splitting step ``x+ = prox(x + h g(t, x, u))``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    y = x + h * s.g(t, x, u)
    return prox_friction_step(s, t, x, u, h, y)


def step_witness(s: Scenario, t, x, u, h: float, x_next):
    """Subgradient selection ``xi_a in d phi(x_next, alpha_a)`` realizing a step.

    Prox optimality gives ``(x_next - x)/h = g - sum_a w_a k_a xi_a`` with
    a common convex weight per axis inside each atom's interval.
    """
    x = np.asarray(x, dtype=float).reshape(s.dim)
    u = np.asarray(u, dtype=float).reshape(s.ctrl_dim)
    coef = s.friction_coefficients(t, x, u)
    lo, hi = subgradient_bounds(s, np.asarray(x_next, dtype=float).reshape(s.dim))
    target = s.g(t, x, u) - (np.asarray(x_next) - x) / h
    base = coef @ lo
    span = coef @ (hi - lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(span > 0, np.clip((target - base) / span, 0.0, 1.0), 0.0)
    return lo + theta[None, :] * (hi - lo)


def _kink_touch(kinks, a, b) -> bool:
    """Strict crossing of a kink, or arrival on one from off the locus."""
    for i, ks in enumerate(kinks):
        if ks.size == 0:
            continue
        da, db = a[i] - ks, b[i] - ks
        if np.any(da * db < 0) or np.any((db == 0) & (da != 0)):
            return True
    return False


def time_grid(t0: float, T: float, h: float) -> np.ndarray:
    """Uniform nodes ``t0 + k h`` up to ``T`` with a final partial step."""
    if T < t0:
        raise ValueError("T must be >= t0")
    if not h > 0:
        raise ValueError("h must be positive")
    n = int(np.floor((T - t0) / h * (1 + 1e-12)))
    ts = t0 + h * np.arange(n + 1)
    if T - ts[-1] > 1e-12 * max(h, abs(T)):
        ts = np.append(ts, T)
    else:
        ts[-1] = T if n > 0 else ts[-1]
    return ts


def integrate(s: Scenario, t0: float, x0, ctrl: ControlSignal, T: float, h: float,
              witnesses: bool = False) -> Trajectory:
    """Integrate from ``(t0, x0)`` to ``T`` with fixed step ``h``."""
    ts = time_grid(float(t0), float(T), float(h))
    x = np.asarray(x0, dtype=float).reshape(s.dim).copy()
    kinks = s.kinks()
    states = np.empty((ts.size, s.dim))
    ctrls = np.empty((ts.size, s.ctrl_dim))
    flags = np.zeros(ts.size, dtype=bool)
    wits = [] if witnesses else None
    states[0] = x
    for i in range(ts.size - 1):
        t, hi = ts[i], ts[i + 1] - ts[i]
        u = ctrl(t, x)
        ctrls[i] = u
        xn = step(s, t, x, u, hi)
        if not np.all(np.isfinite(xn)):
            raise IntegrationError(float(t), xn)
        flags[i + 1] = _kink_touch(kinks, x, xn)
        if witnesses:
            wits.append((u.copy(), step_witness(s, t, x, u, hi, xn)))
        x = xn
        states[i + 1] = x
    ctrls[-1] = ctrl(ts[-1], x)
    return Trajectory(ts, states, ctrls, float(h), flags, wits)


@dataclass(frozen=True)
class BatchPiecewise:
    """Per-trajectory piecewise-constant controls for :func:`integrate_batch`.

    ``times`` has shape ``(B, K)`` (rows strictly increasing) and
    ``values`` shape ``(B, K, m)``.
    """

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t: float, X) -> np.ndarray:
        idx = np.maximum((self.times <= t).sum(-1) - 1, 0)
        return self.values[np.arange(self.values.shape[0]), idx]


@dataclass(frozen=True)
class BatchTrajectory:
    """Trajectories on one shared time grid; ``states`` is ``(K, B, n)``."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    h: float


def integrate_batch(s: Scenario, t0: float, X0, ctrl: Callable, T: float, h: float,
                    start=None) -> BatchTrajectory:
    """Vectorized :func:`integrate` for ``B`` trajectories on a shared grid.

    ``ctrl(t, X) -> (B, m)``.  Trajectory ``b`` holds its initial state
    until node ``start[b]`` and steps afterwards, so it coincides with
    :func:`integrate` started at ``times[start[b]]``.
    """
    ts = time_grid(float(t0), float(T), float(h))
    X = np.array(X0, dtype=float).reshape(-1, s.dim)
    B = X.shape[0]
    start = np.zeros(B, dtype=int) if start is None else np.asarray(start, dtype=int)
    states = np.empty((ts.size, B, s.dim))
    ctrls = np.empty((ts.size, B, s.ctrl_dim))
    states[0] = X
    for i in range(ts.size - 1):
        t, hi = ts[i], ts[i + 1] - ts[i]
        U = np.asarray(ctrl(t, X), dtype=float).reshape(B, s.ctrl_dim)
        ctrls[i] = U
        Xn = step(s, t, X, U, hi)
        if not np.all(np.isfinite(Xn)):
            raise IntegrationError(float(t), Xn)
        X = np.where((start <= i)[:, None], Xn, X)
        states[i + 1] = X
    ctrls[-1] = np.asarray(ctrl(ts[-1], X), dtype=float).reshape(B, s.ctrl_dim)
    return BatchTrajectory(ts, states, ctrls, float(h))


# --------------------------------------------------------------- Gronwall


@dataclass(frozen=True)
class GronwallReport:
    """Worst excess of the trajectory gap over the stability bounds.

    ``max_ratio_excess`` uses ``lambda_r(t) |(t1, x1) - (t2, x2)|``;
    ``max_eq_time_excess`` uses ``exp(L_Fbar (t - t0)) |x1 - x2|`` on the
    trials with a common initial time (``-inf`` when there are none).
    """

    max_ratio_excess: float
    max_eq_time_excess: float
    trials: int
    rows: list = field(default_factory=list)


def gronwall_check(s: Scenario, consts: StructuralConstants, trials: int, h: float | None = None,
                   T: float | None = None, seed: int | None = None, switches: int = 8) -> GronwallReport:
    """Empirical check of the trajectory stability estimates.

    Each trial draws two initial points in the time window (snapped to the
    step grid) and the state box, and a shared random piecewise-constant
    control; every other trial uses a common initial time so the sharper
    exponential bound is exercised.  The gap is measured from the later
    start time on.
    """
    if trials < 1:
        raise ValueError("gronwall_check needs trials >= 1")
    h = float(s.numerics["h"] if h is None else h)
    t_lo = float(s.time_window[0])
    T = float(s.time_window[1] if T is None else T)
    seed = int(s.numerics["seed"] if seed is None else seed)
    r = s.box_radius
    ts = time_grid(t_lo, T, h)
    t, x = sample_points(s, 2 * trials, seed)
    k = np.minimum(np.rint((t - t_lo) / h).astype(int), ts.size - 1)
    k[1::2][::2] = k[0::2][::2][: k[1::2][::2].size]
    rng = np.random.default_rng(seed + 1)
    sw = np.sort(rng.uniform(t_lo, T, (trials, switches)), axis=-1)
    sw[:, 0] = -np.inf
    vals = s.controls[rng.integers(0, s.controls.shape[0], (trials, switches))]
    ctrl = BatchPiecewise(np.repeat(sw, 2, axis=0), np.repeat(vals, 2, axis=0))
    bt = integrate_batch(s, t_lo, x, ctrl, T, h, start=k)
    t1, t2 = ts[k[0::2]], ts[k[1::2]]
    x1, x2 = x[0::2], x[1::2]
    d0 = np.sqrt((t1 - t2) ** 2 + ((x1 - x2) ** 2).sum(-1))
    dx0 = np.sqrt(((x1 - x2) ** 2).sum(-1))
    tmin = np.minimum(t1, t2)
    later = np.maximum(k[0::2], k[1::2])
    gap = np.sqrt(((bt.states[:, 0::2] - bt.states[:, 1::2]) ** 2).sum(-1))  # (K, trials)
    active = np.arange(ts.size)[:, None] >= later[None, :]
    lam = consts.lambda_r(r, ts[:, None], tmin[None, :])
    excess = np.where(active, gap - lam * d0[None, :], -np.inf).max(0)
    eq = np.where(active & (t1 == t2)[None, :],
                  gap - np.exp(consts.L_Fbar * (ts[:, None] - tmin[None, :])) * dx0[None, :], -np.inf).max(0)
    rows = list(zip(t1.tolist(), t2.tolist(), excess.tolist(), eq.tolist()))
    return GronwallReport(float(excess.max()), float(eq.max()), trials, rows)
