"""Numerical checks of the characterization machinery.

Every check returns rows of a :class:`VerificationReport` instead of
raising: a failed inequality is a measurement.  Residual conventions:

* ``le``: pass iff ``residual <= tolerance``
* ``ge``: pass iff ``residual >= -tolerance``
* ``abs``: pass iff ``|residual| <= tolerance``
* ``neg``: pass iff ``residual <= -tolerance`` (strict negativity)

A row whose ``passed`` is ``None`` was skipped; ``note`` says why.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from ._parallel import pmap
from .dynamics import eval_Fbar, hamiltonians, velocity_boxes, velocity_table
from .hjb import FeedbackLaw, OutOfGridError, ValueTable, extract_feedback, query_value
from .integrator import BatchPiecewise, integrate_batch, step
from .scenario import Scenario, StructuralConstants, estimate_constants, sample_points

CONDITIONS = ("IPC", "T14-v", "T14-vi", "T14-vii", "T14-viii", "HJ1", "HJ2", "weak-inv", "strong-inv", "P7-ratio")


# ----------------------------------------------------------------- report


@dataclass(frozen=True)
class Record:
    condition: str
    t: float
    x: tuple
    residual: float
    tolerance: float
    sense: str
    passed: bool | None
    note: str = ""


def _judge(residual: float, tolerance: float, sense: str) -> bool:
    if sense == "le":
        return residual <= tolerance
    if sense == "ge":
        return residual >= -tolerance
    if sense == "abs":
        return abs(residual) <= tolerance
    if sense == "neg":
        return residual <= -tolerance
    raise ValueError(f"unknown sense {sense!r}")


@dataclass
class VerificationReport:
    records: list = field(default_factory=list)

    def add(self, condition: str, t, x, residual, tolerance, sense: str, note: str = "",
            skip: bool = False) -> Record:
        if condition not in CONDITIONS:
            raise ValueError(f"unknown condition {condition!r}")
        x = tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))
        residual, tolerance = float(residual), float(tolerance)
        passed = None if skip else bool(_judge(residual, tolerance, sense))
        rec = Record(condition, float(t), x, residual, tolerance, sense, passed, note)
        self.records.append(rec)
        return rec

    def extend(self, other: "VerificationReport") -> "VerificationReport":
        self.records.extend(other.records)
        return self

    def __len__(self):
        return len(self.records)

    def select(self, condition: str) -> list:
        return [r for r in self.records if r.condition == condition]

    def failures(self) -> list:
        return [r for r in self.records if r.passed is False]

    @property
    def passed(self) -> bool:
        return not self.failures()

    def worst(self, condition: str) -> float:
        """Residual closest to failing among checked rows of ``condition`` (``nan`` if none).

        The largest residual for ``le``/``neg`` rows, the smallest for
        ``ge`` rows and the largest magnitude for ``abs`` rows.
        """
        rows = [r for r in self.select(condition) if r.passed is not None and not np.isnan(r.residual)]
        if not rows:
            return float("nan")
        key = {"le": lambda r: r.residual, "neg": lambda r: r.residual,
               "ge": lambda r: -r.residual, "abs": lambda r: abs(r.residual)}
        return max(rows, key=lambda r: key[r.sense](r)).residual

    def summary(self) -> str:
        lines = [f"{'condition':<11} {'checked':>7} {'passed':>7} {'failed':>7} {'skipped':>7}"]
        for c in CONDITIONS:
            rows = self.select(c)
            if not rows:
                continue
            ok = sum(r.passed is True for r in rows)
            bad = sum(r.passed is False for r in rows)
            skip = sum(r.passed is None for r in rows)
            lines.append(f"{c:<11} {ok + bad:>7} {ok:>7} {bad:>7} {skip:>7}")
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        n = max((len(r.x) for r in self.records), default=1)
        xs = ["x"] if n == 1 else [f"x_{i + 1}" for i in range(n)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["condition", "t", *xs, "residual", "tolerance", "pass", "note"])
            for r in self.records:
                flag = "skip" if r.passed is None else int(r.passed)
                w.writerow([r.condition, repr(r.t), *map(repr, r.x), repr(r.residual), repr(r.tolerance), flag, r.note])


# -------------------------------------------------------------------- IPC


def _d_dt(fn, t, eps=1e-6):
    return (np.asarray(fn(t + eps), dtype=float) - np.asarray(fn(t - eps), dtype=float)) / (2 * eps)


def _boundary_samples(s: Scenario, samples: int, seed: int):
    """Points ``(t, x)`` on the lateral boundary of the tube graph with unit outward normals."""
    tube = s.target
    t, _ = sample_points(s, samples, seed)
    pts, normals = [], []
    lo_box, hi_box = s.state_box[:, 0], s.state_box[:, 1]
    finite_edge = False
    for iv, (lo_e, hi_e) in enumerate(tube.intervals):
        for e, side in ((lo_e, -1.0), (hi_e, 1.0)):
            val = tube._bound(e, t)
            if not np.all(np.isfinite(val)):
                continue
            finite_edge = True
            slope = _d_dt(lambda tt: tube._bound(e, tt), t) if callable(e) else np.zeros_like(t)
            # outward normal of {x >= lo(t)} is (lo', -1); of {x <= hi(t)} it is (-hi', 1)
            nv = np.stack([-side * slope, np.full_like(t, side)], -1)
            nv /= np.linalg.norm(nv, axis=-1, keepdims=True)
            lo_b, hi_b = tube.bounds(t)[iv]
            keep = (val >= lo_box[0]) & (val <= hi_box[0]) & (lo_b <= hi_b) & tube._in_time(t)
            for ti, xi, ni in zip(t[keep], val[keep], nv[keep]):
                pts.append((float(ti), np.array([xi])))
                normals.append(ni)
    if tube.sdf is not None:
        finite_edge = True
        rng = np.random.default_rng(seed + 1)
        tt, xx = sample_points(s, 4 * samples, seed + 1)
        for _ in range(30):
            f = tube.sdf(tt, xx)
            g = np.stack([(tube.sdf(tt, xx + e) - tube.sdf(tt, xx - e)) / 2e-6 for e in np.eye(s.dim) * 1e-6], -1)
            nrm2 = np.maximum((g ** 2).sum(-1), 1e-300)
            xx = xx - (f / nrm2)[:, None] * g
        f = tube.sdf(tt, xx)
        ok = (np.abs(f) <= 1e-8) & np.all((xx >= lo_box) & (xx <= hi_box), -1) & tube._in_time(tt)
        idx = np.nonzero(ok)[0]
        rng.shuffle(idx)
        for i in idx[:samples]:
            ti, xi = float(tt[i]), xx[i]
            gt = float((tube.sdf(ti + 1e-6, xi) - tube.sdf(ti - 1e-6, xi)) / 2e-6)
            gx = np.array([(tube.sdf(ti, xi + e) - tube.sdf(ti, xi - e)) / 2e-6 for e in np.eye(s.dim) * 1e-6])
            nv = np.concatenate([[gt], gx.reshape(-1)])
            pts.append((ti, xi.copy()))
            normals.append(nv / np.linalg.norm(nv))
    return pts, normals, finite_edge


def ipc_min(s: Scenario, t: float, x, normal) -> float:
    """``min_{xi in Fbar(t, x)} l0 + <l, xi>`` for the normal ``(l0, l)``."""
    normal = np.asarray(normal, dtype=float)
    ext = eval_Fbar(s, t, x).extreme_points
    return float(normal[0] + (ext @ normal[1:]).min())


def ipc_check(s: Scenario, samples: int = 64, seed: int | None = None,
              tol: float = 1e-9) -> tuple[VerificationReport, float]:
    """Inward pointing condition on sampled lateral boundary points of the tube graph.

    Returns the report and ``rho_estimate`` (``-worst`` when negative,
    ``0`` otherwise, ``inf`` for a tube without boundary).
    """
    if s.target.is_empty:
        raise ValueError("target tube is empty")
    seed = int(s.numerics["seed"] if seed is None else seed)
    pts, normals, finite_edge = _boundary_samples(s, samples, seed)
    rep = VerificationReport()
    if not finite_edge:
        rep.add("IPC", s.time_window[0], s.state_box[:, 0], -math.inf, tol, "neg", note="no boundary: vacuous")
        return rep, math.inf
    if not pts:
        raise ValueError("target tube has no boundary inside the state box")
    vals = pmap(lambda pn: ipc_min(s, pn[0][0], pn[0][1], pn[1]), list(zip(pts, normals)))
    for (t, x), v in zip(pts, vals):
        rep.add("IPC", t, x, v, tol, "neg")
    worst = max(vals)
    return rep, (-worst if worst < 0 else 0.0)


# --------------------------------------------------------- proximal probes


@dataclass
class ProximalProbe:
    """Inner approximations of the proximal sub- and superdifferentials at ``(t, x)``.

    Covectors live in ``R^{1+n}`` as ``(d/dt, d/dx)``.  ``*_M`` holds the
    fitted quadratic constant of each accepted candidate, ``offsets`` and
    ``df`` the probe displacements and value increments they were tested on.
    """

    point: np.ndarray
    eps: float
    M_max: float
    sub: np.ndarray
    sub_M: np.ndarray
    sup: np.ndarray
    sup_M: np.ndarray
    offsets: np.ndarray
    df: np.ndarray

    @property
    def sub_empty(self) -> bool:
        return self.sub.shape[0] == 0

    @property
    def sup_empty(self) -> bool:
        return self.sup.shape[0] == 0


def _directions(d: int, count: int, seed: int = 0) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        a = 2 * np.pi * np.arange(count) / count
        dirs = np.stack([np.cos(a), np.sin(a)], -1)
        # exact axes so covectors with one exact coordinate are reachable
        dirs[np.abs(dirs) < 1e-12] = 0.0
        return dirs
    rng = np.random.default_rng(seed)
    r = rng.normal(size=(count, d))
    return np.vstack([np.eye(d), -np.eye(d), r / np.linalg.norm(r, axis=-1, keepdims=True)])


def _as_function(V) -> Callable:
    """``f(T (N,), X (N, n)) -> (N,)`` for a callable or a :class:`ValueTable`."""
    if isinstance(V, ValueTable):
        def f(T, X):
            out = np.empty(len(T))
            for i, (t, x) in enumerate(zip(T, X)):
                try:
                    out[i] = query_value(V, float(t), x)
                except OutOfGridError:
                    out[i] = np.nan
            return out
        return f
    return lambda T, X: np.asarray(V(np.asarray(T, dtype=float), np.asarray(X, dtype=float)), dtype=float).reshape(-1)


def proximal_probe(f, t: float, x, eps: float = 1e-2, M_max: float = 1e3, directions: int = 32,
                   radii: int = 9, magnitudes: int = 41) -> ProximalProbe:
    """Candidate search for proximal sub/superdifferentials of ``f`` at ``(t, x)``.

    Samples ``y`` lie on ``directions`` rays at geometric radii from ``eps``
    down to ``eps * 1e-4``.  Candidates are ``centre + r * dir`` on the same
    rays, centred at a finite-difference gradient with reach set by the
    spread of one-sided quotients.  A candidate ``xi`` is a subgradient if
    ``<xi, y - z> <= f(y) - f(z) + M |y - z|^2`` at every sample for some
    ``M <= M_max`` (reversed for the superdifferential).
    """
    fn = _as_function(f)
    x = np.asarray(x, dtype=float).reshape(-1)
    z = np.concatenate([[float(t)], x])
    d = z.size
    dirs = _directions(d, directions)
    rs = eps * np.geomspace(1.0, 1e-4, radii)
    offs = (dirs[:, None, :] * rs[None, :, None]).reshape(-1, d)
    Y = z + offs
    fz = float(fn(np.array([z[0]]), z[None, 1:])[0])
    fy = fn(Y[:, 0], Y[:, 1:])
    df = fy - fz
    # centre and reach from one-sided quotients
    hq = eps * 1e-3
    E = np.eye(d) * hq
    fp = fn((z + E)[:, 0], (z + E)[:, 1:]) - fz
    fm = fz - fn((z - E)[:, 0], (z - E)[:, 1:])
    fwd, bwd = fp / hq, fm / hq
    with np.errstate(invalid="ignore"):
        centre = np.where(np.isfinite(fwd) & np.isfinite(bwd), 0.5 * (fwd + bwd),
                          np.where(np.isfinite(fwd), fwd, np.where(np.isfinite(bwd), bwd, 0.0)))
        spread = np.where(np.isfinite(fwd) & np.isfinite(bwd), np.abs(fwd - bwd), 0.0)
    R = 1.25 * 0.5 * float(spread.max()) + 1e-3 * (1.0 + float(np.abs(centre).max()))
    cdirs = _directions(d, 4 * directions if d == 2 else directions, seed=1)
    mags = np.linspace(0.0, R, magnitudes)
    cand = np.vstack([centre[None], (centre + cdirs[:, None, :] * mags[None, 1:, None]).reshape(-1, d)])
    q = (offs ** 2).sum(-1)
    lin = cand @ offs.T
    with np.errstate(invalid="ignore"):
        m_sub = np.where(np.isnan(df), np.inf, (lin - df) / q).max(-1)
        m_sup = np.where(np.isnan(df), np.inf, (df - lin) / q).max(-1)
    m_sub = np.maximum(m_sub, 0.0)
    m_sup = np.maximum(m_sup, 0.0)
    if not np.isfinite(fz):
        m_sub[:] = np.inf
        m_sup[:] = np.inf
    ok_sub = m_sub <= M_max
    ok_sup = m_sup <= M_max
    return ProximalProbe(z, float(eps), float(M_max), cand[ok_sub], m_sub[ok_sub], cand[ok_sup], m_sup[ok_sup],
                         offs, df)


# -------------------------------------------------------- viscosity tests


def h_min(s: Scenario, t: float, x, px) -> float:
    """``min_{v in Fbar(t, x)} <v, px>``."""
    ext = eval_Fbar(s, t, x).extreme_points
    return float((ext @ np.asarray(px, dtype=float).reshape(-1)).min())


def _ladder(s: Scenario, t: float, x, q, eps: float, tol: float, levels: int = 4):
    """``q_t + min_{v in Fbar(t, x')} <v, q_x>`` along ``x' = x - eps 2^-j q_x/|q_x|``.

    Returns ``(values, smallest stabilized value, largest stabilized value)``;
    without a stable consecutive pair both fall back to the extremes.
    """
    qt, qx = float(q[0]), np.asarray(q[1:], dtype=float)
    nrm = float(np.linalg.norm(qx))
    if nrm == 0.0:
        return np.array([qt]), qt, qt
    u = qx / nrm
    vals = np.array([qt + h_min(s, t, x - eps * 0.5 ** j * u, qx) for j in range(levels)])
    stable = [min(vals[j], vals[j + 1]) for j in range(levels - 1) if abs(vals[j] - vals[j + 1]) <= tol]
    stable_hi = [max(vals[j], vals[j + 1]) for j in range(levels - 1) if abs(vals[j] - vals[j + 1]) <= tol]
    lo = min(stable) if stable else float(vals.min())
    hi = max(stable_hi) if stable_hi else float(vals.max())
    return vals, lo, hi


def _table_tol(vt: ValueTable) -> float:
    return float(vt.times[1] - vt.times[0]) + float(vt.dx.max())


def _fd_grad(fn, t, x, dt, dx, t_range=None):
    """Central differences (one-sided in time at the ends of ``t_range``)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    tl, th = t - dt, t + dt
    if t_range is not None:
        tl, th = max(tl, t_range[0]), min(th, t_range[1])
    T = [th, tl] + [t] * (2 * n)
    X = [x, x]
    for i in range(n):
        e = np.zeros(n)
        e[i] = dx
        X += [x + e, x - e]
    v = fn(np.array(T), np.array(X))
    gt = (v[0] - v[1]) / (th - tl)
    gx = np.array([(v[2 + 2 * i] - v[3 + 2 * i]) / (2 * dx) for i in range(n)])
    return np.concatenate([[gt], gx])


def _stable_grad(fn, t, x, h, dx, spacing, t_range, stability):
    """Central gradient at ``spacing`` steps, or ``None`` if ``V`` looks kinked there.

    Kinks are detected by disagreement of central differences at two
    spacings or of one-sided quotients in any coordinate.
    """
    g1 = _fd_grad(fn, t, x, spacing * h, spacing * dx, t_range)
    g2 = _fd_grad(fn, t, x, 2 * spacing * h, 2 * spacing * dx, t_range)
    if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))) or np.abs(g1 - g2).max() > stability:
        return None
    x = np.asarray(x, dtype=float)
    n = x.size
    ds = spacing * dx
    E = np.eye(n) * ds
    T = np.full(2 * n + 1, float(t))
    X = np.vstack([x[None], x + E, x - E])
    v = fn(T, X)
    fwd = (v[1:n + 1] - v[0]) / ds
    bwd = (v[0] - v[n + 1:]) / ds
    if not (np.all(np.isfinite(fwd)) and np.all(np.isfinite(bwd))) or np.abs(fwd - bwd).max() > stability:
        return None
    return g1


def _thin(c: np.ndarray, n: int) -> np.ndarray:
    """At most ``n`` rows spread over ``c``, always keeping the extreme ones."""
    if c.shape[0] <= n:
        return c
    order = np.lexsort(c.T[::-1])
    return c[order[np.unique(np.linspace(0, c.shape[0] - 1, n).round().astype(int))]]


def check_T14(s: Scenario, V, probes, tol: float | None = None, eps: float = 1e-2, M_max: float = 1e3,
              omega_tol: float | None = None, differentials: Callable | None = None,
              fd_spacing: int = 10, max_candidates: int = 25) -> VerificationReport:
    """Viscosity inequalities v)-viii) at ``probes``.

    ``V`` is a callable ``V(t, x)`` or a :class:`ValueTable`.  Differentials
    come from ``differentials(t, x) -> (sub, sup)`` when given; otherwise a
    callable is probed with :func:`proximal_probe` and a table uses a
    finite-difference gradient where it passes the kink screen.  Probed
    candidates are only accurate to ``M_max * eps * 1e-4`` per component,
    which sets the default tolerance in that mode.  ``Omega`` is
    ``{|V - W| <= omega_tol}`` on the tube; there vii) and v) do not apply
    and the HJ2 form is recorded instead.
    """
    table = isinstance(V, ValueTable)
    if tol is None:
        if table:
            tol = 5 * _table_tol(V)
        elif differentials is not None:
            tol = 1e-9
        else:
            tol = 2 * M_max * eps * 1e-4 * (1 + velocity_bound(s))
    tol = float(tol)
    omega_tol = tol if omega_tol is None else float(omega_tol)
    fn = _as_function(V)

    def one(p):
        t, x = float(p[0]), np.asarray(p[1], dtype=float).reshape(s.dim)
        rep = VerificationReport()
        note = ""
        if differentials is not None:
            sub, sup = (np.asarray(a, dtype=float).reshape(-1, 1 + s.dim) for a in differentials(t, x))
        elif table:
            h, dx = float(V.times[1] - V.times[0]), float(V.dx.max())
            t_rng = (float(V.times[0]), float(V.times[-1]))
            g1 = _stable_grad(fn, t, x, h, dx, fd_spacing, t_rng, tol)
            if g1 is None:
                for c in ("T14-vii", "T14-viii"):
                    rep.add(c, t, x, np.nan, tol, "le", note="non-differentiable", skip=True)
                return rep
            sub = sup = g1[None]
            note = "fd"
        else:
            pr = proximal_probe(V, t, x, eps=eps, M_max=M_max)
            sub, sup = _thin(pr.sub, max_candidates), _thin(pr.sup, max_candidates)
        v_here = float(fn(np.array([t]), x[None])[0])
        on_tube = bool(s.target.contains(t, x[None])[0])
        w_here = float(s.W(np.array([t]), x[None])[0]) if on_tube else math.inf
        in_omega = on_tube and np.isfinite(w_here) and abs(v_here - w_here) <= omega_tol
        if not in_omega:
            for pvec in sub:
                res = pvec[0] + h_min(s, t, x, pvec[1:])
                rep.add("T14-vii", t, x, res, tol, "le", note)
                lam = 1.0 / math.sqrt(1.0 + float(pvec @ pvec))
                eta = np.concatenate([lam * pvec, [-lam]])
                rep.add("T14-v", t, x, hamiltonians(s, t, x, eta).h_min, tol, "le", note)
        for qvec in sup:
            _, lo, hi = _ladder(s, t, x, qvec, eps, tol)
            rep.add("T14-viii", t, x, lo, tol, "ge", note)
            lam = 1.0 / math.sqrt(1.0 + float(qvec @ qvec))
            # hypograph normal (-lam q, lam): max over Fbar of (1, v, 0).eta = -lam (q_t + min v.q_x)
            rep.add("T14-vi", t, x, -lam * lo, tol, "le", note)
            if in_omega:
                hj = min(w_here - v_here, qvec[0] + h_min(s, t, x, qvec[1:]))
                rep.add("HJ2", t, x, hj, tol, "abs", note)
        if sub.shape[0] == 0 and sup.shape[0] == 0:
            rep.add("T14-vii", t, x, np.nan, tol, "le", note="no differentials found", skip=True)
        return rep

    out = VerificationReport()
    for r in pmap(one, [(p[0], p[1]) for p in probes]):
        out.extend(r)
    return out


# ------------------------------------------------------------ pointwise HJ


def check_HJ_pointwise(s: Scenario, V: ValueTable, probes, tol: float | None = None, spacing: int = 10,
                       stability: float | None = None) -> VerificationReport:
    """Finite-difference residuals of the HJ equation and its obstacle form.

    Derivatives use ``spacing`` grid steps (an even count keeps the stencil
    in phase with the lattice).  A probe whose derivatives at ``spacing``
    and ``2 * spacing`` differ by more than ``stability`` is skipped as
    non-differentiable.
    """
    base = _table_tol(V)
    tol = 10 * base if tol is None else float(tol)
    stability = tol if stability is None else float(stability)
    fn = _as_function(V)
    h, dx = float(V.times[1] - V.times[0]), float(V.dx.max())
    t_rng = (float(V.times[0]), float(V.times[-1]))

    def one(p):
        t, x = float(p[0]), np.asarray(p[1], dtype=float).reshape(s.dim)
        rep = VerificationReport()
        on_tube = bool(s.target.contains(t, x[None])[0])
        cond = "HJ2" if on_tube else "HJ1"
        g1 = _stable_grad(fn, t, x, h, dx, spacing, t_rng, stability)
        if g1 is None:
            rep.add(cond, t, x, np.nan, tol, "abs", note="non-differentiable", skip=True)
            return rep
        res = g1[0] + h_min(s, t, x, g1[1:])
        if on_tube:
            v = float(fn(np.array([t]), x[None])[0])
            w = float(s.W(np.array([t]), x[None])[0])
            res = min(w - v, res)
        rep.add(cond, t, x, res, tol, "abs")
        return rep

    out = VerificationReport()
    for r in pmap(one, [(p[0], p[1]) for p in probes]):
        out.extend(r)
    return out


def differentiable_probes(s: Scenario, V: ValueTable, count: int, seed: int = 0, spacing: int = 10,
                          stability: float | None = None, t_max: float | None = None,
                          max_draws: int | None = None) -> list:
    """Random grid nodes with finite ``V`` where the finite-difference gradient is stable."""
    rng = np.random.default_rng(seed)
    h, dx = float(V.times[1] - V.times[0]), float(V.dx.max())
    stability = 10 * _table_tol(V) if stability is None else float(stability)
    fn = _as_function(V)
    t_rng = (float(V.times[0]), float(V.times[-1]))
    kmax = V.times.size - 1 if t_max is None else int(np.searchsorted(V.times, t_max))
    nodes = V.nodes()
    out = []
    for _ in range(max_draws or 50 * count):
        if len(out) >= count:
            break
        k = int(rng.integers(0, max(kmax, 1)))
        j = tuple(int(rng.integers(0, n)) for n in V.shape)
        if V.inf[(k,) + j]:
            continue
        t, x = float(V.times[k]), nodes[j]
        if _stable_grad(fn, t, x, h, dx, spacing, t_rng, stability) is not None:
            out.append((t, x.copy()))
    return out


# -------------------------------------------------------------- invariance


def _slice_values(vt: ValueTable, k: int, X: np.ndarray):
    """Strict interpolation of slice ``k`` at ``X``; ``nan`` outside the box."""
    upper = vt.lower + vt.dx * (np.array(vt.shape) - 1)
    inside = np.all((X >= vt.lower - 1e-12) & (X <= upper + 1e-12), -1)
    Xc = np.clip(X, vt.lower, upper)
    if vt.dim == 1:
        v, vi = kernels.interp_1d(vt.values[k], vt.inf[k], float(vt.lower[0]), float(vt.dx[0]), Xc[:, 0])
    else:
        v, vi = kernels.interp_2d(vt.values[k], vt.inf[k], vt.lower, vt.dx, Xc)
    v = np.where(vi, np.inf, v)
    return np.where(inside, v, np.nan)


def _law_controls(law: FeedbackLaw, k: int, X: np.ndarray):
    """Vectorized :meth:`FeedbackLaw.control` at node time ``k``: ``(U, stop)``."""
    vt = law.vt
    j = np.clip(np.rint((X - vt.lower) / vt.dx).astype(int), 0, np.array(vt.shape) - 1)
    on_kink = np.zeros(X.shape[0], dtype=bool)
    for ax, ks in enumerate(law.kink_coords):
        if not ks.size:
            continue
        node_x = vt.lower[ax] + vt.dx[ax] * j[:, ax]
        node_on = np.any(np.abs(node_x[:, None] - ks[None]) <= 1e-12, -1)
        x_on = np.any(np.abs(X[:, ax, None] - ks[None]) <= 1e-12, -1)
        shift = node_on & ~x_on
        j[:, ax] += np.where(shift, np.where(X[:, ax] > node_x, 1, -1), 0)
        on_kink |= x_on
    j = np.clip(j, 0, np.array(vt.shape) - 1)
    idx = (np.full(X.shape[0], k),) + tuple(j.T)
    U = law.u_star[idx].copy()
    use_lim = on_kink & law.limit_flag[idx]
    U[use_lim] = law.limit_u[idx][use_lim]
    return U, law.stop[idx]


def _random_nodes(vt: ValueTable, count: int, rng, k_hi: int):
    """``count`` random ``(k, x)`` node pairs with finite value and ``k < k_hi``."""
    nodes = vt.nodes().reshape(-1, vt.dim)
    finite = ~vt.inf[:k_hi].reshape(k_hi, -1)
    ks, js = np.nonzero(finite)
    pick = rng.integers(0, ks.size, size=count)
    return ks[pick], nodes[js[pick]], vt.values[:k_hi].reshape(k_hi, -1)[ks[pick], js[pick]]


def invariance_sample_test(s: Scenario, V: ValueTable, trials: int = 1000, seed: int | None = None,
                           tol: float | None = None, horizon: float = 1.0, law: FeedbackLaw | None = None,
                           switches: int = 8, strong: bool = True, weak: bool = True) -> VerificationReport:
    """Sampled strong invariance of the hypograph and weak invariance of the epigraph.

    Strong: ``beta0 = V(tau0, x0) - U(0, 1)`` under random piecewise-constant
    controls must stay ``<= V`` for ``horizon``.  Weak: ``beta0 >= V(tau0, x0)``
    (equal on even trials) and the extracted feedback must keep ``V <= beta0``
    until it stops.  One row per trial holds the worst excess; checking ends
    where a trajectory leaves the state box.
    """
    seed = int(s.numerics["seed"] if seed is None else seed)
    tol = 10 * _table_tol(V) if tol is None else float(tol)
    rng = np.random.default_rng(seed)
    h = float(V.times[1] - V.times[0])
    K = V.times.size - 1
    steps = max(0, int(round(horizon / h)))
    k_hi = max(1, min(K - steps, K // 2 + 1))
    rep = VerificationReport()
    if V.inf[:k_hi].all():
        for c, on in (("strong-inv", strong), ("weak-inv", weak)):
            if on:
                rep.add(c, V.times[0], V.lower, np.nan, tol, "le", note="V is infinite at every node", skip=True)
        return rep
    if strong:
        k0, X0, V0 = _random_nodes(V, trials, rng, k_hi)
        beta = V0 - rng.random(trials)
        if steps == 0:
            for i in range(trials):
                rep.add("strong-inv", V.times[k0[i]], X0[i], beta[i] - V0[i], tol, "le", note="zero horizon")
        else:
            sw = np.sort(rng.random((trials, switches)), -1) * horizon
            times = np.concatenate([np.zeros((trials, 1)), sw], -1) + V.times[k0][:, None]
            vals = s.controls[rng.integers(0, s.controls.shape[0], size=(trials, switches + 1))]
            ctrl = BatchPiecewise(times, vals)
            kmin, kmax = int(k0.min()), int(k0.max()) + steps
            bt = integrate_batch(s, float(V.times[kmin]), X0, ctrl, float(V.times[kmax]), h, start=k0 - kmin)
            worst = np.full(trials, -np.inf)
            alive = np.ones(trials, dtype=bool)
            for i in range(bt.times.size):
                k = kmin + i
                act = alive & (k >= k0) & (k <= k0 + steps)
                if not act.any():
                    continue
                v = _slice_values(V, k, bt.states[i])
                alive &= ~np.isnan(v) | ~act
                act &= ~np.isnan(v)
                worst = np.where(act, np.maximum(worst, beta - v), worst)
            for i in range(trials):
                note = "" if alive[i] else "left box"
                rep.add("strong-inv", V.times[k0[i]], X0[i], worst[i], tol, "le", note)
    if weak:
        law = extract_feedback(s, V) if law is None else law
        k0, X0, V0 = _random_nodes(V, trials, rng, k_hi)
        beta = V0 + np.where(np.arange(trials) % 2 == 0, 0.0, rng.random(trials))
        X = X0.copy()
        worst = V0 - beta
        done = np.zeros(trials, dtype=bool)
        bad = np.zeros(trials, dtype=bool)
        for k in range(int(k0.min()), K + 1):
            act = (k >= k0) & ~done
            if not act.any():
                if np.all(done):
                    break
                continue
            v = _slice_values(V, k, X)
            gone = act & np.isnan(v)
            done |= gone
            act &= ~gone
            worst = np.where(act, np.maximum(worst, v - beta), worst)
            if k == K:
                break
            U, stop = _law_controls(law, k, X)
            halt = act & (stop | np.any(np.isnan(U), -1))
            bad |= act & ~stop & np.any(np.isnan(U), -1)
            done |= halt
            act &= ~halt
            if act.any():
                Xn = step(s, float(V.times[k]), X[act], U[act], float(V.times[k + 1] - V.times[k]))
                X[act] = Xn
        for i in range(trials):
            note = "infeasible control" if bad[i] else ""
            rep.add("weak-inv", V.times[k0[i]], X0[i], worst[i], tol, "le", note)
    return rep


# --------------------------------------------------------------- steering


class SteeringError(RuntimeError):
    """No admissible decreasing direction of the tube distance."""


@dataclass
class SteeringResult:
    start: tuple
    hit_time: float | None
    hit_point: np.ndarray | None
    distances: np.ndarray
    dini_residuals: np.ndarray
    decay_residuals: np.ndarray
    ratio: float
    L_K: float
    theta: float
    rho: float
    tol: float

    @property
    def hit(self) -> bool:
        return self.hit_time is not None

    @property
    def decay_ok(self) -> bool:
        return bool(np.all(self.decay_residuals <= self.tol))


def velocity_bound(s: Scenario, samples: int | None = None, seed: int | None = None) -> float:
    """Sampled ``max |v|`` over ``F(t, x, u)`` on the time window and state box."""
    n = int(s.numerics["samples"] if samples is None else samples)
    t, x = sample_points(s, n, int(s.numerics["seed"] if seed is None else seed))
    lo, hi = velocity_boxes(s, t, x)
    return float(np.sqrt(np.maximum(lo ** 2, hi ** 2).sum(-1)).max())


def steering_constants(s: Scenario, rho: float, consts: StructuralConstants | None = None,
                       L_G: float | None = None, theta_factor: float = 0.99):
    """``(theta, L_K, C, L_G)`` for the steering construction.

    ``theta = theta_factor * min(0.5, 1 / (L_G + 1))`` and
    ``L_K = C (L_G + 1) / rho`` with ``C = exp((L_F + L) (tau2 - tau1))``
    over the time window widened by one on each side.
    """
    consts = estimate_constants(s) if consts is None else consts
    L_G = velocity_bound(s) if L_G is None else float(L_G)
    theta = theta_factor * min(0.5, 1.0 / (L_G + 1.0))
    span = float(s.time_window[1] - s.time_window[0]) + 2.0
    C = math.exp((consts.L_F + consts.L) * span)
    return theta, C * (L_G + 1.0) / rho, C, L_G


def steer_to_target(s: Scenario, t0: float, x0, rho: float, h: float | None = None,
                    consts: StructuralConstants | None = None, theta: float | None = None,
                    L_G: float | None = None, tol: float = 1e-9, max_steps: int | None = None) -> SteeringResult:
    """Greedy steering toward the tube graph.

    Each step takes the extreme point of ``Fbar`` (with its witnessing
    control) minimizing the forward difference quotient of the tube
    distance ``psi`` and integrates one step under that control.
    """
    h = float(s.numerics["h"] if h is None else h)
    consts = estimate_constants(s) if consts is None else consts
    th, L_K, _, L_G = steering_constants(s, rho, consts, L_G)
    theta = th if theta is None else float(theta)
    x = np.asarray(x0, dtype=float).reshape(s.dim)
    t = float(t0)
    psi = lambda tt, xx: float(s.target.distance(np.array(tt), np.asarray(xx)[None])[0])  # noqa: E731
    d0 = psi(t, x)
    if not d0 < theta:
        raise ValueError(f"start distance {d0:.6g} is not below theta = {theta:.6g}")
    rate = consts.L_F + consts.L
    dists, dini, decay = [d0], [], []
    steps = max_steps or int(math.ceil(4 * theta / (rho * h))) + 10
    d = d0
    hit_t, hit_x = (t, x.copy()) if d0 <= 0 else (None, None)
    for _ in range(steps if hit_t is None else 0):
        tab = velocity_table(s, t, x[None], interior=0)
        ext = tab.extreme[0]
        cand, wit = tab.cand[0][ext], tab.witness[0][ext]
        dq = np.array([(psi(t + h, x + h * v) - d) / h for v in cand])
        i = int(np.argmin(dq))
        if not dq[i] < 0:
            raise SteeringError(f"no decreasing direction at (t, x) = ({t:.6g}, {x.tolist()})")
        dini.append(dq[i] - (rate * d - rho))
        x = step(s, t, x, s.controls[wit[i]], h)
        t += h
        dn = psi(t, x)
        # the hitting step crosses zero partway, so the bound is clipped there
        decay.append((dn - max(0.0, d + h * (rate * d - rho))) / h)
        d = dn
        dists.append(d)
        if d <= 0:
            hit_t, hit_x = t, x.copy()
            break
        if d >= theta:
            break
    x0a = np.asarray(x0, dtype=float).reshape(s.dim)
    if hit_t is None:
        ratio = math.inf
    elif d0 <= 0:
        ratio = 0.0
    else:
        ratio = math.sqrt((hit_t - t0) ** 2 + float(((hit_x - x0a) ** 2).sum())) / d0
    return SteeringResult((float(t0), *x0a.tolist()), hit_t, hit_x, np.array(dists), np.array(dini),
                          np.array(decay), ratio, L_K, theta, float(rho), tol)


def near_tube_starts(s: Scenario, count: int, theta: float, seed: int = 0) -> list:
    """Rejection-sampled starts with tube distance in ``(0, theta)``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(1000):
        n = max(4 * count, 256)
        t = s.time_window[0] + (s.time_window[1] - s.time_window[0]) * rng.random(n)
        x = s.state_box[:, 0] + (s.state_box[:, 1] - s.state_box[:, 0]) * rng.random((n, s.dim))
        d = s.target.distance(t, x)
        ok = (d > 0) & (d < theta)
        out.extend(zip(t[ok].tolist(), x[ok]))
        if len(out) >= count:
            break
    if len(out) < count:
        raise ValueError("could not sample enough near-tube starts")
    return out[:count]


def p7_ratio_sweep(s: Scenario, samples: int = 50, rho: float | None = None, seed: int | None = None,
                   h: float | None = None, consts: StructuralConstants | None = None, rel_tol: float = 0.05,
                   starts=None):
    """Steering from near-tube starts against the distance bound ``L_K d``.

    ``rho`` defaults to ``0.8 * rho_estimate`` from :func:`ipc_check`.
    Returns ``(report, results)``.
    """
    seed = int(s.numerics["seed"] if seed is None else seed)
    consts = estimate_constants(s) if consts is None else consts
    if rho is None:
        ipc, est = ipc_check(s, seed=seed)
        if not (ipc.passed and est > 0):
            raise ValueError("IPC does not hold; no positive rho available")
        rho = 0.8 * min(est, 1.0)
    theta, L_K, _, L_G = steering_constants(s, rho, consts)
    starts = near_tube_starts(s, samples, theta, seed) if starts is None else starts
    results = pmap(lambda p: steer_to_target(s, p[0], p[1], rho, h, consts, theta, L_G), starts)
    rep = VerificationReport()
    for (t0, x0), r in zip(starts, results):
        note = "" if r.decay_ok else "decay inequality violated"
        if not r.hit:
            note = (note + "; " if note else "") + "theta exit"
        rep.add("P7-ratio", t0, x0, r.ratio, L_K * (1 + rel_tol), "le", note)
    return rep, results


__all__ = [
    "CONDITIONS", "ProximalProbe", "Record", "SteeringError", "SteeringResult", "VerificationReport",
    "check_HJ_pointwise", "check_T14", "differentiable_probes", "h_min", "invariance_sample_test", "ipc_check",
    "ipc_min", "near_tube_starts", "p7_ratio_sweep", "proximal_probe", "steer_to_target", "steering_constants",
    "velocity_bound",
]
