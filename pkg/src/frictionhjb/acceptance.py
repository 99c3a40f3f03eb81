"""Acceptance criteria on the bundled toy, shared by ``toy-repro`` and the test suite.

Each check returns a :class:`Criterion` with the measured quantity and
the threshold it is compared against.  Expensive objects (the solved
table, the feedback law) live in a :class:`ToyContext` built once.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import toy
from .dynamics import eval_Fbar, osl_check
from .hjb import STOP, brute_force_value, extract_feedback, query_value, solve_value
from .integrator import ControlSignal, gronwall_check, integrate
from .scenario import estimate_constants, load_scenario
from .verify import (check_HJ_pointwise, check_T14, differentiable_probes, invariance_sample_test, ipc_check,
                     p7_ratio_sweep, proximal_probe)


@dataclass
class Criterion:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""
    note: str = ""  # run-dependent text such as timings; printed, not written to CSV

    def line(self) -> str:
        extra = f", {self.note}" if self.note else ""
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}{extra}"


@dataclass
class ToyContext:
    C: float = 1.0
    r: float = 0.8
    h: float = 2e-3
    delta: float = 2e-3
    seed: int = 0
    timings: dict = field(default_factory=dict)

    @cached_property
    def scenario(self):
        return toy.toy_scenario(self.C, self.r, h=self.h, delta=self.delta, seed=self.seed)

    @cached_property
    def consts(self):
        return estimate_constants(self.scenario)

    @cached_property
    def table(self):
        t = time.perf_counter()
        vt = solve_value(self.scenario)
        self.timings["solve_value"] = time.perf_counter() - t
        return vt

    @cached_property
    def law(self):
        return extract_feedback(self.scenario, self.table)

    @property
    def scale(self) -> float:
        """Value-level tolerances grow with the time-cost weight; 1 for ``C <= 1``."""
        return max(1.0, float(self.C))

    @property
    def v_s(self) -> float:
        return toy.v_stop(self.C, self.r)

    def exact(self, t, v):
        return toy.value(t, v, self.C, self.r)

    def comparison_mask(self, band: float = 3.0):
        """Nodes ``3 delta`` away from the kink ``v = 0`` and from the horizon-relative domain boundary."""
        vt = self.table
        tt, vv = np.meshgrid(vt.times, vt.axes()[0], indexing="ij")
        arrive = toy.arrival_time(tt, vv, self.C, self.r)
        return (np.abs(vv) > band * self.delta) & (arrive <= self.scenario.t_max_horizon - band * self.delta)

    def reference_points(self):
        return [(0.0, 2.0), (0.0, 0.5), (0.0, -1.0), (0.0, 1.0), (1.0, 0.25), (1.0, 0.9)]


def value_criterion(ctx: ToyContext) -> Criterion:
    vt = ctx.table
    ref = max(abs(query_value(vt, t, [v]) - float(ctx.exact(t, v))) for t, v in ctx.reference_points())
    mask = ctx.comparison_mask()
    tt, vv = np.meshgrid(vt.times, vt.axes()[0], indexing="ij")
    err = np.where(vt.inf, np.inf, np.abs(vt.values - ctx.exact(tt, vv)))
    grid = float(err[mask].max())
    secs = ctx.timings.get("solve_value", float("nan"))
    t_ref, t_grid = 5e-2 * ctx.scale, 1e-1 * ctx.scale
    ok = ref <= t_ref and grid <= t_grid and secs <= 60.0
    return Criterion("toy value function", ok, max(ref / t_ref, grid / t_grid), 1.0,
                     f"reference max err {ref:.3g} <= {t_ref:.3g}, grid max err {grid:.3g} <= {t_grid:.3g}",
                     note=f"solve {secs:.1f} s <= 60 s")


def fbar_criterion(ctx: ToyContext) -> Criterion:
    s = ctx.scenario
    want = {0.5: (-4.0, 0.5), 0.0: (-4.0, 2.0), -1.0: (-2.0, 2.0)}
    err = 0.0
    for v, (lo, hi) in want.items():
        fb = eval_Fbar(s, 0.0, [v])
        err = max(err, abs(fb.lo - lo), abs(fb.hi - hi))
    has = all(np.any(np.abs(s.controls[:, 0] - u) < 1e-12) for u in (-2.0, 1.0, 2.0))
    return Criterion("toy Fbar table", err <= 1e-12 and has, err, 1e-12,
                     f"max endpoint err {err:.3g} <= 1e-12, controls -2, 1, 2 present: {has}")


def ipc_criterion(ctx: ToyContext) -> Criterion:
    rep, rho = ipc_check(ctx.scenario)
    dev = max(abs(r.residual + 0.5) for r in rep.records)
    return Criterion("IPC value", dev <= 1e-9 and rep.passed, dev, 1e-9,
                     f"{len(rep)} boundary samples, max |min + 0.5| = {dev:.3g}, rho_estimate = {rho:.6g}")


def t14_probes(ctx: ToyContext):
    """Probe states per region: ``v < 0``, ``0 < v < min(r, v_s)``, ``r < v < v_s`` (if any), ``v > v_s``."""
    vs, r = ctx.v_s, ctx.r
    regions = {"v<0": [-1.5, -1.0, -0.5], "0<v<r": list(np.linspace(0, min(r, vs), 5)[1:-1])}
    if r < vs:
        regions["r<v<v*"] = list(np.linspace(r, vs, 5)[1:-1])
    regions["v>v_s"] = [vs + 0.2, vs + 0.5, 2.0 * vs + 0.5]
    return regions


def t14_criterion(ctx: ToyContext) -> tuple[Criterion, dict]:
    s = ctx.scenario
    V = lambda t, x: ctx.exact(t, x[..., 0])  # noqa: E731
    diffs = lambda t, x: toy.proximal_differentials(t, x[0], ctx.C, ctx.r)  # noqa: E731
    matrix = {}
    vii = 0.0
    for name, vs in t14_probes(ctx).items():
        rep = check_T14(s, V, [(0.0, np.array([v])) for v in vs], differentials=diffs)
        matrix[name] = rep
        rows = rep.select("T14-vii")
        if rows:
            vii = max(vii, max(abs(x.residual) for x in rows))
    kink = check_T14(s, V, [(0.0, np.array([0.0]))], differentials=diffs)
    matrix["v=0"] = kink
    viii = min(x.residual for x in kink.select("T14-viii"))
    n_q = len(kink.select("T14-viii"))
    sub_empty = proximal_probe(V, 0.0, [0.0], eps=1e-2, M_max=1e3).sub_empty
    all_pass = all(rep.passed for rep in matrix.values())
    ok = vii <= 1e-9 and viii >= -1e-9 and n_q == 20 and sub_empty and all_pass
    return Criterion("viscosity conditions (closed form)", ok, vii, 1e-9,
                     f"max |vii| {vii:.3g} <= 1e-9, min viii at v=0 over {n_q} q_v {viii:.3g} >= -1e-9, "
                     f"sub-differential at v=0 empty: {sub_empty}, all rows pass: {all_pass}"), matrix


def hj_criterion(ctx: ToyContext, probes: int = 200) -> Criterion:
    s, vt = ctx.scenario, ctx.table
    tol = 10 * (ctx.h + ctx.delta) * ctx.scale
    pts = differentiable_probes(s, vt, probes, seed=ctx.seed, stability=tol)
    rep = check_HJ_pointwise(s, vt, pts, tol=tol)
    checked = [r for r in rep.records if r.passed is not None]
    worst = max(abs(r.residual) for r in checked) if checked else float("inf")
    ok = len(checked) == probes and worst <= tol
    return Criterion("HJ residuals", ok, worst, tol,
                     f"{len(checked)} differentiable probes, max residual {worst:.3g} <= {tol:.3g}")


def gronwall_criterion(ctx: ToyContext, trials: int = 100) -> Criterion:
    details, ok, worst = [], True, -np.inf
    for s in (ctx.scenario, load_scenario(toy.data_path("linear.scn"))):
        rep = gronwall_check(s, estimate_constants(s), trials)
        bound = 5 * float(s.numerics["h"]) * (1 + s.box_radius)
        ok &= rep.max_ratio_excess <= bound
        worst = max(worst, rep.max_ratio_excess - bound)
        details.append(f"{s.name}: excess {rep.max_ratio_excess:.3g} <= {bound:.3g}")
    s = ctx.scenario
    ctrl = ControlSignal.piecewise_constant([0.0, 0.3, 0.7], [[2.0], [-1.0], [1.0]])
    a = integrate(s, 0.0, [-1.0], ctrl, 1.5, ctx.h)
    b = integrate(s, 0.0, [-1.0], ctrl, 1.5, ctx.h)
    same = np.array_equal(a.states, b.states) and np.array_equal(a.times, b.times)
    details.append(f"repeat integration bitwise equal: {same}")
    return Criterion("Gronwall/uniqueness", bool(ok and same), float(worst), 0.0, ", ".join(details))


def osl_criterion(ctx: ToyContext, pairs: int = 1000) -> Criterion:
    rep = osl_check(ctx.scenario, ctx.consts, pairs)
    return Criterion("OSL", rep.max_violation <= 1e-9, rep.max_violation, 1e-9,
                     f"{pairs} pairs, L_Fbar = {ctx.consts.L_Fbar:.3g}, max violation {rep.max_violation:.3g} <= 1e-9")


def oracle_probes(ctx: ToyContext, count: int = 20, reach: float = 2.4):
    """Grid nodes with ``arrival - t0 <= reach``, drawn deterministically."""
    rng = np.random.default_rng(ctx.seed)
    vt = ctx.table
    axis = vt.axes()[0]
    out = []
    while len(out) < count:
        t = float(vt.times[rng.integers(0, vt.times.size // 2)])
        v = float(axis[rng.integers(0, axis.size)])
        if float(toy.arrival_time(t, v, ctx.C, ctx.r)) - t <= reach and np.isfinite(query_value(vt, t, [v])):
            out.append((t, v))
    return out


def oracle_criterion(ctx: ToyContext, count: int = 20) -> Criterion:
    errs = []
    for t, v in oracle_probes(ctx, count):
        o = brute_force_value(ctx.scenario, t, [v], depth=25, branching=5)
        errs.append(abs(o - query_value(ctx.table, t, [v])))
    worst = max(errs)
    tol = 0.1 * ctx.scale
    return Criterion("oracle agreement", worst <= tol, worst, tol,
                     f"{count} probes, depth 25, branching 5, max |oracle - solver| {worst:.3g} <= {tol:.3g}")


def p7_criterion(ctx: ToyContext, samples: int = 50) -> Criterion:
    rep, results = p7_ratio_sweep(ctx.scenario, samples, consts=ctx.consts)
    L_K = results[0].L_K
    ratio = max(r.ratio for r in results)
    decay = all(r.decay_ok for r in results)
    ok = ratio <= 1.05 * L_K and decay
    return Criterion("steering ratio sweep", ok, ratio, 1.05 * L_K,
                     f"{samples} starts, max ratio {ratio:.4g} <= 1.05 L_K = {1.05 * L_K:.4g}, "
                     f"decay inequality holds on every run: {decay}")


def invariance_criterion(ctx: ToyContext, trials: int = 1000) -> Criterion:
    rep = invariance_sample_test(ctx.scenario, ctx.table, trials, law=ctx.law,
                                 tol=10 * (ctx.h + ctx.delta) * ctx.scale)
    strong = sum(r.passed is False for r in rep.select("strong-inv"))
    weak = rep.select("weak-inv")
    rate = sum(r.passed is True for r in weak) / len(weak)
    ok = strong == 0 and rate == 1.0
    return Criterion("invariance", ok, float(strong), 0.0,
                     f"{trials} trials, strong failures {strong}, weak pass rate {100 * rate:.1f}%")


def feedback_table(ctx: ToyContext, stride: int = 25, band: float = 3.0):
    """Match rate of the extracted feedback against the region table, and the kink limit velocity."""
    vt, law = ctx.table, ctx.law
    axis = vt.axes()[0]
    mask = ctx.comparison_mask(band) & (np.abs(axis - ctx.v_s)[None, :] > band * ctx.delta)
    ks = np.arange(0, vt.times.size - 1, stride)
    u = law.u_star[ks, :, 0]
    hold = (vt.choice[ks] == STOP) | (law.w_star[ks, :, 0] == 0.0)
    want = toy.feedback_control(0.0, axis, ctx.C, ctx.r)[None, :]
    match = np.where(want == 0.0, hold, u == want)
    m = mask[ks]
    rate = float(match[m].mean())
    j0 = int(np.argmin(np.abs(axis)))
    # slices from which the optimal path through v = 0 ends before the horizon
    inside = toy.arrival_time(vt.times[ks], 0.0, ctx.C, ctx.r) <= ctx.scenario.t_max_horizon - band * ctx.delta
    flagged = law.limit_flag[ks, j0] & inside & ~vt.inf[ks, j0]
    lim = law.limit_w[ks, j0, 0][flagged]
    dev = float(np.abs(lim - 0.5).max()) if lim.size else float("inf")
    return rate, dev, int(m.sum())


def feedback_regions(ctx: ToyContext, stride: int = 25, band: float = 3.0):
    """Rows ``(region, expected control, match rate, nodes)`` of the feedback table."""
    vt, law = ctx.table, ctx.law
    axis = vt.axes()[0]
    mask = ctx.comparison_mask(band) & (np.abs(axis - ctx.v_s)[None, :] > band * ctx.delta)
    ks = np.arange(0, vt.times.size - 1, stride)
    u = law.u_star[ks, :, 0]
    hold = (vt.choice[ks] == STOP) | (law.w_star[ks, :, 0] == 0.0)
    rows = []
    for name, sel, want in (("v<0", axis < 0, 2.0), ("0<v<v_s", (axis > 0) & (axis < ctx.v_s), 1.0),
                            ("v>=v_s", axis >= ctx.v_s, 0.0)):
        m = mask[ks] & sel[None, :]
        match = hold if want == 0.0 else u == want
        rate = float(match[m].mean()) if m.any() else float("nan")
        rows.append((name, want, rate, int(m.sum())))
    return rows


def feedback_criterion(ctx: ToyContext) -> Criterion:
    rate, dev, n = feedback_table(ctx)
    ok = rate >= 0.99 and dev <= 1e-6
    return Criterion("feedback structure", ok, rate, 0.99,
                     f"{n} nodes, region match {100 * rate:.2f}% >= 99%, v=0 limit velocity deviation {dev:.3g} <= 1e-6")


def run_all(ctx: ToyContext):
    """All criteria in a fixed order; the viscosity-condition pass matrix is returned alongside."""
    out = [value_criterion(ctx), fbar_criterion(ctx), ipc_criterion(ctx)]
    t14, matrix = t14_criterion(ctx)
    out += [t14, hj_criterion(ctx), gronwall_criterion(ctx), osl_criterion(ctx), oracle_criterion(ctx),
            p7_criterion(ctx), invariance_criterion(ctx), feedback_criterion(ctx)]
    return out, matrix
