"""Command-line front end.

Subcommands ``validate``, ``simulate``, ``reach``, ``value``, ``verify`` and
``toy-repro``.  Every file output is CSV with a header row; nothing is
plotted.  Exit codes: 0 success, 1 hard error, 2 validation or check
failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import acceptance, toy
from ._parallel import ENV_THREADS
from .dynamics import osl_check
from .hjb import brute_force_value, extract_feedback, follow_feedback, query_value, solve_value
from .integrator import ControlSignal, IntegrationError, integrate
from .reachability import Feasibility, attainable, in_domain, reach
from .scenario import ScenarioError, ValidationError, estimate_constants, load_scenario
from .verify import (VerificationReport, check_HJ_pointwise, check_T14, differentiable_probes,
                     invariance_sample_test, ipc_check, p7_ratio_sweep)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK = 2

EPILOG = f"""\
exit codes:
  0  success
  1  hard error (bad arguments, integration blow-up, out-of-grid query, ...)
  2  validation failure (scenario rejected, or a check failed without --report-only)

environment:
  {ENV_THREADS}  worker threads for independent trials (default 1)
  FRICTIONHJB_PURE_PYTHON=1  use the numpy kernels instead of the compiled ones
"""


class CheckFailed(Exception):
    """A check ran to completion and failed."""


@dataclass
class RunConfig:
    """Parsed invocation: subcommand, scenario, numeric overrides and output directory."""

    subcommand: str
    scenario: str | None = None
    overrides: dict = field(default_factory=dict)
    out_dir: Path | None = None
    options: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        keys = ("h", "delta", "horizon", "tol", "seed")
        ov = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
        skip = set(keys) | {"command", "scenario", "out_dir", "threads", "func"}
        opts = {k: v for k, v in vars(args).items() if k not in skip}
        out = Path(args.out_dir) if getattr(args, "out_dir", None) else None
        return cls(args.command, getattr(args, "scenario", None), ov, out, opts)

    def output(self, name: str) -> Path | None:
        if self.out_dir is None:
            return None
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name


def resolve_scenario_path(name: str) -> Path:
    """A file path, or the name of a bundled scenario such as ``toy.scn``."""
    p = Path(name)
    if p.exists():
        return p
    bundled = toy.data_path(p.name if p.suffix else p.name + ".scn")
    if bundled.exists():
        return bundled
    raise ScenarioError(f"scenario file {name} not found")


def load(cfg: RunConfig, validate: bool = True):
    s = load_scenario(resolve_scenario_path(cfg.scenario), validate=validate)
    ov = dict(cfg.overrides)
    horizon = ov.pop("horizon", None)
    if ov:
        s = s.with_numerics(**ov)
    if horizon is not None:
        if not horizon > s.time_window[0]:
            raise ValueError(f"--horizon {horizon} must exceed the window start {s.time_window[0]}")
        s = dataclasses.replace(s, t_max_horizon=float(horizon),
                                time_window=(s.time_window[0], min(s.time_window[1], float(horizon))))
    return s


def _fmt(v) -> str:
    return f"{float(v):.6g}"


def _write_rows(path: Path | None, header, rows) -> None:
    if path is None:
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _ipc(s):
    """IPC report and rho estimate; a target with no checkable boundary yields one skipped row."""
    try:
        return ipc_check(s)
    except ValueError as exc:
        rep = VerificationReport()
        rep.add("IPC", float(s.time_window[0]), s.state_box.mean(-1), float("nan"), float(s.numerics["tol"]), "le",
                note=str(exc), skip=True)
        return rep, float("nan")


def _toy_params(s):
    if s.name != "toy" or not {"C", "r"} <= set(s.params):
        raise ValueError(f"no closed form is available for scenario '{s.name}' (only the bundled toy)")
    return float(s.params["C"]), float(s.params["r"])


# ---------------------------------------------------------------- validate


def cmd_validate(cfg: RunConfig) -> int:
    s = load(cfg)
    consts = estimate_constants(s)
    pairs = int(cfg.options["pairs"])
    osl = osl_check(s, consts, pairs)
    ipc, rho = _ipc(s)
    ipc_status = "SKIP" if all(r.passed is None for r in ipc.records) else ("PASS" if ipc.passed else "FAIL")
    osl_ok = osl.max_violation <= float(s.numerics["tol"])
    rows = [
        ("hypotheses", "PASS", ""),
        ("L", "", _fmt(consts.L)),
        ("C1", "", _fmt(consts.C1)),
        ("C2", "", _fmt(consts.C2)),
        ("L_F", "", _fmt(consts.L_F)),
        ("L_Fbar", "", _fmt(consts.L_Fbar)),
        ("OSL", "PASS" if osl_ok else "FAIL", _fmt(osl.max_violation)),
        ("IPC", ipc_status, _fmt(rho)),
    ]
    print(f"scenario {s.name}: dim {s.dim}, {s.controls.shape[0]} controls, {len(s.measure)} friction atoms")
    for name, status, value in rows:
        print(f"  {name:<10} {status:<4} {value}".rstrip())
    print(f"  L_F = {_fmt(consts.L_F)}, rho_estimate = {_fmt(rho)}")
    _write_rows(cfg.output("validate.csv"), ["check", "status", "value"], rows)
    if cfg.out_dir is not None:
        osl.to_csv(cfg.output("osl.csv"), s.dim)
        ipc.to_csv(cfg.output("ipc.csv"))
    if not osl_ok:
        raise CheckFailed(f"OSL violation {osl.max_violation:.3g} exceeds tol")
    return EXIT_OK


# ---------------------------------------------------------------- simulate


def parse_control(spec: str, s, h: float | None = None):
    """``const`` vector, ``piecewise:T=U;T=U``, ``toy`` or ``dp``; returns a signal or the string ``"dp"``."""
    spec = spec.strip()
    if spec == "dp":
        return "dp"
    if spec == "toy":
        C, r = _toy_params(s)
        return ControlSignal.feedback(lambda t, x: [float(toy.feedback_control(t, x[0], C, r))])
    if spec.startswith("piecewise:"):
        times, values = [], []
        for part in filter(None, spec[len("piecewise:"):].split(";")):
            t, _, u = part.partition("=")
            times.append(float(t))
            values.append([float(v) for v in u.split(",")])
        sig = ControlSignal.piecewise_constant(times, values)
    else:
        body = spec[len("const:"):] if spec.startswith("const:") else spec
        try:
            sig = ControlSignal.constant([float(v) for v in body.split(",")])
        except ValueError:
            raise ValueError(f"unrecognized control '{spec}'") from None
    if sig.values.shape[1] != s.ctrl_dim:
        raise ValueError(f"control has {sig.values.shape[1]} components, scenario needs {s.ctrl_dim}")
    sig.check(s)
    return sig


def _check_box(s, x0):
    x0 = np.asarray(x0, dtype=float)
    if x0.size != s.dim:
        raise ValueError(f"x0 needs {s.dim} components, got {x0.size}")
    if np.any(x0 < s.state_box[:, 0]) or np.any(x0 > s.state_box[:, 1]):
        raise ValueError(f"x0 = {x0.tolist()} lies outside the state box {s.state_box.tolist()}")
    return x0


def cmd_simulate(cfg: RunConfig) -> int:
    s = load(cfg)
    o = cfg.options
    x0 = _check_box(s, o["x0"])
    t0 = float(s.time_window[0] if o["t0"] is None else o["t0"])
    T = float(o["T"])
    h = float(s.numerics["h"])
    ctrl = parse_control(o["control"], s)
    if ctrl == "dp":
        law = extract_feedback(s, solve_value(s))
        res = follow_feedback(s, law, t0, x0, T=min(T, float(law.vt.times[-1])), h=h)
        traj = res.trajectory
        if res.stopped:
            print(f"# stopped at t = {res.stop_time:.6g}", file=sys.stderr)
    else:
        traj = integrate(s, t0, x0, ctrl, T, h)
    out = o["out"]
    if out in (None, "-"):
        traj.to_csv(sys.stdout)
    else:
        traj.to_csv(out)
        print(f"wrote {len(traj.times)} rows to {out}; final state {[_fmt(v) for v in traj.final_state]}")
    return EXIT_OK


# ------------------------------------------------------------------- reach


def cmd_reach(cfg: RunConfig) -> int:
    s = load(cfg)
    o = cfg.options
    t0, x0 = float(o["from"][0]), _check_box(s, o["from"][1:])
    until = float(o["until"])
    rt = reach(s, t0, x0, until)
    att = attainable(s, rt)
    print(f"reach from t = {_fmt(t0)}, x = {[_fmt(v) for v in x0]} to s = {_fmt(until)}: "
          f"{sum(len(c) for c in rt.cells)} occupied cells over {len(rt.times)} nodes")
    if rt.exit_time is not None:
        print(f"  images left the state box at s = {_fmt(rt.exit_time)} (clipped)")
    if att.empty:
        print("  attainable: empty")
    else:
        print(f"  attainable: {len(att)} points, earliest s = {_fmt(att.points[:, 0].min())}")
    if until <= s.t_max_horizon:
        feas = in_domain(s, t0, x0, until - t0)
        print(f"  feasibility up to s: {feas.value}")
    if cfg.out_dir is not None:
        rt.to_csv(cfg.output("reach.csv"))
        att.to_csv(cfg.output("attainable.csv"))
    return EXIT_OK


# ------------------------------------------------------------------- value


def cmd_value(cfg: RunConfig) -> int:
    s = load(cfg)
    o = cfg.options
    vt = solve_value(s)
    print(f"solved {vt.values.shape[0]} slices on a {'x'.join(map(str, vt.shape))} grid "
          f"(h = {_fmt(vt.times[1] - vt.times[0])}, delta = {[_fmt(d) for d in vt.dx]})")
    rows = []
    for q in o["query"] or []:
        if len(q) != 1 + s.dim:
            raise ValueError(f"--query needs t and {s.dim} state components")
        t, x = float(q[0]), np.array(q[1:], dtype=float)
        v = query_value(vt, t, x)
        row = [repr(t), *map(repr, x.tolist()), repr(v)]
        line = f"V({_fmt(t)}, {', '.join(map(_fmt, x))}) = {_fmt(v)}"
        if o["oracle"]:
            ov = brute_force_value(s, t, x, depth=o["depth"], branching=o["branching"])
            row.append(repr(ov))
            line += f"  oracle {_fmt(ov)}"
        rows.append(row)
        print(line)
    xs = ["x"] if s.dim == 1 else [f"x_{i + 1}" for i in range(s.dim)]
    _write_rows(cfg.output("query.csv"), ["t", *xs, "value"] + (["oracle"] if o["oracle"] else []), rows)
    if cfg.out_dir is not None:
        vt.to_csv(cfg.output("value.csv"), time_stride=o["time_stride"])
        extract_feedback(s, vt).to_csv(cfg.output("feedback.csv"), time_stride=o["time_stride"])
    return EXIT_OK


# ------------------------------------------------------------------ verify


def _closed_form_report(s) -> VerificationReport:
    C, r = _toy_params(s)
    ctx = acceptance.ToyContext(C, r)
    V = lambda t, x: toy.value(t, x[..., 0], C, r)  # noqa: E731
    diffs = lambda t, x: toy.proximal_differentials(t, x[0], C, r)  # noqa: E731
    probes = [(0.0, np.array([v])) for vs in acceptance.t14_probes(ctx).values() for v in vs]
    probes.append((0.0, np.array([0.0])))
    return check_T14(s, V, probes, differentials=diffs)


def _table_report(s, o) -> VerificationReport:
    vt = solve_value(s)
    law = extract_feedback(s, vt)
    seed = int(s.numerics["seed"])
    rep = VerificationReport()
    pts = differentiable_probes(s, vt, o["probes"], seed=seed)
    rep.extend(check_T14(s, vt, pts))
    rep.extend(check_HJ_pointwise(s, vt, pts))
    rep.extend(invariance_sample_test(s, vt, o["trials"], law=law))
    try:
        rep.extend(p7_ratio_sweep(s, o["samples"])[0])
    except ValueError as exc:
        print(f"  steering sweep skipped: {exc}")
    return rep


def cmd_verify(cfg: RunConfig) -> int:
    s = load(cfg)
    o = cfg.options
    rep, _ = _ipc(s)
    rep.extend(_closed_form_report(s) if o["closed_form"] else _table_report(s, o))
    print(rep.summary())
    if cfg.out_dir is not None:
        rep.to_csv(cfg.output("verify.csv"))
    if not rep.passed and not o["report_only"]:
        raise CheckFailed(f"{len(rep.failures())} verification rows failed")
    return EXIT_OK


# --------------------------------------------------------------- toy-repro


def _t14_matrix(matrix: dict):
    conds = ("T14-v", "T14-vi", "T14-vii", "T14-viii", "HJ2")
    rows = []
    for region, rep in matrix.items():
        cells = []
        for c in conds:
            sel = [r for r in rep.select(c) if r.passed is not None]
            cells.append("-" if not sel else ("PASS" if all(r.passed for r in sel) else "FAIL"))
        rows.append((region, *cells))
    return conds, rows


def cmd_toy_repro(cfg: RunConfig) -> int:
    o = cfg.options
    ov = cfg.overrides
    ctx = acceptance.ToyContext(C=o["C"], r=o["r"], h=ov.get("h", 2e-3), delta=ov.get("delta", 2e-3),
                                seed=ov.get("seed", 0))
    C, r = ctx.C, ctx.r
    print(f"toy: C = {_fmt(C)}, r = {_fmt(r)}, h = {_fmt(ctx.h)}, delta = {_fmt(ctx.delta)}")
    print(f"v* = C^(-1/3) = {_fmt(toy.v_star(C))}; C r^3 = {_fmt(C * r ** 3)}")
    if C * r ** 3 > 1:
        print(f"  C r^3 > 1: optimal trajectories stop at the target boundary v = r = {_fmt(r)}, "
              f"so V reflects hitting r rather than v*")
    else:
        print(f"  C r^3 <= 1: optimal trajectories accelerate to v* = {_fmt(toy.v_star(C))} and stop there")
    criteria, matrix = acceptance.run_all(ctx)
    by_name = {c.name: c for c in criteria}
    print(f"\nIPC value: {by_name['IPC value'].detail}")

    print("\nV at reference points (solver vs closed form):")
    print(f"  {'t':>5} {'v':>6} {'solver':>10} {'exact':>10} {'|err|':>9}")
    ref_rows = []
    for t, v in ctx.reference_points():
        a, b = query_value(ctx.table, t, [v]), float(ctx.exact(t, v))
        ref_rows.append((repr(t), repr(v), repr(a), repr(b), repr(abs(a - b))))
        print(f"  {t:>5.3g} {v:>6.3g} {a:>10.5f} {b:>10.5f} {abs(a - b):>9.2e}")

    conds, t14_rows = _t14_matrix(matrix)
    print("\nviscosity-condition pass matrix (closed form):")
    print("  " + f"{'region':<8}" + "".join(f"{c:>10}" for c in conds))
    for row in t14_rows:
        print("  " + f"{row[0]:<8}" + "".join(f"{c:>10}" for c in row[1:]))

    print("\noptimal feedback by region (extracted vs {2, 1, 0}):")
    fb_rows = acceptance.feedback_regions(ctx)
    for name, want, rate, n in fb_rows:
        label = "hold" if want == 0.0 else f"u* = {want:g}"
        print(f"  {name:<8} {label:<8} match {100 * rate:6.2f}% over {n} nodes")
    _, dev, _ = acceptance.feedback_table(ctx)
    print(f"\nv = 0 limit argmin: one-sided limit velocity 0.5 (u = 1), deviation {dev:.3g}")
    print("\nacceptance criteria:")
    for c in criteria:
        print("  " + c.line())
    ok = all(c.passed for c in criteria)
    print("overall: " + ("PASS" if ok else "FAIL"))
    _write_rows(cfg.output("criteria.csv"), ["criterion", "pass", "measured", "threshold", "detail"],
                [(c.name, int(c.passed), repr(c.measured), repr(c.threshold), c.detail) for c in criteria])
    _write_rows(cfg.output("reference.csv"), ["t", "v", "solver", "exact", "abs_err"], ref_rows)
    _write_rows(cfg.output("t14_matrix.csv"), ["region", *conds], t14_rows)
    _write_rows(cfg.output("feedback_regions.csv"), ["region", "expected_u", "match_rate", "nodes"],
                [(a, b, repr(c), d) for a, b, c, d in fb_rows])
    if not ok:
        raise CheckFailed("acceptance criteria failed: " + ", ".join(c.name for c in criteria if not c.passed))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    if scenario:
        p.add_argument("scenario", help="scenario file (or a bundled name: toy.scn, linear.scn)")
    g = p.add_argument_group("overrides")
    g.add_argument("--h", type=float, help="time step")
    g.add_argument("--delta", type=float, help="grid spacing")
    if scenario:
        g.add_argument("--horizon", type=float, help="t_max_horizon")
        g.add_argument("--tol", type=float, help="check tolerance")
    g.add_argument("--seed", type=int, help="sampling seed")
    p.add_argument("--out-dir", help="directory for CSV outputs (none written when omitted)")
    p.add_argument("--threads", type=int, help=f"worker threads (sets {ENV_THREADS})")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    p = argparse.ArgumentParser(prog="frictionhjb", description=__doc__.splitlines()[0], epilog=EPILOG,
                                formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("validate", help="check hypotheses, constants, OSL and IPC", epilog=EPILOG, formatter_class=fmt)
    _common(q)
    q.add_argument("--pairs", type=int, default=1000, help="OSL sample pairs")
    q.set_defaults(func=cmd_validate)

    q = sub.add_parser("simulate", help="integrate one trajectory to CSV", epilog=EPILOG, formatter_class=fmt,
                       description="control: a constant 'U' or 'const:U1,U2', 'piecewise:T0=U;T1=U', "
                                   "'toy' (closed-form toy feedback) or 'dp' (feedback from the value solver)")
    _common(q)
    q.add_argument("--t0", type=float, help="initial time (default: window start)")
    q.add_argument("--x0", type=float, nargs="+", required=True, help="initial state")
    q.add_argument("--control", required=True, help="control specification")
    q.add_argument("--T", type=float, required=True, help="final time")
    q.add_argument("--out", help="trajectory CSV path (default: stdout)")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("reach", help="reachable cells, attainable target points, feasibility", epilog=EPILOG,
                       formatter_class=fmt)
    _common(q)
    q.add_argument("--from", dest="from", type=float, nargs="+", required=True, metavar="T X", help="start (t, x)")
    q.add_argument("--until", type=float, required=True, help="final time s")
    q.set_defaults(func=cmd_reach)

    q = sub.add_parser("value", help="solve the value function; query points", epilog=EPILOG, formatter_class=fmt)
    _common(q)
    q.add_argument("--query", type=float, nargs="+", action="append", metavar="T X", help="print V(t, x)")
    q.add_argument("--oracle", action="store_true", help="also print the brute-force oracle value")
    q.add_argument("--depth", type=int, default=25, help="oracle depth")
    q.add_argument("--branching", type=int, default=5, help="oracle branching")
    q.add_argument("--time-stride", type=int, default=10, help="slice stride of value.csv / feedback.csv")
    q.set_defaults(func=cmd_value)

    q = sub.add_parser("verify", help="viscosity, HJ, invariance and steering checks", epilog=EPILOG,
                       formatter_class=fmt)
    _common(q)
    q.add_argument("--closed-form", action="store_true", help="check the toy's closed-form value")
    q.add_argument("--report-only", action="store_true", help="exit 0 even when rows fail")
    q.add_argument("--probes", type=int, default=50, help="differentiability probes")
    q.add_argument("--trials", type=int, default=200, help="invariance trials")
    q.add_argument("--samples", type=int, default=20, help="steering starts")
    q.set_defaults(func=cmd_verify)

    q = sub.add_parser("toy-repro", help="full pipeline on the bundled toy", epilog=EPILOG, formatter_class=fmt)
    _common(q, scenario=False)
    q.add_argument("--C", type=float, default=1.0, help="time-cost weight")
    q.add_argument("--r", type=float, default=0.8, help="target threshold")
    q.set_defaults(func=cmd_toy_repro)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None):
        os.environ[ENV_THREADS] = str(args.threads)
    cfg = RunConfig.from_args(args)
    try:
        return args.func(cfg)
    except (ScenarioError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except CheckFailed as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (ValueError, IntegrationError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
