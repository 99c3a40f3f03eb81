"""Problem data model, scenario files and structural constants.

A scenario bundles the friction dynamics ``g - sum_a w_a k(., alpha_a) d phi(., alpha_a)``,
the finite control list, the moving target, the terminal cost and the
numeric defaults shared by the solvers.  Scenario files are TOML with the
sections ``[parameters]``, ``[dynamics]``, ``[friction]``, ``[target]``,
``[cost]`` and ``[numerics]``; the keys are listed in the README.
"""

from __future__ import annotations

import math
import sys
from functools import cached_property
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .expr import ExpressionError, ScalarField, VectorField
from .potentials import PotentialError, PotentialSpec

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

SECTIONS = ("parameters", "dynamics", "friction", "target", "cost", "numerics")

NUMERIC_DEFAULTS = {
    "h": 1e-2,
    "delta": 1e-2,
    "seed": 0,
    "samples": 256,
    "interior_samples": 3,
    "tol": 1e-9,
}


class ScenarioError(ValueError):
    """Malformed scenario file (parse or schema error)."""


class ValidationError(ValueError):
    """A standing hypothesis failed on the validation sample.

    Attributes
    ----------
    hypothesis : str
        Short name of the violated condition (``"H3"``, ``"H4"``, ...).
    witness : object
        The offending sample or datum.
    """

    def __init__(self, hypothesis: str, message: str, witness: Any = None):
        super().__init__(f"{hypothesis}: {message}")
        self.hypothesis = hypothesis
        self.witness = witness


@dataclass(frozen=True)
class FrictionMeasure:
    """Finite atomic measure: ``alphas[i]`` carries mass ``weights[i]``."""

    alphas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        a = np.asarray(self.alphas, dtype=float)
        a = a.reshape(w.size, -1) if w.size else np.zeros((0, 1))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "alphas", a)
        for i, wi in enumerate(w):
            if not np.isfinite(wi) or wi < 0:
                raise ValidationError("H4", f"measure has negative atom weight {wi} at atom {i}", i)
            if wi == 0:
                raise ValidationError("H4", f"measure has nonpositive atom weight {wi} at atom {i}", i)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return self.weights.size


@dataclass(frozen=True)
class TargetTube:
    """Moving target ``t -> T(t)``.

    In 1D the target is a union of closed intervals whose endpoints may be
    numbers or expressions of ``t``; in any dimension a signed distance
    expression ``sdf`` (``<= 0`` inside) can be used instead.  Outside
    ``time_range`` the target is empty.
    """

    dim: int
    intervals: tuple = ()
    sdf: Callable | None = None
    time_range: tuple[float, float] = (-math.inf, math.inf)

    @property
    def is_empty(self) -> bool:
        return not self.intervals and self.sdf is None

    @property
    def time_invariant(self) -> bool:
        dyn = [e for iv in self.intervals for e in iv if callable(e)]
        if self.sdf is not None:
            dyn.append(self.sdf)
        return not any(getattr(e, "depends_on_time", True) for e in dyn)

    def _bound(self, e, t):
        if callable(e):
            return e(t, None)
        return np.broadcast_to(float(e), np.shape(t))

    def bounds(self, t):
        """List of ``(lo, hi)`` arrays of the 1D intervals at times ``t``."""
        t = np.asarray(t, dtype=float)
        return [(self._bound(lo, t), self._bound(hi, t)) for lo, hi in self.intervals]

    def _in_time(self, t):
        return (t >= self.time_range[0]) & (t <= self.time_range[1])

    def state_distance(self, t, x):
        """Distance from ``x`` to ``T(t)`` (``inf`` when ``T(t)`` is empty)."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        shape = np.broadcast_shapes(t.shape, x.shape[:-1])
        d = np.full(shape, np.inf)
        if self.sdf is not None:
            d = np.minimum(d, np.maximum(self.sdf(t, x), 0.0))
        if self.intervals:
            xs = x[..., 0]
            for lo, hi in self.bounds(t):
                nonempty = lo <= hi
                di = np.maximum(np.maximum(lo - xs, xs - hi), 0.0)
                d = np.minimum(d, np.where(nonempty, di, np.inf))
        return np.where(self._in_time(t), d, np.inf)

    def signed_distance(self, t, x):
        """Signed distance to ``T(t)`` (negative inside, ``inf`` when ``T(t)`` is empty).

        Exact for intervals; the ``sdf`` expression is used as given.
        """
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        shape = np.broadcast_shapes(t.shape, x.shape[:-1])
        d = np.full(shape, np.inf)
        if self.sdf is not None:
            d = np.minimum(d, self.sdf(t, x))
        if self.intervals:
            xs = x[..., 0]
            for lo, hi in self.bounds(t):
                with np.errstate(invalid="ignore"):
                    di = np.maximum(lo - xs, xs - hi)
                d = np.minimum(d, np.where(lo <= hi, di, np.inf))
        return np.where(self._in_time(t), d, np.inf)

    def contains(self, t, x, tol: float = 0.0):
        return self.state_distance(t, x) <= tol

    def project_state(self, t, x):
        """Nearest point of ``T(t)`` to ``x`` (1D intervals; sdf via one Newton step)."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        best = np.array(x, dtype=float, copy=True)
        bestd = np.full(x.shape[:-1], np.inf)
        if self.intervals:
            for lo, hi in self.bounds(t):
                p = np.clip(x[..., 0], lo, hi)
                d = np.where(lo <= hi, np.abs(p - x[..., 0]), np.inf)
                take = d < bestd
                best[..., 0] = np.where(take, p, best[..., 0])
                bestd = np.where(take, d, bestd)
        if self.sdf is not None:
            f = self.sdf(t, x)
            grad = _fd_grad_x(self.sdf, t, x)
            nrm2 = np.maximum((grad ** 2).sum(-1), 1e-300)
            p = x - (np.maximum(f, 0.0) / nrm2)[..., None] * grad
            d = np.maximum(f, 0.0)
            take = d < bestd
            best = np.where(take[..., None], p, best)
        return best

    def distance(self, t, x, window: float = 1.0, samples: int = 201):
        """Distance from ``(t, x)`` to the graph of the tube in ``R^{1+n}``.

        Exact for time-invariant targets; otherwise the minimum over
        ``samples`` times within ``window`` of ``t`` (an upper bound).
        """
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        lo_t, hi_t = self.time_range
        if self.time_invariant:
            tc = np.clip(t, lo_t, hi_t) if np.isfinite(lo_t) or np.isfinite(hi_t) else t
            dt = np.abs(t - tc)
            ds = self.state_distance(tc, x)
            return np.sqrt(dt ** 2 + ds ** 2)
        offs = np.linspace(-window, window, samples)
        tt = t[..., None] + offs
        xx = np.broadcast_to(x[..., None, :], tt.shape + x.shape[-1:])
        ds = self.state_distance(tt, xx)
        return np.sqrt(offs ** 2 + ds ** 2).min(axis=-1)


def _fd_grad_x(f, t, x, eps=1e-6):
    cols = []
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[i] = eps
        cols.append((f(t, x + e) - f(t, x - e)) / (2 * eps))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class Scenario:
    """Complete problem datum.

    ``g(t, x, u)`` returns shape ``S + (n,)`` and ``k(t, x, u, alpha)``
    returns shape ``S`` for ``t`` of shape ``S``, ``x`` of shape
    ``S + (n,)`` and ``u`` of shape ``S + (m,)``; ``W(t, x)`` returns ``S``.
    ``controls`` is the finite list ``U`` with shape ``(|U|, m)``.
    """

    dim: int
    g: Callable
    k: Callable
    potential: PotentialSpec
    measure: FrictionMeasure
    controls: np.ndarray
    target: TargetTube
    W: Callable
    t_max_horizon: float
    state_box: np.ndarray
    time_window: tuple[float, float] = (0.0, math.nan)
    control_bounds: np.ndarray | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    numerics: Mapping[str, Any] = field(default_factory=dict)
    name: str = "scenario"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ScenarioError(f"dim must be 1 or 2, got {self.dim}")
        u = np.asarray(self.controls, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        if u.ndim != 2 or u.shape[0] == 0:
            raise ScenarioError("controls must be a nonempty list")
        # sorted and unique so that first-index ties pick the smallest control
        u = np.unique(u, axis=0)
        object.__setattr__(self, "controls", u)
        box = np.asarray(self.state_box, dtype=float).reshape(self.dim, 2)
        object.__setattr__(self, "state_box", box)
        tw = tuple(float(v) for v in self.time_window)
        if math.isnan(tw[1]):
            tw = (tw[0], float(self.t_max_horizon))
        object.__setattr__(self, "time_window", tw)
        if self.control_bounds is None:
            object.__setattr__(self, "control_bounds", np.stack([u.min(0), u.max(0)], axis=-1))
        nums = dict(NUMERIC_DEFAULTS)
        nums.update(self.numerics)
        object.__setattr__(self, "numerics", nums)

    @property
    def ctrl_dim(self) -> int:
        return self.controls.shape[1]

    @property
    def time_dependent(self) -> bool:
        return bool(getattr(self.g, "depends_on_time", True) or getattr(self.k, "depends_on_time", True))

    @property
    def box_radius(self) -> float:
        return float(np.abs(self.state_box).max())

    @cached_property
    def _profiles(self):
        return tuple(self.potential.profile(i) for i in range(len(self.measure)))

    def profiles(self):
        return list(self._profiles)

    @cached_property
    def _kinks(self):
        axes = self.potential.active_axes(self.dim)
        out = [np.zeros(0) for _ in range(self.dim)]
        for p in self._profiles:
            for a in axes:
                out[a] = np.union1d(out[a], p.breakpoints)
        return tuple(out)

    def kinks(self) -> list[np.ndarray]:
        """Kink locus per state axis (sorted coordinates)."""
        return list(self._kinks)

    @cached_property
    def prox_tables(self):
        """``(breakpoints, piece_slopes (A, m+1), quads (A,))`` over merged kinks."""
        bps = np.zeros(0)
        for p in self._profiles:
            bps = np.union1d(bps, p.breakpoints)
        slopes = np.array([p.piece_slopes(bps) for p in self._profiles]).reshape(len(self._profiles), bps.size + 1)
        quads = np.array([p.quad for p in self._profiles], dtype=float)
        return bps, slopes, quads

    def friction_coefficients(self, t, x, u):
        """``w_a * k(t, x, u, alpha_a)`` for every atom; shape ``S + (A,)``."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(t.shape, x.shape[:-1], u.shape[:-1])
        if len(self.measure) == 0:
            return np.zeros(shape + (0,))
        cols = [w * np.broadcast_to(self.k(t, x, u, a), shape)
                for a, w in zip(self.measure.alphas, self.measure.weights)]
        return np.stack(cols, axis=-1)

    def with_numerics(self, **updates) -> "Scenario":
        nums = dict(self.numerics)
        nums.update(updates)
        return _replace(self, numerics=nums)


def _replace(s: Scenario, **changes) -> Scenario:
    from dataclasses import replace

    return replace(s, **changes)


@dataclass(frozen=True)
class StructuralConstants:
    """Constants consumed by the one-sided Lipschitz and Gronwall bounds."""

    L: float
    C1: float
    C2: float
    Lphi_integral: float
    samples: int = 0

    @property
    def kappa(self) -> float:
        return 1.0 + self.Lphi_integral

    @property
    def L_F(self) -> float:
        return self.L * self.kappa

    @property
    def L_Fbar(self) -> float:
        return self.L_F + self.L

    def C_r(self, r, t, t1=0.0):
        # L_F / L is identically kappa, which also covers L = 0
        k = self.kappa
        return k * (self.C1 + self.C2 * np.asarray(r, dtype=float)) * np.exp(k * (np.asarray(t, dtype=float) - t1))

    def lambda_r(self, r, t, t1=0.0):
        t = np.asarray(t, dtype=float)
        return 2.0 * np.exp(self.L_Fbar * t) * np.maximum(self.C_r(r, t, t1), 1.0)


# ---------------------------------------------------------------- loading


def _controls_from(spec) -> np.ndarray:
    if isinstance(spec, Mapping):
        try:
            lo, hi, count = float(spec["lo"]), float(spec["hi"]), int(spec["count"])
        except KeyError as exc:
            raise ScenarioError(f"control range needs lo, hi, count (missing {exc})") from None
        # rounding keeps grid values like 1.0 exact
        return np.round(np.linspace(lo, hi, count), 12)[:, None]
    arr = np.asarray(spec, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def _potential_from(spec) -> PotentialSpec:
    if isinstance(spec, str):
        return PotentialSpec(spec)
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise ScenarioError("friction.potential must be a kind name or a table with 'kind'")
    spec = dict(spec)
    kind = spec.pop("kind")
    axes = spec.pop("axes", None)
    params = dict(spec.pop("params", {}))
    params.update(spec)
    return PotentialSpec(kind, params, axes)


def _atoms_from(atoms) -> tuple[np.ndarray, np.ndarray, dict]:
    alphas, weights, overrides = [], [], {}
    for i, atom in enumerate(atoms or []):
        if not isinstance(atom, Mapping) or "weight" not in atom:
            raise ScenarioError(f"friction atom {i} must be a table with 'weight'")
        alphas.append(np.atleast_1d(np.asarray(atom.get("alpha", 0.0), dtype=float)))
        weights.append(float(atom["weight"]))
        if "overrides" in atom:
            overrides[i] = dict(atom["overrides"])
    if alphas and len({a.size for a in alphas}) != 1:
        raise ScenarioError("all friction atoms need alpha vectors of the same length")
    return (np.array(alphas) if alphas else np.zeros((0, 1))), np.array(weights), overrides


def _tube_from(sec: Mapping, dim: int, params) -> TargetTube:
    tr = tuple(float(v) for v in sec.get("time_range", (-math.inf, math.inf)))
    intervals = []
    for iv in sec.get("intervals", []):
        if len(iv) != 2:
            raise ScenarioError(f"target interval {iv!r} must have two endpoints")
        ends = []
        for e in iv:
            if isinstance(e, str):
                f = ScalarField(e, params, 1, 0, 0)
                ends.append(f if f.depends_on_time else float(f(0.0, None)))
            else:
                ends.append(float(e))
        intervals.append(tuple(ends))
    if intervals and dim != 1:
        raise ScenarioError("target intervals are only available for dim = 1; use sdf")
    sdf = ScalarField(sec["sdf"], params, dim, 0, 0) if "sdf" in sec else None
    return TargetTube(dim, tuple(intervals), sdf, tr)


def parse_scenario(data: Mapping, name: str = "scenario", validate: bool = True) -> Scenario:
    """Build a :class:`Scenario` from parsed TOML data."""
    unknown = set(data) - set(SECTIONS) - {"name"}
    if unknown:
        raise ScenarioError(f"unknown top-level keys {sorted(unknown)}")
    params = {str(k): float(v) for k, v in data.get("parameters", {}).items()}
    dyn = data.get("dynamics")
    fric = data.get("friction", {})
    num = dict(data.get("numerics", {}))
    if dyn is None or "g" not in dyn or "controls" not in dyn:
        raise ScenarioError("[dynamics] needs 'g' and 'controls'")
    if "cost" not in data or "W" not in data["cost"]:
        raise ScenarioError("[cost] needs 'W'")
    if "state_box" not in num:
        raise ScenarioError("[numerics] needs 'state_box'")
    dim = int(dyn.get("dim", 1))
    controls = _controls_from(dyn["controls"])
    m = controls.shape[1]
    alphas, weights, overrides = _atoms_from(fric.get("atoms", []))
    try:
        g = VectorField(dyn["g"], params, dim, m)
        k = ScalarField(fric.get("k", 0.0), params, dim, m, alphas.shape[1])
        W = ScalarField(data["cost"]["W"], params, dim, 0, 0)
        pot = _potential_from(fric.get("potential", "relu"))
        pot = PotentialSpec(pot.kind, pot.params, pot.axes, overrides)
        for i in range(len(weights)):
            pot.profile(i)
        target = _tube_from(data.get("target", {}), dim, params)
    except PotentialError as exc:
        raise ValidationError("H4", str(exc)) from None
    except ExpressionError as exc:
        raise ScenarioError(str(exc)) from None
    measure = FrictionMeasure(alphas, weights)
    tw = num.pop("time_window", None)
    horizon = float(num.pop("t_max_horizon", tw[1] if tw else math.nan))
    if math.isnan(horizon):
        raise ScenarioError("[numerics] needs 't_max_horizon' or 'time_window'")
    box = num.pop("state_box")
    cb = dyn.get("control_bounds")
    s = Scenario(
        dim=dim, g=g, k=k, potential=pot, measure=measure, controls=controls,
        target=target, W=W, t_max_horizon=horizon, state_box=np.asarray(box, dtype=float),
        time_window=tuple(tw) if tw else (0.0, horizon),
        control_bounds=None if cb is None else np.asarray(cb, dtype=float).reshape(m, 2),
        params=params, numerics=num, name=str(data.get("name", name)),
    )
    if validate:
        validate_scenario(s)
    return s


def load_scenario(path, validate: bool = True) -> Scenario:
    """Load and validate a scenario file.

    Raises
    ------
    ScenarioError
        The file is missing or malformed.
    ValidationError
        A hypothesis check failed; ``.hypothesis`` names it.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    return loads_scenario(text, name=path.stem, validate=validate)


def loads_scenario(text: str, name: str = "scenario", validate: bool = True) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"scenario parse error: {exc}") from None
    return parse_scenario(data, name=name, validate=validate)


# ------------------------------------------------------------- validation


def sample_points(s: Scenario, n: int, seed: int = 0):
    """Deterministic ``(t, x)`` samples over the time window and state box.

    Samples are prefix-consistent: the first ``n`` samples do not depend
    on how many more are drawn.
    """
    rng = np.random.default_rng(seed)
    raw = rng.random((n, 1 + s.dim))
    t0, t1 = s.time_window
    t = t0 + (t1 - t0) * raw[:, 0]
    x = s.state_box[:, 0] + (s.state_box[:, 1] - s.state_box[:, 0]) * raw[:, 1:]
    return t, x


def validate_scenario(s: Scenario, samples: int | None = None) -> None:
    """Check the sampled analogues of the standing hypotheses."""
    n = int(samples or s.numerics["samples"])
    widths = s.state_box[:, 1] - s.state_box[:, 0]
    if np.any(widths <= 0):
        raise ValidationError("box", f"degenerate state_box {s.state_box.tolist()}")
    if not s.t_max_horizon > s.time_window[0]:
        raise ValidationError("GC", "t_max_horizon must exceed the start of the time window")
    t, x = sample_points(s, n, int(s.numerics["seed"]))
    tt = t[:, None]
    xx = x[:, None, :]
    uu = s.controls[None, :, :]
    gv = s.g(tt, xx, uu)
    if not np.all(np.isfinite(gv)):
        raise ValidationError("H1", "g is not finite on the validation sample")
    for a, alpha in enumerate(s.measure.alphas):
        kv = s.k(tt, xx, uu, alpha)
        bad = ~(kv >= 0)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            w = (float(t[i]), x[i].tolist(), s.controls[j].tolist(), alpha.tolist())
            raise ValidationError("H3", f"k < 0 (k = {kv[i, j]:.6g}) at (t, x, u, alpha) = {w}", w)
    # W must be finite near the target graph
    if not s.target.is_empty:
        inside = s.target.state_distance(t, x) <= 0.05 * float(widths.max())
        if inside.any():
            wv = s.W(t[inside], x[inside])
            if not np.all(np.isfinite(wv)):
                i = int(np.argmax(~np.isfinite(wv)))
                raise ValidationError("H7", "W is not finite near the target", (t[inside][i], x[inside][i].tolist()))


# -------------------------------------------------------------- constants


def estimate_constants(s: Scenario, samples: int | None = None, seed: int | None = None) -> StructuralConstants:
    """Sample-based Lipschitz and growth constants of ``g`` and ``k``.

    ``L`` is the larger of the partial difference quotients in ``x`` (at
    equal times) and in ``t`` (at equal states); by the triangle inequality
    it bounds ``|f(t,x) - f(s,y)| / (|t-s| + |x-y|)``.  ``C2`` is the
    state quotient and ``C1`` the smallest intercept making
    ``max(|g|, k) <= C1 + C2 |x|`` on the sample.
    """
    n = int(samples if samples is not None else s.numerics["samples"])
    if n < 2:
        raise ValueError("estimate_constants needs samples >= 2")
    widths = s.state_box[:, 1] - s.state_box[:, 0]
    if np.any(widths <= 0):
        raise ValidationError("box", f"degenerate state_box {s.state_box.tolist()}")
    rng = np.random.default_rng(s.numerics["seed"] if seed is None else seed)
    raw = rng.random((n, 2 + 2 * s.dim))
    t0, t1 = s.time_window
    span = (t1 - t0) if t1 > t0 else 1.0
    ta = t0 + span * raw[:, 0]
    tb = t0 + span * raw[:, 1]
    lo, w = s.state_box[:, 0], widths
    xa = lo + w * raw[:, 2:2 + s.dim]
    xb = lo + w * raw[:, 2 + s.dim:]
    U = s.controls[None, :, :]
    T = lambda v: v[:, None]  # noqa: E731
    X = lambda v: v[:, None, :]  # noqa: E731

    def quot(fa, fb, den):
        ok = den > 1e-12
        if not ok.any():
            return 0.0
        diff = np.abs(fa - fb)
        if diff.ndim == 3:
            diff = np.sqrt((diff ** 2).sum(-1))
        return float(np.max(diff[ok] / den[ok][:, None]))

    dx = np.sqrt(((xa - xb) ** 2).sum(-1))
    dt = np.abs(ta - tb)
    g_aa = s.g(T(ta), X(xa), U)
    g_ab = s.g(T(ta), X(xb), U)
    g_ba = s.g(T(tb), X(xa), U)
    Lx = quot(g_aa, g_ab, dx)
    Lt = quot(g_aa, g_ba, dt)
    kmax = np.zeros_like(g_aa[..., 0])
    for alpha in s.measure.alphas:
        k_aa = s.k(T(ta), X(xa), U, alpha)
        Lx = max(Lx, quot(k_aa, s.k(T(ta), X(xb), U, alpha), dx))
        Lt = max(Lt, quot(k_aa, s.k(T(tb), X(xa), U, alpha), dt))
        kmax = np.maximum(kmax, k_aa)
    C2 = Lx
    mag = np.maximum(np.sqrt((g_aa ** 2).sum(-1)), kmax)
    C1 = float(max(0.0, np.max(mag - C2 * np.sqrt((xa ** 2).sum(-1))[:, None])))
    radius = s.box_radius
    lphi = sum(w_a * s.potential.lipschitz(i, s.dim, radius) for i, w_a in enumerate(s.measure.weights))
    return StructuralConstants(L=max(Lx, Lt), C1=C1, C2=C2, Lphi_integral=float(lphi), samples=n)
