"""Set-valued friction field ``F(t, x, u)``, its union ``Fbar(t, x)`` and Hamiltonians.

Built-in potentials are separable, so ``d phi(x, alpha)`` is a box and the
friction integral is a box too: per axis it is the interval
``[sum_a c_a lo_a, sum_a c_a hi_a]`` with ``c_a = w_a k(t, x, u, alpha_a) >= 0``.
Hence ``F(t, x, u) = g - I`` is a box with exact corners, and ``Fbar`` is
the union of those boxes over the control list.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, StructuralConstants, ValidationError, sample_points
from .sets import ConvexSet1D, ConvexSetND, hull_2d, interval_union_gap


@dataclass(frozen=True)
class HamiltonianPair:
    """Minimized and maximized Hamiltonians with their realizing velocities."""

    h_min: float
    H_max: float
    argmin_velocity: np.ndarray
    argmax_velocity: np.ndarray


def _box_set(lo, hi, provenance="exact"):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.size == 1:
        return ConvexSet1D(float(lo[0]), float(hi[0]))
    corners = np.array([[a, b] for a in (lo[0], hi[0]) for b in (lo[1], hi[1])])
    return ConvexSetND(_distinct(corners), provenance)


def _distinct(pts):
    _, idx = np.unique(pts, axis=0, return_index=True)
    return pts[np.sort(idx)]


def subgradient_bounds(s: Scenario, x):
    """Per-atom subdifferential box of ``phi(., alpha_a)`` at ``x``.

    Returns ``(lo, hi)`` of shape ``S + (A, n)``.
    """
    x = np.asarray(x, dtype=float)
    A = len(s.measure)
    lo = np.zeros(x.shape[:-1] + (A, s.dim))
    hi = np.zeros_like(lo)
    axes = s.potential.active_axes(s.dim)
    for a, prof in enumerate(s.profiles()):
        for i in axes:
            l, h = prof.subgradient(x[..., i])
            lo[..., a, i] = l
            hi[..., a, i] = h
    return lo, hi


def subdifferential(s: Scenario, x, atom_index: int):
    """Exact subdifferential of ``phi(., alpha_{atom_index})`` at ``x``."""
    if not 0 <= atom_index < len(s.measure):
        raise IndexError(f"atom index {atom_index} out of range for {len(s.measure)} atoms")
    x = np.asarray(x, dtype=float).reshape(s.dim)
    lo, hi = subgradient_bounds(s, x)
    return _box_set(lo[atom_index], hi[atom_index])


def _check_k(coef, t, x, u):
    if np.any(coef < 0):
        raise ValidationError("H3", f"k < 0 at (t, x, u) = ({t}, {np.ravel(x).tolist()}, {np.ravel(u).tolist()})")


def integral_bounds(s: Scenario, t, x, u):
    """Endpoints of the friction integral ``I(t, x, u)``; shape ``S + (n,)`` each."""
    coef = s.friction_coefficients(t, x, u)
    _check_k(coef, t, x, u)
    lo, hi = subgradient_bounds(s, np.asarray(x, dtype=float))
    ilo = np.einsum("...a,...ai->...i", coef, lo)
    ihi = np.einsum("...a,...ai->...i", coef, hi)
    return ilo, ihi


def friction_integral(s: Scenario, t, x, u):
    """``I(t, x, u) = sum_a w_a k(t, x, u, alpha_a) d phi(x, alpha_a)``."""
    x = np.asarray(x, dtype=float).reshape(s.dim)
    u = np.asarray(u, dtype=float).reshape(s.ctrl_dim)
    ilo, ihi = integral_bounds(s, float(t), x, u)
    return _box_set(ilo, ihi)


def velocity_boxes(s: Scenario, t, X):
    """Boxes ``F(t, x, u)`` for every node ``x`` in ``X`` and every control.

    Returns ``(lo, hi)`` of shape ``X.shape[:-1] + (|U|, n)``.
    """
    X = np.asarray(X, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), X.shape[:-1])[..., None]
    Xe = X[..., None, :]
    U = s.controls
    g = s.g(t, Xe, U)
    ilo, ihi = integral_bounds(s, t, Xe, U)
    return g - ihi, g - ilo


def eval_F(s: Scenario, t, x, u):
    """``F(t, x, u) = g(t, x, u) - I(t, x, u)``."""
    x = np.asarray(x, dtype=float).reshape(s.dim)
    u = np.asarray(u, dtype=float).reshape(s.ctrl_dim)
    g = s.g(float(t), x, u)
    ilo, ihi = integral_bounds(s, float(t), x, u)
    return _box_set(g - ihi, g - ilo)


def eval_Fbar(s: Scenario, t, x):
    """Union of ``F(t, x, u)`` over the control list, convexified.

    In 1D the result is ``[min lo, max hi]`` with ``convexified`` set when
    the union has gaps.  In 2D it is the hull of all box corners, marked
    ``sampled-hull`` unless one box already equals the hull.
    """
    x = np.asarray(x, dtype=float).reshape(s.dim)
    lo, hi = velocity_boxes(s, t, x)
    if s.dim == 1:
        gap = interval_union_gap(lo[:, 0], hi[:, 0])
        return ConvexSet1D(float(lo[:, 0].min()), float(hi[:, 0].max()), gap > 0, gap)
    verts = _fbar_vertices(lo, hi)
    exact = any(
        np.array_equal(np.sort(_box_set(l, h).extreme_points, axis=0), np.sort(verts, axis=0))
        for l, h in zip(lo, hi)
    )
    return ConvexSetND(verts, "exact" if exact else "sampled-hull")


def _corners(lo, hi):
    """Box corners; ``lo``/``hi`` shape ``(..., 2)`` -> ``(..., 4, 2)``."""
    return np.stack(
        [np.stack([a[..., 0], b[..., 1]], axis=-1) for a in (lo, hi) for b in (lo, hi)], axis=-2
    )


def _fbar_vertices(lo, hi):
    return hull_2d(_corners(lo, hi).reshape(-1, 2))


def hamiltonians(s: Scenario, t, x, eta) -> HamiltonianPair:
    """Lower and upper Hamiltonians of the augmented field ``{1} x Fbar x {0}``.

    ``eta = (eta_t, eta_x, eta_a)`` has length ``n + 2``.  Ties between
    extreme points go to the first listed one.
    """
    eta = np.asarray(eta, dtype=float).reshape(-1)
    if eta.size != s.dim + 2:
        raise ValueError(f"eta must have length {s.dim + 2}, got {eta.size}")
    fb = eval_Fbar(s, t, x)
    ext = fb.extreme_points
    vals = ext @ eta[1:1 + s.dim]
    i, j = int(np.argmin(vals)), int(np.argmax(vals))
    return HamiltonianPair(
        float(eta[0] + vals[i]), float(eta[0] + vals[j]), ext[i].copy(), ext[j].copy()
    )


@dataclass(frozen=True)
class OSLReport:
    max_violation: float
    rows: np.ndarray  # columns t1, x1.., t2, x2.., lhs, bound, violation

    def to_csv(self, path, dim: int) -> None:
        xs = lambda p: [f"x{p}"] if dim == 1 else [f"x{p}_{i + 1}" for i in range(dim)]  # noqa: E731
        header = ["t1", *xs(1), "t2", *xs(2), "lhs", "bound", "violation"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(self.rows.tolist())


def support_Fbar(s: Scenario, t, X, eta):
    """``max_{v in Fbar(t, x)} <v, eta>`` for each row of ``X`` and ``eta``."""
    lo, hi = velocity_boxes(s, t, X)
    eta = np.asarray(eta, dtype=float)[..., None, :]
    # a box's support is attained coordinate-wise
    per_u = np.maximum(lo * eta, hi * eta).sum(-1)
    return per_u.max(-1)


def osl_check(s: Scenario, consts: StructuralConstants, pairs: int, seed: int | None = None) -> OSLReport:
    """Sampled one-sided Lipschitz check of ``Fbar`` with constant ``L_Fbar``."""
    if pairs < 1:
        raise ValueError("osl_check needs pairs >= 1")
    seed = int(s.numerics["seed"] if seed is None else seed)
    t, x = sample_points(s, 2 * pairs, seed)
    t1, t2 = t[:pairs], t[pairs:]
    x1, x2 = x[:pairs], x[pairs:]
    d = x1 - x2
    lhs = np.array([
        support_Fbar(s, t1[i], x1[i], d[i]) - support_Fbar(s, t2[i], x2[i], d[i])
        for i in range(pairs)
    ])
    bound = consts.L_Fbar * ((t1 - t2) ** 2 + (d ** 2).sum(-1))
    viol = lhs - bound
    rows = np.column_stack([t1, x1, t2, x2, lhs, bound, viol])
    return OSLReport(float(viol.max()), rows)


# ------------------------------------------------------------ grid tables


@dataclass(frozen=True)
class VelocityTable:
    """Candidate velocities of ``Fbar`` over a set of nodes.

    ``cand`` has shape ``N + (K, n)`` with NaN padding, ``witness`` the
    index of a control realizing (or nearest to) each candidate and
    ``extreme`` marks hull vertices.  ``stop_control`` is the smallest
    control with ``0 in F``; ``-1`` when none exists.
    """

    cand: np.ndarray
    witness: np.ndarray
    extreme: np.ndarray
    stop_control: np.ndarray
    convexified: np.ndarray


def _nearest_control(lo, hi, v):
    """Index of the box nearest to ``v``; ``lo``/``hi`` (..., U, n), ``v`` (..., K, n)."""
    gap = np.maximum(np.maximum(lo[..., None, :, :] - v[..., :, None, :], v[..., :, None, :] - hi[..., None, :, :]), 0.0)
    dist = (gap ** 2).sum(-1)
    dist = np.where(np.isnan(dist), np.inf, dist)
    return np.argmin(dist, axis=-1)


def velocity_table(s: Scenario, t, X, interior: int | None = None) -> VelocityTable:
    """Extreme points of ``Fbar`` plus ``interior`` evenly spaced samples per edge.

    Candidates are ordered by witnessing control (ties by velocity), so a
    first-index argmin prefers the smallest control.
    """
    m = int(s.numerics["interior_samples"] if interior is None else interior)
    X = np.asarray(X, dtype=float)
    shape = X.shape[:-1]
    lo, hi = velocity_boxes(s, t, X)
    zero = np.all((lo <= 0) & (hi >= 0), axis=-1)
    stop = np.where(zero.any(-1), np.argmax(zero, axis=-1), -1)
    fr = np.arange(1, m + 1) / (m + 1)
    if s.dim == 1:
        vmin = lo[..., 0].min(-1)
        vmax = hi[..., 0].max(-1)
        flo, fhi = lo[..., 0], hi[..., 0]
        order_lo = np.argmin(flo, axis=-1)
        order_hi = np.argmax(fhi, axis=-1)
        inner = vmin[..., None] + (vmax - vmin)[..., None] * fr
        degenerate = vmax == vmin
        inner = np.where(degenerate[..., None], np.nan, inner)
        cand = np.concatenate([vmin[..., None], inner, np.where(degenerate, np.nan, vmax)[..., None]], -1)[..., None]
        wit = _nearest_control(lo, hi, np.nan_to_num(cand, nan=0.0))
        wit[..., 0] = order_lo
        wit[..., -1] = order_hi
        extreme = np.zeros(cand.shape[:-1], dtype=bool)
        extreme[..., 0] = True
        extreme[..., -1] = ~degenerate
        gaps = np.zeros(shape, dtype=bool)
        flat_lo = flo.reshape(-1, flo.shape[-1])
        flat_hi = fhi.reshape(-1, fhi.shape[-1])
        gaps = np.array([interval_union_gap(a, b) > 0 for a, b in zip(flat_lo, flat_hi)]).reshape(shape)
    else:
        flat_lo = lo.reshape((-1,) + lo.shape[-2:])
        flat_hi = hi.reshape((-1,) + hi.shape[-2:])
        rows, exts, gaps = [], [], []
        for bl, bh in zip(flat_lo, flat_hi):
            verts = _fbar_vertices(bl, bh)
            pts, ext = [], []
            nv = verts.shape[0]
            for i in range(nv):
                pts.append(verts[i])
                ext.append(True)
                if nv > 1 and not (nv == 2 and i == 1):
                    a, b = verts[i], verts[(i + 1) % nv]
                    for f in fr:
                        pts.append(a + f * (b - a))
                        ext.append(False)
            rows.append(np.array(pts))
            exts.append(np.array(ext))
            gaps.append(not any(np.array_equal(np.unique(_corners(l, h), axis=0), np.unique(verts, axis=0))
                                for l, h in zip(bl, bh)))
        K = max(r.shape[0] for r in rows)
        cand = np.full((len(rows), K, 2), np.nan)
        extreme = np.zeros((len(rows), K), dtype=bool)
        for i, (r, e) in enumerate(zip(rows, exts)):
            cand[i, :r.shape[0]] = r
            extreme[i, :e.size] = e
        cand = cand.reshape(shape + (K, 2))
        extreme = extreme.reshape(shape + (K,))
        gaps = np.array(gaps).reshape(shape)
        wit = _nearest_control(lo, hi, np.nan_to_num(cand, nan=0.0))
    # sort candidates by witness, then velocity, so ties resolve to the smallest control
    key_v = np.nan_to_num(cand[..., 0], nan=np.inf)
    absent = np.isnan(cand[..., 0])
    order = np.lexsort((key_v, np.where(absent, np.iinfo(np.int64).max, wit)), axis=-1)
    cand = np.take_along_axis(cand, order[..., None], axis=-2)
    wit = np.take_along_axis(wit, order, axis=-1)
    extreme = np.take_along_axis(extreme, order, axis=-1)
    wit = np.where(np.isnan(cand[..., 0]), -1, wit)
    return VelocityTable(cand, wit.astype(np.int64), extreme, stop.astype(np.int64), gaps)
