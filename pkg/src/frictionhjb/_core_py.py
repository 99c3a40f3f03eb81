"""Pure numpy implementations of the numerical kernels.

These are the reference semantics for :mod:`frictionhjb._core`; both
modules expose the same functions with the same signatures and must agree
to the last bit on the cases exercised by the test-suite.

Conventions shared by every kernel
----------------------------------
* Grid coordinates are snapped to the nearest node when they lie within
  ``SNAP`` (in units of cells) of it, so that departure points which land
  on a node use that node only.
* A grid value is "relevant" to an interpolation only if its weight is
  nonzero.  The result is ``+inf`` when the masked (``+inf``) relevant
  corners carry more than ``max_masked`` of the weight; otherwise it is
  the average over the finite corners, renormalized.  ``max_masked = 0``
  is the strict rule.
* ``choice`` codes: ``>= 0`` candidate index, ``STOP`` obstacle active,
  ``NONE`` value is ``+inf``.
"""

from __future__ import annotations

import numpy as np

SNAP = 1e-9
STOP = -1
NONE = -2


def _snap(s):
    r = np.rint(s)
    return np.where(np.abs(s - r) <= SNAP, r, s)


def interp_1d(values, inf, x0, dx, points, max_masked=0.0):
    """Linear interpolation on a uniform 1D grid with an infinity mask.

    A point whose masked corners carry weight above ``max_masked`` is
    ``+inf``; otherwise the finite corners are renormalized.  Returns
    ``(vals, is_inf)``; points outside the grid are ``+inf``.
    """
    values = np.asarray(values, dtype=float)
    inf = np.asarray(inf, dtype=bool)
    pts = np.asarray(points, dtype=float)
    n = values.shape[0]
    s = _snap((pts - x0) / dx)
    out_inf = (s < 0) | (s > n - 1) | ~np.isfinite(s)
    sc = np.clip(np.where(np.isfinite(s), s, 0.0), 0, n - 1)
    i = np.minimum(np.floor(sc).astype(np.intp), n - 1)
    f = sc - i
    j = np.minimum(i + 1, n - 1)
    two = f > 0
    masked = np.where(inf[i], 1 - f, 0.0) + np.where(two & inf[j], f, 0.0)
    out_inf |= masked > max_masked + SNAP
    vi = np.where(inf[i], 0.0, values[i])
    vj = np.where(inf[j], 0.0, values[j])
    vals = np.where(two, (1 - f) * vi + f * vj, vi)
    # one masked corner: the other corner's value
    vals = np.where(two & inf[i], vj, np.where(two & inf[j], vi, vals))
    vals = np.where(out_inf, np.inf, vals)
    return vals, out_inf


def interp_2d(values, inf, x0, dx, points, max_masked=0.0):
    """Bilinear analogue of :func:`interp_1d`; ``points`` has shape (..., 2)."""
    values = np.asarray(values, dtype=float)
    inf = np.asarray(inf, dtype=bool)
    pts = np.asarray(points, dtype=float)
    n0, n1 = values.shape
    s0 = _snap((pts[..., 0] - x0[0]) / dx[0])
    s1 = _snap((pts[..., 1] - x0[1]) / dx[1])
    out_inf = (s0 < 0) | (s0 > n0 - 1) | (s1 < 0) | (s1 > n1 - 1)
    out_inf |= ~(np.isfinite(s0) & np.isfinite(s1))
    s0c = np.clip(np.where(np.isfinite(s0), s0, 0.0), 0, n0 - 1)
    s1c = np.clip(np.where(np.isfinite(s1), s1, 0.0), 0, n1 - 1)
    i0 = np.minimum(np.floor(s0c).astype(np.intp), n0 - 1)
    i1 = np.minimum(np.floor(s1c).astype(np.intp), n1 - 1)
    f0 = s0c - i0
    f1 = s1c - i1
    j0 = np.minimum(i0 + 1, n0 - 1)
    j1 = np.minimum(i1 + 1, n1 - 1)
    acc = np.zeros(np.shape(s0))
    wfin = np.zeros(np.shape(s0))
    masked = np.zeros(np.shape(s0))
    for a, wa in ((i0, 1 - f0), (j0, f0)):
        for b, wb in ((i1, 1 - f1), (j1, f1)):
            w = wa * wb
            rel = w > 0
            bad = rel & inf[a, b]
            masked = masked + np.where(bad, w, 0.0)
            good = rel & ~inf[a, b]
            acc = acc + np.where(good, w * np.where(inf[a, b], 0.0, values[a, b]), 0.0)
            wfin = wfin + np.where(good, w, 0.0)
    out_inf |= masked > max_masked + SNAP
    vals = np.where(masked > 0, acc / np.where(wfin > 0, wfin, 1.0), acc)
    return np.where(out_inf, np.inf, vals), out_inf


def _select(trans, obst, obst_inf):
    """Combine per-candidate transport values with the obstacle."""
    valid = np.isfinite(trans)
    any_valid = valid.any(axis=-1)
    best = np.where(any_valid, np.argmin(np.where(valid, trans, np.inf), axis=-1), 0)
    tmin = np.take_along_axis(trans, best[..., None], axis=-1)[..., 0]
    tmin = np.where(any_valid, tmin, np.inf)
    use_stop = ~obst_inf & (obst <= tmin)
    values = np.where(use_stop, obst, tmin)
    is_inf = ~use_stop & ~any_valid
    choice = np.where(use_stop, STOP, np.where(any_valid, best, NONE)).astype(np.int32)
    values = np.where(is_inf, np.inf, values)
    return values, is_inf, choice


def sl_min_1d(v_next, inf_next, x0, dx, cand, h, obst, obst_inf, max_masked=0.0):
    """One backward semi-Lagrangian slice on a 1D grid.

    ``cand`` has shape (N, K) with NaN marking absent candidates.  For each
    node ``i`` the transport value is the minimum over candidates ``v`` of
    the interpolated ``v_next`` at ``x_i + h v``; the result is the minimum
    of transport and obstacle (ties go to the obstacle).
    """
    n = np.shape(v_next)[0]
    xs = x0 + dx * np.arange(n)
    cand = np.asarray(cand, dtype=float)
    pts = xs[:, None] + h * cand
    trans, tinf = interp_1d(v_next, np.asarray(inf_next, bool), x0, dx, np.where(np.isnan(cand), np.nan, pts), max_masked)
    trans = np.where(np.isnan(cand) | tinf, np.inf, trans)
    return _select(trans, np.asarray(obst, float), np.asarray(obst_inf, bool))


def sl_min_2d(v_next, inf_next, x0, dx, cand, h, obst, obst_inf, max_masked=0.0):
    """2D analogue of :func:`sl_min_1d`; ``cand`` has shape (N0, N1, K, 2)."""
    n0, n1 = np.shape(v_next)
    g0 = x0[0] + dx[0] * np.arange(n0)
    g1 = x0[1] + dx[1] * np.arange(n1)
    nodes = np.stack(np.meshgrid(g0, g1, indexing="ij"), axis=-1)
    cand = np.asarray(cand, dtype=float)
    pts = nodes[:, :, None, :] + h * cand
    absent = np.isnan(cand).any(axis=-1)
    trans, tinf = interp_2d(v_next, np.asarray(inf_next, bool), x0, dx, np.where(absent[..., None], 0.0, pts), max_masked)
    trans = np.where(absent | tinf, np.inf, trans)
    return _select(trans, np.asarray(obst, float), np.asarray(obst_inf, bool))


def prox_pwl(y, slopes, breakpoints, quad):
    """Exact prox of ``z -> P(z) + Q z**2`` for convex piecewise-affine ``P``.

    Row ``r`` solves ``argmin_z 0.5 (z - y[r])**2 + Q[r] z**2 + P_r(z)``
    where ``P_r`` has the shared sorted ``breakpoints`` (length m) and the
    row's nondecreasing ``slopes[r]`` (length m + 1).
    """
    y = np.asarray(y, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    bps = np.asarray(breakpoints, dtype=float)
    a = 1.0 + 2.0 * np.asarray(quad, dtype=float)
    m = bps.shape[0]
    if m == 0:
        return (y - slopes[:, 0]) / a
    g_lo = a[:, None] * bps[None, :] + slopes[:, :m]
    g_hi = a[:, None] * bps[None, :] + slopes[:, 1:]
    j = (g_lo <= y[:, None]).sum(axis=1)
    rows = np.arange(y.shape[0])
    jm = np.maximum(j - 1, 0)
    on_bp = (j >= 1) & (y <= g_hi[rows, jm])
    z_piece = (y - slopes[rows, j]) / a
    return np.where(on_bp, bps[jm], z_piece)
