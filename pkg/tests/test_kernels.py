import numpy as np
import pytest
from hypothesis import given, strategies as st

from frictionhjb import kernels
from frictionhjb import _core_py as ref

BACKENDS = kernels.backends()
compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")

seeds = st.integers(0, 2 ** 31 - 1)


def _grid_1d(rng, n):
    vals = rng.normal(size=n)
    inf = rng.random(n) < 0.2
    return np.where(inf, np.inf, vals), inf


@compiled
@given(seeds, st.integers(2, 30), st.sampled_from([0.0, 0.5, 1 - 1e-6]))
def test_interp_1d_parity(seed, n, mm):
    rng = np.random.default_rng(seed)
    v, inf = _grid_1d(rng, n)
    pts = rng.uniform(-0.5, n * 0.1 + 0.5, size=40)
    pts[:5] = 0.1 * rng.integers(0, n, 5)  # on nodes
    a = BACKENDS["python"].interp_1d(v, inf, 0.0, 0.1, pts, mm)
    b = BACKENDS["cython"].interp_1d(v, inf, 0.0, 0.1, pts, mm)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


@compiled
@given(seeds, st.integers(2, 12), st.integers(2, 12), st.sampled_from([0.0, 1 - 1e-6]))
def test_interp_2d_parity(seed, n0, n1, mm):
    rng = np.random.default_rng(seed)
    inf = rng.random((n0, n1)) < 0.2
    v = np.where(inf, np.inf, rng.normal(size=(n0, n1)))
    pts = rng.uniform(-0.1, 1.1, size=(30, 2)) * [(n0 - 1) * 0.2, (n1 - 1) * 0.3]
    x0, dx = np.array([0.0, 0.0]), np.array([0.2, 0.3])
    a = BACKENDS["python"].interp_2d(v, inf, x0, dx, pts, mm)
    b = BACKENDS["cython"].interp_2d(v, inf, x0, dx, pts, mm)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


@compiled
@given(seeds, st.integers(3, 40), st.integers(1, 6))
def test_sl_min_1d_parity(seed, n, K):
    rng = np.random.default_rng(seed)
    v, inf = _grid_1d(rng, n)
    cand = rng.uniform(-3, 3, size=(n, K))
    cand[rng.random((n, K)) < 0.2] = np.nan
    ob = rng.normal(size=n)
    obi = rng.random(n) < 0.5
    args = (v, inf, -1.0, 0.1, cand, 0.05, ob, obi, 1 - 1e-6)
    for x, y in zip(BACKENDS["python"].sl_min_1d(*args), BACKENDS["cython"].sl_min_1d(*args)):
        np.testing.assert_array_equal(x, y)


@compiled
@given(seeds, st.integers(2, 8), st.integers(2, 8), st.integers(1, 5))
def test_sl_min_2d_parity(seed, n0, n1, K):
    rng = np.random.default_rng(seed)
    inf = rng.random((n0, n1)) < 0.2
    v = np.where(inf, np.inf, rng.normal(size=(n0, n1)))
    cand = rng.uniform(-2, 2, size=(n0, n1, K, 2))
    cand[rng.random((n0, n1, K)) < 0.2] = np.nan
    ob = rng.normal(size=(n0, n1))
    obi = rng.random((n0, n1)) < 0.5
    args = (v, inf, np.array([0.0, 0.0]), np.array([0.1, 0.1]), cand, 0.05, ob, obi, 0.0)
    for x, y in zip(BACKENDS["python"].sl_min_2d(*args), BACKENDS["cython"].sl_min_2d(*args)):
        np.testing.assert_array_equal(x, y)


@compiled
@given(seeds, st.integers(0, 4))
def test_prox_parity(seed, m):
    rng = np.random.default_rng(seed)
    bps = np.sort(rng.uniform(-1, 1, m))
    slopes = np.sort(rng.normal(size=(20, m + 1)), axis=1)
    y, q = rng.normal(size=20) * 2, rng.uniform(0, 1, 20)
    np.testing.assert_array_equal(BACKENDS["python"].prox_pwl(y, slopes, bps, q),
                                  BACKENDS["cython"].prox_pwl(y, slopes, bps, q))


@given(seeds, st.integers(0, 4))
def test_prox_minimizes_objective(seed, m):
    """Brute-force check of the prox on a fine grid."""
    rng = np.random.default_rng(seed)
    bps = np.sort(rng.uniform(-1, 1, m))
    if m > 1 and np.any(np.diff(bps) < 1e-6):
        return
    slopes = np.sort(rng.normal(size=(1, m + 1)), axis=1)
    y, q = rng.normal(size=1) * 2, rng.uniform(0, 1, 1)
    z = float(kernels.prox_pwl(y, slopes, bps, q)[0])

    def P(zz):
        val = slopes[0, 0] * zz
        for j, b in enumerate(bps):
            val = val + (slopes[0, j + 1] - slopes[0, j]) * np.maximum(zz - b, 0.0)
        return val

    grid = np.linspace(z - 0.5, z + 0.5, 100001)
    obj = 0.5 * (grid - y[0]) ** 2 + q[0] * grid ** 2 + P(grid)
    assert abs(grid[np.argmin(obj)] - z) <= 2e-5


@given(seeds)
def test_prox_is_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    bps = np.array([0.0])
    slopes = np.tile([[0.0, 0.3]], (2, 1))
    y = rng.normal(size=2)
    z = kernels.prox_pwl(y, slopes, bps, np.zeros(2))
    assert abs(z[0] - z[1]) <= abs(y[0] - y[1]) + 1e-15


def test_interp_snaps_to_nodes():
    v = np.array([0.0, 1.0, np.inf])
    inf = np.isinf(v)
    vals, isinf = ref.interp_1d(v, inf, 0.0, 0.1, np.array([0.1 + 1e-12, 0.15, 0.2]))
    assert vals[0] == 1.0 and not isinf[0]
    assert isinf[1] and isinf[2]
    vals, isinf = ref.interp_1d(v, inf, 0.0, 0.1, np.array([0.15]), max_masked=0.6)
    assert vals[0] == 1.0 and not isinf[0]


def test_obstacle_wins_ties():
    v = np.array([1.0, 1.0, 1.0])
    vals, vinf, ch = ref.sl_min_1d(v, np.zeros(3, bool), 0.0, 1.0, np.zeros((3, 1)), 0.1, np.ones(3),
                                   np.zeros(3, bool))
    assert np.all(ch == ref.STOP) and np.all(vals == 1.0)


def test_backend_selection():
    assert kernels.BACKEND in ("python", "cython")
    assert "python" in BACKENDS


def test_env_forces_fallback():
    import os
    import subprocess
    import sys

    env = dict(os.environ, FRICTIONHJB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from frictionhjb import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_solver_identical_across_backends(monkeypatch, coarse_toy):
    from frictionhjb import hjb

    tables = {}
    for name, mod in BACKENDS.items():
        for fn in ("interp_1d", "interp_2d", "sl_min_1d", "sl_min_2d", "prox_pwl"):
            monkeypatch.setattr(kernels, fn, getattr(mod, fn))
        tables[name] = hjb.solve_value(coarse_toy.with_numerics(delta=2e-2, h=2e-2))
    if len(tables) == 2:
        np.testing.assert_array_equal(tables["python"].values, tables["cython"].values)
        np.testing.assert_array_equal(tables["python"].choice, tables["cython"].choice)
