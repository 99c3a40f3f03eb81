"""Closed-form reference for the bundled one-sided friction example.

Dynamics ``v' in u - (u^2/2) d relu(v)`` with ``|u| <= 2``, target
``v >= r`` and cost ``W = C t + 1/v^2``.  The optimal speed is
``v* = C^(-1/3)``; when ``C r^3 > 1`` the optimum stops on arrival at ``r``,
so every formula below uses ``v_s = max(v*, r)``.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .scenario import Scenario, parse_scenario, tomllib


def data_path(name: str) -> Path:
    return Path(str(resources.files("frictionhjb") / "data" / name))


def toy_path() -> Path:
    return data_path("toy.scn")


def toy_scenario(C: float = 1.0, r: float = 0.8, **numerics) -> Scenario:
    """The bundled toy with parameter and numeric overrides."""
    data = tomllib.loads(toy_path().read_text())
    data["parameters"].update({"C": float(C), "r": float(r)})
    data["numerics"].update(numerics)
    return parse_scenario(data, name="toy")


def v_star(C: float) -> float:
    return float(C) ** (-1.0 / 3.0)


def v_stop(C: float, r: float) -> float:
    return max(v_star(C), float(r))


def value(t, v, C: float = 1.0, r: float = 0.8):
    """Exact value function (finite on the whole line for any start time)."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    vs = v_stop(C, r)
    base = C * t + 1.0 / vs ** 2
    with np.errstate(divide="ignore", over="ignore"):
        stop = C * t + 1.0 / np.where(v == 0, np.inf, v) ** 2
    return np.where(v >= vs, stop, np.where(v >= 0, base + 2 * C * (vs - v), base + 2 * C * vs - C * v / 2))


def arrival_time(t, v, C: float = 1.0, r: float = 0.8):
    """Time at which the optimal trajectory from ``(t, v)`` stops on the target."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    vs = v_stop(C, r)
    return np.where(v >= vs, t, np.where(v >= 0, t + 2 * (vs - v), t - v / 2 + 2 * vs))


def gradient(t, v, C: float = 1.0, r: float = 0.8):
    """``(dV/dt, dV/dv)`` at differentiability points (``v != 0``, ``v != v_s``)."""
    v = np.asarray(v, dtype=float)
    vs = v_stop(C, r)
    with np.errstate(divide="ignore", over="ignore"):
        dv = np.where(v > vs, -2.0 / v ** 3, np.where(v > 0, -2.0 * C, -C / 2.0))
    return np.broadcast_to(C, dv.shape).astype(float), dv


def kink_superdifferential(C: float = 1.0) -> tuple[float, float]:
    """Range of ``q_v`` in the proximal superdifferential at ``v = 0``."""
    return -2.0 * C, -C / 2.0


def feedback_control(t, v, C: float = 1.0, r: float = 0.8):
    """Optimal control: 2 below the kink, 1 up to ``v_s``, 0 (hold) beyond."""
    v = np.asarray(v, dtype=float)
    return np.where(v < 0, 2.0, np.where(v < v_stop(C, r), 1.0, 0.0))


def feedback_velocity(t, v, C: float = 1.0, r: float = 0.8):
    v = np.asarray(v, dtype=float)
    return np.where(v < 0, 2.0, np.where(v < v_stop(C, r), 0.5, 0.0))


def proximal_differentials(t, v, C: float = 1.0, r: float = 0.8, samples: int = 20):
    """Analytic ``(sub, sup)`` proximal differentials of ``V`` at ``(t, v)``.

    Rows are covectors ``(dV/dt, dV/dv)``.  At ``v = 0`` the value has a
    concave kink: no subgradient and ``samples`` supergradients spanning
    the one-sided slopes.  At ``v = v_s > v*`` the kink is convex.
    """
    v = float(v)
    vs = v_stop(C, r)
    if v == 0.0:
        lo, hi = kink_superdifferential(C)
        return np.zeros((0, 2)), np.column_stack([np.full(samples, C), np.linspace(lo, hi, samples)])
    if v == vs and vs > v_star(C):
        return np.column_stack([np.full(samples, C), np.linspace(-2.0 * C, -2.0 / vs ** 3, samples)]), np.zeros((0, 2))
    gt, gv = gradient(t, v, C, r)
    g = np.array([[float(gt), float(gv)]])
    return g, g.copy()
