"""Vectorized arithmetic expressions used for scenario callables.

Scenario files describe ``g``, ``k``, ``W`` and tube bounds as numpy
expressions over a fixed vocabulary.  Expressions are compiled once,
checked for unknown names, and evaluated without builtins.

Array conventions (``S`` is any broadcast shape):

* ``t``: shape ``S``
* ``x``: shape ``S + (n,)``; exposed as ``x1..xn`` and, for ``n == 1``,
  also as ``x`` and ``v``
* ``u``: shape ``S + (m,)``; exposed as ``u1..um`` and, for ``m == 1``,
  also as ``u``
* ``alpha``: the atom parameter vector; ``alpha1..`` and ``alpha``
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

FUNCTIONS = {
    name: getattr(np, name)
    for name in (
        "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "maximum", "minimum",
        "where", "tanh", "arctan", "sign", "clip", "hypot", "floor", "ceil",
    )
}
CONSTANTS = {"pi": math.pi, "e": math.e, "inf": math.inf}


class ExpressionError(ValueError):
    """An expression failed to parse or references an unknown name."""


def _var_names(dim: int, ctrl_dim: int, alpha_dim: int) -> set[str]:
    names = {"t"} | {f"x{i + 1}" for i in range(dim)} | {f"u{i + 1}" for i in range(ctrl_dim)}
    names |= {f"alpha{i + 1}" for i in range(alpha_dim)}
    if dim == 1:
        names |= {"x", "v"}
    if ctrl_dim == 1:
        names.add("u")
    if alpha_dim >= 1:
        names.add("alpha")
    return names


class Expr:
    """A compiled scalar expression.

    Parameters
    ----------
    source : str or float
        Expression text, or a number for a constant.
    params : mapping
        Named constants (e.g. ``C``, ``r``) visible to the expression.
    allowed : set of str
        Variable names the expression may use.
    """

    def __init__(self, source, params: Mapping[str, float], allowed: set[str]):
        self.source = str(source)
        self.params = dict(params)
        try:
            self._code = compile(self.source, "<scenario>", "eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse expression {self.source!r}: {exc.msg}") from None
        known = allowed | set(self.params) | set(FUNCTIONS) | set(CONSTANTS)
        unknown = sorted(set(self._code.co_names) - known)
        if unknown:
            raise ExpressionError(f"unknown names {unknown} in expression {self.source!r}")
        self.names = frozenset(self._code.co_names)

    def uses(self, name: str) -> bool:
        return name in self.names

    def __call__(self, env: Mapping[str, object]):
        scope = dict(CONSTANTS)
        scope.update(FUNCTIONS)
        scope.update(self.params)
        scope.update(env)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return eval(self._code, {"__builtins__": {}}, scope)

    def __repr__(self):
        return f"Expr({self.source!r})"


def make_env(t=None, x=None, u=None, alpha=None) -> dict:
    env: dict = {}
    if t is not None:
        env["t"] = np.asarray(t, dtype=float)
    if x is not None:
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        for i in range(n):
            env[f"x{i + 1}"] = x[..., i]
        if n == 1:
            env["x"] = env["v"] = x[..., 0]
    if u is not None:
        u = np.asarray(u, dtype=float)
        m = u.shape[-1]
        for i in range(m):
            env[f"u{i + 1}"] = u[..., i]
        if m == 1:
            env["u"] = u[..., 0]
    if alpha is not None:
        a = np.atleast_1d(np.asarray(alpha, dtype=float))
        for i in range(a.size):
            env[f"alpha{i + 1}"] = a[i]
        env["alpha"] = a[0] if a.size == 1 else a
    return env


def _shape(t, x, u):
    shapes = []
    if t is not None:
        shapes.append(np.shape(t))
    if x is not None:
        shapes.append(np.shape(x)[:-1])
    if u is not None:
        shapes.append(np.shape(u)[:-1])
    return np.broadcast_shapes(*shapes) if shapes else ()


class ScalarField:
    """Scalar callable ``f(t, x, u=None, alpha=None)`` backed by an expression."""

    def __init__(self, source, params, dim, ctrl_dim=1, alpha_dim=1):
        self.expr = Expr(source, params, _var_names(dim, ctrl_dim, alpha_dim))
        self.depends_on_time = self.expr.uses("t")
        self.depends_on_state = bool(self.expr.names & ({"x", "v"} | {f"x{i + 1}" for i in range(dim)}))

    def __call__(self, t, x, u=None, alpha=None):
        out = self.expr(make_env(t, x, u, alpha))
        return np.broadcast_to(np.asarray(out, dtype=float), _shape(t, x, u)).copy()


class VectorField:
    """Vector callable ``g(t, x, u) -> S + (n,)`` from one expression per component."""

    def __init__(self, sources: Sequence, params, dim, ctrl_dim=1):
        if isinstance(sources, (str, int, float)):
            sources = [sources]
        if len(sources) != dim:
            raise ExpressionError(f"expected {dim} component expressions for g, got {len(sources)}")
        allowed = _var_names(dim, ctrl_dim, 0)
        self.components = [Expr(s, params, allowed) for s in sources]
        self.depends_on_time = any(c.uses("t") for c in self.components)
        xs = {"x", "v"} | {f"x{i + 1}" for i in range(dim)}
        self.depends_on_state = any(c.names & xs for c in self.components)

    def __call__(self, t, x, u):
        env = make_env(t, x, u)
        shape = _shape(t, x, u)
        cols = [np.broadcast_to(np.asarray(c(env), dtype=float), shape) for c in self.components]
        return np.stack(cols, axis=-1)
