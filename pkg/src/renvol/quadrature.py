"""Quadrature rules and a vectorised bracketed root finder."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "QuadratureSettings", "QuadratureError", "RootError", "gauss_legendre", "axis_rule",
    "tensor_rule", "adaptive_tensor", "solve_monotone", "geometric_panels",
]


class QuadratureError(RuntimeError):
    def __init__(self, message: str, estimate: float | None = None, error: float | None = None):
        self.estimate = estimate
        self.error = error
        super().__init__(message if error is None else f"{message} (estimate {estimate!r}, error {error:.3e})")


class RootError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureSettings:
    nodes: int = 32
    max_depth: int = 5
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14

    def scaled(self, factor: float) -> "QuadratureSettings":
        return QuadratureSettings(self.nodes, self.max_depth, self.rel_tol * factor, self.abs_tol * factor)


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1) / 2, w / 2


def axis_rule(lo: float, hi: float, n: int, periodic: bool, panels: int = 1):
    """1-D rule: composite Gauss-Legendre, or the trapezoid rule on a periodic axis."""
    if periodic:
        m = n * panels
        x = lo + (hi - lo) * np.arange(m) / m
        return x, np.full(m, (hi - lo) / m)
    t, w = gauss_legendre(n)
    edges = np.linspace(lo, hi, panels + 1)
    h = np.diff(edges)
    x = (edges[:-1, None] + h[:, None] * t[None, :]).ravel()
    ww = (h[:, None] * w[None, :]).ravel()
    return x, ww


def tensor_rule(axes: Sequence[tuple[float, float, bool]], n: int, panels: int = 1):
    """Tensor-product nodes (one array per axis, flattened) and weights."""
    if not axes:
        return [], np.ones(1)
    rules = [axis_rule(lo, hi, n, per, panels) for lo, hi, per in axes]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrid = np.ones_like(grids[0])
    for k, r in enumerate(rules):
        shape = [1] * len(rules)
        shape[k] = -1
        wgrid = wgrid * r[1].reshape(shape)
    return [g.ravel() for g in grids], wgrid.ravel()


def adaptive_tensor(integrand: Callable[[list[np.ndarray]], np.ndarray],
                    axes: Sequence[tuple[float, float, bool]], settings: QuadratureSettings,
                    value_shape: tuple = ()):
    """Integrate over a box, doubling the panel count until two levels agree.

    ``integrand`` maps node arrays (one per axis) to values with trailing
    axis over the nodes, i.e. shape ``value_shape + (nnodes,)``.
    Returns ``(value, error_estimate)``.
    """
    prev = None
    panels = 1
    for _ in range(settings.max_depth + 1):
        nodes, w = tensor_rule(axes, settings.nodes, panels)
        vals = np.asarray(integrand(nodes), dtype=float)
        cur = vals @ w if vals.ndim else vals * w.sum()
        if prev is not None:
            err = np.max(np.abs(cur - prev))
            if err <= max(settings.rel_tol * np.max(np.abs(cur)), settings.abs_tol):
                return cur, err
        prev = cur
        panels *= 2
    raise QuadratureError("quadrature did not converge within the subdivision budget",
                          float(np.max(np.abs(cur))), float(err))


def solve_monotone(f: Callable[[np.ndarray], np.ndarray], df: Callable[[np.ndarray], np.ndarray] | None,
                   target, lo: float, hi: float, tol: float = 1e-13, max_iter: int = 200) -> np.ndarray:
    """Solve ``f(x) = target`` elementwise for ``x`` in ``[lo, hi]``.

    Newton steps safeguarded by bisection; ``f`` must be monotone on the bracket
    for every component.  Raises :class:`RootError` when the bracket does not
    contain a root.
    """
    target = np.asarray(target, dtype=float)
    a = np.full(target.shape, float(lo))
    b = np.full(target.shape, float(hi))
    fa = f(a) - target
    fb = f(b) - target
    if np.any(fa * fb > 0):
        bad = np.flatnonzero(np.ravel(fa * fb > 0))
        raise RootError(f"level not bracketed by the window [{lo}, {hi}] at {bad.size} points")
    increasing = fb >= fa
    x = 0.5 * (a + b)
    for _ in range(max_iter):
        fx = f(x) - target
        left = (fx < 0) == increasing
        a = np.where(left, x, a)
        b = np.where(left, b, x)
        mid = 0.5 * (a + b)
        if df is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                xn = x - fx / df(x)
            ok = np.isfinite(xn) & (xn >= a) & (xn <= b)
            x_new = np.where(ok, xn, mid)
        else:
            x_new = mid
        conv = (fx == 0) | (np.abs(x_new - x) <= tol * (1 + np.abs(x)))
        x = np.where(fx == 0, x, x_new)
        if np.all(conv):
            return x
    raise RootError("root finder did not converge")


def geometric_panels(start: float, stop: float, h0: float, n: int):
    """Nodes/weights on ``[start, stop]`` with panel edges ``start + h0 (2^j - 1)``.

    Dense near ``start``, which is where the regulated volume integrand is
    largest.
    """
    if stop <= start:
        return np.zeros(0), np.zeros(0)
    edges = [start]
    j = 1
    while True:
        e = start + h0 * (2.0**j - 1)
        if e >= stop:
            break
        edges.append(e)
        j += 1
    edges.append(stop)
    edges = np.asarray(edges)
    t, w = gauss_legendre(n)
    h = np.diff(edges)
    return (edges[:-1, None] + h[:, None] * t).ravel(), (h[:, None] * w).ravel()
