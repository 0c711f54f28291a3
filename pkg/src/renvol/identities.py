"""Pointwise identities between interface quantities, as residual evaluators.

Each function returns relative residuals ``|lhs - rhs| / max(1, |rhs|)`` at
the given points.  Unit defining functions are required where noted: the
identities hold for ``sigma`` with ``|grad sigma| = 1`` on the interface (use
``sigma / |grad sigma|``) and a lateral boundary function of unit gradient.
"""
from __future__ import annotations

import numpy as np

from .hypersurface import InterfaceGeometry, contract

__all__ = ["relative", "normal_identity_interface", "normal_identity_boundary", "corner_identities",
           "conormal_identity_boundary", "conormal_identity_interface", "boundary_s_curvature",
           "geodesic_two_methods"]


def relative(lhs, rhs) -> np.ndarray:
    lhs, rhs = np.asarray(lhs, float), np.asarray(rhs, float)
    return np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs))


def _along(ig: InterfaceGeometry, w, f, pt):
    return ig.ev(ig.geom.along(w, f), pt)


def normal_identity_interface(ig: InterfaceGeometry, pt) -> np.ndarray:
    """``grad_m cos = II0(m, m) + sin^2 H`` on the interface (unit ``sigma``)."""
    rhs = contract(ig.II0_sigma, ig.m, ig.m, ig.geom) + ig.sin**2 * ig.H_sigma
    return relative(_along(ig, ig.m, ig.cos, pt), ig.ev(rhs, pt))


def normal_identity_boundary(ig: InterfaceGeometry, pt) -> np.ndarray:
    """``grad_n cos = II0_L(n, n) + sin^2 H_L`` on the lateral boundary (unit ``sigma``)."""
    rhs = contract(ig.II0_lambda, ig.n, ig.n, ig.geom) + ig.sin**2 * ig.H_lambda
    return relative(_along(ig, ig.n, ig.cos, pt), ig.ev(rhs, pt))


def corner_identities(ig: InterfaceGeometry, pt) -> np.ndarray:
    """Derivatives of ``cos`` along ``p`` and ``q`` on the corner; maximum of both residuals."""
    s, co = ig.sin, ig.cos
    a = ig.II0_sigma_pp + ig.H_sigma
    b = ig.II0_lambda_qq + ig.H_lambda
    r1 = relative(_along(ig, ig.p, co, pt), ig.ev(s * (a - co * b), pt))
    r2 = relative(_along(ig, ig.q, co, pt), ig.ev(s * (b - co * a), pt))
    return np.maximum(r1, r2)


def _row(T, k, u, geom):
    uu = geom.raise_index(u)
    return sum(T[k][b] * uu[b] for b in range(geom.dimension))


def conormal_identity_boundary(ig: InterfaceGeometry, pt) -> np.ndarray:
    """``q^a grad_a m_b = II0_L(q)_b + H_L q_b`` on the lateral boundary."""
    geom = ig.geom
    qu = geom.raise_index(ig.q)
    cov = geom.covariant_derivative(ig.m)
    out = np.zeros(np.shape(next(iter(pt.values()))))
    for k in range(geom.dimension):
        lhs = sum(qu[i] * cov[i][k] for i in range(geom.dimension))
        rhs = _row(ig.II0_lambda, k, ig.q, geom) + ig.H_lambda * ig.q[k]
        out = np.maximum(out, relative(ig.ev(lhs, pt), ig.ev(rhs, pt)))
    return out


def conormal_identity_interface(ig: InterfaceGeometry, pt) -> np.ndarray:
    """``q^a grad_a n_b = -cos (II0(p)_b + H p_b)`` on the interface (unit ``sigma``)."""
    geom = ig.geom
    qu = geom.raise_index(ig.q)
    cov = geom.covariant_derivative(ig.n)
    out = np.zeros(np.shape(next(iter(pt.values()))))
    for k in range(geom.dimension):
        lhs = sum(qu[i] * cov[i][k] for i in range(geom.dimension))
        rhs = -ig.cos * (_row(ig.II0_sigma, k, ig.p, geom) + ig.H_sigma * ig.p[k])
        out = np.maximum(out, relative(ig.ev(lhs, pt), ig.ev(rhs, pt)))
    return out


def boundary_s_curvature(ig: InterfaceGeometry, pt) -> np.ndarray:
    """``S_L = sin^2`` on the corner (unit ``sigma``)."""
    return relative(ig.ev(ig.s_curvature_boundary, pt), ig.ev(ig.sin**2, pt))


def geodesic_two_methods(ig: InterfaceGeometry, pt) -> np.ndarray:
    """Direct divergence of ``p`` versus the interface/boundary formula (any defining functions)."""
    return relative(ig.ev(ig.kappa_direct, pt), ig.ev(ig.kappa_formula, pt))
