"""Reference values computed by quadrature, independent of the samplers."""

import math

import numpy as np
import scipy.integrate


_ORDER = 200


def _angle_rule(n=_ORDER):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * np.pi * (nodes + 1.0), 0.5 * np.pi * weights


def so3_trace_mean(scale=0.0):
    """``E[Tr g]`` under ``exp(-s Tr g)`` Haar on SO(3), via the rotation-angle density ``(1 - cos t) / pi``."""
    t, w = _angle_rule()
    tr = 1.0 + 2.0 * np.cos(t)
    w = w * (1.0 - np.cos(t)) * np.exp(-scale * tr + 3.0 * abs(scale))
    return float(np.sum(w * tr) / np.sum(w))


def _euler_zyz(alpha, beta, gamma):
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    r = np.empty(np.broadcast(alpha, beta, gamma).shape + (3, 3))
    r[..., 0, 0] = ca * cb * cg - sa * sg
    r[..., 0, 1] = -ca * cb * sg - sa * cg
    r[..., 0, 2] = ca * sb
    r[..., 1, 0] = sa * cb * cg + ca * sg
    r[..., 1, 1] = -sa * cb * sg + ca * cg
    r[..., 1, 2] = sa * sb
    r[..., 2, 0] = -sb * cg
    r[..., 2, 1] = sb * sg
    r[..., 2, 2] = cb
    return r


def so3_euler_expectation(func, log_weight, n=64):
    """``E[func(g)]`` under ``exp(log_weight(g))`` Haar on SO(3) by tensor quadrature over ZYZ Euler angles.

    Periodic trapezoid rules in the two azimuthal angles and Gauss-Legendre in
    the polar angle with the Haar factor ``sin(beta)``. ``func`` and
    ``log_weight`` act on stacks of rotation matrices.
    """
    phis = 2.0 * np.pi * np.arange(n) / n
    nodes, weights = np.polynomial.legendre.leggauss(n)
    beta = 0.5 * np.pi * (nodes + 1.0)
    wb = 0.5 * np.pi * weights * np.sin(beta)
    A, B, G = np.meshgrid(phis, beta, phis, indexing="ij")
    R = _euler_zyz(A, B, G)
    lw = log_weight(R)
    w = np.exp(lw - lw.max()) * wb[None, :, None]
    return float(np.sum(w * func(R)) / np.sum(w))


def sphere_last_coordinate_moment(kappa, k=3, power=1):
    """``E[q_k^power]`` under ``exp(-kappa q_k)`` times the uniform law on ``S^{k-1}``.

    Uses the polar angle ``t`` with ``q_k = cos t`` and weight ``sin(t)^(k-2)``.
    """
    t, w = _angle_rule()
    w = w * np.sin(t) ** (k - 2) * np.exp(-kappa * np.cos(t) - abs(kappa))
    return float(np.sum(w * np.cos(t) ** power) / np.sum(w))


def vmf_mean_closed_form(kappa):
    """``E[q_3]`` on S^2 under ``exp(-kappa q_3)``: ``-(coth(kappa) - 1/kappa)``."""
    return -(1.0 / math.tanh(kappa) - 1.0 / kappa)


def axis_moment(target, axis, func, lo, hi):
    """``E[func(x_axis)]`` for a target that factorises over coordinates, by 1-d quadrature."""
    dim = target.dim

    def logp(t):
        x = np.zeros(dim)
        x[axis] = t
        return float(target.log_p(x))

    grid = np.linspace(lo, hi, 201)
    shift = max(logp(t) for t in grid)
    pts = list(grid[1:-1:20])
    num = scipy.integrate.quad(lambda t: func(t) * math.exp(logp(t) - shift), lo, hi, points=pts, limit=400)[0]
    den = scipy.integrate.quad(lambda t: math.exp(logp(t) - shift), lo, hi, points=pts, limit=400)[0]
    return num / den
