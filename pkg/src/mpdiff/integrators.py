"""Time steppers: Euler-Maruyama, Stratonovich Heun, exact OU, Lie leapfrog, sphere splitting.

Noise draws are always passed in; no stepper touches a random generator.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConventionError, InvalidInputError, UnsupportedError
from .geometry import (
    EmbeddedSphere,
    FlatTorus,
    algebra_force,
    lie_exp,
    lie_log,
    project_horizontal,
    sphere_geodesic,
)
from .numerics import as_point
from .recipe import Convention

SPHERE_INPUT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class StepResult:
    state: np.ndarray
    noise_draws: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _draws(spec, z):
    z = np.asarray(z, dtype=float)
    if z.shape != (spec.noise.n_fields,):
        raise InvalidInputError(f"expected {spec.noise.n_fields} normal draws, got shape {z.shape}")
    return z


def _wrap(spec, x):
    return spec.geometry.wrap(x) if isinstance(spec.geometry, FlatTorus) else x


def _check_dt(dt):
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidInputError(f"dt must be positive, got {dt}")


def euler_maruyama_step(spec, x, dt, z):
    """``x' = x + b(x) dt + sigma(x) sqrt(dt) z`` for an Itô spec."""
    if spec.convention is not Convention.ITO:
        raise ConventionError("euler_maruyama_step needs an Ito spec; convert with to_ito")
    _check_dt(dt)
    x = as_point(x, spec.dim)
    z = _draws(spec, z)
    out = x + spec.drift_at(x) * dt
    if z.size:
        out = out + spec.noise.sigma(x) @ z * math.sqrt(dt)
    return StepResult(_wrap(spec, out), z)


def stratonovich_heun_step(spec, x, dt, z):
    """Predictor-corrector step with averaged drift and noise coefficients."""
    if spec.convention is not Convention.STRATONOVICH:
        raise ConventionError("stratonovich_heun_step needs a Stratonovich spec; convert with to_stratonovich")
    _check_dt(dt)
    x = as_point(x, spec.dim)
    z = _draws(spec, z)
    dw = z * math.sqrt(dt)
    a0 = spec.drift_at(x)
    s0 = spec.noise.sigma(x) if z.size else None
    pred = x + a0 * dt + (s0 @ dw if z.size else 0.0)
    a1 = spec.drift_at(pred)
    out = x + 0.5 * (a0 + a1) * dt
    if z.size:
        out = out + 0.5 * (s0 + spec.noise.sigma(pred)) @ dw
    return StepResult(_wrap(spec, out), z, {"predictor_norm": float(np.linalg.norm(pred - x))})


def ou_exact_step(v, h, z):
    """Exact transition of ``dv = -v/2 dt + dW`` over time ``h``."""
    if not (np.isfinite(h) and h > 0):
        raise InvalidInputError(f"h must be positive, got {h}")
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)
    if v.shape != z.shape:
        raise InvalidInputError("v and z must have the same shape")
    return math.exp(-0.5 * h) * v + math.sqrt(-math.expm1(-h)) * z


@dataclass(frozen=True, eq=False)
class LiePotential:
    """Potential on a matrix group with its ambient gradient.

    For complex groups ``gradient`` returns ``dV/dRe(g) - i dV/dIm(g)``.
    """

    value: object
    gradient: object
    name: str = "custom"
    is_zero: bool = False

    @classmethod
    def zero(cls, n, dtype=float):
        return cls(lambda g: 0.0, lambda g: np.zeros((n, n), dtype=dtype), "zero", True)

    @classmethod
    def trace(cls, n, scale=1.0):
        """``V(g) = s Re Tr(g)``."""
        return cls(lambda g: scale * float(np.trace(g).real), lambda g: scale * np.eye(n), "trace")

    @classmethod
    def linear(cls, lam):
        """``V(g) = Re Tr(Lambda g)``; ambient gradient ``Lambda^T``."""
        lam = np.array(lam)
        lam.setflags(write=False)
        return cls(lambda g: float(np.real(np.sum(lam.T * g))), lambda g: lam.T.copy(), "linear")


def _require_bi_invariant(group):
    if not group.bi_invariant:
        raise UnsupportedError(
            "Lie leapfrog supports only the bi-invariant (identity) metric; the Euler-Arnold term is not implemented"
        )


def _energy(V, g, v):
    return [float(V.value(g))] + [0.5 * float(c) * float(c) for c in v]


def lie_leapfrog_trajectory(group, V, g0, v0, eps, N):
    """``N`` leapfrog steps: half kick, ``g <- g exp(eps v)``, half kick.

    Returns ``(gN, vN, energy_delta)`` with ``H = V(g) + |v|^2 / 2`` and the
    difference accumulated by exactly rounded summation.
    """
    _require_bi_invariant(group)
    g0 = group.check_element(g0)
    v = np.array(v0, dtype=float)
    if v.shape != (group.dim,):
        raise InvalidInputError(f"velocity must have {group.dim} components")
    if int(N) != N or N < 0:
        raise InvalidInputError("N must be a non-negative integer")
    if not np.isfinite(eps):
        raise InvalidInputError("eps must be finite")
    g = g0
    half = 0.5 * eps
    zero = V.is_zero
    for _ in range(int(N)):
        if not zero:
            v = v - half * algebra_force(group, g, V.gradient(g))
        g = g @ lie_exp(eps * v, group)
        if not zero:
            v = v - half * algebra_force(group, g, V.gradient(g))
    e0 = _energy(V, g0, v0)
    e1 = _energy(V, g, v)
    delta = math.fsum(e1 + [-t for t in e0])
    return g, v, delta


def lie_leapfrog_chart_map(group, V, g_center, eps, N):
    """One trajectory as a map on ``R^{2 n_g}`` in canonical chart coordinates.

    Input ``(xi, v)`` means ``g = g_center exp(xi)``; the output chart is
    centred at the image of ``(g_center, v_ref)`` so both Haar densities are 1
    at the reference point. Returns ``(map, output_center)`` for a given ``v_ref``.
    """
    ng = group.dim

    def build(v_ref):
        g_out, _, _ = lie_leapfrog_trajectory(group, V, g_center, v_ref, eps, N)
        out_inv = np.linalg.inv(g_out)

        def step(z):
            xi, v = z[:ng], z[ng:]
            g = g_center @ lie_exp(xi, group)
            g1, v1, _ = lie_leapfrog_trajectory(group, V, g, v, eps, N)
            return np.concatenate([lie_log(out_inv @ g1, group), v1])

        return step

    return build


@dataclass(frozen=True, eq=False)
class SpherePotential:
    """Ambient potential ``W(q)`` with ambient gradient, restricted to the sphere."""

    value: object
    gradient: object
    name: str = "custom"
    is_zero: bool = False

    @classmethod
    def zero(cls, k):
        return cls(lambda q: 0.0, lambda q: np.zeros(k), "zero", True)

    @classmethod
    def linear(cls, c):
        """``W(q) = c . q``; ``c = kappa e_k`` gives the von Mises-Fisher family."""
        c = np.array(c, dtype=float)
        c.setflags(write=False)
        return cls(lambda q: float(c @ q), lambda q: c.copy(), "linear")


def _check_sphere_state(q, v):
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    if q.shape != v.shape or q.ndim != 1:
        raise InvalidInputError("q and v must be 1-d vectors of equal length")
    if abs(np.linalg.norm(q) - 1.0) > SPHERE_INPUT_TOL:
        raise InvalidInputError("q is not on the unit sphere")
    if abs(float(q @ v)) > SPHERE_INPUT_TOL * max(1.0, float(np.linalg.norm(v))):
        raise InvalidInputError("v is not tangent at q")
    q = q / np.linalg.norm(q)
    return q, v - float(q @ v) * q


def geodesic_splitting_step(sphere, W, q, v, eps):
    """Half kick with the projected gradient, geodesic flow for ``eps``, half kick."""
    if not isinstance(sphere, EmbeddedSphere):
        raise InvalidInputError("geodesic_splitting_step needs an EmbeddedSphere")
    q, v = _check_sphere_state(q, v)
    if q.size != sphere.ambient_dim:
        raise InvalidInputError(f"points must have {sphere.ambient_dim} coordinates")
    half = 0.5 * eps
    if not W.is_zero:
        v = v - half * project_horizontal(q, W.gradient(q))
    q, v = sphere_geodesic(q, v, eps)
    if not W.is_zero:
        v = v - half * project_horizontal(q, W.gradient(q))
    return q, v


def sphere_energy_terms(W, q, v):
    return [float(W.value(q))] + [0.5 * float(c) * float(c) for c in v]
