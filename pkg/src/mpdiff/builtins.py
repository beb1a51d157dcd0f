"""Named targets, brackets and noise families used by the CLI and the test-suite.

Each factory takes the dimension, an optional geometry and numeric
parameters, and returns a recipe object with analytic derivatives.
"""

import numpy as np

from .errors import InvalidInputError
from .geometry import EuclideanSpace, FlatTorus
from .recipe import (
    AntisymmetricBracket,
    NoiseModel,
    TargetDensity,
    assemble_a_diffusion,
    volume_free_noise,
)

DEFAULT_VARIANCES = (1.0, 0.7, 0.5, 0.8, 0.6)


def _periods(geometry, dim):
    if isinstance(geometry, FlatTorus):
        return np.asarray(geometry.period)
    return None


def _frequency(geometry, dim):
    """Angular frequency per axis: ``2 pi / L`` on a torus, 1 otherwise."""
    p = _periods(geometry, dim)
    return np.ones(dim) if p is None else 2.0 * np.pi / p


def _gaussian_reference(dim, scale):
    """``rho = -|x|^2 / (2 s^2)`` with gradient and Hessian, or all ``None``."""
    if scale is None:
        return None, None, None
    s2 = float(scale) ** 2
    return (
        lambda x: -0.5 * np.sum(x * x, axis=-1) / s2,
        lambda x: -x / s2,
        lambda x: np.broadcast_to(-np.eye(dim) / s2, np.shape(x) + (dim,)).copy(),
    )


# targets


def gaussian(dim, geometry=None, variances=None, mean=None, beta=1.0, reference_scale=None):
    """``H = 1/2 sum_j (x_j - m_j)^2 / v_j``; with ``beta = 1`` the variances are ``v``."""
    v = np.asarray(DEFAULT_VARIANCES[:dim] if variances is None else variances, dtype=float)
    v = np.broadcast_to(v, (dim,)).copy()
    m = np.zeros(dim) if mean is None else np.broadcast_to(np.asarray(mean, float), (dim,)).copy()
    if np.any(v <= 0):
        raise InvalidInputError("gaussian variances must be positive")
    rho, grho, hrho = _gaussian_reference(dim, reference_scale)
    return TargetDensity(
        dim,
        lambda x: 0.5 * np.sum((x - m) ** 2 / v, axis=-1),
        lambda x: (x - m) / v,
        beta=beta,
        log_reference=rho,
        grad_log_reference=grho,
        hess_log_reference=hrho,
        name="gaussian",
        geometry=geometry or EuclideanSpace(dim),
    )


def double_well(dim, geometry=None, beta=1.0, reference_scale=None):
    """``H = sum_j (x_j^2 - 1)^2``."""
    rho, grho, hrho = _gaussian_reference(dim, reference_scale)
    return TargetDensity(
        dim,
        lambda x: np.sum((x * x - 1.0) ** 2, axis=-1),
        lambda x: 4.0 * x * (x * x - 1.0),
        beta=beta,
        log_reference=rho,
        grad_log_reference=grho,
        hess_log_reference=hrho,
        name="double_well",
        geometry=geometry or EuclideanSpace(dim),
    )


def torus_cosine(dim, geometry=None, amplitude=1.0, beta=1.0):
    """``H = a sum_j cos(2 pi x_j / L_j)`` on a flat torus."""
    geometry = geometry or FlatTorus(dim)
    if not isinstance(geometry, FlatTorus):
        raise InvalidInputError("torus_cosine needs a torus geometry")
    w = _frequency(geometry, dim)
    a = float(amplitude)
    return TargetDensity(
        dim,
        lambda x: a * np.sum(np.cos(w * x), axis=-1),
        lambda x: -a * w * np.sin(w * x),
        beta=beta,
        name="torus_cosine",
        geometry=geometry,
    )


def uniform(dim, geometry=None, beta=1.0):
    """Constant energy: the uniform law on a torus."""
    geometry = geometry or FlatTorus(dim)
    return TargetDensity(
        dim,
        lambda x: np.zeros(np.shape(x)[:-1]),
        lambda x: np.zeros(np.shape(x)),
        beta=beta,
        name="uniform",
        geometry=geometry,
        check=False,
    )


# brackets


def _default_skew(dim):
    k = np.zeros((dim, dim))
    vals = iter([1.0, 0.5, 0.8, 0.3, 0.6, 0.4, 0.7, 0.2, 0.9, 0.1])
    for i in range(dim):
        for j in range(i + 1, dim):
            k[i, j] = next(vals)
            k[j, i] = -k[i, j]
    return k


def zero_bracket(dim, geometry=None):
    return AntisymmetricBracket.zero(dim)


def constant_bracket(dim, geometry=None, strength=1.0, matrix=None):
    """``A = s K`` for a fixed antisymmetric ``K`` (or a user matrix)."""
    k = _default_skew(dim) if matrix is None else np.asarray(matrix, dtype=float)
    return AntisymmetricBracket.constant(float(strength) * k)


def stream_function(dim, geometry=None, strength=1.0, wavevector=None):
    """``A = psi(x) K`` with ``psi = s cos(w . x)``; ``w`` defaults to periodic-compatible values."""
    k = _default_skew(dim)
    if wavevector is None:
        w = np.array([1.0, 0.5, 0.25, 0.125, 0.0625][:dim])
        if isinstance(geometry, FlatTorus):
            w = _frequency(geometry, dim)
    else:
        w = np.broadcast_to(np.asarray(wavevector, float), (dim,)).copy()
    s = float(strength)

    def matrix(x):
        psi = s * np.cos(x @ w)
        return psi[..., None, None] * k

    def divergence(x):
        dpsi = -s * np.sin(x @ w)[..., None] * w
        return dpsi @ k.T

    return AntisymmetricBracket(dim, matrix, divergence, name="stream_function")


# noise families


def isotropic(dim, geometry=None, scale=1.0):
    """``Y_i = s e_i``."""
    return NoiseModel.constant(float(scale) * np.eye(dim), name="isotropic")


def multiplicative(dim, geometry=None, scale=1.0):
    """Diagonal state-dependent noise ``Y_i = s sqrt(1 + x_i^2) e_i``."""
    s = float(scale)
    eye = np.eye(dim)

    def fields(x):
        return s * np.sqrt(1.0 + x * x)[..., :, None] * eye

    def jacobians(x):
        d = s * x / np.sqrt(1.0 + x * x)
        return d[..., :, None, None] * np.einsum("ia,ib->iab", eye, eye)

    return NoiseModel(dim, dim, fields, jacobians, name="multiplicative")


def coupled(dim, geometry=None, scale=1.0):
    """``Y_i = s (e_i + 1/2 sin(w_i x_i + i) e_{i+1 mod n})``: nonlinear, off-diagonal."""
    s = float(scale)
    w = _frequency(geometry, dim)
    idx = np.arange(dim)
    nxt = (idx + 1) % dim
    eye = np.eye(dim)

    def fields(x):
        amp = 0.5 * np.sin(w * x + idx)
        return s * (eye + amp[..., :, None] * eye[nxt])

    def jacobians(x):
        damp = 0.5 * w * np.cos(w * x + idx)
        out = np.zeros(np.shape(x)[:-1] + (dim, dim, dim))
        out[..., idx, nxt, idx] = s * damp
        return out

    return NoiseModel(dim, dim, fields, jacobians, name="coupled")


def _pair_potential(dim, a, b, kind, s, w):
    """Stream function ``psi`` on the ``(a, b)`` plane with gradient and Hessian.

    kind "a": ``psi = s (x_b - x_a + 1/2 sin(w_a x_a + w_b x_b))``
    kind "b": ``psi = s (x_a + x_b + 1/2 cos(w_a x_a - w_b x_b))``
    """
    wa, wb = w[a], w[b]
    sign = 1.0 if kind == "a" else -1.0
    lin = np.zeros(dim)
    if kind == "a":
        lin[a], lin[b] = -1.0, 1.0
    else:
        lin[a], lin[b] = 1.0, 1.0
    kvec = np.zeros(dim)
    kvec[a], kvec[b] = wa, sign * wb

    def psi(x):
        phase = x @ kvec
        osc = np.sin(phase) if kind == "a" else np.cos(phase)
        return s * (x @ lin + 0.5 * osc)

    def grad(x):
        phase = x @ kvec
        dosc = np.cos(phase) if kind == "a" else -np.sin(phase)
        return s * (lin + 0.5 * dosc[..., None] * kvec)

    def hess(x):
        phase = x @ kvec
        ddosc = -np.sin(phase) if kind == "a" else -np.cos(phase)
        return s * 0.5 * ddosc[..., None, None] * np.outer(kvec, kvec)

    e = np.zeros((dim, dim))
    e[a, b], e[b, a] = 1.0, -1.0
    bracket = AntisymmetricBracket(
        dim,
        lambda x: psi(x)[..., None, None] * e,
        lambda x: grad(x) @ e.T,
        name=f"pair{a}{b}{kind}",
        check=False,
    )
    return bracket, psi, grad, hess, e


def volume_free(dim, geometry=None, scale=1.0, reference=None):
    """Curls of pairwise stream-function potentials (``dim >= 2``), analytic Jacobians."""
    if dim < 2:
        raise InvalidInputError("volume_free noise needs dim >= 2")
    w = _frequency(geometry, dim)
    if dim == 2:
        pairs = [(0, 1, "a"), (0, 1, "b")]
    else:
        pairs = [(0, 1, "a"), (1, 2, "b"), (0, 2, "a")]
    pots = [_pair_potential(dim, a, b, k, float(scale), w) for a, b, k in pairs]

    def jacobians(x):
        # Y = E grad(psi) + psi E grad(rho)
        out = []
        for _, psi, grad, hess, e in pots:
            jac = np.matmul(e, hess(x))
            if reference is not None:
                erho = reference.grad_rho(x) @ e.T
                jac = jac + erho[..., :, None] * grad(x)[..., None, :]
                jac = jac + psi(x)[..., None, None] * np.matmul(e, reference.hess_rho(x))
            out.append(jac)
        return np.stack(out, axis=-3)

    return volume_free_noise([p[0] for p in pots], reference, jacobians=jacobians)


TARGETS = {
    "gaussian": gaussian,
    "double_well": double_well,
    "torus_cosine": torus_cosine,
    "uniform": uniform,
}
BRACKETS = {
    "zero": zero_bracket,
    "constant_bracket": constant_bracket,
    "stream_function": stream_function,
}
NOISES = {
    "isotropic": isotropic,
    "multiplicative": multiplicative,
    "coupled": coupled,
    "volume_free": volume_free,
}
TORUS_TARGETS = ("torus_cosine", "uniform")


def make_noise(name, dim, geometry=None, target=None, **params):
    if name not in NOISES:
        raise InvalidInputError(f"unknown noise family {name!r}")
    if name == "volume_free":
        return volume_free(dim, geometry, reference=target, **params)
    return NOISES[name](dim, geometry, **params)


def default_bounds(target):
    """Grid box for a Euclidean built-in target (ignored on a torus)."""
    if target.name.startswith("double_well"):
        return [(-2.6, 2.6)] * target.dim
    return [(-5.0, 5.0)] * target.dim


# finest spacing per target family and stencil nodes per axis per dimension
_GRID_SPACING = {"gaussian": 2.5e-3, "double_well": 1e-3, "double_well_ref": 1e-3}
_GRID_NODES = {2: 40, 3: 13}


def default_grid(spec):
    """Verification grid for a built-in spec.

    One-dimensional grids are full; in two and three dimensions the stencils
    run with the fine spacing at a strided subset of nodes.
    """
    from .verify import GridSpec

    n = spec.dim
    geometry = spec.geometry
    if isinstance(geometry, FlatTorus):
        m = 4000
        stride = 1 if n == 1 else m // _GRID_NODES[n]
        return GridSpec.for_torus(geometry, m, stride)
    bounds = default_bounds(spec.target)
    width = max(b - a for a, b in bounds)
    m = int(round(width / _GRID_SPACING.get(spec.target.name, 2.5e-3))) + 1
    stride = 1 if n == 1 else max(1, (m - 9) // _GRID_NODES[n])
    return GridSpec(n, bounds, m, stride=stride)


def builtin_catalog(dims=(1, 2, 3)):
    """All built-in (target, bracket, noise) combinations as assembled specs.

    Brackets are skipped in one dimension (an antisymmetric 1x1 matrix is zero)
    and volume-free noise needs at least two dimensions. One double-well
    variant carries a Gaussian reference measure to exercise ``rho``. Specs
    that differ only in the bracket share one noise object.
    """
    specs = []
    for dim in dims:
        brackets = ["zero"] if dim == 1 else list(BRACKETS)
        noises = [n for n in NOISES if not (n == "volume_free" and dim < 2)]
        euclid = EuclideanSpace(dim)
        targets = [gaussian(dim, euclid), double_well(dim, euclid), double_well(dim, euclid, reference_scale=1.5)]
        targets[-1] = _renamed(targets[-1], "double_well_ref")
        for target in targets:
            for n in noises:
                noise = make_noise(n, dim, euclid, target)
                for b in brackets:
                    specs.append(assemble_a_diffusion(BRACKETS[b](dim, euclid), noise, target, euclid))
        if dim <= 2:
            torus = FlatTorus(dim, (2.0,) * dim)
            target = torus_cosine(dim, torus)
            for n in ("isotropic", "coupled") + (("volume_free",) if dim >= 2 else ()):
                noise = make_noise(n, dim, torus, target)
                for b in brackets:
                    specs.append(assemble_a_diffusion(BRACKETS[b](dim, torus), noise, target, torus))
    return specs


def _renamed(target, name):
    from dataclasses import replace

    return replace(target, name=name, check=False)
