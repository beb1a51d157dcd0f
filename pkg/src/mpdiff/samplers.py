"""MCMC samplers built from the integrators.

Every sampler exposes ``step(state, gen) -> (state, accepted, delta_H)`` where
``gen`` is the per-step generator from :class:`mpdiff.rng.ChainRNG`. Within a
step, normal draws for momenta or proposals are consumed first and the MH
uniform last.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import InvalidInputError, SamplingError
from .geometry import EmbeddedSphere, MatrixLieGroup, project_horizontal
from .integrators import (
    LiePotential,
    SpherePotential,
    geodesic_splitting_step,
    lie_leapfrog_trajectory,
    ou_exact_step,
    sphere_energy_terms,
)
from .numerics import as_point
from .rng import ChainRNG


@dataclass(frozen=True)
class SamplerConfig:
    """Run-length and step parameters.

    ``n_iterations = 0`` is allowed and yields the initial state alone; otherwise
    ``burn_in < n_iterations``.
    """

    n_iterations: int
    burn_in: int = 0
    dt: float = 0.1
    n_leapfrog: int = 10
    h: float = 1.0
    thinning: int = 1

    def __post_init__(self):
        for name in ("n_iterations", "burn_in", "n_leapfrog", "thinning"):
            value = getattr(self, name)
            if int(value) != value:
                raise InvalidInputError(f"{name} must be an integer")
        if self.n_iterations < 0 or self.burn_in < 0:
            raise InvalidInputError("n_iterations and burn_in must be non-negative")
        if self.n_iterations > 0 and self.burn_in >= self.n_iterations:
            raise InvalidInputError("burn_in must be smaller than n_iterations")
        if self.n_iterations == 0 and self.burn_in != 0:
            raise InvalidInputError("burn_in must be 0 when n_iterations is 0")
        if self.n_leapfrog < 1 or self.thinning < 1:
            raise InvalidInputError("n_leapfrog and thinning must be at least 1")
        for name in ("dt", "h"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidInputError(f"{name} must be positive and finite")

    def retained(self):
        """Iteration indices kept in the chain (0 is the initial state)."""
        return np.arange(self.burn_in, self.n_iterations + 1, self.thinning)


@dataclass(eq=False)
class Chain:
    """Stored states plus per-proposal diagnostics.

    ``samples[k]`` is the flattened position after iteration ``iterations[k]``.
    ``accept_flags``, ``energy_errors`` and ``nonfinite`` have one entry per
    proposal, burn-in included.
    """

    samples: np.ndarray
    iterations: np.ndarray
    accept_flags: np.ndarray
    energy_errors: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)
    velocities: np.ndarray = None
    nonfinite: np.ndarray = None

    def __post_init__(self):
        if self.nonfinite is None:
            self.nonfinite = ~np.isfinite(self.energy_errors)
        n = self.meta.get("n_iterations", len(self.accept_flags))
        if len(self.accept_flags) != n or len(self.energy_errors) != n:
            raise InvalidInputError("per-proposal arrays do not match n_iterations")
        if len(self.samples) != len(self.iterations):
            raise InvalidInputError("samples and iterations differ in length")
        if self.velocities is not None and len(self.velocities) != len(self.samples):
            raise InvalidInputError("velocities and samples differ in length")

    def __len__(self):
        return len(self.samples)

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accept_flags)) if len(self.accept_flags) else float("nan")

    def row_flags(self):
        """``(accepted, delta_H)`` for each stored row; the initial state reports ``(True, 0.0)``."""
        idx = self.iterations - 1
        first = idx < 0
        acc = np.where(first, True, self.accept_flags[np.maximum(idx, 0)] if len(self.accept_flags) else True)
        dh = np.where(first, 0.0, self.energy_errors[np.maximum(idx, 0)] if len(self.energy_errors) else 0.0)
        return acc.astype(bool), dh.astype(float)


def mh_accept(delta_H, u):
    """Metropolis rule ``u < exp(-delta_H)``; NaN always rejects."""
    if not 0.0 <= u < 1.0:
        raise InvalidInputError(f"u must lie in [0, 1), got {u}")
    if math.isnan(delta_H):
        return False
    if delta_H <= 0.0:
        return True
    return u < math.exp(-delta_H)


def _energy_difference(new, old):
    return math.fsum(list(new) + [-t for t in old])


def _finite_or_nan(delta):
    return delta if math.isfinite(delta) or delta == math.inf else math.nan


# Lie groups


def ilmcmc_lie_step(group, V, state, config, rng):
    """OU refresh, leapfrog trajectory, MH on ``V + |v|^2 / 2``; reject flips ``v*``."""
    g, v = state
    z = rng.standard_normal(group.dim)
    v_star = ou_exact_step(np.asarray(v, dtype=float), config.h, z)
    try:
        g_new, v_new, delta = lie_leapfrog_trajectory(group, V, g, v_star, config.dt, config.n_leapfrog)
    except FloatingPointError:
        g_new, v_new, delta = g, v_star, math.nan
    if not np.all(np.isfinite(g_new)) or not np.all(np.isfinite(v_new)):
        delta = math.nan
    delta = _finite_or_nan(delta)
    u = rng.random()
    if mh_accept(delta, u):
        return (g_new, v_new), True, delta
    return (g, -v_star), False, delta


class LieSampler:
    name = "ilmcmc_lie"

    def __init__(self, group, V, config):
        if not isinstance(group, MatrixLieGroup):
            raise InvalidInputError("LieSampler needs a MatrixLieGroup")
        self.group, self.V, self.config = group, V, config

    def initial_state(self, g=None, v=None):
        g = self.group.identity() if g is None else self.group.check_element(g)
        v = np.zeros(self.group.dim) if v is None else np.asarray(v, dtype=float)
        return g, v

    def step(self, state, gen):
        return ilmcmc_lie_step(self.group, self.V, state, self.config, gen)

    def flatten(self, state):
        return np.asarray(state[0]).reshape(-1), np.asarray(state[1])

    def params(self):
        return {"group": self.group.name, "potential": self.V.name, "eps": self.config.dt,
                "n_leapfrog": self.config.n_leapfrog, "h": self.config.h}


# Sphere


def ilmcmc_sphere_step(sphere, W, state, config, rng):
    """Tangent-plane OU refresh, geodesic splitting trajectory, MH on ``W + |v|^2 / 2``."""
    q, v = state
    z = project_horizontal(q, rng.standard_normal(sphere.ambient_dim))
    v_star = ou_exact_step(np.asarray(v, dtype=float), config.h, z)
    v_star = v_star - float(q @ v_star) * q
    q_new, v_new = q, v_star
    for _ in range(config.n_leapfrog):
        q_new, v_new = geodesic_splitting_step(sphere, W, q_new, v_new, config.dt)
    delta = _energy_difference(sphere_energy_terms(W, q_new, v_new), sphere_energy_terms(W, q, v_star))
    delta = _finite_or_nan(delta)
    u = rng.random()
    if mh_accept(delta, u):
        return (q_new, v_new), True, delta
    return (q, -v_star), False, delta


class SphereSampler:
    name = "ilmcmc_sphere"

    def __init__(self, sphere, W, config):
        if not isinstance(sphere, EmbeddedSphere):
            raise InvalidInputError("SphereSampler needs an EmbeddedSphere")
        self.sphere, self.W, self.config = sphere, W, config

    def initial_state(self, q=None, v=None):
        q = self.sphere.north_pole() if q is None else self.sphere.check_point(q)
        v = np.zeros(self.sphere.ambient_dim) if v is None else np.asarray(v, dtype=float)
        return q, v

    def step(self, state, gen):
        return ilmcmc_sphere_step(self.sphere, self.W, state, self.config, gen)

    def flatten(self, state):
        return np.asarray(state[0]), np.asarray(state[1])

    def params(self):
        return {"ambient_dim": self.sphere.ambient_dim, "potential": self.W.name, "eps": self.config.dt,
                "n_leapfrog": self.config.n_leapfrog, "h": self.config.h}


# Euclidean


def _spd_factor(D, n, what="preconditioner"):
    D = np.eye(n) if D is None else np.array(D, dtype=float)
    if D.shape != (n, n) or not np.allclose(D, D.T, rtol=0, atol=1e-12):
        raise InvalidInputError(f"{what} must be a symmetric {n}x{n} matrix")
    try:
        L = np.linalg.cholesky(D)
    except np.linalg.LinAlgError:
        raise InvalidInputError(f"{what} must be positive definite") from None
    return D, L


def _mala_move(target, x, dt, gen, D, L, Linv):
    z = gen.standard_normal(target.dim)
    mx = x + dt * (D @ target.grad_log_p(x))
    y = mx + math.sqrt(2.0 * dt) * (L @ z)
    my = y + dt * (D @ target.grad_log_p(y))
    rx, ry = Linv @ (x - my), Linv @ (y - mx)
    log_q_back, log_q_fwd = -float(rx @ rx) / (4.0 * dt), -float(ry @ ry) / (4.0 * dt)
    log_ratio = math.fsum([float(target.log_p(y)), -float(target.log_p(x)), log_q_back, -log_q_fwd])
    delta = _finite_or_nan(-log_ratio) if np.all(np.isfinite(y)) else math.nan
    u = gen.random()
    if mh_accept(delta, u):
        return y, True, delta
    return x, False, delta


def mala_step(target, x, dt, rng, precond=None):
    """One MALA move with proposal ``y = x - D grad U dt + sqrt(2 D dt) z``.

    ``U = -log p_L``; ``delta`` is minus the log acceptance ratio.
    """
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidInputError("dt must be positive")
    D, L = _spd_factor(precond, target.dim)
    return _mala_move(target, as_point(x, target.dim), dt, rng, D, L, np.linalg.inv(L))


class MalaSampler:
    name = "mala"

    def __init__(self, target, config, precond=None):
        self.target, self.config = target, config
        self.D, self.L = _spd_factor(precond, target.dim)
        self.Linv = np.linalg.inv(self.L)

    def initial_state(self, x=None):
        return np.zeros(self.target.dim) if x is None else as_point(x, self.target.dim)

    def step(self, state, gen):
        return _mala_move(self.target, state, self.config.dt, gen, self.D, self.L, self.Linv)

    def flatten(self, state):
        return np.asarray(state), None

    def params(self):
        return {"target": self.target.name, "dt": self.config.dt, "preconditioner": self.D.tolist()}


def underdamped_drift_parts(target, M, C):
    """Hamiltonian and dissipative parts of the Itô drift on ``(q, p)``."""
    Minv = np.linalg.inv(np.asarray(M, dtype=float))
    C = np.asarray(C, dtype=float)

    def hamiltonian(q, p):
        return np.concatenate([Minv @ p, target.grad_log_p(q)])

    def dissipative(q, p):
        return np.concatenate([np.zeros_like(q), -C @ (Minv @ p)])

    return hamiltonian, dissipative


class UnderdampedSampler:
    """Unadjusted OBABO splitting of ``dq = M^-1 p dt``, ``dp = -grad U dt - C M^-1 p dt + sqrt(2C) dW``.

    The OU half steps are exact when ``M`` and ``C`` are scalar multiples of
    the identity and use Heun otherwise.
    """

    name = "underdamped"

    def __init__(self, target, M, C, dt):
        n = target.dim
        self.target, self.dt = target, float(dt)
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvalidInputError("dt must be positive")
        self.M, _ = _spd_factor(M, n, "mass matrix")
        C = np.array(C, dtype=float) if C is not None else np.eye(n)
        if C.shape != (n, n) or not np.allclose(C, C.T, rtol=0, atol=1e-12):
            raise InvalidInputError("friction must be a symmetric matrix")
        evals, evecs = np.linalg.eigh(C)
        if evals.min() < -1e-12:
            raise InvalidInputError("friction must be positive semidefinite")
        self.C = C
        self.Minv = np.linalg.inv(self.M)
        self.sqrt2C = evecs @ np.diag(np.sqrt(2.0 * np.clip(evals, 0.0, None))) @ evecs.T
        self.Cm = C @ self.Minv
        m, c = self.M[0, 0], C[0, 0]
        self.scalar = np.array_equal(self.M, m * np.eye(n)) and np.array_equal(C, c * np.eye(n))
        half = 0.5 * self.dt
        if self.scalar:
            self._decay = math.exp(-c / m * half)
            self._spread = math.sqrt(m * -math.expm1(-2.0 * c / m * half))

    def _ou(self, p, z):
        half = 0.5 * self.dt
        if self.scalar:
            return self._decay * p + self._spread * z
        dw = math.sqrt(half) * z
        a0 = -self.Cm @ p
        pred = p + a0 * half + self.sqrt2C @ dw
        return p + 0.5 * (a0 - self.Cm @ pred) * half + self.sqrt2C @ dw

    def energy_terms(self, q, p):
        return [-float(self.target.log_p(q))] + list(0.5 * p * (self.Minv @ p))

    def initial_state(self, q=None, p=None):
        n = self.target.dim
        q = np.zeros(n) if q is None else as_point(q, n)
        p = np.zeros(n) if p is None else as_point(p, n)
        return q, p

    def step(self, state, gen):
        q, p = state
        n = self.target.dim
        z = gen.standard_normal(2 * n)
        p = self._ou(p, z[:n])
        e0 = self.energy_terms(q, p)
        half = 0.5 * self.dt
        p = p + half * self.target.grad_log_p(q)
        q = q + self.dt * (self.Minv @ p)
        p = p + half * self.target.grad_log_p(q)
        delta = _finite_or_nan(_energy_difference(self.energy_terms(q, p), e0))
        p = self._ou(p, z[n:])
        return (q, p), True, delta

    def flatten(self, state):
        return np.asarray(state[0]), np.asarray(state[1])

    def params(self):
        return {"target": self.target.name, "dt": self.dt, "mass": self.M.tolist(),
                "friction": self.C.tolist(), "biased": True}


def run_chain(sampler, initial_state, config, seed, chain_id=0):
    """Run ``config.n_iterations`` steps with per-step streams from ``(seed, chain_id)``."""
    stream = ChainRNG(seed, chain_id)
    keep = config.retained()
    n = config.n_iterations
    accept = np.zeros(n, dtype=bool)
    errors = np.zeros(n)
    state = initial_state
    positions, velocities = [], []

    def store(s):
        x, v = sampler.flatten(s)
        positions.append(np.array(x))
        velocities.append(None if v is None else np.array(v))

    if keep.size and keep[0] == 0:
        store(state)
    next_keep = 1 if keep.size and keep[0] == 0 else 0
    bad = 0
    for i in range(1, n + 1):
        state, accept[i - 1], errors[i - 1] = sampler.step(state, stream.step(i))
        if not math.isfinite(errors[i - 1]):
            bad += 1
            if 2 * bad > n:
                raise SamplingError(
                    f"more than half of the {n} proposals had non-finite energies (at iteration {i}); aborting"
                )
        if next_keep < keep.size and keep[next_keep] == i:
            store(state)
            next_keep += 1
    dim = len(sampler.flatten(initial_state)[0])
    samples = np.array(positions) if positions else np.empty((0, dim))
    has_v = sampler.flatten(initial_state)[1] is not None
    vel = None
    if has_v:
        nv = len(sampler.flatten(initial_state)[1])
        vel = np.array(velocities) if velocities else np.empty((0, nv))
    meta = {"sampler": sampler.name, "chain_id": int(chain_id), "n_iterations": n, "burn_in": config.burn_in,
            "thinning": config.thinning, **sampler.params()}
    if sampler.name == "underdamped":
        meta["biased"] = True
    return Chain(samples, keep.copy(), accept, errors, int(seed), meta, vel)


def underdamped_trajectory(target, M, C, state, dt, n, rng):
    """``n`` unadjusted OBABO steps from ``state``; returns a Chain tagged ``biased``.

    ``rng`` is a seed or a :class:`ChainRNG`.
    """
    sampler = UnderdampedSampler(target, M, C, dt)
    stream = rng if isinstance(rng, ChainRNG) else ChainRNG(int(rng))
    config = SamplerConfig(n_iterations=int(n), dt=dt)
    return run_chain(sampler, sampler.initial_state(*state), config, stream.seed, stream.chain_id)


__all__ = [
    "SamplerConfig", "Chain", "mh_accept", "ilmcmc_lie_step", "ilmcmc_sphere_step", "mala_step",
    "underdamped_trajectory", "underdamped_drift_parts", "run_chain", "LieSampler", "SphereSampler",
    "MalaSampler", "UnderdampedSampler", "LiePotential", "SpherePotential",
]
