"""Assembly of measure-preserving drifts.

Every field here is a callable on point sets of shape ``(..., n)``:

* target: ``H(x) -> (...)``, ``grad_H(x) -> (..., n)``
* bracket: ``A(x) -> (..., n, n)``, ``divergence(x) -> (..., n)`` with components ``d_j A^{ij}``
* noise: ``fields(x) -> (..., N, n)`` (row ``i`` is ``Y_i``),
  ``jacobians(x) -> (..., N, n, n)`` with ``J_i[a, b] = d_b Y_i^a``

Conventions frozen in this module:

* The inverse temperature is folded into the energy, ``H~ = beta H``.
  The target has Lebesgue density ``p_L = exp(-H~ + rho)`` where ``rho`` is the
  log-density of the reference measure.
* The Hamiltonian field of a bracket is ``X_H^A = -A grad H~``, so the bracket
  plays the role of ``Q`` in the Euclidean recipe.
* The modular field has components ``d_j A^{ij} + A^{ij} d_j rho``.
"""

from dataclasses import dataclass, field, replace
import enum

import numpy as np

from .errors import InvalidInputError, UnsupportedError
from .geometry import FlatTorus
from .numerics import combine, fd_gradient, fd_hessian, fd_jacobian, matvec

CHECK_TOL = 1e-5
ANTISYM_TOL = 1e-12
_N_CHECK_POINTS = 5


def _check_points(dim, scale=1.0):
    return scale * np.random.default_rng(20240611).standard_normal((_N_CHECK_POINTS, dim))


def _zero_scalar(x):
    return np.zeros(np.shape(x)[:-1])


def _zero_vector(x):
    return np.zeros(np.shape(x))


def _zero_matrix(x):
    n = np.shape(x)[-1]
    return np.zeros(np.shape(x) + (n,))


def _close(a, b, tol=CHECK_TOL):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(np.abs(a - b) <= tol * (1.0 + np.abs(b))))


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        raise InvalidInputError(f"expected points with last axis {dim}, got shape {x.shape}")
    return x


class Convention(str, enum.Enum):
    ITO = "ito"
    STRATONOVICH = "stratonovich"


@dataclass(frozen=True, eq=False)
class TargetDensity:
    """Gibbs target ``P = exp(-beta H) mu`` with ``mu = exp(rho) dx``.

    ``grad_H`` and ``grad_log_reference`` fall back to finite differences when
    omitted. A supplied analytic gradient is checked against finite
    differences at a few points on construction.
    """

    dim: int
    log_density: object
    grad_H: object = None
    beta: float = 1.0
    log_reference: object = None
    grad_log_reference: object = None
    hess_log_reference: object = None
    name: str = "custom"
    geometry: object = None
    check: bool = True
    check_scale: float = 1.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError(f"dim must be a positive integer, got {self.dim}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise InvalidInputError(f"beta must be positive and finite, got {self.beta}")
        if self.log_reference is None:
            object.__setattr__(self, "log_reference", _zero_scalar)
            if self.grad_log_reference is None:
                object.__setattr__(self, "grad_log_reference", _zero_vector)
            if self.hess_log_reference is None:
                object.__setattr__(self, "hess_log_reference", _zero_matrix)
        if self.check:
            pts = _check_points(self.dim, self.check_scale)
            if self.grad_H is not None and not _close(self.grad_H(pts), fd_gradient(self.log_density, pts)):
                raise InvalidInputError(f"target {self.name!r}: grad_H disagrees with finite differences")
            if self.grad_log_reference is not None and not _close(
                self.grad_log_reference(pts), fd_gradient(self.log_reference, pts)
            ):
                raise InvalidInputError(f"target {self.name!r}: grad_log_reference disagrees with finite differences")

    def H(self, x):
        return np.asarray(self.log_density(_as_points(x, self.dim)), dtype=float)

    def gradient(self, x):
        x = _as_points(x, self.dim)
        if self.grad_H is None:
            return fd_gradient(self.log_density, x)
        return np.asarray(self.grad_H(x), dtype=float)

    def rho(self, x):
        return np.asarray(self.log_reference(_as_points(x, self.dim)), dtype=float)

    def grad_rho(self, x):
        x = _as_points(x, self.dim)
        if self.grad_log_reference is None:
            return fd_gradient(self.log_reference, x)
        return np.asarray(self.grad_log_reference(x), dtype=float)

    def hess_rho(self, x):
        x = _as_points(x, self.dim)
        if self.hess_log_reference is None:
            return fd_hessian(self.grad_rho, x)
        return np.asarray(self.hess_log_reference(x), dtype=float)

    def energy(self, x):
        """Folded energy ``H~ = beta H``."""
        return self.beta * self.H(x)

    def grad_energy(self, x):
        return self.beta * self.gradient(x)

    def log_p(self, x):
        """Unnormalised log Lebesgue density ``-H~ + rho``."""
        return -self.energy(x) + self.rho(x)

    def grad_log_p(self, x):
        return -self.grad_energy(x) + self.grad_rho(x)

    def with_beta(self, beta):
        return replace(self, beta=float(beta), check=False)


@dataclass(frozen=True, eq=False)
class AntisymmetricBracket:
    """Antisymmetric matrix field ``A(x)`` with coordinate divergence ``d_j A^{ij}``."""

    dim: int
    matrix_field: object
    divergence_field: object = None
    name: str = "custom"
    is_zero: bool = False
    check: bool = True
    check_scale: float = 1.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError(f"dim must be a positive integer, got {self.dim}")
        if self.check:
            pts = _check_points(self.dim, self.check_scale)
            a = np.asarray(self.matrix_field(pts), dtype=float)
            if a.shape != (_N_CHECK_POINTS, self.dim, self.dim):
                raise InvalidInputError(f"bracket {self.name!r} returns shape {a.shape[1:]}, expected {(self.dim,) * 2}")
            if np.max(np.abs(a + np.swapaxes(a, -1, -2))) > ANTISYM_TOL:
                raise InvalidInputError(f"bracket {self.name!r} is not antisymmetric")
            if self.divergence_field is not None and not _close(
                self.divergence_field(pts), self._fd_divergence(pts)
            ):
                raise InvalidInputError(f"bracket {self.name!r}: divergence disagrees with finite differences")

    @classmethod
    def zero(cls, dim):
        return cls(
            dim,
            lambda x: np.zeros(np.shape(x)[:-1] + (dim, dim)),
            _zero_vector,
            name="zero",
            is_zero=True,
            check=False,
        )

    @classmethod
    def constant(cls, matrix, name="constant_bracket"):
        a = np.array(matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInputError("constant bracket must be a square matrix")
        if np.max(np.abs(a + a.T), initial=0.0) > ANTISYM_TOL:
            raise InvalidInputError("constant bracket must be antisymmetric")
        a.setflags(write=False)
        return cls(
            a.shape[0],
            lambda x: np.broadcast_to(a, np.shape(x)[:-1] + a.shape).copy(),
            _zero_vector,
            name=name,
            is_zero=not np.any(a),
            check=False,
        )

    def _fd_divergence(self, x):
        jac = fd_jacobian(self.matrix_field, x)
        return np.trace(jac, axis1=-2, axis2=-1)

    def matrix(self, x):
        return np.asarray(self.matrix_field(_as_points(x, self.dim)), dtype=float)

    def divergence(self, x):
        x = _as_points(x, self.dim)
        if self.divergence_field is None:
            return self._fd_divergence(x)
        return np.asarray(self.divergence_field(x), dtype=float)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Family of noise vector fields ``Y_1..Y_N``.

    ``sigma`` has the fields as columns, ``D = sigma sigma^T / 2`` and the
    dissipative bracket is ``S = sum_i Y_i Y_i^T = 2 D``.
    """

    dim: int
    n_fields: int
    fields: object
    jacobians: object = None
    name: str = "custom"
    is_zero: bool = False
    check: bool = True
    check_scale: float = 1.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError(f"dim must be a positive integer, got {self.dim}")
        if self.n_fields < 0:
            raise InvalidInputError("n_fields must be non-negative")
        if self.check and self.n_fields:
            pts = _check_points(self.dim, self.check_scale)
            y = np.asarray(self.fields(pts), dtype=float)
            if y.shape != (_N_CHECK_POINTS, self.n_fields, self.dim):
                raise InvalidInputError(
                    f"noise {self.name!r} returns shape {y.shape[1:]}, expected {(self.n_fields, self.dim)}"
                )
            if self.jacobians is not None and not _close(self.jacobians(pts), fd_jacobian(self.fields, pts)):
                raise InvalidInputError(f"noise {self.name!r}: jacobians disagree with finite differences")

    @classmethod
    def zero(cls, dim):
        return cls(dim, 0, lambda x: np.zeros(np.shape(x)[:-1] + (0, dim)), name="zero", is_zero=True, check=False)

    @classmethod
    def constant(cls, sigma, name="constant"):
        """Constant noise with ``sigma[:, i] = Y_i``."""
        s = np.array(sigma, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2:
            raise InvalidInputError("sigma must be an n x N matrix")
        y = s.T.copy()
        y.setflags(write=False)
        n, m = s.shape
        return cls(
            n,
            m,
            lambda x: np.broadcast_to(y, np.shape(x)[:-1] + y.shape).copy(),
            lambda x: np.zeros(np.shape(x)[:-1] + (m, n, n)),
            name=name,
            is_zero=not np.any(s),
            check=False,
        )

    def field_values(self, x):
        return np.asarray(self.fields(_as_points(x, self.dim)), dtype=float)

    def jacobian_values(self, x):
        x = _as_points(x, self.dim)
        if self.n_fields == 0:
            return np.zeros(x.shape[:-1] + (0, self.dim, self.dim))
        if self.jacobians is None:
            return fd_jacobian(self.fields, x)
        return np.asarray(self.jacobians(x), dtype=float)

    def sigma(self, x):
        return np.swapaxes(self.field_values(x), -1, -2)

    def diffusion_matrix(self, x):
        y = self.field_values(x)
        return 0.5 * np.matmul(np.swapaxes(y, -1, -2), y)

    def lebesgue_divergences(self, x):
        """``(..., N)`` array of ``tr dY_i``."""
        return np.trace(self.jacobian_values(x), axis1=-2, axis2=-1)

    def diffusion_divergence(self, x):
        """``(div D)_a = d_b D^{ab}``."""
        y = self.field_values(x)
        jac = self.jacobian_values(x)
        return 0.5 * (np.sum(matvec(jac, y), axis=-2) + combine(np.trace(jac, axis1=-2, axis2=-1), y))

    def ito_correction(self, x):
        """``1/2 sum_i (dY_i) Y_i``: Itô drift minus Stratonovich drift."""
        y = self.field_values(x)
        return 0.5 * np.sum(matvec(self.jacobian_values(x), y), axis=-2)

    def linearly_independent(self, x, tol=1e-10):
        """Whether the fields are pointwise linearly independent at ``x`` (reported, not enforced)."""
        y = self.field_values(x)
        if self.n_fields > self.dim:
            return np.zeros(y.shape[:-2], dtype=bool)
        return np.linalg.matrix_rank(y, tol=tol) == self.n_fields


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """Drift plus noise in an explicit stochastic convention.

    ``parts`` optionally lists named drift terms whose sum is the drift; it is
    what the verification harness deletes terms from.
    """

    geometry: object
    drift: object
    noise: NoiseModel
    convention: Convention
    obstruction: object = None
    target: TargetDensity = None
    bracket: AntisymmetricBracket = None
    parts: dict = field(default=None)
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "convention", Convention(self.convention))
        if self.obstruction is not None:
            obs = np.asarray(self.obstruction, dtype=float)
            if not isinstance(self.geometry, FlatTorus):
                raise UnsupportedError("an obstruction term is only defined on a flat torus")
            if obs.shape != (self.dim,):
                raise InvalidInputError(f"obstruction must have length {self.dim}")
            object.__setattr__(self, "obstruction", obs)

    @property
    def dim(self):
        return self.noise.dim

    @property
    def reversible(self):
        """True when the drift has no bracket and no obstruction term."""
        bracket_free = self.bracket is None or self.bracket.is_zero
        return bracket_free and (self.obstruction is None or not np.any(self.obstruction))

    def drift_at(self, x):
        return np.asarray(self.drift(_as_points(x, self.dim)), dtype=float)

    def without(self, part):
        """Copy of this spec with one named drift term removed."""
        if not self.parts or part not in self.parts:
            raise InvalidInputError(f"spec {self.name!r} has no drift term {part!r}")
        kept = {k: v for k, v in self.parts.items() if k != part}
        return replace(self, drift=_sum_parts(kept, self.dim), parts=kept, name=f"{self.name}-{part}")


def _sum_parts(parts, dim):
    funcs = list(parts.values())

    def drift(x):
        out = np.zeros(np.shape(x))
        for f in funcs:
            out = out + f(x)
        return out

    return drift


def _same_dim(*objs):
    dims = {o.dim for o in objs if o is not None}
    if len(dims) > 1:
        raise InvalidInputError(f"dimension mismatch between recipe ingredients: {sorted(dims)}")
    return dims.pop()


def euclidean_recipe_drift(Q, noise, target, x):
    """``(Q + D) grad log p + div(Q + D)`` with ``(div Q)_i = d_j Q_ij``.

    For Lebesgue reference this is ``-(Q + D) grad H~ + div(Q + D)``.
    """
    _same_dim(Q, noise, target)
    x = _as_points(x, target.dim)
    g = target.grad_log_p(x)
    qd = Q.matrix(x) + noise.diffusion_matrix(x)
    return matvec(qd, g) + Q.divergence(x) + noise.diffusion_divergence(x)


def hamiltonian_field(bracket, target, x):
    """``X_H^A = -A grad H~``."""
    return -matvec(bracket.matrix(x), target.grad_energy(x))


def modular_field(bracket, target, x):
    """Divergence of the bracket with respect to the reference measure.

    Components ``d_j A^{ij} + A^{ij} d_j rho``; ``target`` may be ``None`` for
    Lebesgue measure.
    """
    x = _as_points(x, bracket.dim)
    div = bracket.divergence(x)
    if target is None:
        return div
    return div + matvec(bracket.matrix(x), target.grad_rho(x))


def conservative_field(bracket, target, x):
    """Measure-informed curl of the bracket: Hamiltonian plus modular field."""
    return hamiltonian_field(bracket, target, x) + modular_field(bracket, target, x)


def noise_gradient_term(noise, target, x):
    """``-1/2 sum_i Y_i(H~) Y_i``."""
    y = noise.field_values(x)
    yh = matvec(y, target.grad_energy(x))
    return -0.5 * combine(yh, y)


def reference_divergences(noise, target, x):
    """``(..., N)`` array of ``div_mu Y_i = tr dY_i + Y_i . grad rho``."""
    y = noise.field_values(x)
    div = noise.lebesgue_divergences(x)
    if target is None:
        return div
    return div + matvec(y, target.grad_rho(x))


def target_divergences(noise, target, x):
    """``(..., N)`` array of ``div_P Y_i = div_mu Y_i - Y_i(H~)``."""
    y = noise.field_values(x)
    return reference_divergences(noise, target, x) - matvec(y, target.grad_energy(x))


def noise_divergence_term(noise, target, x):
    """``1/2 sum_i div_mu(Y_i) Y_i``."""
    return 0.5 * combine(reference_divergences(noise, target, x), noise.field_values(x))


def a_diffusion_terms(bracket, noise, target):
    """Named Stratonovich drift terms of the A-diffusion, as callables."""
    _same_dim(bracket, noise, target)
    return {
        "hamiltonian": lambda x: hamiltonian_field(bracket, target, x),
        "modular": lambda x: modular_field(bracket, target, x),
        "noise_gradient": lambda x: noise_gradient_term(noise, target, x),
        "noise_divergence": lambda x: noise_divergence_term(noise, target, x),
    }


def a_diffusion_drift(bracket, noise, target, x):
    """Stratonovich drift ``X_H^A + X_A^mu - 1/2 Y_i(H~) Y_i + 1/2 div_mu(Y_i) Y_i``.

    With ``H~ = beta H`` the bracket part equals ``beta`` times the
    ``beta``-explicit form ``X_H^A + X_A^mu / beta``. Both preserve the target;
    this one makes ``Q = A`` reproduce the Euclidean recipe for every ``beta``.
    """
    _same_dim(bracket, noise, target)
    x = _as_points(x, target.dim)
    return (
        conservative_field(bracket, target, x)
        + noise_gradient_term(noise, target, x)
        + noise_divergence_term(noise, target, x)
    )


def torus_obstruction_drift(gamma_sharp, target, x, geometry=None):
    """Divergence-free drift ``c / p_L(x)`` on a flat torus.

    ``p_L = exp(-H~ + rho)`` is left unnormalised. For a uniform target this is
    the constant field ``c``.
    """
    geometry = target.geometry if geometry is None else geometry
    if not isinstance(geometry, FlatTorus):
        raise UnsupportedError("the obstruction drift is only defined on a flat torus")
    c = np.asarray(gamma_sharp, dtype=float)
    if c.shape != (target.dim,):
        raise InvalidInputError(f"gamma_sharp must have length {target.dim}")
    x = _as_points(x, target.dim)
    return np.exp(-target.log_p(x))[..., None] * c


def volume_free_noise(potentials, reference=None, name="volume_free", jacobians=None):
    """Noise fields ``Y_i = modular_field(A_i)``; each is divergence-free for the reference measure.

    Without analytic ``jacobians`` they are taken by finite differences of the fields.
    """
    potentials = list(potentials)
    if not potentials:
        raise InvalidInputError("volume_free_noise needs at least one potential")
    dim = _same_dim(*potentials)

    def fields(x):
        return np.stack([modular_field(a, reference, x) for a in potentials], axis=-2)

    return NoiseModel(dim, len(potentials), fields, jacobians, name=name, check=jacobians is not None)


def assemble_a_diffusion(bracket, noise, target, geometry=None, convention=Convention.STRATONOVICH, name=None):
    """Build the A-diffusion as a :class:`DiffusionSpec` with named drift terms."""
    parts = a_diffusion_terms(bracket, noise, target)
    spec = DiffusionSpec(
        geometry=geometry if geometry is not None else target.geometry,
        drift=_sum_parts(parts, target.dim),
        noise=noise,
        convention=Convention.STRATONOVICH,
        target=target,
        bracket=bracket,
        parts=parts,
        name=name or f"{target.name}/{bracket.name}/{noise.name}",
    )
    if Convention(convention) is Convention.ITO:
        spec = to_ito(spec)
    return spec


def assemble_obstruction(gamma_sharp, target, noise=None, geometry=None, name=None):
    """Pure obstruction drift plus the reversible noise part, on a flat torus."""
    geometry = target.geometry if geometry is None else geometry
    noise = NoiseModel.zero(target.dim) if noise is None else noise
    parts = {
        "obstruction": lambda x: torus_obstruction_drift(gamma_sharp, target, x, geometry),
        "noise_gradient": lambda x: noise_gradient_term(noise, target, x),
        "noise_divergence": lambda x: noise_divergence_term(noise, target, x),
    }
    return DiffusionSpec(
        geometry=geometry,
        drift=_sum_parts(parts, target.dim),
        noise=noise,
        convention=Convention.STRATONOVICH,
        obstruction=gamma_sharp,
        target=target,
        parts=parts,
        name=name or f"{target.name}/obstruction/{noise.name}",
    )


def to_ito(spec):
    """Explicit Stratonovich to Itô conversion: adds ``1/2 sum_i (dY_i) Y_i``."""
    if spec.convention is Convention.ITO:
        return spec
    noise = spec.noise
    parts = None
    if spec.parts is not None:
        parts = dict(spec.parts)
        parts["ito_correction"] = noise.ito_correction
        drift = _sum_parts(parts, spec.dim)
    else:
        base = spec.drift
        drift = lambda x: base(x) + noise.ito_correction(x)  # noqa: E731
    return replace(spec, drift=drift, parts=parts, convention=Convention.ITO)


def to_stratonovich(spec):
    """Explicit Itô to Stratonovich conversion."""
    if spec.convention is Convention.STRATONOVICH:
        return spec
    noise = spec.noise
    parts = None
    if spec.parts is not None and "ito_correction" in spec.parts:
        parts = {k: v for k, v in spec.parts.items() if k != "ito_correction"}
        drift = _sum_parts(parts, spec.dim)
    else:
        base = spec.drift
        drift = lambda x: base(x) - noise.ito_correction(x)  # noqa: E731
    return replace(spec, drift=drift, parts=parts, convention=Convention.STRATONOVICH)


def generator_apply(spec, f, x, grad_f=None, hess_f=None):
    """Generator applied to ``f`` at ``x``.

    Stratonovich: ``X . grad f + 1/2 sum_i Y_i . grad(Y_i . grad f)``.
    Itô: ``b . grad f + 1/2 tr(sigma sigma^T Hess f)``.
    Derivatives of ``f`` fall back to finite differences.
    """
    x = _as_points(x, spec.dim)
    gf = fd_gradient(f, x) if grad_f is None else np.asarray(grad_f(x), dtype=float)
    if hess_f is None:
        hf = fd_hessian(grad_f if grad_f is not None else (lambda z: fd_gradient(f, z)), x)
    else:
        hf = np.asarray(hess_f(x), dtype=float)
    y = spec.noise.field_values(x)
    out = np.einsum("...a,...a->...", spec.drift_at(x), gf)
    out = out + 0.5 * np.einsum("...ka,...ab,...kb->...", y, hf, y)
    if spec.convention is Convention.STRATONOVICH and spec.noise.n_fields:
        jac = spec.noise.jacobian_values(x)
        out = out + 0.5 * np.einsum("...a,...kab,...kb->...", gf, jac, y)
    return out


def gauge_shift(bracket, phi, grad_phi, measure=None, name=None):
    """Add the curl of a trivector potential ``phi e_1^e_2^e_3`` (dimension 3 only).

    The added bracket is ``B^{ij} = eps_ijk (d_k phi + phi d_k log m)`` for the
    measure ``m``. ``measure`` is a callable returning ``grad log m`` (default:
    Lebesgue). Its divergence with respect to ``m`` vanishes, so the modular
    field for ``m`` is unchanged.
    """
    if bracket.dim != 3:
        raise UnsupportedError("gauge shifts by trivector potentials are implemented for dimension 3 only")
    eps = np.zeros((3, 3, 3))
    for i, j, k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        eps[i, j, k] = 1.0
        eps[i, k, j] = -1.0
    grad_log_m = _zero_vector if measure is None else measure

    def added(x):
        w = grad_phi(x) + np.asarray(phi(x))[..., None] * grad_log_m(x)
        return np.einsum("ijk,...k->...ij", eps, w)

    def added_div(x):
        # symmetric second derivatives cancel against eps
        return np.einsum("ijk,...j,...k->...i", eps, grad_phi(x), grad_log_m(x))

    return AntisymmetricBracket(
        3,
        lambda x: bracket.matrix(x) + added(x),
        lambda x: bracket.divergence(x) + added_div(x),
        name=name or f"{bracket.name}+gauge",
        check=False,
    )
