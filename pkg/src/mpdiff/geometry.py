"""Sample-space backends: Euclidean space, flat tori, matrix Lie groups and spheres.

Geometry objects are immutable; every operation is a pure function of its
arguments.
"""

from dataclasses import dataclass, field
import enum
import itertools

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, InvalidPointError

SO3_SMALL_ANGLE = 1e-4


@dataclass(frozen=True)
class EuclideanSpace:
    dim: int
    name = "euclidean"

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError(f"dim must be a positive integer, got {self.dim}")

    def wrap(self, x):
        return np.asarray(x, dtype=float)

    def origin(self):
        return np.zeros(self.dim)


@dataclass(frozen=True)
class FlatTorus:
    """Product of circles ``[0, period_j)``; points are wrapped when written."""

    dim: int
    period: tuple = None
    name = "torus"

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError(f"dim must be a positive integer, got {self.dim}")
        period = (1.0,) * self.dim if self.period is None else self.period
        period = tuple(float(p) for p in np.broadcast_to(np.asarray(period, dtype=float), (self.dim,)))
        if any(not np.isfinite(p) or p <= 0 for p in period):
            raise InvalidInputError(f"torus periods must be positive, got {period}")
        object.__setattr__(self, "period", period)

    def wrap(self, x):
        p = np.asarray(self.period)
        w = np.mod(np.asarray(x, dtype=float), p)
        # np.mod can return exactly `p` for tiny negative inputs
        return np.where(w >= p, w - p, w)

    def origin(self):
        return np.zeros(self.dim)


class Flavor(str, enum.Enum):
    SOn = "SOn"
    SUn = "SUn"


def _so_basis(n):
    if n == 3:
        # ordering matches the hat map: xi_1 generates rotations about the x-axis
        basis = np.zeros((3, 3, 3))
        for k, (i, j) in enumerate([(2, 1), (0, 2), (1, 0)]):
            basis[k, i, j] = 1.0
            basis[k, j, i] = -1.0
        return basis / np.sqrt(2.0)
    pairs = list(itertools.combinations(range(n), 2))
    basis = np.zeros((len(pairs), n, n))
    for k, (i, j) in enumerate(pairs):
        basis[k, j, i] = 1.0
        basis[k, i, j] = -1.0
    return basis / np.sqrt(2.0)


def _gell_mann(n):
    mats = []
    for j in range(n):
        for k in range(j + 1, n):
            m = np.zeros((n, n), dtype=complex)
            m[j, k] = m[k, j] = 1.0
            mats.append(m)
            m = np.zeros((n, n), dtype=complex)
            m[j, k] = -1j
            m[k, j] = 1j
            mats.append(m)
    for ell in range(1, n):
        m = np.zeros((n, n), dtype=complex)
        m[np.arange(ell), np.arange(ell)] = 1.0
        m[ell, ell] = -ell
        mats.append(np.sqrt(2.0 / (ell * (ell + 1))) * m)
    return np.array(mats)


def _su_basis(n):
    # Tr(lambda_a lambda_b) = 2 delta_ab, so xi = i lambda / sqrt(2) has -Tr(xi_a xi_b) = delta_ab
    return 1j * _gell_mann(n) / np.sqrt(2.0)


def pairing(a, b):
    """Real inner product ``Re Tr(a^H b)`` on matrices (``= -Tr(ab)`` for skew ``a``)."""
    return float(np.real(np.vdot(a, b)))


@dataclass(frozen=True, eq=False)
class MatrixLieGroup:
    """SO(n) or SU(n) with an orthonormal basis of its Lie algebra.

    Use :meth:`so` or :meth:`su` rather than calling the constructor directly.
    """

    matrix_dim: int
    algebra_basis: np.ndarray
    flavor: Flavor
    metric_matrix: np.ndarray = field(default=None)

    def __post_init__(self):
        basis = np.asarray(self.algebra_basis)
        n = self.matrix_dim
        if basis.ndim != 3 or basis.shape[1:] != (n, n):
            raise InvalidInputError(f"algebra basis must have shape (n_g, {n}, {n})")
        flavor = Flavor(self.flavor)
        object.__setattr__(self, "flavor", flavor)
        basis = basis.astype(complex if flavor is Flavor.SUn else float)
        basis.setflags(write=False)
        object.__setattr__(self, "algebra_basis", basis)
        metric = np.eye(len(basis)) if self.metric_matrix is None else np.asarray(self.metric_matrix, float)
        if metric.shape != (len(basis), len(basis)) or not np.allclose(metric, metric.T):
            raise InvalidInputError("metric_matrix must be a symmetric n_g x n_g matrix")
        if np.linalg.eigvalsh(metric).min() <= 0:
            raise InvalidInputError("metric_matrix must be positive definite")
        metric.setflags(write=False)
        object.__setattr__(self, "metric_matrix", metric)
        for xi in basis:
            if not np.allclose(xi, -xi.conj().T, atol=1e-12):
                raise InvalidInputError("algebra basis elements must be skew(-Hermitian)")
            if flavor is Flavor.SUn and abs(np.trace(xi)) > 1e-12:
                raise InvalidInputError("su(n) basis elements must be traceless")
        gram = np.real(np.einsum("iab,jab->ij", basis.conj(), basis))
        if np.max(np.abs(gram - np.eye(len(basis)))) > 1e-12:
            raise InvalidInputError("algebra basis is not orthonormal under Re Tr(a^H b)")

    @classmethod
    def so(cls, n):
        return cls(n, _so_basis(n), Flavor.SOn)

    @classmethod
    def su(cls, n):
        return cls(n, _su_basis(n), Flavor.SUn)

    @property
    def name(self):
        if self.flavor is Flavor.SOn and self.matrix_dim == 3:
            return "so3"
        return "sun" if self.flavor is Flavor.SUn else f"so{self.matrix_dim}"

    @property
    def dim(self):
        """Dimension ``n_g`` of the Lie algebra."""
        return len(self.algebra_basis)

    @property
    def dtype(self):
        return complex if self.flavor is Flavor.SUn else float

    @property
    def bi_invariant(self):
        return bool(np.array_equal(self.metric_matrix, np.eye(self.dim)))

    def identity(self):
        return np.eye(self.matrix_dim, dtype=self.dtype)

    def hat(self, v):
        """Algebra element ``sum_i v_i xi_i``."""
        return np.tensordot(np.asarray(v, dtype=float), self.algebra_basis, axes=(0, 0))

    def vee(self, a):
        """Coefficients of an algebra element in the orthonormal basis."""
        return np.real(np.einsum("iab,ab->i", self.algebra_basis.conj(), a))

    def membership_error(self, g):
        """``||g^H g - I||_F`` plus, for SU(n), ``|det g - 1|``."""
        g = np.asarray(g)
        err = np.linalg.norm(g.conj().T @ g - np.eye(self.matrix_dim))
        return float(err + abs(np.linalg.det(g) - 1.0))

    def check_element(self, g, tol=1e-8):
        g = np.asarray(g)
        if g.shape != (self.matrix_dim, self.matrix_dim):
            raise InvalidInputError(f"group element must be {self.matrix_dim}x{self.matrix_dim}, got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise InvalidPointError("group element has non-finite entries")
        err = self.membership_error(g)
        if err > tol:
            raise InvalidPointError(f"matrix is not in {self.name} (error {err:.3g})")
        return g


@dataclass(frozen=True)
class EmbeddedSphere:
    """Unit sphere ``S^{k-1}`` inside ``R^k``."""

    ambient_dim: int
    name = "sphere"

    def __post_init__(self):
        if int(self.ambient_dim) != self.ambient_dim or self.ambient_dim < 2:
            raise InvalidInputError("ambient_dim must be an integer >= 2")

    @property
    def dim(self):
        return self.ambient_dim - 1

    def north_pole(self):
        q = np.zeros(self.ambient_dim)
        q[-1] = 1.0
        return q

    def check_point(self, q, tol=1e-10):
        q = np.asarray(q, dtype=float)
        if q.shape != (self.ambient_dim,):
            raise InvalidInputError(f"sphere point must have length {self.ambient_dim}")
        if not np.all(np.isfinite(q)) or abs(np.linalg.norm(q) - 1.0) > tol:
            raise InvalidPointError("point is not on the unit sphere")
        return q


def _rodrigues(w):
    theta2 = float(w @ w)
    theta = np.sqrt(theta2)
    if theta < SO3_SMALL_ANGLE:
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    k = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    return np.eye(3) + a * k + b * (k @ k)


def lie_exp(xi, group):
    """Group element ``exp(sum_i xi_i e_i)`` for algebra coefficients ``xi``.

    SO(3) uses the closed Rodrigues form; everything else goes through
    scaling-and-squaring Pade (``scipy.linalg.expm``).
    """
    v = np.asarray(xi, dtype=float)
    if v.shape != (group.dim,):
        raise InvalidInputError(f"expected {group.dim} algebra coefficients, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("algebra coefficients must be finite")
    if group.flavor is Flavor.SOn and group.matrix_dim == 3:
        return _rodrigues(v / np.sqrt(2.0))
    return scipy.linalg.expm(group.hat(v))


def algebra_force(group, g, dV):
    """Components ``Re Tr(dV^T g xi_i)``: derivative of V along ``t -> g exp(t xi_i)``.

    ``dV`` is the ambient gradient. For complex groups it is taken as
    ``dV/dRe(g) - i dV/dIm(g)``, so that ``V(g + d) ~ V(g) + Re Tr(dV^T d)``.
    """
    n = group.matrix_dim
    g = np.asarray(g)
    dV = np.asarray(dV)
    if g.shape != (n, n) or dV.shape != (n, n):
        raise InvalidInputError(f"g and dV must both be {n}x{n}, got {g.shape} and {dV.shape}")
    m = dV.T @ g
    return np.real(np.einsum("ab,iba->i", m, group.algebra_basis))


def project_horizontal(q, w):
    """Orthogonal projection of an ambient vector onto the tangent space at ``q``."""
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    if q.shape != w.shape or q.ndim != 1:
        raise InvalidInputError("q and w must be 1-d vectors of equal length")
    qq = float(q @ q)
    if not np.isfinite(qq) or abs(np.sqrt(qq) - 1.0) > 1e-6:
        raise InvalidPointError(f"|q| = {np.sqrt(qq):.6g} is not 1")
    return w - (float(q @ w) / qq) * q


def sphere_geodesic(q, v, t):
    """Great-circle flow for time ``t`` from ``(q, v)``; returns ``(q(t), v(t))``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    if q.shape != v.shape or q.ndim != 1:
        raise InvalidInputError("q and v must be 1-d vectors of equal length")
    if abs(np.linalg.norm(q) - 1.0) > 1e-10:
        raise InvalidInputError("q is not on the unit sphere")
    if abs(float(q @ v)) > 1e-10:
        raise InvalidInputError("v is not tangent at q")
    speed = float(np.linalg.norm(v))
    if speed == 0.0:
        return q.copy(), v.copy()
    c, s = np.cos(speed * t), np.sin(speed * t)
    qt = c * q + (s / speed) * v
    vt = c * v - (s * speed) * q
    # keep the invariants at round-off level over long trajectories
    qt = qt / np.linalg.norm(qt)
    vt = vt - float(qt @ vt) * qt
    return qt, vt


def haar_sample(group, rng, size=None):
    """Haar-distributed elements via QR of a Gaussian matrix (Mezzadri's sign fix)."""
    n = group.matrix_dim
    shape = (n, n) if size is None else (size, n, n)
    z = rng.standard_normal(shape)
    if group.flavor is Flavor.SUn:
        z = (z + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    ph = d / np.abs(d)
    q = q * ph[..., None, :]
    det = np.linalg.det(q)
    if group.flavor is Flavor.SOn:
        q[..., :, 0] *= np.sign(det)[..., None] if size is not None else np.sign(det)
    else:
        fix = det ** (-1.0 / n)
        q = q * (fix[..., None, None] if size is not None else fix)
    return q


def geometry_from_name(name, **params):
    """Build a geometry from its config name."""
    if name == "euclidean":
        return EuclideanSpace(int(params.get("dim", 1)))
    if name == "torus":
        return FlatTorus(int(params.get("dim", 1)), params.get("period"))
    if name == "so3":
        return MatrixLieGroup.so(3)
    if name == "sun":
        return MatrixLieGroup.su(int(params.get("n", 2)))
    if name == "sphere":
        return EmbeddedSphere(int(params.get("ambient_dim", 3)))
    raise InvalidInputError(f"unknown geometry {name!r}")


def lie_log(g, group):
    """Algebra coefficients ``v`` with ``lie_exp(v) = g`` for ``g`` near the identity."""
    g = np.asarray(g)
    if group.flavor is Flavor.SOn and group.matrix_dim == 3:
        cos_t = np.clip(0.5 * (np.trace(g).real - 1.0), -1.0, 1.0)
        theta = float(np.arccos(cos_t))
        axis = np.array([g[2, 1] - g[1, 2], g[0, 2] - g[2, 0], g[1, 0] - g[0, 1]])
        if theta < SO3_SMALL_ANGLE:
            factor = 0.5 + theta * theta / 12.0
        else:
            factor = theta / (2.0 * np.sin(theta))
        return np.sqrt(2.0) * factor * axis
    return group.vee(scipy.linalg.logm(g))
