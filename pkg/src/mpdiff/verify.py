"""Numerical checks of stationarity, current, generator structure and volume.

Grid residuals use the equivalent Itô form of the stationary Fokker-Planck
operator on the Lebesgue density ``p_L = exp(-H~ + rho)``:

    L* p = -d_j (b^j p) + d_j d_k (D^{jk} p)

with ``b`` the Itô drift. Derivatives are second-order central differences:
three-point second differences on the diagonal and the four-point centred
stencil for mixed terms. Residuals are divided by the grid maximum of ``p``.
"""

from dataclasses import dataclass, field
import enum
import functools
import math

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import InvalidInputError, SamplingError, UnsupportedError
from .geometry import FlatTorus
from .numerics import combine, dot, fd_jacobian, matvec
from .recipe import (
    Convention,
    conservative_field,
    target_divergences,
    to_ito,
    to_stratonovich,
)

DENSITY_JUMP_LIMIT = 10.0
TAIL_MASS_LIMIT = 1e-8
NEUTRAL_TOL = 1e-8
_JAC_REL_STEP = 1e-6


class BoundaryPolicy(str, enum.Enum):
    TRUNCATE_INTERIOR = "truncate_interior"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid of ``m`` points per axis.

    Truncated grids include both endpoints of ``bounds``; periodic grids cover
    ``[a, a + L)`` with spacing ``L / m``. With ``stride > 1`` the stencils
    still use the grid spacing but are evaluated only at every ``stride``-th
    node along each axis, so fine spacings stay affordable in three dimensions.
    """

    dim: int
    bounds: tuple
    m: int
    policy: BoundaryPolicy = BoundaryPolicy.TRUNCATE_INTERIOR
    stride: int = 1

    def __post_init__(self):
        if not 1 <= self.dim <= 3:
            raise InvalidInputError(f"grids support dim 1..3, got {self.dim}")
        if self.m < 8:
            raise InvalidInputError(f"points_per_axis must be >= 8, got {self.m}")
        if self.stride < 1:
            raise InvalidInputError("stride must be a positive integer")
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        if len(bounds) != self.dim or any(not b > a for a, b in bounds):
            raise InvalidInputError("bounds must give one increasing (lo, hi) pair per axis")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "policy", BoundaryPolicy(self.policy))

    @classmethod
    def for_torus(cls, torus, m, stride=1):
        return cls(torus.dim, tuple((0.0, p) for p in torus.period), m, BoundaryPolicy.PERIODIC, stride)

    @property
    def periodic(self):
        return self.policy is BoundaryPolicy.PERIODIC

    @property
    def spacing(self):
        if self.periodic:
            return np.array([(b - a) / self.m for a, b in self.bounds])
        return np.array([(b - a) / (self.m - 1) for a, b in self.bounds])

    def axes(self):
        h = self.spacing
        return [a + h[j] * np.arange(self.m) for j, (a, _) in enumerate(self.bounds)]

    def points(self):
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def sampled_indices(self):
        """Node indices per axis used when ``stride > 1``; kept 4 cells from a truncated boundary."""
        if self.periodic:
            return np.arange(0, self.m, self.stride)
        span = self.m - 9
        start = 4 + (span % self.stride) // 2
        return np.arange(start, self.m - 4, self.stride)

    def to_dict(self):
        return {
            "dim": self.dim,
            "bounds": [list(b) for b in self.bounds],
            "points_per_axis": self.m,
            "policy": self.policy.value,
            "stride": self.stride,
        }


@dataclass(frozen=True)
class ResidualReport:
    max_abs: float
    l2: float
    h: float
    refinement_ratio: float = None
    name: str = ""
    kind: str = "fokker_planck"
    warnings: tuple = ()
    tolerance: float = None

    @property
    def passed(self):
        return self.tolerance is None or self.max_abs <= self.tolerance

    def to_dict(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "max_abs": self.max_abs,
            "l2": self.l2,
            "h": self.h,
            "refinement_ratio": self.refinement_ratio,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "warnings": list(self.warnings),
        }


class _Layout:
    """Where field values live and how to read them at a node offset.

    Full layout: arrays of shape ``(m,)*n + extra`` and offsets are periodic
    rolls (wrapped values only reach nodes excluded by the masks). Sampled
    layout: arrays of shape ``(K, S) + extra`` for ``K`` nodes and ``S``
    stencil offsets.
    """

    def __init__(self, grid):
        self.grid = grid
        self.h = grid.spacing
        n = grid.dim
        self.full = grid.stride == 1
        if self.full:
            self.points = grid.points()
            self.masks = {k: self._mask(2 * k) for k in (1, 2)}
        else:
            offsets = {(0,) * n}
            for k in (1, 2):
                for j in range(n):
                    for s in (1, -1):
                        e = [0] * n
                        e[j] = s * k
                        offsets.add(tuple(e))
                for j in range(n):
                    for i in range(j + 1, n):
                        for sj in (1, -1):
                            for si in (1, -1):
                                e = [0] * n
                                e[j], e[i] = sj * k, si * k
                                offsets.add(tuple(e))
            self.offsets = sorted(offsets)
            self.index = {o: i for i, o in enumerate(self.offsets)}
            idx = grid.sampled_indices()
            axes = [ax[idx] for ax in grid.axes()]
            nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
            off = np.asarray(self.offsets, dtype=float) * self.h
            self.nodes = nodes
            self.points = nodes[:, None, :] + off[None, :, :]
            self.masks = {k: np.ones(len(nodes), dtype=bool) for k in (1, 2)}

    def _mask(self, margin):
        n, m = self.grid.dim, self.grid.m
        if self.grid.periodic:
            return np.ones((m,) * n, dtype=bool)
        keep = np.zeros(m, dtype=bool)
        keep[margin : m - margin] = True
        mask = np.ones((m,) * n, dtype=bool)
        for j in range(n):
            shape = [1] * n
            shape[j] = m
            mask &= keep.reshape(shape)
        return mask

    def center(self, a):
        return a if self.full else a[:, self.index[(0,) * self.grid.dim]]

    def at(self, a, offset):
        if self.full:
            return np.roll(a, tuple(-o for o in offset), axis=tuple(range(self.grid.dim)))
        return a[:, self.index[tuple(offset)]]

    def _e(self, *pairs):
        e = [0] * self.grid.dim
        for j, s in pairs:
            e[j] += s
        return tuple(e)

    def divergence(self, flux, k=1):
        """``sum_j d_j flux[..., j]`` with step ``k h``."""
        out = 0.0
        for j in range(self.grid.dim):
            fj = flux[..., j]
            out = out + (self.at(fj, self._e((j, k))) - self.at(fj, self._e((j, -k)))) / (2.0 * k * self.h[j])
        return out

    def second(self, g, k=1):
        """``sum_jk d_j d_k g[..., j, k]`` for symmetric ``g`` with step ``k h``."""
        n = self.grid.dim
        out = 0.0
        for j in range(n):
            gjj = g[..., j, j]
            hj = k * self.h[j]
            out = out + (self.at(gjj, self._e((j, k))) - 2.0 * self.center(gjj) + self.at(gjj, self._e((j, -k)))) / hj**2
            for i in range(j + 1, n):
                gji = g[..., j, i]
                pp = self.at(gji, self._e((j, k), (i, k)))
                pm = self.at(gji, self._e((j, k), (i, -k)))
                mp = self.at(gji, self._e((j, -k), (i, k)))
                mm = self.at(gji, self._e((j, -k), (i, -k)))
                out = out + 2.0 * (pp - pm - mp + mm) / (4.0 * hj * k * self.h[i])
        return out

    def reduce(self, residual, k=1):
        r = residual[self.masks[k]]
        vol = float(np.prod(self.h)) * self.grid.stride**self.grid.dim
        return float(np.max(np.abs(r))), float(np.sqrt(np.sum(r * r) * vol))

    def warnings(self, target):
        grid = self.grid
        n = grid.dim
        if self.full:
            p = _density(target, self.points)
            pairs = []
            for j in range(n):
                a, b = p, np.roll(p, -1, axis=j)
                if not grid.periodic:
                    sl = [slice(None)] * n
                    sl[j] = slice(0, grid.m - 1)
                    a, b = a[tuple(sl)], b[tuple(sl)]
                pairs.append((a, b))
            ptail, rim = p, ~self._mask(2)
        else:
            p = _density(target, self.points)
            c = self.center(p)
            pairs = [(c, self.at(p, self._e((j, 1)))) for j in range(n)]
            # tail mass on a coarse full grid over the same box
            mt = min(grid.m, 64)
            tgrid = GridSpec(n, grid.bounds, mt, grid.policy)
            ptail = _density(target, tgrid.points())
            rim = ~_Layout(tgrid)._mask(2)
        warnings = []
        for a, b in pairs:
            big, small = np.maximum(a, b), np.minimum(a, b)
            relevant = big > 1e-8
            if np.any(small[relevant] * DENSITY_JUMP_LIMIT < big[relevant]):
                warnings.append("grid_too_coarse")
                break
        if not grid.periodic:
            total = float(np.sum(ptail))
            if total > 0 and float(np.sum(ptail[rim])) / total > TAIL_MASS_LIMIT:
                warnings.append("tail_mass_at_boundary")
        return tuple(warnings)


def _density(target, pts):
    logp = target.log_p(pts)
    return np.exp(logp - np.max(logp))


def _ratio(layout, coarse, fine):
    """``max|res(2h)| / max|res(h)|`` over nodes valid for both spacings."""
    mask = layout.masks[2]
    cmax = float(np.max(np.abs(coarse[mask])))
    fmax = float(np.max(np.abs(fine[mask])))
    if fmax < 1e-13 or cmax < 1e-13:
        return None
    return cmax / fmax


@dataclass
class _FP:
    layout: _Layout
    density: np.ndarray
    residual: dict
    by_term: dict


def _fp_pieces(spec, target, grid, spacings=(1, 2), per_term=False):
    if spec.dim != grid.dim:
        raise InvalidInputError(f"spec has dim {spec.dim} but grid has dim {grid.dim}")
    ito = to_ito(spec)
    lay = _Layout(grid)
    pts = lay.points
    p = _density(target, pts)
    g = ito.noise.diffusion_matrix(pts) * p[..., None, None] if ito.noise.n_fields else None
    parts = ito.parts if ito.parts else {"drift": ito.drift}
    fluxes = {name: part(pts) * p[..., None] for name, part in parts.items()}
    total_flux = sum(fluxes.values())
    residual = {}
    for k in spacings:
        r = -lay.divergence(total_flux, k)
        if g is not None:
            r = r + lay.second(g, k)
        residual[k] = r
    by_term = {name: -lay.divergence(f, 1) for name, f in fluxes.items()} if per_term else {}
    return _FP(lay, p, residual, by_term)


def fokker_planck_residual(spec, target=None, grid=None, tolerance=None, refine=True, name=None):
    """Stationary Fokker-Planck residual of ``target`` under ``spec``.

    ``max_abs`` and ``l2`` use step ``h``; ``refinement_ratio`` is the ratio of
    max residuals with steps ``2h`` and ``h`` at the same nodes.
    """
    target = spec.target if target is None else target
    fp = _fp_pieces(spec, target, grid, (1, 2) if refine else (1,))
    lay = fp.layout
    max_abs, l2 = lay.reduce(fp.residual[1])
    ratio = _ratio(lay, fp.residual[2], fp.residual[1]) if refine else None
    return ResidualReport(
        max_abs, l2, float(np.max(grid.spacing)), ratio, name or spec.name, "fokker_planck", lay.warnings(target), tolerance
    )


@dataclass(frozen=True)
class MutantReport:
    """Residual after deleting one drift term.

    ``neutral`` marks terms that preserve the target on their own (or vanish);
    deleting them cannot change the stationarity residual.
    """

    term: str
    max_abs: float
    baseline: float
    neutral: bool
    term_flux: float

    @property
    def amplification(self):
        return self.max_abs / self.baseline if self.baseline > 0 else math.inf

    def to_dict(self):
        return {
            "term": self.term,
            "max_abs": self.max_abs,
            "baseline": self.baseline,
            "neutral": self.neutral,
            "term_flux": self.term_flux,
            "amplification": self.amplification,
        }


def term_flux_divergence(part, target, x):
    """Pointwise ``div(p_L T) / p_L`` of a drift term by finite differences of the analytic field."""
    jac = fd_jacobian(part, x)
    return np.trace(jac, axis1=-2, axis2=-1) + dot(part(x), target.grad_log_p(x))


def fokker_planck_analysis(spec, target=None, grid=None, tolerance=None, name=None):
    """Residual report plus one :class:`MutantReport` per named drift term.

    Neutrality is decided off the grid stencil: the pointwise divergence
    ``div(p_L T)`` of the deleted term, divided by the max of ``p_L``, must be
    below ``1e-8`` at every evaluation node.
    """
    target = spec.target if target is None else target
    ito = to_ito(spec)
    if not ito.parts:
        raise InvalidInputError("spec has no named drift terms to delete")
    fp = _fp_pieces(spec, target, grid, (1, 2), per_term=True)
    lay = fp.layout
    full = fp.residual[1]
    max_abs, l2 = lay.reduce(full)
    report = ResidualReport(
        max_abs,
        l2,
        float(np.max(grid.spacing)),
        _ratio(lay, fp.residual[2], full),
        name or spec.name,
        "fokker_planck",
        lay.warnings(target),
        tolerance,
    )
    nodes = lay.center(lay.points)
    pnode = lay.center(fp.density)
    mutants = []
    for term, part in ito.parts.items():
        mutant = full - fp.by_term[term]
        flux = float(np.max(np.abs(term_flux_divergence(part, target, nodes) * pnode)))
        mutants.append(MutantReport(term, lay.reduce(mutant)[0], max_abs, flux <= NEUTRAL_TOL, flux))
    return report, mutants


def mutant_residuals(spec, target=None, grid=None):
    """Residual for every single-term deletion; see :func:`fokker_planck_analysis`."""
    return fokker_planck_analysis(spec, target, grid)[1]


def current_residual(spec, target=None, grid=None, tolerance=None, refine=True, name=None):
    """Fokker-Planck current ``J = 1/2 div_P(Y_i) Y_i - X``.

    Reversible specs report ``max |J|`` over the nodes. Otherwise the report
    is ``div(p_L J) / max p_L`` by central differences, i.e. ``div_P J``
    weighted by the normalised density.
    """
    target = spec.target if target is None else target
    strat = to_stratonovich(spec)

    def current(pts):
        y = strat.noise.field_values(pts)
        dp = target_divergences(strat.noise, target, pts)
        return 0.5 * combine(dp, y) - strat.drift(pts)

    lay = _Layout(grid)
    h = float(np.max(grid.spacing))
    if spec.reversible:
        j = current(lay.center(lay.points))
        max_abs, l2 = lay.reduce(np.sqrt(np.sum(j * j, axis=-1)))
        return ResidualReport(max_abs, l2, h, None, name or spec.name, "current", (), tolerance)
    pts = lay.points
    flux = current(pts) * _density(target, pts)[..., None]
    fine = lay.divergence(flux, 1)
    max_abs, l2 = lay.reduce(fine)
    ratio = _ratio(lay, lay.divergence(flux, 2), fine) if refine else None
    return ResidualReport(
        max_abs, l2, h, ratio, name or spec.name, "current_divergence", lay.warnings(target), tolerance
    )


# sampling oracle and test functions


@dataclass(frozen=True)
class Bump:
    """Compactly supported ``exp(-1 / (1 - r^2 / R^2))`` centred at ``center``."""

    center: tuple
    radius: float

    def _parts(self, x):
        c = np.asarray(self.center, dtype=float)
        d = np.asarray(x, dtype=float) - c
        s = np.sum(d * d, axis=-1) / self.radius**2
        inside = s < 1.0
        u = np.where(inside, 1.0 - s, 1.0)
        val = np.where(inside, np.exp(-1.0 / u), 0.0)
        return d, s, u, inside, val

    def __call__(self, x):
        return self._parts(x)[4]

    def gradient(self, x):
        d, s, u, inside, val = self._parts(x)
        # f = exp(-1/u), u = 1 - |d|^2/R^2, df/dd = f * (-2 d / R^2) / u^2
        coef = np.where(inside, -2.0 * val / (self.radius**2 * u * u), 0.0)
        return coef[..., None] * d

    def hessian(self, x):
        d, s, u, inside, val = self._parts(x)
        r2 = self.radius**2
        n = d.shape[-1]
        # f' chain: g = a(u) d with a = -2 f / (R^2 u^2); da/du = -2/R^2 (f/u^4 - 2 f/u^3)
        a = -2.0 * val / (r2 * u * u)
        da_du = -2.0 / r2 * (val / u**4 - 2.0 * val / u**3)
        du_dd = -2.0 / r2
        outer = np.einsum("...a,...b->...ab", d, d)
        hess = a[..., None, None] * np.eye(n) + (da_du * du_dd)[..., None, None] * outer
        return np.where(inside[..., None, None], hess, 0.0)


class _AxisMarginal:
    """One coordinate of a separable target, as a one-dimensional target."""

    def __init__(self, target, axis):
        self.target, self.axis, self.dim = target, axis, 1
        geometry = target.geometry
        self.geometry = FlatTorus(1, (geometry.period[axis],)) if isinstance(geometry, FlatTorus) else None

    def log_p(self, t):
        t = np.asarray(t, dtype=float)
        x = np.zeros(t.shape[:-1] + (self.target.dim,))
        x[..., self.axis] = t[..., 0]
        return self.target.log_p(x)


class RejectionSampler:
    """Exact samples from a built-in target by rejection from a dominating law.

    Euclidean targets use a centred Gaussian proposal; torus targets use the
    uniform law on one period. Separable targets are sampled one coordinate
    at a time. The envelope constant is found by numerical
    maximisation of the log ratio plus a small safety margin.
    """

    MAX_FAILURE_RATE = 0.999
    MARGIN = 1e-6

    def __init__(self, target, proposal_scale=None):
        self.target = target
        self.dim = target.dim
        self.torus = isinstance(target.geometry, FlatTorus)
        if self.torus:
            self.period = np.asarray(target.geometry.period)
        else:
            self.scale = float(proposal_scale) if proposal_scale is not None else self._default_scale()
        self.axes = None
        if self.dim > 1 and self._separable():
            self.axes = [RejectionSampler(_AxisMarginal(target, j), proposal_scale) for j in range(self.dim)]
            return
        self.log_m = self._envelope() + self.MARGIN

    def _separable(self):
        """Whether ``log p`` splits into a sum over coordinates (checked at random points)."""
        x = self._propose(np.random.default_rng(1), 16) if self.torus else 2.0 * np.random.default_rng(1).standard_normal((16, self.dim))
        origin = np.zeros(self.dim)
        total = -(self.dim - 1) * float(self.target.log_p(origin))
        for j in range(self.dim):
            e = np.zeros_like(x)
            e[:, j] = x[:, j]
            total = total + self.target.log_p(e)
        full = self.target.log_p(x)
        return bool(np.all(np.abs(full - total) <= 1e-10 * (1.0 + np.abs(full))))

    def _default_scale(self):
        # wide enough to dominate every built-in Euclidean target
        return 1.4

    def _log_ratio(self, x):
        lp = self.target.log_p(x)
        if self.torus:
            return lp
        return lp + 0.5 * np.sum(x * x, axis=-1) / self.scale**2

    def _envelope(self):
        n = self.dim
        if self.torus:
            starts = self.period * np.random.default_rng(0).random((64, n))
        else:
            starts = np.concatenate([np.zeros((1, n)), 3.0 * np.random.default_rng(0).uniform(-1, 1, (64, n))])
        best = np.max(self._log_ratio(starts))
        for x0 in starts[np.argsort(-self._log_ratio(starts))[:8]]:
            res = scipy.optimize.minimize(lambda z: -float(self._log_ratio(z)), x0, method="Nelder-Mead",
                                          options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
            if np.isfinite(res.fun):
                best = max(best, -res.fun)
        return float(best)

    def _propose(self, rng, k):
        if self.torus:
            return self.period * rng.random((k, self.dim))
        return self.scale * rng.standard_normal((k, self.dim))

    def sample(self, n, rng, batch=None):
        if self.axes is not None:
            return np.concatenate([a.sample(n, rng, batch) for a in self.axes], axis=1)
        batch = batch or max(1024, 2 * n)
        out, have, tried = [], 0, 0
        while have < n:
            x = self._propose(rng, batch)
            lr = self._log_ratio(x) - self.log_m
            if np.any(lr > 0):
                raise SamplingError("rejection envelope was exceeded; the target is not dominated")
            keep = np.log(rng.random(batch)) < lr
            tried += batch
            out.append(x[keep])
            have += int(np.count_nonzero(keep))
            if tried >= 10 * batch and have <= (1.0 - self.MAX_FAILURE_RATE) * tried:
                raise SamplingError(f"rejection sampler failure rate above {self.MAX_FAILURE_RATE:.1%}")
        return np.concatenate(out)[:n]


@dataclass(frozen=True)
class GeneratorDefect:
    """Monte Carlo z-scores of three identities that hold exactly under the target.

    ``dissipativity_mean`` is ``E[f L_S f]``, which must be non-positive; its
    z-score tests the identity ``E[f L_S f] = -1/2 E[sum_i (Y_i f)^2]``.
    """

    antisym_z: float
    sym_z: float
    dissipativity_z: float
    antisym_mean: float
    sym_mean: float
    dissipativity_mean: float
    n_mc: int
    name: str = ""

    @property
    def passed(self):
        zs = (self.antisym_z, self.sym_z, self.dissipativity_z)
        return all(abs(z) <= 4.0 for z in zs) and self.dissipativity_mean <= 0.0

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


_CHUNK = 1 << 16


def _chunks(n):
    for start in range(0, n, _CHUNK):
        yield slice(start, start + _CHUNK)


@dataclass(frozen=True, eq=False)
class TestFunctionData:
    """Values, gradients and Hessians of two test functions on a sample set."""

    __test__ = False

    x: np.ndarray
    fv: np.ndarray
    hv: np.ndarray
    gf: np.ndarray
    gh: np.ndarray
    Hf: np.ndarray
    Hh: np.ndarray

    @classmethod
    def evaluate(cls, f, h, x):
        x = np.asarray(x, dtype=float)
        n, d = x.shape
        out = [np.empty(n), np.empty(n), np.empty((n, d)), np.empty((n, d)), np.empty((n, d, d)), np.empty((n, d, d))]
        for sl in _chunks(n):
            xc = x[sl]
            for arr, val in zip(out, (f(xc), h(xc), f.gradient(xc), h.gradient(xc), f.hessian(xc), h.hessian(xc))):
                arr[sl] = val
        return cls(x, *out)

    @functools.cached_property
    def active(self):
        """Indices where any value or derivative is nonzero; every integrand vanishes elsewhere."""
        n = len(self.x)
        mask = (self.fv != 0) | (self.hv != 0)
        for arr in (self.gf, self.gh, self.Hf, self.Hh):
            mask |= np.any(arr.reshape(n, -1) != 0, axis=1)
        return np.flatnonzero(mask)


@dataclass(frozen=True, eq=False)
class SymmetricPieces:
    """Per-sample integrands of the symmetric and dissipativity identities for one noise model.

    ``L_S f = 1/2 (tr(S Hess f) + grad f . u)`` with ``S = sum_i Y_i Y_i^T`` and
    ``u = sum_i (dY_i Y_i + div_P(Y_i) Y_i)``.
    """

    data: TestFunctionData
    sym: np.ndarray
    diss: np.ndarray
    f_ls_f: np.ndarray


def _ls_coefficients(noise, target, xc):
    y = noise.field_values(xc)
    jac = noise.jacobian_values(xc)
    div_p = np.einsum("...ii->...", jac) + matvec(y, target.grad_rho(xc) - target.grad_energy(xc))
    S = np.matmul(np.swapaxes(y, -1, -2), y)
    u = np.sum(matvec(jac, y), axis=-2) + combine(div_p, y)
    return S, u


def symmetric_pieces(noise, target, data):
    """Evaluate the symmetric-part integrands on ``data`` (a :class:`TestFunctionData`)."""
    n = len(data.x)
    sym, diss, fls = np.zeros(n), np.zeros(n), np.zeros(n)
    if noise.n_fields:
        act = data.active
        for sl in _chunks(len(act)):
            i = act[sl]
            S, u = _ls_coefficients(noise, target, data.x[i])
            gf, gh = data.gf[i], data.gh[i]
            lsf = 0.5 * (np.einsum("...ij,...ij->...", S, data.Hf[i]) + dot(gf, u))
            lsh = 0.5 * (np.einsum("...ij,...ij->...", S, data.Hh[i]) + dot(gh, u))
            sym[i] = data.hv[i] * lsf - data.fv[i] * lsh
            fls[i] = data.fv[i] * lsf
            diss[i] = fls[i] + 0.5 * dot(gf, matvec(S, gf))
    return SymmetricPieces(data, sym, diss, fls)


def symmetric_part_apply(noise, target, f_grad, f_hess, x):
    """``1/2 div_P(sum_i Y_i(f) Y_i)`` at ``x``."""
    x = np.asarray(x, dtype=float)
    if noise.n_fields == 0:
        return np.zeros(x.shape[:-1])
    S, u = _ls_coefficients(noise, target, x)
    return 0.5 * (np.sum(S * f_hess(x), axis=(-1, -2)) + dot(f_grad(x), u))


def _z(values):
    values = np.asarray(values, dtype=float)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(values.size))
    if se == 0.0:
        return (0.0 if mean == 0.0 else math.copysign(math.inf, mean)), mean
    return mean / se, mean


def default_test_functions(target):
    """Two overlapping bumps placed in the bulk of a built-in target."""
    n = target.dim
    if isinstance(target.geometry, FlatTorus):
        L = np.asarray(target.geometry.period)
        return Bump(tuple(0.45 * L), 0.3 * float(L.min())), Bump(tuple(0.6 * L), 0.3 * float(L.min()))
    shift = np.array([0.3, -0.2, 0.1][:n])
    return Bump(tuple(shift), 1.6), Bump(tuple(-shift + 0.4), 1.4)


def generator_symmetry_defect(spec, target=None, f=None, h=None, n_mc=10**6, rng=None, samples=None, pieces=None):
    """Monte Carlo z-scores for the generator's structure under the target.

    * antisymmetric: ``E[(X_A f) h + f (X_A h)] = E[X_A(f h)] = 0``, with ``X_A``
      the conservative field of the bracket;
    * symmetric: ``E[h L_S f - f L_S h] = 0`` with ``L_S f = 1/2 div_P(S grad f)``;
    * dissipativity: ``E[f L_S f + 1/2 sum_i (Y_i f)^2] = 0``.

    ``pieces`` from :func:`symmetric_pieces` may be shared between specs with
    the same noise, target and samples; they fix the test functions too.
    """
    target = spec.target if target is None else target
    if pieces is None:
        if f is None or h is None:
            f0, h0 = default_test_functions(target)
            f, h = f or f0, h or h0
        if samples is None:
            rng = np.random.default_rng(0) if rng is None else rng
            samples = RejectionSampler(target).sample(n_mc, rng)
        pieces = symmetric_pieces(spec.noise, target, TestFunctionData.evaluate(f, h, samples))
    data = pieces.data
    x = data.x
    anti = np.zeros(len(x))
    bracket = spec.bracket
    if bracket is not None and not bracket.is_zero:
        act = data.active
        for sl in _chunks(len(act)):
            i = act[sl]
            xa = conservative_field(bracket, target, x[i])
            anti[i] = dot(xa, data.gf[i] * data.hv[i, None] + data.fv[i, None] * data.gh[i])
    az, am = _z(anti)
    sz, sm = _z(pieces.sym)
    dz, _ = _z(pieces.diss)
    return GeneratorDefect(az, sz, dz, am, sm, float(np.mean(pieces.f_ls_f)), len(x), spec.name)


# volume and KL


def fd_jacobian_matrix(func, x, fd_step=None):
    """Central-difference Jacobian of a map R^d -> R^d, step ``1e-6 (1 + |x_j|)``."""
    x = np.asarray(x, dtype=float)
    d = x.size
    steps = _JAC_REL_STEP * (1.0 + np.abs(x)) if fd_step is None else np.broadcast_to(fd_step, x.shape)
    cols = []
    for j in range(d):
        xp, xm = x.copy(), x.copy()
        xp[j] += steps[j]
        xm[j] -= steps[j]
        # divide by the representable step so linear maps differentiate exactly
        cols.append((np.asarray(func(xp), float) - np.asarray(func(xm), float)) / (xp[j] - xm[j]))
    return np.stack(cols, axis=1)


def volume_jacobian_check(step_map, points, fd_step=None):
    """Worst ``|det J - 1|`` of a deterministic map over the given points."""
    worst = 0.0
    for x in points:
        worst = max(worst, abs(float(np.linalg.det(fd_jacobian_matrix(step_map, x, fd_step))) - 1.0))
    return worst


def gaussian_kl(m0, s0, m1, s1):
    """``KL(N(m0, s0) || N(m1, s1))``."""
    m0, m1 = np.atleast_1d(m0).astype(float), np.atleast_1d(m1).astype(float)
    s0, s1 = np.atleast_2d(s0).astype(float), np.atleast_2d(s1).astype(float)
    k = m0.size
    c1 = scipy.linalg.cho_factor(s1)
    dm = m1 - m0
    tr = np.trace(scipy.linalg.cho_solve(c1, s0))
    quad = float(dm @ scipy.linalg.cho_solve(c1, dm))
    logdet1 = 2.0 * np.sum(np.log(np.diag(c1[0])))
    sign0, logdet0 = np.linalg.slogdet(s0)
    if sign0 <= 0:
        raise InvalidInputError("initial covariance must be positive definite")
    return 0.5 * (tr + quad - k + logdet1 - logdet0)


def linear_drift_coefficients(spec, probe_scale=1.0, tol=1e-9):
    """Return ``(B, c)`` with ``drift(x) = B x + c`` or raise if the drift is not affine or noise not constant."""
    n = spec.dim
    ito = to_ito(spec) if spec.convention is Convention.STRATONOVICH else spec
    c = ito.drift_at(np.zeros(n))
    eye = np.eye(n)
    B = np.stack([ito.drift_at(probe_scale * eye[j]) - c for j in range(n)], axis=1) / probe_scale
    probes = probe_scale * np.random.default_rng(7).standard_normal((8, n))
    pred = probes @ B.T + c
    if not np.allclose(ito.drift_at(probes), pred, rtol=tol, atol=tol * (1 + np.abs(pred).max())):
        raise UnsupportedError("kl_decay_trace needs a linear drift; use the histogram KL diagnostic instead")
    sig = ito.noise.sigma(probes)
    if not np.allclose(sig, sig[0], rtol=0, atol=1e-12):
        raise UnsupportedError("kl_decay_trace needs constant noise")
    return B, c, ito.noise.sigma(np.zeros(n))


def kl_decay_trace(spec, initial_mean, initial_cov, times, target_mean=None, target_cov=None):
    """Exact ``KL(law(X_t) || P)`` along a linear SDE started from a Gaussian.

    Moments follow ``m(t) = e^{Bt}(m0 - m*) + m*`` and
    ``S(t) = e^{Bt}(S0 - S*)e^{B^T t} + S*``. If no target moments are given,
    the stationary law ``(m*, S*)`` of the process is used.
    """
    B, c, sigma = linear_drift_coefficients(spec)
    if np.max(np.linalg.eigvals(B).real) >= 0:
        raise UnsupportedError("linear drift is not stable; no stationary Gaussian law")
    m_star = np.linalg.solve(B, -c)
    s_star = scipy.linalg.solve_continuous_lyapunov(B, -sigma @ sigma.T)
    s_star = 0.5 * (s_star + s_star.T)
    tm = m_star if target_mean is None else np.asarray(target_mean, float)
    ts = s_star if target_cov is None else np.asarray(target_cov, float)
    m0 = np.atleast_1d(np.asarray(initial_mean, dtype=float))
    s0 = np.atleast_2d(np.asarray(initial_cov, dtype=float))
    out = []
    for t in times:
        e = scipy.linalg.expm(B * float(t))
        mt = e @ (m0 - m_star) + m_star
        st = e @ (s0 - s_star) @ e.T + s_star
        out.append((float(t), float(gaussian_kl(mt, 0.5 * (st + st.T), tm, ts))))
    return out


def underdamped_linear_spec(stiffness, mass, friction, geometry=None):
    """Itô spec of ``dq = M^-1 p dt``, ``dp = (-K q - C M^-1 p) dt + sqrt(2C) dW``."""
    from .recipe import DiffusionSpec, NoiseModel

    K = np.atleast_2d(np.asarray(stiffness, float))
    M = np.atleast_2d(np.asarray(mass, float))
    C = np.atleast_2d(np.asarray(friction, float))
    n = K.shape[0]
    minv = np.linalg.inv(M)
    top = np.hstack([np.zeros((n, n)), minv])
    bottom = np.hstack([-K, -C @ minv])
    B = np.vstack([top, bottom])
    evals, evecs = np.linalg.eigh(0.5 * (C + C.T))
    root = evecs @ np.diag(np.sqrt(np.clip(2.0 * evals, 0.0, None))) @ evecs.T
    sigma = np.vstack([np.zeros((n, n)), root])
    return DiffusionSpec(
        geometry=geometry,
        drift=lambda x: np.asarray(x) @ B.T,
        noise=NoiseModel.constant(sigma, name="underdamped"),
        convention=Convention.ITO,
        name="underdamped_linear",
    )


@dataclass(frozen=True)
class VerifyCase:
    """One named check for the ``verify`` subcommand."""

    name: str
    kind: str
    spec: object
    grid: GridSpec
    tolerance: float
    extra: dict = field(default_factory=dict)
