"""Chain statistics: batch-means error bars, ESS, moment reports, histogram KL traces."""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import InsufficientDataError, InvalidInputError

MIN_LENGTH = 100
KL_ALPHA = 1e-9


def _values(chain, observable):
    samples = chain.samples if hasattr(chain, "samples") else np.asarray(chain)
    samples = np.asarray(samples)
    if samples.ndim == 1:
        samples = samples[:, None]
    if len(samples) < MIN_LENGTH:
        raise InsufficientDataError(f"need at least {MIN_LENGTH} samples, got {len(samples)}")
    if observable is None:
        values = samples[:, 0]
    else:
        values = np.asarray(observable(samples))
    values = np.real_if_close(values).astype(float)
    if values.shape != (len(samples),):
        raise InvalidInputError("observable must return one real value per sample")
    return values


def batch_means_se(values):
    """Standard error of the mean from ``floor(sqrt(n))`` equal batches."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    n_batches = math.isqrt(n)
    size = n // n_batches
    means = values[: n_batches * size].reshape(n_batches, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(n_batches))


def ergodic_average(chain, observable=None):
    """``(mean, batch-means SE)`` of ``observable`` over the stored samples.

    ``observable`` maps the ``(K, d)`` sample array to ``K`` values; ``None``
    selects the first coordinate. A bare array may stand in for a chain.
    """
    values = _values(chain, observable)
    return float(np.mean(values)), batch_means_se(values)


def _autocovariance(x):
    n = len(x)
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    return np.fft.irfft(f * np.conj(f), size)[:n] / n


def effective_sample_size(chain, observable=None):
    """Initial positive sequence estimator; returns a value in ``(0, n]``.

    A chain with zero variance returns 1.0, the estimator floor.
    """
    values = _values(chain, observable)
    n = len(values)
    gamma = _autocovariance(values)
    if gamma[0] <= 0.0:
        return 1.0
    pairs = gamma[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    total = 0.0
    for k, p in enumerate(pairs):
        if p <= 0.0:
            break
        total += p if k == 0 else min(p, prev)
        prev = min(p, prev) if k else p
    tau = -1.0 + 2.0 * total / gamma[0]
    return float(min(n, max(n / tau, 1.0))) if tau > 0 else float(n)


@dataclass(frozen=True)
class MomentReport:
    name: str
    estimate: float
    se: float
    oracle: float
    provenance: str

    def __post_init__(self):
        if not self.se > 0:
            raise InsufficientDataError(f"moment {self.name!r}: standard error must be positive")

    @property
    def z(self):
        return (self.estimate - self.oracle) / self.se

    @property
    def passed(self):
        return abs(self.z) <= 4.0

    def to_dict(self):
        return {"name": self.name, "estimate": self.estimate, "se": self.se, "oracle": self.oracle,
                "provenance": self.provenance, "z": self.z}


def moment_report(chain, observable, name, oracle, provenance="derived"):
    mean, se = ergodic_average(chain, observable)
    return MomentReport(name, mean, se, float(oracle), provenance)


@dataclass(frozen=True)
class KLTrace:
    """Per-window ``(end iteration, KL, bootstrap SE)`` with the smoothing constant used."""

    entries: list
    alpha: float = KL_ALPHA
    bins: tuple = ()
    outside_fraction: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    @property
    def values(self):
        return np.array([e[1] for e in self.entries])

    def to_dict(self):
        return {"alpha": self.alpha, "bins": list(self.bins),
                "entries": [{"iteration": int(i), "kl": kl, "se": se} for i, kl, se in self.entries],
                "outside_fraction": list(self.outside_fraction)}


def _bin_edges(bounds, bins):
    return [np.linspace(lo, hi, nb + 1) for (lo, hi), nb in zip(bounds, bins)]


def target_bin_masses(log_density, bounds, bins, order=8):
    """Normalised target mass per bin by tensor Gauss-Legendre quadrature inside each bin."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    axes, wts = [], []
    for edges in _bin_edges(bounds, bins):
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * np.diff(edges)
        axes.append(mid[:, None] + half[:, None] * nodes[None, :])
        wts.append(half[:, None] * weights[None, :])
    if len(axes) == 1:
        lp = log_density(axes[0][..., None])
        vals = np.exp(lp - lp.max()) * wts[0]
        mass = vals.sum(axis=1)
    else:
        X = axes[0][:, None, :, None]
        Y = axes[1][None, :, None, :]
        pts = np.stack(np.broadcast_arrays(X, Y), axis=-1)
        lp = log_density(pts)
        w = wts[0][:, None, :, None] * wts[1][None, :, None, :]
        mass = (np.exp(lp - lp.max()) * w).sum(axis=(2, 3))
    return mass / mass.sum()


def _histogram(samples, edges):
    counts, _ = np.histogramdd(samples, bins=edges)
    return counts


def _kl(counts, masses, alpha):
    p = (counts + alpha) / (counts.sum() + alpha * counts.size)
    q = masses / masses.sum()
    good = q > 0
    if np.any(p[~good] > alpha):
        return math.inf
    return float(np.sum(p[good] * np.log(p[good] / q[good])))


def histogram_kl(chain, target, bounds, bins, windows=10, alpha=KL_ALPHA, bootstrap=0, rng=None):
    """Histogram KL divergence from the target over chain windows.

    ``target`` is a log-density callable on ``(..., d)`` points or an array of
    bin masses. An integer ``windows`` gives that many growing prefixes
    ``samples[:cut_k]`` with equally spaced cuts; a list of ``(start, stop)``
    sample index pairs is used as given. With ``bootstrap > 0`` each window also gets a moving
    block bootstrap SE using blocks of length ``floor(sqrt(n))``.
    """
    samples = np.asarray(chain.samples if hasattr(chain, "samples") else chain, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    d = samples.shape[1]
    if d > 2:
        raise InvalidInputError("histogram_kl supports dim <= 2")
    bounds = [tuple(map(float, b)) for b in np.broadcast_to(np.asarray(bounds, dtype=float), (d, 2))]
    bins = tuple(int(b) for b in np.broadcast_to(np.asarray(bins), (d,)))
    masses = np.asarray(target, dtype=float) if not callable(target) else target_bin_masses(target, bounds, bins)
    if masses.shape != bins:
        raise InvalidInputError(f"target masses must have shape {bins}")
    edges = _bin_edges(bounds, bins)
    if isinstance(windows, (int, np.integer)):
        cuts = np.linspace(0, len(samples), int(windows) + 1).astype(int)
        windows = [(0, c) for c in cuts[1:]]
    iterations = getattr(chain, "iterations", np.arange(len(samples)))
    rng = np.random.default_rng(0) if rng is None else rng
    entries, outside = [], []
    for start, stop in windows:
        w = samples[start:stop]
        if len(w) == 0:
            raise InsufficientDataError("empty KL window")
        kl = _kl(_histogram(w, edges), masses, alpha)
        inside = np.all([(w[:, k] >= edges[k][0]) & (w[:, k] <= edges[k][-1]) for k in range(d)], axis=0)
        outside.append(float(1.0 - inside.mean()))
        se = float("nan")
        if bootstrap:
            n = len(w)
            block = max(1, math.isqrt(n))
            n_blocks = -(-n // block)
            reps = []
            for _ in range(int(bootstrap)):
                starts = rng.integers(0, n - block + 1, n_blocks)
                idx = (starts[:, None] + np.arange(block)[None, :]).reshape(-1)[:n]
                reps.append(_kl(_histogram(w[idx], edges), masses, alpha))
            se = float(np.std(reps, ddof=1))
        entries.append((int(iterations[stop - 1]), kl, se))
    return KLTrace(entries, alpha, bins, outside)
