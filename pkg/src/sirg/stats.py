"""Degree laws, clustering, typical distances and distribution comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import integrate, stats as sstats
from scipy.interpolate import PchipInterpolator
from scipy.sparse.csgraph import shortest_path

from .generator import SpatialGraph, sample_limit_ball
from .geometry import sphere_area
from .kernels import ConstantKernel, Kernel, declared_gamma
from .neighborhoods import NeighborhoodHistogram
from .weights import Constant

# reserved value for "no path"; compares larger than every real distance
UNREACHABLE = np.iinfo(np.int64).max


class StatsError(ValueError):
    pass


@dataclass
class RunningMoments:
    """Mergeable count / sum / sum of squares."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add(self, values) -> None:
        v = np.asarray(values, dtype=float).ravel()
        self.count += v.size
        self.total += float(v.sum())
        self.total_sq += float(np.dot(v, v))

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        return RunningMoments(self.count + other.count, self.total + other.total,
                              self.total_sq + other.total_sq)

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else math.nan

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return math.nan
        var = (self.total_sq - self.count * self.mean ** 2) / (self.count - 1)
        return math.sqrt(max(var, 0.0) / self.count)


# degrees

@dataclass(frozen=True)
class DegreeHistogram:
    counts: np.ndarray  # counts[k] = number of vertices of degree k

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_degrees(cls, degrees) -> "DegreeHistogram":
        deg = np.asarray(degrees, dtype=np.int64)
        return cls(np.bincount(deg) if deg.size else np.zeros(1, np.int64))

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def mean(self) -> float:
        k = np.arange(self.counts.shape[0])
        return float(np.dot(k, self.counts) / self.n)

    @property
    def second_factorial_moment(self) -> float:
        k = np.arange(self.counts.shape[0])
        return float(np.dot(k * (k - 1), self.counts) / self.n)

    def pmf(self) -> np.ndarray:
        return self.counts / self.n

    def merge(self, other: "DegreeHistogram") -> "DegreeHistogram":
        size = max(self.counts.shape[0], other.counts.shape[0])
        out = np.zeros(size, np.int64)
        out[:self.counts.shape[0]] += self.counts
        out[:other.counts.shape[0]] += other.counts
        return DegreeHistogram(out)


def degree_histogram(G: SpatialGraph) -> DegreeHistogram:
    return DegreeHistogram.from_degrees(G.degrees())


def degree_tail_expectation(degree_samples, M_grid) -> dict:
    """E[D 1{D > M}] for each M, from one or more arrays of sampled degrees."""
    if isinstance(degree_samples, np.ndarray) or not isinstance(degree_samples, (list, tuple)):
        degree_samples = [degree_samples]
    if len(degree_samples) == 0:
        raise StatsError("need at least one degree sample")
    deg = np.concatenate([np.asarray(s.degrees() if isinstance(s, SpatialGraph) else s,
                                     dtype=float) for s in degree_samples])
    return {int(M): float(np.mean(deg * (deg > M))) for M in M_grid}


# mixed Poisson degree law

@dataclass(frozen=True)
class MixingParameter:
    value: float
    cutoff: float
    tail_integral: float
    tail_bound: float


def _inner_expectation(kernel: Kernel, law, w0: float, mean_weight, sample):
    """t -> E[kappa(t, w0, W)] using a closed form where the weight does not matter."""
    if not kernel.weight_dependent or isinstance(kernel, ConstantKernel):
        return lambda t: float(kernel.limit(t, w0, 1.0, mean_weight))
    if isinstance(law, Constant):
        return lambda t: float(kernel.limit(t, w0, law.c, mean_weight))
    w0v = np.full(sample.shape[0], w0)

    def f(t):
        return float(np.mean(kernel.limit(np.full(sample.shape[0], t), w0v, sample, mean_weight)))
    return f


def _tail_setup(kernel, law, d, alpha, prefactor):
    alpha = declared_gamma(kernel, law) if alpha is None else alpha
    if not alpha > d:
        raise StatsError(f"declared tail exponent {alpha} must exceed d={d}: the mixing "
                         "integral diverges otherwise")
    A = kernel.prefactor if prefactor is None else prefactor
    return alpha, A


def mixing_parameter(kernel: Kernel, w0: float, weight_law, d: int = 1,
                     mean_weight: float | None = None, rng: np.random.Generator | None = None,
                     samples: int = 10_000, alpha: float | None = None,
                     prefactor: float | None = None, rel_tol: float = 1e-6,
                     weight_sample: np.ndarray | None = None) -> MixingParameter:
    """Lambda(w0) = s_{d-1} int_0^inf t^(d-1) E[kappa(t, w0, W)] dt.

    The cutoff T is grown until the analytic tail bound s A T^(d-alpha)/(alpha-d)
    drops below ``rel_tol`` times the estimate; the part beyond T is still
    integrated numerically and included. The inner expectation uses
    ``samples`` weight draws unless a closed form applies.
    """
    alpha, A = _tail_setup(kernel, weight_law, d, alpha, prefactor)
    if mean_weight is None and kernel.weight_dependent:
        mean_weight = weight_law.mean()
    if weight_sample is None and kernel.weight_dependent and not isinstance(weight_law, Constant):
        if rng is None:
            raise StatsError("a Monte Carlo inner expectation needs an rng")
        weight_sample = weight_law.sample(samples, rng)
    f = _inner_expectation(kernel, weight_law, w0, mean_weight, weight_sample)
    s = sphere_area(d)

    def integrand(t):
        return s * t ** (d - 1) * f(t)

    w_ref = float(np.median(weight_sample)) if weight_sample is not None else (
        weight_law.c if isinstance(weight_law, Constant) else 1.0)
    points = sorted(p for p in kernel.breakpoints(w0, w_ref, mean_weight) if p > 0)
    T = max([1.0] + [2.0 * p for p in points])
    while True:
        inner = [p for p in points if p < T]
        head = integrate.quad(integrand, 0.0, T, points=inner or None, limit=400,
                              epsabs=1e-13, epsrel=1e-11)[0]
        bound = s * A * T ** (d - alpha) / (alpha - d)
        if bound <= rel_tol * max(head, 1e-300) or T > 1e8 or head == 0.0:
            break
        T *= 4.0
    # beyond T the integrand decays like a power of t, so integrate in log t
    lo = math.log(T)
    tail = integrate.quad(lambda u: integrand(math.exp(u)) * math.exp(u), lo, lo + 60.0,
                          limit=400, epsabs=1e-14, epsrel=1e-10)[0]
    return MixingParameter(head + tail, T, tail, bound)


@dataclass(frozen=True)
class MixedPoissonPmf:
    k: np.ndarray
    pmf: np.ndarray
    stderr: np.ndarray
    max_lambda: float


def mixed_poisson_pmf(kernel: Kernel, weight_law, k, w0_samples: int, rng: np.random.Generator,
                      d: int = 1, mean_weight: float | None = None, samples: int = 10_000,
                      alpha: float | None = None, prefactor: float | None = None,
                      grid_points: int = 64) -> MixedPoissonPmf:
    """P(D = k) = E[Poi(Lambda(W0))(k)] averaged over ``w0_samples`` root weights.

    Lambda is evaluated exactly on a log-spaced grid of root weights and
    interpolated (monotone cubic in log-log coordinates) in between; for a
    kernel that ignores weights, or a constant law, Lambda is a single number.
    """
    k = np.atleast_1d(np.asarray(k, dtype=np.int64))
    alpha, A = _tail_setup(kernel, weight_law, d, alpha, prefactor)
    if mean_weight is None and kernel.weight_dependent:
        mean_weight = weight_law.mean()
    w0 = weight_law.sample(w0_samples, rng)
    sample = None
    if kernel.weight_dependent and not isinstance(weight_law, Constant):
        sample = weight_law.sample(samples, rng)

    def lam(w):
        return mixing_parameter(kernel, float(w), weight_law, d, mean_weight, alpha=alpha,
                                prefactor=A, weight_sample=sample).value

    if not kernel.weight_dependent or np.all(w0 == w0[0]):
        lam0 = np.full(w0.shape[0], lam(w0[0]))
    else:
        lo, hi = float(w0.min()), float(w0.max())
        if lo <= 0:
            grid = np.linspace(lo, hi, grid_points)
            values = np.array([lam(w) for w in grid])
            lam0 = PchipInterpolator(grid, values)(w0)
        else:
            grid = np.geomspace(lo, hi, grid_points)
            values = np.array([lam(w) for w in grid])
            if np.all(values > 0):
                interp = PchipInterpolator(np.log(grid), np.log(values))
                lam0 = np.exp(interp(np.log(w0)))
            else:
                lam0 = PchipInterpolator(np.log(grid), values)(np.log(w0))
    probs = sstats.poisson.pmf(k[None, :], lam0[:, None])
    pmf = probs.mean(axis=0)
    se = probs.std(axis=0, ddof=1) / math.sqrt(w0.shape[0]) if w0.shape[0] > 1 else np.zeros_like(pmf)
    return MixedPoissonPmf(k, pmf, se, float(lam0.max()))


# wedges, triangles and clustering

def _triangles_per_vertex(G: SpatialGraph) -> np.ndarray:
    """Number of triangles through each vertex."""
    if G.num_edges == 0:
        return np.zeros(G.n, dtype=np.int64)
    A = G.to_csr().astype(np.int64)
    # (A @ A)[v, u] counts common neighbors; restricting to edges gives twice the triangles at v
    paths = (A @ A).multiply(A)
    return np.asarray(paths.sum(axis=1)).ravel() // 2


def wedge_triangle_counts(G: SpatialGraph) -> tuple[int, int]:
    """(sum_v d_v (d_v - 1), six times the number of triangles)."""
    deg = G.degrees().astype(np.int64)
    wedges = int(np.sum(deg * (deg - 1)))
    return wedges, int(2 * _triangles_per_vertex(G).sum())


def global_clustering(G: SpatialGraph) -> float:
    wedges, tri = wedge_triangle_counts(G)
    return tri / wedges if wedges else 0.0


def _local_values(G: SpatialGraph) -> tuple[np.ndarray, np.ndarray]:
    deg = G.degrees().astype(np.int64)
    delta = 2 * _triangles_per_vertex(G)
    denom = deg * (deg - 1)
    cc = np.zeros(G.n)
    ok = denom > 0
    cc[ok] = delta[ok] / denom[ok]
    return deg, cc


def local_clustering(G: SpatialGraph) -> float:
    if G.n == 0:
        return 0.0
    return float(_local_values(G)[1].mean())


def clustering_function(G: SpatialGraph, k: int) -> float:
    """Mean local clustering over vertices of degree k (0 if there are none or k < 2)."""
    if k < 2:
        return 0.0
    deg, cc = _local_values(G)
    sel = deg == k
    return float(cc[sel].mean()) if sel.any() else 0.0


@dataclass(frozen=True)
class ClusteringReport:
    wedges: int
    triangles: int
    global_cc: float
    local_cc: float
    by_degree: dict


def clustering_report(G: SpatialGraph, ks=(2, 3, 4, 5)) -> ClusteringReport:
    wedges, tri = wedge_triangle_counts(G)
    deg, cc = _local_values(G)
    by_degree = {int(k): (float(cc[deg == k].mean()) if k >= 2 and np.any(deg == k) else 0.0)
                 for k in ks}
    return ClusteringReport(wedges, tri, tri / wedges if wedges else 0.0,
                            float(cc.mean()) if G.n else 0.0, by_degree)


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float


@dataclass(frozen=True)
class ConditionalClustering:
    value: float
    stderr: float
    hits: int
    low_confidence: bool


@dataclass(frozen=True)
class ClusteringLimit:
    replicas: int
    delta: Estimate          # E[Delta_0], twice the triangles at the root
    wedge: Estimate          # E[D (D - 1)]
    local: Estimate          # E[Delta_0 / (D (D - 1))], 0 when D < 2
    global_ratio: Estimate   # E[Delta_0] / E[D (D - 1)], delta-method error
    by_degree: dict = field(default_factory=dict)


def root_clustering_samples(kernel, weight_law, r: float, replicas: int, d: int,
                            rng: np.random.Generator, mean_weight: float | None = None):
    """Per-replica root degree and twice the root's triangle count in the limit ball."""
    if mean_weight is None and kernel.weight_dependent:
        mean_weight = weight_law.mean()
    D = np.zeros(replicas, np.int64)
    T = np.zeros(replicas, np.int64)
    for i in range(replicas):
        F = sample_limit_ball(kernel, weight_law, r, d, rng, mean_weight)
        adj = F.adjacency_lists
        nb = adj[0]
        D[i] = len(nb)
        if len(nb) > 1:
            s = set(nb)
            T[i] = sum(1 for u in nb for v in adj[u] if v in s)  # each edge twice
    return D, T


def limit_clustering_estimates(kernel, weight_law, r: float, replicas: int, d: int,
                               rng: np.random.Generator, mean_weight: float | None = None,
                               ks=(2, 3, 4, 5), min_hits: int = 30) -> ClusteringLimit:
    """Clustering targets of the limit graph, estimated from the root of limit balls.

    The degree-k target is E[Delta_0 | D = k] / (k (k - 1)), the same
    normalization as the finite clustering function.
    """
    if replicas < 2:
        raise StatsError("need at least two replicas")
    D, T = root_clustering_samples(kernel, weight_law, r, replicas, d, rng, mean_weight)
    return clustering_from_samples(D, T, ks, min_hits)


def clustering_from_samples(D, T, ks=(2, 3, 4, 5), min_hits: int = 30) -> ClusteringLimit:
    D = np.asarray(D, dtype=float)
    T = np.asarray(T, dtype=float)
    N = D.shape[0]
    ww = D * (D - 1)
    loc = np.where(ww > 0, T / np.where(ww > 0, ww, 1.0), 0.0)

    def est(x):
        return Estimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(N)))

    e_t, e_w = est(T), est(ww)
    if e_w.mean > 0:
        ratio = e_t.mean / e_w.mean
        cov = np.cov(T, ww, ddof=1) / N
        var = (cov[0, 0] - 2 * ratio * cov[0, 1] + ratio ** 2 * cov[1, 1]) / e_w.mean ** 2
        g = Estimate(ratio, math.sqrt(max(var, 0.0)))
    else:
        g = Estimate(0.0, 0.0)
    cond = {}
    for k in ks:
        sel = D == k
        hits = int(sel.sum())
        if k < 2 or hits == 0:
            cond[int(k)] = ConditionalClustering(0.0, math.nan, hits, True)
            continue
        vals = T[sel] / (k * (k - 1))
        se = float(vals.std(ddof=1) / math.sqrt(hits)) if hits > 1 else math.nan
        cond[int(k)] = ConditionalClustering(float(vals.mean()), se, hits, hits < min_hits)
    return ClusteringLimit(N, e_t, e_w, est(loc), g, cond)


# distances

def typical_distances(G: SpatialGraph, pairs: int, rng: np.random.Generator,
                      batch: int = 64) -> np.ndarray:
    """Graph distances between ``pairs`` independent uniform pairs of distinct vertices.

    Unreachable pairs get the ``UNREACHABLE`` sentinel.
    """
    if pairs < 1:
        raise StatsError("need at least one pair")
    if G.n < 2:
        raise StatsError("typical distances need at least two vertices")
    u = rng.integers(0, G.n, size=pairs)
    v = rng.integers(0, G.n, size=pairs)
    same = u == v
    while same.any():
        v[same] = rng.integers(0, G.n, size=int(same.sum()))
        same = u == v
    out = np.empty(pairs, dtype=np.int64)
    A = G.to_csr()
    sources, inverse = np.unique(u, return_inverse=True)
    for a in range(0, sources.shape[0], batch):
        src = sources[a:a + batch]
        dist = shortest_path(A, directed=False, unweighted=True, indices=src)
        sel = np.nonzero((inverse >= a) & (inverse < a + batch))[0]
        vals = dist[inverse[sel] - a, v[sel]]
        reach = np.isfinite(vals)
        out[sel[reach]] = vals[reach].astype(np.int64)
        out[sel[~reach]] = UNREACHABLE
    return out


@dataclass(frozen=True)
class DistanceExceedance:
    fraction: float
    stderr: float
    threshold: float
    critical_constant: float
    finite_fraction: float
    finite_mean: float


def critical_constant(alpha: float, d: float) -> float:
    """1 / log(alpha / (alpha - d))."""
    if not alpha > d:
        raise StatsError(f"need alpha > d, got alpha={alpha}, d={d}")
    return 1.0 / math.log(alpha / (alpha - d))


def distance_threshold_fraction(samples, n: int, C: float, alpha: float, d: float) -> DistanceExceedance:
    """Fraction of distances above C log log n (unreachable counts as above)."""
    if n < 16:
        raise StatsError("need n >= 16 so that log log n > 0")
    crit = critical_constant(alpha, d)
    s = np.asarray(samples, dtype=np.int64)
    if s.size == 0:
        raise StatsError("no distance samples")
    thr = C * math.log(math.log(n))
    finite = s != UNREACHABLE
    exceed = (~finite) | (s > thr)
    p = float(exceed.mean())
    return DistanceExceedance(p, math.sqrt(p * (1 - p) / s.size), thr, crit,
                              float(finite.mean()),
                              float(s[finite].mean()) if finite.any() else math.nan)


# comparison

def _as_pmf(h):
    if isinstance(h, NeighborhoodHistogram):
        return h.proportions()
    if isinstance(h, DegreeHistogram):
        return {k: p for k, p in enumerate(h.pmf()) if p > 0}
    if isinstance(h, MixedPoissonPmf):
        return dict(zip(h.k.tolist(), h.pmf.tolist()))
    if isinstance(h, Mapping):
        return dict(h)
    arr = np.asarray(h, dtype=float)
    if arr.ndim != 1:
        raise StatsError("a pmf array must be one-dimensional")
    return dict(enumerate(arr.tolist()))


def tv_distance(h1, h2) -> float:
    """Half the L1 distance between two distributions over the union of their supports."""
    if isinstance(h1, NeighborhoodHistogram) != isinstance(h2, NeighborhoodHistogram):
        if isinstance(h1, NeighborhoodHistogram) or isinstance(h2, NeighborhoodHistogram):
            raise StatsError("cannot compare a neighborhood histogram with a degree law")
    if isinstance(h1, NeighborhoodHistogram) and h1.tags != h2.tags:
        raise StatsError(f"histogram tags differ: {h1.tags} vs {h2.tags}")
    p, q = _as_pmf(h1), _as_pmf(h2)
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def binomial_pmf(n: int, p: float, kmax: int) -> np.ndarray:
    return sstats.binom.pmf(np.arange(kmax + 1), n, p)


def poisson_pmf(lam: float, kmax: int) -> np.ndarray:
    return sstats.poisson.pmf(np.arange(kmax + 1), lam)


__all__ = [
    "UNREACHABLE", "StatsError", "RunningMoments", "DegreeHistogram", "degree_histogram",
    "degree_tail_expectation", "MixingParameter", "mixing_parameter", "MixedPoissonPmf",
    "mixed_poisson_pmf", "wedge_triangle_counts", "global_clustering", "local_clustering",
    "clustering_function", "ClusteringReport", "clustering_report", "Estimate",
    "ConditionalClustering", "ClusteringLimit", "root_clustering_samples",
    "limit_clustering_estimates", "clustering_from_samples", "typical_distances",
    "DistanceExceedance", "critical_constant", "distance_threshold_fraction", "tv_distance",
    "binomial_pmf", "poisson_pmf",
]
