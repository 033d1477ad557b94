"""Sampling finite SIRGs, native hyperbolic random graphs and limit balls."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .geometry import (BallSpec, BoxSpec, PointCloud, sample_poisson_ball,
                       sample_uniform_box, wrap_difference)
from .kernels import Kernel, PhrgLimit, ThrgLimit, hyperbolic_distance
from .weights import (HrgRadial, WeightVector, hrg_radius, hrg_transform,
                      sample_weights)

# rows of the exact sampler are processed in blocks of about this many pairs
_EXACT_BLOCK_PAIRS = 1 << 22
# above this bound a grid block is enumerated pair by pair instead of thinned
_DENSE_BLOCK_UB = 0.25


class GenerationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpatialGraph:
    """Undirected simple graph on located, weighted vertices (CSR adjacency)."""

    locations: PointCloud
    weights: WeightVector
    indptr: np.ndarray
    indices: np.ndarray
    kernel_id: str = ""
    seed: int | None = None
    metric: str = "euclidean"
    root: int | None = None
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.locations)
        if len(self.weights) != n or self.indptr.shape[0] != n + 1:
            raise GenerationError("vertex counts of locations, weights and adjacency differ")
        for a in (self.indptr, self.indices):
            a.setflags(write=False)

    @classmethod
    def from_edges(cls, ei, ej, locations: PointCloud, weights: WeightVector, **meta):
        n = len(locations)
        ei = np.asarray(ei, dtype=np.int64)
        ej = np.asarray(ej, dtype=np.int64)
        if ei.size and (min(ei.min(), ej.min()) < 0 or max(ei.max(), ej.max()) >= n):
            raise GenerationError("edge endpoint out of range")
        if np.any(ei == ej):
            raise GenerationError("self-loops are not allowed")
        lo, hi = np.minimum(ei, ej), np.maximum(ei, ej)
        key = np.unique(lo * n + hi)
        lo, hi = key // n, key % n
        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        return cls(locations, weights, indptr, dst.astype(np.int64), **meta)

    @property
    def n(self) -> int:
        return len(self.locations)

    @property
    def num_edges(self) -> int:
        return self.indices.shape[0] // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def adjacency_lists(self) -> list:
        """Neighbor lists as Python lists, for vertex-by-vertex traversal."""
        flat = self.indices.tolist()
        ptr = self.indptr.tolist()
        return [flat[ptr[v]:ptr[v + 1]] for v in range(self.n)]

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Edges as (i, j) arrays with i < j, sorted lexicographically."""
        src = np.repeat(np.arange(self.n), self.degrees())
        keep = src < self.indices
        return src[keep], self.indices[keep]

    def edge_set(self) -> set:
        i, j = self.edges()
        return set(zip(i.tolist(), j.tolist()))

    def to_csr(self) -> sp.csr_matrix:
        data = np.ones(self.indices.shape[0], dtype=np.int8)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def with_root(self, root: int) -> "SpatialGraph":
        if not 0 <= root < self.n:
            raise GenerationError(f"root {root} out of range")
        return SpatialGraph(self.locations, self.weights, self.indptr, self.indices,
                            self.kernel_id, self.seed, self.metric, root, self.aux)


def _pair_distances(y, i, j, metric, side):
    diff = y[i] - y[j]
    if metric == "torus":
        diff = wrap_difference(diff, side)
    return np.sqrt(np.sum(diff * diff, axis=1))


def _exact_edges(n, prob, rng):
    """Bernoulli trial for every pair i < j; ``prob(i, j)`` gives probabilities.

    Pairs are visited in row-major order with one uniform per pair, so two
    calls with equal-state generators see identical uniforms.
    """
    out_i, out_j = [], []
    rows = max(1, _EXACT_BLOCK_PAIRS // max(n, 1))
    for a in range(0, n, rows):
        b = min(n, a + rows)
        ii, jj = np.triu_indices(n - a, k=1, m=n - a)
        keep = ii < b - a
        ii, jj = ii[keep] + a, jj[keep] + a
        if ii.size == 0:
            continue
        u = rng.uniform(size=ii.size)
        hit = u < prob(ii, jj)
        out_i.append(ii[hit])
        out_j.append(jj[hit])
    if not out_i:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(out_i), np.concatenate(out_j)


def _expand_blocks(cnt_a, cnt_b):
    """Enumerate all (block, qa, qb) with qa < cnt_a[block], qb < cnt_b[block]."""
    sizes = cnt_a * cnt_b
    block = np.repeat(np.arange(sizes.shape[0]), sizes)
    offs = np.arange(block.shape[0]) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    cb = cnt_b[block]
    return block, offs // cb, offs % cb


def _distinct_subsets(sizes, counts, rng):
    """A uniform random subset of ``counts[b]`` indices from range(sizes[b]), per block.

    Draws with replacement and redraws the shortfall after removing duplicates;
    the result is exchangeable, hence a uniform subset.
    """
    blocks = np.zeros(0, np.int64)
    picks = np.zeros(0, np.int64)
    need = counts.astype(np.int64).copy()
    while need.sum() > 0:
        nb = np.repeat(np.arange(sizes.shape[0]), need)
        new = rng.integers(0, sizes[nb])
        blocks = np.concatenate([blocks, nb])
        picks = np.concatenate([picks, new])
        key = np.unique(np.stack([blocks, picks]), axis=1)
        blocks, picks = key[0], key[1]
        need = counts - np.bincount(blocks, minlength=sizes.shape[0])
    return blocks, picks


def _weight_layers(w, kernel):
    if not kernel.weight_dependent:
        return np.zeros(w.shape[0], np.int64)
    wmin = w.min()
    layer = np.floor(np.log2(w / wmin)).astype(np.int64)
    return np.clip(layer, 0, 63)


def _grid_supported(kernel, w, metric):
    if metric != "euclidean":
        return "the grid sampler works on the Euclidean box only"
    if kernel.weight_dependent and (w.size and (w.min() <= 0 or not np.all(np.isfinite(w)))):
        return "the grid sampler needs positive finite weights"
    probe = kernel.upper_bound(np.array([1.0]), w[:1], w[:1], w[:1], w[:1], max(w.size, 1),
                               float(w.sum()) if w.size else 1.0)
    if probe is None:
        return f"{kernel.kernel_id} exposes no distance-monotone upper bound"
    return None


def _grid_edges(y, w, kernel, n, side, total_weight, rng):
    """Exact edge sampling accelerated by a hierarchy of cells.

    Every pair of points is assigned to one block: a pair of level-0 cells
    that touch, or a pair of level-m cells that do not touch but whose parent
    cells do. Blocks of touching cells are enumerated; in the others, pairs
    are split further by weight layer and thinned against the kernel's upper
    bound at the block's minimum distance, then accepted with p / bound.
    """
    count, d = y.shape
    levels = max(0, int(math.floor(math.log2(side)))) if side >= 1 else 0
    s0 = side / 2 ** levels
    top = 2 ** levels
    c0 = np.clip(np.floor((y + side / 2.0) / s0).astype(np.int64), 0, top - 1)
    layer = _weight_layers(w, kernel)
    n_layers = int(layer.max()) + 1 if count else 1
    found_i, found_j = [], []

    def accept(ia, ib, bound):
        dist = _pair_distances(y, ia, ib, "euclidean", side)
        p = np.asarray(kernel.finite(dist, w[ia], w[ib], n, total_weight), dtype=float)
        if np.any(p > bound * (1 + 1e-9) + 1e-12):
            raise GenerationError("kernel upper bound violated in grid sampler")
        u = rng.uniform(size=ia.shape[0])
        with np.errstate(invalid="ignore", divide="ignore"):
            hit = u * bound < p
        found_i.append(ia[hit])
        found_j.append(ib[hit])

    for m in range(levels + 1):
        cells_per_dim = 2 ** (levels - m)
        cm = c0 >> m
        lin = np.ravel_multi_index(tuple(cm.T), (cells_per_dim,) * d) if count else np.zeros(0, np.int64)
        if m == 0:
            order = np.argsort(lin, kind="stable")
            slin = lin[order]
            cells, start, cnt = np.unique(slin, return_index=True, return_counts=True)
            ccoord = np.stack(np.unravel_index(cells, (cells_per_dim,) * d), axis=1)
            # same cell
            blk, qa, qb = _expand_blocks(cnt, cnt)
            keep = qa < qb
            ia = order[start[blk[keep]] + qa[keep]]
            ib = order[start[blk[keep]] + qb[keep]]
            if ia.size:
                accept(ia, ib, np.ones(ia.shape[0]))
            # touching distinct cells
            for delta in np.ndindex(*(3,) * d):
                delta = np.array(delta) - 1
                if not delta.any():
                    continue
                a_idx, b_idx = _neighbor_cells(cells, ccoord, delta, cells_per_dim)
                if a_idx.size == 0:
                    continue
                blk, qa, qb = _expand_blocks(cnt[a_idx], cnt[b_idx])
                ia = order[start[a_idx[blk]] + qa]
                ib = order[start[b_idx[blk]] + qb]
                accept(ia, ib, np.ones(ia.shape[0]))
        if cells_per_dim <= 2:
            break
        # groups = (level-m cell, weight layer), points sorted by group
        key = lin * n_layers + layer
        order = np.argsort(key, kind="stable")
        skey = key[order]
        gkey, gstart, gcnt = np.unique(skey, return_index=True, return_counts=True)
        sw = w[order]
        gwlo = np.minimum.reduceat(sw, gstart)
        gwhi = np.maximum.reduceat(sw, gstart)
        gcell = gkey // n_layers
        cells, cfirst, cng = np.unique(gcell, return_index=True, return_counts=True)
        ccoord = np.stack(np.unravel_index(cells, (cells_per_dim,) * d), axis=1)
        s_m = s0 * 2 ** m
        for delta in np.ndindex(*(7,) * d):
            delta = np.array(delta) - 3
            if np.abs(delta).max() < 2:
                continue
            a_idx, b_idx = _neighbor_cells(cells, ccoord, delta, cells_per_dim, parent_touch=True)
            if a_idx.size == 0:
                continue
            gap = s_m * np.sqrt(np.sum(np.maximum(np.abs(delta) - 1, 0) ** 2))
            gap *= 1 - 1e-9
            # all group pairs between the two cells
            pb, ga, gb = _expand_blocks(cng[a_idx], cng[b_idx])
            ga = cfirst[a_idx[pb]] + ga
            gb = cfirst[b_idx[pb]] + gb
            size = gcnt[ga] * gcnt[gb]
            bound = np.asarray(kernel.upper_bound(
                np.full(ga.shape[0], gap), gwlo[ga], gwhi[ga], gwlo[gb], gwhi[gb],
                n, total_weight), dtype=float)
            dense = bound > _DENSE_BLOCK_UB
            if dense.any():
                blk, qa, qb = _expand_blocks(gcnt[ga[dense]], gcnt[gb[dense]])
                ia = order[gstart[ga[dense]][blk] + qa]
                ib = order[gstart[gb[dense]][blk] + qb]
                accept(ia, ib, np.ones(ia.shape[0]))
            sparse = ~dense & (bound > 0)
            if not sparse.any():
                continue
            ga, gb, size, bound = ga[sparse], gb[sparse], size[sparse], bound[sparse]
            k = rng.binomial(size, bound)
            live = k > 0
            if not live.any():
                continue
            ga, gb, size, bound, k = ga[live], gb[live], size[live], bound[live], k[live]
            blk, q = _distinct_subsets(size, k, rng)
            ia = order[gstart[ga[blk]] + q // gcnt[gb[blk]]]
            ib = order[gstart[gb[blk]] + q % gcnt[gb[blk]]]
            accept(ia, ib, bound[blk])
    if not found_i:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(found_i), np.concatenate(found_j)


def _neighbor_cells(cells, ccoord, delta, cells_per_dim, parent_touch=False):
    """Index pairs (a, b) of nonempty cells with coord(b) = coord(a) + delta.

    Only pairs with lin(b) > lin(a) are returned so each cell pair appears once.
    """
    target = ccoord + delta
    ok = np.all((target >= 0) & (target < cells_per_dim), axis=1)
    if parent_touch:
        ok &= np.all(np.abs((target >> 1) - (ccoord >> 1)) <= 1, axis=1)
    a_idx = np.nonzero(ok)[0]
    if a_idx.size == 0:
        return a_idx, a_idx
    tlin = np.ravel_multi_index(tuple(target[a_idx].T), (cells_per_dim,) * ccoord.shape[1])
    pos = np.searchsorted(cells, tlin)
    pos = np.minimum(pos, cells.shape[0] - 1)
    hit = (cells[pos] == tlin) & (tlin > cells[a_idx])
    return a_idx[hit], pos[hit]


def sample_edges(points: np.ndarray, weights: np.ndarray, kernel: Kernel, n: int,
                 rng: np.random.Generator, mode: str = "exact", metric: str = "euclidean",
                 side: float | None = None, total_weight: float | None = None):
    """Edges of a finite SIRG on given blown-up locations and weights.

    Returns (i, j) arrays. ``mode`` is "exact" (all pairs) or "grid"; both
    sample each pair independently with probability
    ``kernel.finite(distance, w_i, w_j, n, total_weight)``.
    """
    y = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    count = y.shape[0]
    if side is None:
        side = float(n) ** (1.0 / y.shape[1])
    if total_weight is None:
        total_weight = float(w.sum())
    if mode == "grid":
        reason = _grid_supported(kernel, w, metric)
        if reason is None:
            return _grid_edges(y, w, kernel, n, side, total_weight, rng)
        warnings.warn(f"falling back to exact sampling: {reason}", stacklevel=2)
    elif mode != "exact":
        raise GenerationError(f"unknown mode {mode!r}")

    def prob(i, j):
        dist = _pair_distances(y, i, j, metric, side)
        return kernel.finite(dist, w[i], w[j], n, total_weight)

    return _exact_edges(count, prob, rng)


def _seed_of(rng):
    seq = getattr(rng.bit_generator, "seed_seq", None)
    entropy = getattr(seq, "entropy", None)
    return entropy if isinstance(entropy, int) else None


def generate_finite(n: int, d: int, kernel: Kernel, weight_law, rng: np.random.Generator,
                    metric: str = "euclidean", mode: str = "exact") -> SpatialGraph:
    """A finite SIRG: n uniform points on the blown-up box with i.i.d. weights.

    Locations, weights and edges use three substreams spawned from ``rng``,
    so exact and grid mode see the same vertices for the same seed.
    """
    if n < 1:
        raise GenerationError(f"need n >= 1, got {n}")
    loc_rng, w_rng, e_rng = rng.spawn(3)
    box = BoxSpec.blown_up(n, d)
    cloud = sample_uniform_box(n, box, loc_rng)
    wv = sample_weights(weight_law, n, w_rng)
    ei, ej = sample_edges(cloud.points, wv.values, kernel, n, e_rng, mode=mode,
                          metric=metric, side=box.side, total_weight=wv.total)
    return SpatialGraph.from_edges(ei, ej, cloud, wv, kernel_id=kernel.kernel_id,
                                   seed=_seed_of(rng), metric=metric)


def sample_limit_ball(kernel: Kernel, weight_law, radius: float, d: int,
                      rng: np.random.Generator, mean_weight: float | None = None) -> SpatialGraph:
    """The infinite SIRG seen from the origin, restricted to a ball.

    Vertex 0 sits at the origin (the Palm point); the others form a unit-rate
    Poisson process in the ball. Weights are i.i.d. and every pair connects
    independently through the limiting kernel. The graph is rooted at 0.
    """
    if not radius > 0:
        raise GenerationError(f"ball radius must be > 0, got {radius}")
    cloud = sample_poisson_ball(1.0, radius, d, rng)
    pts = np.vstack([np.zeros((1, d)), cloud.points])
    w = weight_law.sample(pts.shape[0], rng)
    m = pts.shape[0]
    if m > 1:
        ii, jj = np.triu_indices(m, k=1)
        dist = _pair_distances(pts, ii, jj, "euclidean", None)
        p = kernel.limit(dist, w[ii], w[jj], mean_weight)
        hit = rng.uniform(size=ii.shape[0]) < p
        ei, ej = ii[hit], jj[hit]
    else:
        ei = ej = np.zeros(0, np.int64)
    return SpatialGraph.from_edges(ei, ej, PointCloud(pts, BallSpec(d, float(radius))),
                                   WeightVector(w), kernel_id=kernel.kernel_id,
                                   seed=_seed_of(rng), root=0)


def generate_hrg_native(n: int, alpha_h: float, nu: float, rng: np.random.Generator,
                        variant: str = "threshold", temperature: float | None = None,
                        route: str = "native") -> SpatialGraph:
    """Threshold or parametrized hyperbolic random graph.

    Points are (r, theta) in the hyperbolic disk of radius R_n = 2 log(n/nu).
    ``route="native"`` connects through hyperbolic distances;
    ``route="transformed"`` maps each point to the 1-d SIRG coordinates
    (n theta / 2 pi, exp((R_n - r)/2)) and uses the transformed kernel. Both
    routes share every random draw, so they must give the same edges.
    """
    if variant == "threshold":
        kernel = ThrgLimit(nu=nu)
    elif variant == "parametrized":
        if temperature is None:
            raise GenerationError("the parametrized variant needs a temperature")
        kernel = PhrgLimit(nu=nu, temperature=temperature)
    else:
        raise GenerationError(f"unknown HRG variant {variant!r}")
    law = HrgRadial(alpha_h, nu, hrg_radius(n, nu))
    radius = law.radius
    ang_rng, rad_rng, e_rng = rng.spawn(3)
    theta = ang_rng.uniform(-math.pi, math.pi, size=n)
    r = law.sample_radii(n, rad_rng)
    x, w = hrg_transform(r, theta, radius)
    x, w = np.atleast_1d(x), np.atleast_1d(w)
    y = (n * x)[:, None]

    if route == "native":
        def prob(i, j):
            return kernel.native(hyperbolic_distance(r[i], theta[i], r[j], theta[j]), radius)
    elif route == "transformed":
        def prob(i, j):
            return kernel.finite(np.abs(y[i, 0] - y[j, 0]), w[i], w[j], n)
    else:
        raise GenerationError(f"unknown route {route!r}")

    ei, ej = _exact_edges(n, prob, e_rng)
    return SpatialGraph.from_edges(
        ei, ej, PointCloud(y, BoxSpec(1, float(n))), WeightVector(w),
        kernel_id=kernel.kernel_id, seed=_seed_of(rng), metric="euclidean",
        aux={"r": r, "theta": theta, "R_n": radius},
    )
