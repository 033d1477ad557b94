"""Rooted neighborhoods, canonical codes and neighborhood histograms.

Small rooted graphs are stored as tuples of adjacency bitmasks. Canonical
codes come from color refinement (seeded by the root and BFS depth)
followed by individualization with backtracking; branches on vertices that
are twins of one another are skipped because swapping twins is an
automorphism that fixes everything already individualized.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .generator import SpatialGraph, sample_limit_ball
from .geometry import wrap_difference

DEFAULT_CAP = 64
# codes start with a two-byte vertex count, so this prefix cannot collide
OVERSIZED_CODE = b"\xff\xff"


class NeighborhoodError(ValueError):
    pass


class OversizedError(NeighborhoodError):
    """A neighborhood exceeded the vertex cap."""


@dataclass(frozen=True)
class RootedGraph:
    """A small simple graph with a root.

    ``masks[v]`` is the neighbor bitmask of vertex v. ``vertices`` records the
    original ids when the graph was cut out of a larger one. An oversized
    result keeps only ``size``.
    """

    masks: tuple
    root: int = 0
    depth: tuple | None = None
    vertices: tuple | None = None
    oversized: bool = False
    size: int = field(default=-1)

    def __post_init__(self):
        if self.size < 0:
            object.__setattr__(self, "size", len(self.masks))
        if not self.oversized:
            if not 0 <= self.root < max(len(self.masks), 1):
                raise NeighborhoodError(f"root {self.root} out of range")
            for v, m in enumerate(self.masks):
                if m >> v & 1:
                    raise NeighborhoodError("self-loop in rooted graph")
                if m >> len(self.masks):
                    raise NeighborhoodError("neighbor index out of range")

    @classmethod
    def from_edges(cls, size: int, edges, root: int = 0) -> "RootedGraph":
        masks = [0] * size
        for u, v in edges:
            if u == v:
                raise NeighborhoodError("self-loop in rooted graph")
            masks[u] |= 1 << v
            masks[v] |= 1 << u
        return cls(tuple(masks), root)

    @property
    def num_edges(self) -> int:
        return sum(bin(m).count("1") for m in self.masks) // 2

    def edges(self) -> list:
        return [(u, v) for u, m in enumerate(self.masks) for v in range(u + 1, len(self.masks))
                if m >> v & 1]

    def relabel(self, perm) -> "RootedGraph":
        """The image under vertex map ``v -> perm[v]``."""
        size = len(self.masks)
        masks = [0] * size
        for u, v in self.edges():
            masks[perm[u]] |= 1 << perm[v]
            masks[perm[v]] |= 1 << perm[u]
        return RootedGraph(tuple(masks), perm[self.root])


def _oversized(size: int) -> RootedGraph:
    return RootedGraph((), 0, oversized=True, size=size)


def _bfs(adj, root, K, cap, allowed=None):
    """BFS to depth K; returns (vertices in visit order, depths) or None if over cap."""
    depth = {root: 0}
    order = [root]
    frontier = [root]
    for k in range(1, K + 1):
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in depth and (allowed is None or allowed(v)):
                    depth[v] = k
                    order.append(v)
                    nxt.append(v)
        if cap is not None and len(order) > cap:
            return None, len(order)
        if not nxt:
            break
        frontier = nxt
    return order, depth


def _induced(adj, order, depth=None):
    index = {v: i for i, v in enumerate(order)}
    masks = []
    for v in order:
        m = 0
        for u in adj[v]:
            j = index.get(u)
            if j is not None:
                m |= 1 << j
        masks.append(m)
    dep = tuple(depth[v] for v in order) if depth is not None else None
    return RootedGraph(tuple(masks), 0, dep, tuple(order))


def graph_ball(G, root: int, K: int, cap: int | None = DEFAULT_CAP) -> RootedGraph:
    """The induced subgraph on vertices within graph distance K of ``root``.

    ``G`` is a SpatialGraph or a RootedGraph. The root is relabeled 0. A ball
    with more than ``cap`` vertices comes back as an oversized marker.
    """
    if K < 0:
        raise NeighborhoodError(f"K must be >= 0, got {K}")
    adj = _adjacency(G)
    if not 0 <= root < len(adj):
        raise NeighborhoodError(f"root {root} out of range")
    order, depth = _bfs(adj, root, K, cap)
    if order is None:
        return _oversized(depth)
    ball = _induced(adj, order, depth)
    if isinstance(G, RootedGraph) and G.vertices is not None:
        ball = RootedGraph(ball.masks, 0, ball.depth, tuple(G.vertices[v] for v in order))
    return ball


def _adjacency(G):
    if isinstance(G, SpatialGraph):
        return G.adjacency_lists
    if isinstance(G, RootedGraph):
        if G.oversized:
            raise OversizedError("cannot take a ball of an oversized neighborhood")
        return [[u for u in range(len(G.masks)) if m >> u & 1] for m in G.masks]
    raise NeighborhoodError(f"unsupported graph type {type(G).__name__}")


def _spatial_filter(G: SpatialGraph, root: int, r: float):
    """Boolean mask of vertices strictly within spatial distance r of the root."""
    pts = G.locations.points
    diff = pts - pts[root]
    if G.metric == "torus":
        diff = wrap_difference(diff, G.locations.domain.side)
    return np.sqrt(np.sum(diff * diff, axis=1)) < r


def euclidean_ball_subgraph(G: SpatialGraph, root: int, r: float,
                            cap: int | None = DEFAULT_CAP) -> RootedGraph:
    """Induced subgraph on vertices in the open spatial ball of radius r.

    The result may be disconnected. The root is relabeled 0 and the other
    vertices keep their relative order.
    """
    if r < 0:
        raise NeighborhoodError(f"radius must be >= 0, got {r}")
    if not 0 <= root < G.n:
        raise NeighborhoodError(f"root {root} out of range")
    inside = np.nonzero(_spatial_filter(G, root, r))[0]
    order = [root] + [int(v) for v in inside if v != root]
    if cap is not None and len(order) > cap:
        return _oversized(len(order))
    return _induced(G.adjacency_lists, order)


def _restricted_ball(G: SpatialGraph, root: int, K: int, r: float, cap):
    """The K-ball of the root inside the subgraph induced by the open spatial r-ball."""
    inside = _spatial_filter(G, root, r)
    adj = G.adjacency_lists
    order, depth = _bfs(adj, root, K, cap, allowed=lambda v: bool(inside[v]))
    if order is None:
        return _oversized(depth)
    return _induced(adj, order, depth)


# canonical codes

def _refine(nbrs, colors):
    """Color refinement to an equitable partition; colors stay canonical ranks."""
    classes = len(set(colors))
    while True:
        sig = [(colors[v], tuple(sorted(colors[u] for u in nbrs[v]))) for v in range(len(nbrs))]
        rank = {s: i for i, s in enumerate(sorted(set(sig)))}
        new = [rank[s] for s in sig]
        if len(rank) == classes:
            return new
        colors, classes = new, len(rank)


def _twin_representatives(cell, masks):
    # union of open twins (equal neighborhoods) and closed twins (equal closed neighborhoods)
    parent = {v: v for v in cell}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for key in (lambda v: masks[v], lambda v: masks[v] | (1 << v)):
        first = {}
        for v in cell:
            k = key(v)
            if k in first:
                a, b = find(first[k]), find(v)
                if a != b:
                    parent[max(a, b)] = min(a, b)
            else:
                first[k] = v
    return sorted({find(v) for v in cell})


def _search(nbrs, masks, colors):
    colors = _refine(nbrs, colors)
    size = len(colors)
    if len(set(colors)) == size:
        new = [0] * size
        for v in range(size):
            m = 0
            for u in nbrs[v]:
                m |= 1 << colors[u]
            new[colors[v]] = m
        return tuple(new)
    counts = Counter(colors)
    target = min(c for c, k in counts.items() if k > 1)
    cell = [v for v in range(size) if colors[v] == target]
    best = None
    for v in _twin_representatives(cell, masks):
        split = [2 * c + 1 for c in colors]
        split[v] = 2 * colors[v]
        leaf = _search(nbrs, masks, split)
        if best is None or leaf < best:
            best = leaf
    return best


def _encode(size, masks):
    bits = []
    for i in range(size):
        for j in range(i + 1, size):
            bits.append(masks[i] >> j & 1)
    packed = np.packbits(np.array(bits, dtype=np.uint8)).tobytes() if bits else b""
    return size.to_bytes(2, "big") + packed


@lru_cache(maxsize=1 << 18)
def _canonical(masks: tuple, root: int) -> bytes:
    size = len(masks)
    nbrs = [[u for u in range(size) if m >> u & 1] for m in masks]
    # initial color: root first, then BFS depth (unreachable vertices last)
    depth = [size + 1] * size
    depth[root] = 0
    frontier = [root]
    k = 0
    while frontier:
        k += 1
        nxt = []
        for u in frontier:
            for v in nbrs[u]:
                if depth[v] > k:
                    depth[v] = k
                    nxt.append(v)
        frontier = nxt
    leaf = _search(nbrs, masks, depth)
    return _encode(size, leaf)


def canonical_code(H: RootedGraph, cap: int = DEFAULT_CAP) -> bytes:
    """Byte string equal for two rooted graphs exactly when they are rooted-isomorphic."""
    if H.oversized or len(H.masks) > cap:
        raise OversizedError(f"rooted graph has {H.size} vertices, cap is {cap}")
    if cap >= 0xFFFF:
        raise NeighborhoodError("cap must stay below 65535")
    return _canonical(tuple(H.masks), H.root)


def code_or_oversized(H: RootedGraph, cap: int = DEFAULT_CAP) -> bytes:
    if H.oversized or len(H.masks) > cap:
        return OVERSIZED_CODE
    return canonical_code(H, cap)


def rooted_isomorphic(H1: RootedGraph, H2: RootedGraph, cap: int = DEFAULT_CAP) -> bool:
    return canonical_code(H1, cap) == canonical_code(H2, cap)


def decode_code(code: bytes) -> RootedGraph:
    """The canonical representative (root 0) encoded by a code."""
    if code == OVERSIZED_CODE:
        raise OversizedError("the oversized code has no representative")
    size = int.from_bytes(code[:2], "big")
    pairs = size * (size - 1) // 2
    bits = np.unpackbits(np.frombuffer(code[2:], dtype=np.uint8))[:pairs] if pairs else []
    edges = []
    idx = 0
    for i in range(size):
        for j in range(i + 1, size):
            if bits[idx]:
                edges.append((i, j))
            idx += 1
    return RootedGraph.from_edges(size, edges, 0)


# histograms

@dataclass
class NeighborhoodHistogram:
    """Counts of canonical codes of sampled rooted neighborhoods."""

    K: int
    mode: str
    counts: Counter = field(default_factory=Counter)
    radius: float | None = None

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def tags(self) -> tuple:
        return (self.K, self.mode, self.radius)

    def add(self, code: bytes, count: int = 1) -> None:
        self.counts[code] += count

    def proportions(self) -> dict:
        total = self.total
        if total == 0:
            return {}
        return {c: k / total for c, k in self.counts.items()}

    def proportion(self, code: bytes) -> float:
        total = self.total
        return self.counts.get(code, 0) / total if total else 0.0

    @property
    def oversized_fraction(self) -> float:
        return self.proportion(OVERSIZED_CODE)

    def merge(self, other: "NeighborhoodHistogram") -> "NeighborhoodHistogram":
        if self.tags != other.tags:
            raise NeighborhoodError(f"cannot merge histograms tagged {self.tags} and {other.tags}")
        return NeighborhoodHistogram(self.K, self.mode, self.counts + other.counts, self.radius)

    def to_json(self) -> str:
        total = self.total
        rows = [{"code": c.hex(), "count": k, "proportion": k / total}
                for c, k in sorted(self.counts.items())]
        return json.dumps({"K": self.K, "mode": self.mode, "radius": self.radius,
                           "total": total, "codes": rows}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NeighborhoodHistogram":
        doc = json.loads(text)
        counts = Counter({bytes.fromhex(r["code"]): int(r["count"]) for r in doc["codes"]})
        return cls(int(doc["K"]), doc["mode"], counts, doc["radius"])


def empirical_neighborhood_distribution(G: SpatialGraph, K: int, mode: str = "graph",
                                        sample="all", rng: np.random.Generator | None = None,
                                        radius: float | None = None,
                                        cap: int = DEFAULT_CAP) -> NeighborhoodHistogram:
    """Histogram of K-ball codes over all vertices or a uniform vertex sample.

    ``mode="graph"`` uses the K-ball of G; ``mode="euclidean"`` uses the
    K-ball inside the open spatial ball of the given radius around each root.
    ``sample`` is "all" or a number of roots drawn uniformly with replacement.
    """
    if K < 0:
        raise NeighborhoodError(f"K must be >= 0, got {K}")
    if mode not in ("graph", "euclidean"):
        raise NeighborhoodError(f"unknown mode {mode!r}")
    if mode == "euclidean" and radius is None:
        raise NeighborhoodError("euclidean mode needs a radius")
    if sample == "all":
        roots = range(G.n)
    else:
        if rng is None:
            raise NeighborhoodError("sampling roots needs an rng")
        roots = rng.integers(0, G.n, size=int(sample)).tolist()
    hist = NeighborhoodHistogram(K, mode, Counter(), radius if mode == "euclidean" else None)
    for v in roots:
        if mode == "graph":
            ball = graph_ball(G, v, K, cap)
        else:
            ball = _restricted_ball(G, v, K, radius, cap)
        hist.add(code_or_oversized(ball, cap))
    return hist


def coupling_radius(a: float, m: float, K: int) -> float:
    """r = a^m + a^(m^2) + ... + a^(m^K)."""
    if not (a > 1 and m > 1):
        raise NeighborhoodError("coupling radius needs a > 1 and m > 1")
    if K < 1:
        raise NeighborhoodError(f"coupling radius needs K >= 1, got {K}")
    total = 0.0
    try:
        for j in range(1, K + 1):
            total += math.pow(a, math.pow(m, j))
    except OverflowError:
        raise NeighborhoodError(f"coupling radius overflows for a={a}, m={m}, K={K}") from None
    if not math.isfinite(total):
        raise NeighborhoodError(f"coupling radius overflows for a={a}, m={m}, K={K}")
    return total


def limit_neighborhood_distribution(kernel, weight_law, K: int, r: float, replicas: int, d: int,
                                    rng: np.random.Generator, mean_weight: float | None = None,
                                    cap: int = DEFAULT_CAP) -> NeighborhoodHistogram:
    """Monte Carlo law of the root's K-ball in the limit graph restricted to a ball of radius r."""
    if replicas < 1:
        raise NeighborhoodError("need at least one replica")
    if mean_weight is None:
        mean_weight = weight_law.mean()
    hist = NeighborhoodHistogram(K, "graph")
    for _ in range(replicas):
        F = sample_limit_ball(kernel, weight_law, r, d, rng, mean_weight)
        hist.add(code_or_oversized(graph_ball(F, 0, K, cap), cap))
    return hist


@dataclass(frozen=True)
class CouplingResult:
    coupled: bool
    reason: str = ""

    def __bool__(self):
        return self.coupled


def coupling_check(G: SpatialGraph, root: int, a: float, m: float, K: int) -> CouplingResult:
    """Does the K-ball inside the spatial ball of radius r(a, m, K) equal the K-ball of G?

    The restricted ball is a subgraph of the full one on the same labels, so
    the two are rooted-isomorphic exactly when their labeled vertex sets
    agree (induced edges then agree too). No vertex cap is needed.
    """
    r = coupling_radius(a, m, K)
    full, _ = _bfs(G.adjacency_lists, root, K, None)
    inner = _restricted_ball(G, root, K, r, None)
    if len(inner.vertices) == len(full):
        return CouplingResult(True)
    return CouplingResult(False, f"{len(full) - len(inner.vertices)} ball vertices reached only "
                                 f"through the outside of the radius-{r:g} ball")
