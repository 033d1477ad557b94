"""Boxes, balls, metrics and point sampling.

Finite graphs live on the blown-up box ``[-side/2, side/2]^d`` with
``side = n**(1/d)`` so that the point density is one per unit volume.
Limit graphs live on a Euclidean ball around the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln


class GeometryError(ValueError):
    """Invalid geometric parameters."""


@dataclass(frozen=True)
class BoxSpec:
    dimension: int
    side: float

    def __post_init__(self):
        if self.dimension < 1:
            raise GeometryError(f"dimension must be >= 1, got {self.dimension}")
        if not self.side > 0:
            raise GeometryError(f"box side must be > 0, got {self.side}")

    @classmethod
    def blown_up(cls, n: int, d: int) -> "BoxSpec":
        """The box I_n holding n unit-density points."""
        return cls(d, float(n) ** (1.0 / d))

    @property
    def half(self) -> float:
        return self.side / 2.0

    @property
    def volume(self) -> float:
        return self.side ** self.dimension

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all(np.abs(points) <= self.half, axis=-1)


@dataclass(frozen=True)
class BallSpec:
    dimension: int
    radius: float
    center: tuple = ()

    def __post_init__(self):
        if self.dimension < 1:
            raise GeometryError(f"dimension must be >= 1, got {self.dimension}")
        if self.radius < 0:
            raise GeometryError(f"ball radius must be >= 0, got {self.radius}")
        if not self.center:
            object.__setattr__(self, "center", (0.0,) * self.dimension)
        elif len(self.center) != self.dimension:
            raise GeometryError("ball center has the wrong dimension")

    @property
    def volume(self) -> float:
        return ball_volume(self.dimension, self.radius)

    def contains(self, points: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        return np.linalg.norm(points - c, axis=-1) <= self.radius


@dataclass(frozen=True)
class PointCloud:
    """n points in R^d together with the domain they were drawn in."""

    points: np.ndarray
    domain: BoxSpec | BallSpec
    dimension: int = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise GeometryError("points must be a 2-d array of shape (count, d)")
        if pts.shape[1] != self.domain.dimension:
            raise GeometryError(
                f"points have dimension {pts.shape[1]}, domain has {self.domain.dimension}"
            )
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dimension", pts.shape[1])

    def __len__(self) -> int:
        return self.points.shape[0]

    def all_inside(self) -> bool:
        return bool(np.all(self.domain.contains(self.points)))


def ball_volume(d: int, r: float) -> float:
    """Lebesgue measure of the d-dimensional Euclidean ball of radius r."""
    if r < 0:
        raise GeometryError(f"radius must be >= 0, got {r}")
    if d < 1:
        raise GeometryError(f"dimension must be >= 1, got {d}")
    return _unit_ball_volume(d) * r ** d


def _unit_ball_volume(d: int) -> float:
    # exact constants where the gamma route would round
    if d == 1:
        return 2.0
    if d == 2:
        return math.pi
    if d == 3:
        return 4.0 * math.pi / 3.0
    return math.exp(0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0))


def sphere_area(d: int) -> float:
    """Surface area s_{d-1} of the unit sphere in R^d (d * unit ball volume)."""
    return d * ball_volume(d, 1.0)


def sample_uniform_box(n: int, box: BoxSpec, rng: np.random.Generator) -> PointCloud:
    if n < 1:
        raise GeometryError(f"need at least one point, got n={n}")
    pts = rng.uniform(-box.half, box.half, size=(n, box.dimension))
    return PointCloud(pts, box)


def sample_uniform_ball(count: int, d: int, radius: float,
                        rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. uniform points in the ball of given radius at the origin."""
    if count == 0:
        return np.zeros((0, d))
    direction = rng.standard_normal((count, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radial = radius * rng.uniform(size=count) ** (1.0 / d)
    return direction * radial[:, None]


def sample_poisson_ball(rate: float, radius: float, d: int,
                        rng: np.random.Generator) -> PointCloud:
    """Homogeneous Poisson process of the given intensity restricted to a ball."""
    if not rate > 0:
        raise GeometryError(f"rate must be > 0, got {rate}")
    if radius < 0:
        raise GeometryError(f"radius must be >= 0, got {radius}")
    ball = BallSpec(d, float(radius))
    count = int(rng.poisson(rate * ball.volume)) if radius > 0 else 0
    return PointCloud(sample_uniform_ball(count, d, radius, rng), ball)


def wrap_difference(diff: np.ndarray, side: float) -> np.ndarray:
    """Reduce coordinate differences into [-side/2, side/2]."""
    return diff - side * np.round(diff / side)


def distance(p, q, metric: str = "euclidean", side: float | None = None):
    """L2 distance between points (or broadcastable arrays of points).

    ``metric="torus"`` identifies opposite faces of a box with the given side.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape[-1:] != q.shape[-1:]:
        raise GeometryError(f"dimension mismatch: {p.shape[-1:]} vs {q.shape[-1:]}")
    diff = p - q
    if metric == "torus":
        if side is None or not side > 0:
            raise GeometryError("torus metric needs a positive side length")
        diff = wrap_difference(diff, side)
    elif metric != "euclidean":
        raise GeometryError(f"unknown metric {metric!r}")
    out = np.sqrt(np.sum(diff * diff, axis=-1))
    return float(out) if out.ndim == 0 else out
