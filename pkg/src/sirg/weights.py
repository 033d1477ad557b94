"""Vertex weight laws, realized weight vectors and the hyperbolic transform."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate


class WeightLawError(ValueError):
    pass


@dataclass(frozen=True)
class Constant:
    c: float = 1.0

    def sample(self, n, rng):
        return np.full(n, float(self.c))

    def cdf(self, x):
        return (np.asarray(x, dtype=float) >= self.c).astype(float)

    def mean(self):
        return float(self.c)

    def atoms(self):
        return (float(self.c),)


@dataclass(frozen=True)
class Uniform01:
    def sample(self, n, rng):
        return rng.uniform(size=n)

    def cdf(self, x):
        return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)

    def quantile(self, u):
        return np.asarray(u, dtype=float)

    def mean(self):
        return 0.5

    def atoms(self):
        return ()


@dataclass(frozen=True)
class Pareto:
    """P(W > w) = w**(-beta) for w >= 1."""

    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise WeightLawError(f"Pareto tail exponent must be > 0, got {self.beta}")

    def sample(self, n, rng):
        # 1 - U lies in (0, 1], so the power is finite
        return self.quantile(rng.uniform(size=n))

    def quantile(self, u):
        return (1.0 - np.asarray(u, dtype=float)) ** (-1.0 / self.beta)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = 1.0 - np.maximum(x, 1.0) ** (-self.beta)
        return np.where(x < 1.0, 0.0, out)

    def mean(self):
        return self.beta / (self.beta - 1.0) if self.beta > 1 else math.inf

    def moment(self, s: float) -> float:
        """E[W**s]."""
        return self.beta / (self.beta - s) if s < self.beta else math.inf

    def atoms(self):
        return ()


@dataclass(frozen=True)
class PowerLawTail:
    """GIRG weights: tail c z^(1-beta_g) <= P(W > z) <= C z^(1-beta_g).

    Only the pure Pareto law with exponent ``beta_g - 1`` is generated; the
    bracket constants are carried for reporting.
    """

    beta_g: float
    c_g: float = 1.0
    C_g: float = 1.0

    def __post_init__(self):
        if not self.beta_g > 2:
            raise WeightLawError(f"GIRG weights need beta_G > 2, got {self.beta_g}")

    @property
    def pareto(self) -> Pareto:
        return Pareto(self.beta_g - 1.0)

    def sample(self, n, rng):
        return self.pareto.sample(n, rng)

    def quantile(self, u):
        return self.pareto.quantile(u)

    def cdf(self, x):
        return self.pareto.cdf(x)

    def mean(self):
        return self.pareto.mean()

    def atoms(self):
        return ()


@dataclass(frozen=True)
class Empirical:
    """A fixed weight sequence; graphs of size n use its first n entries."""

    values: tuple

    def __post_init__(self):
        if len(self.values) == 0:
            raise WeightLawError("empirical weight sequence is empty")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def sample(self, n, rng):
        if n > len(self.values):
            raise WeightLawError(
                f"empirical sequence has {len(self.values)} values, {n} requested"
            )
        return np.array(self.values[:n], dtype=float)

    def cdf(self, x):
        raise WeightLawError("an empirical weight sequence has no reference CDF")

    def mean(self):
        return float(np.mean(self.values))

    def atoms(self):
        return ()

    @classmethod
    def from_file(cls, path) -> "Empirical":
        return cls(tuple(load_weight_file(path)))


@dataclass(frozen=True)
class HrgRadial:
    """Weights exp((R_n - r)/2) induced by the hyperbolic radial law.

    ``radius`` is R_n = 2 log(n / nu); it is passed explicitly because the
    law depends on n.
    """

    alpha_h: float
    nu: float
    radius: float

    def __post_init__(self):
        if not self.alpha_h > 0.5:
            raise WeightLawError(f"alpha_H must be > 1/2, got {self.alpha_h}")
        if not self.nu > 0:
            raise WeightLawError(f"nu must be > 0, got {self.nu}")
        if not self.radius > 0:
            raise WeightLawError(f"R_n must be > 0, got {self.radius}")

    @classmethod
    def for_size(cls, alpha_h: float, nu: float, n: int) -> "HrgRadial":
        return cls(alpha_h, nu, hrg_radius(n, nu))

    def sample_radii(self, n, rng):
        return hrg_radial_inverse_cdf(rng.uniform(size=n), self.alpha_h, self.radius)

    def sample(self, n, rng):
        return np.exp((self.radius - self.sample_radii(n, rng)) / 2.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        top = math.exp(self.radius / 2.0)
        z = np.clip(x, 1.0, top)
        r = self.radius - 2.0 * np.log(z)
        out = 1.0 - hrg_radial_cdf(r, self.alpha_h, self.radius)
        return np.where(x < 1.0, 0.0, np.where(x >= top, 1.0, out))

    def mean(self):
        top = math.exp(self.radius / 2.0)
        tail = integrate.quad(lambda z: 1.0 - float(self.cdf(z)), 1.0, top, limit=200)[0]
        return 1.0 + tail

    def limit(self) -> Pareto:
        """Large-n law of the weights: Pareto with tail exponent 2 alpha_H."""
        return Pareto(2.0 * self.alpha_h)

    def atoms(self):
        return ()


WeightLaw = Constant | Uniform01 | Pareto | PowerLawTail | Empirical | HrgRadial


@dataclass(frozen=True)
class WeightVector:
    values: np.ndarray
    total: float = field(init=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise WeightLawError("weights must be one-dimensional")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "total", float(np.sum(v)))

    def __len__(self) -> int:
        return self.values.shape[0]


def sample_weights(law, n: int, rng: np.random.Generator) -> WeightVector:
    if n < 1:
        raise WeightLawError(f"need n >= 1, got {n}")
    return WeightVector(law.sample(n, rng))


def empirical_cdf_distance(values, law) -> float:
    """Kolmogorov-Smirnov distance between the sample and the law's CDF.

    Sample points sitting on an atom of the law are skipped: the empirical
    CDF need only converge at continuity points.
    """
    if isinstance(law, Empirical):
        raise WeightLawError("an empirical weight sequence has no reference CDF")
    x = np.sort(np.asarray(values.values if isinstance(values, WeightVector) else values,
                           dtype=float))
    n = x.shape[0]
    if n == 0:
        return 0.0
    keep = np.ones(n, dtype=bool)
    for a in law.atoms():
        keep &= x != a
    if not keep.any():
        return 0.0
    f = law.cdf(x)
    i = np.arange(1, n + 1)
    upper = i / n - f
    lower = f - (i - 1) / n
    return float(max(upper[keep].max(), lower[keep].max()))


def load_weight_file(path) -> list[float]:
    """One weight per line; blank lines and '#' comments are ignored."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        try:
            out.append(float(s))
        except ValueError:
            raise WeightLawError(f"{path}:{lineno}: not a number: {s!r}") from None
    return out


# hyperbolic random graph coordinates

def hrg_radius(n: int, nu: float) -> float:
    """R_n = 2 log(n / nu)."""
    return 2.0 * math.log(n / nu)


def hrg_radial_cdf(r, alpha_h: float, radius: float):
    """(cosh(a r) - 1) / (cosh(a R) - 1) on [0, R], written with sinh^2 for accuracy."""
    r = np.clip(np.asarray(r, dtype=float), 0.0, radius)
    out = (np.sinh(alpha_h * r / 2.0) / np.sinh(alpha_h * radius / 2.0)) ** 2
    return float(out) if out.ndim == 0 else out


def hrg_radial_inverse_cdf(u, alpha_h: float, radius: float):
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)):
        raise WeightLawError("uniform variate outside [0, 1]")
    y = u * 2.0 * np.sinh(alpha_h * radius / 2.0) ** 2
    # arccosh(1 + y) without cancellation for small y
    r = np.log1p(y + np.sqrt(y * (y + 2.0))) / alpha_h
    r = np.minimum(r, radius)
    return float(r) if r.ndim == 0 else r


def hrg_transform(r, theta, radius: float):
    """Map polar hyperbolic coordinates to (location in [-1/2, 1/2], weight)."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any((theta < -math.pi) | (theta > math.pi)):
        raise WeightLawError("angle outside [-pi, pi]")
    if np.any((r < 0) | (r > radius)):
        raise WeightLawError("radius outside [0, R_n]")
    x = theta / (2.0 * math.pi)
    w = np.exp((radius - r) / 2.0)
    if x.ndim == 0:
        return float(x), float(w)
    return x, w


def hrg_inverse_weight(w, radius: float):
    """g_n(w) = R_n - 2 log w, the radius a weight came from."""
    return radius - 2.0 * np.log(w)
