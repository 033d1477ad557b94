"""Connection functions.

Every kernel evaluates two forms:

* ``finite(t, w1, w2, n, total_weight)``: the edge probability in a graph of
  size n, with ``t`` the distance between blown-up locations (points of the
  box of side n**(1/d)).
* ``limit(t, w1, w2, mean_weight)``: the connection function of the infinite
  graph.

Both are vectorized over numpy arrays. At t = 0 every kernel returns its
supremum. Indicator kernels use the closed boundary ``t <= cutoff``.

Kernels also expose ``upper_bound`` over a block of vertex pairs (minimum
distance plus per-side weight ranges), which the grid sampler uses for
rejection; ``None`` means the kernel cannot bound itself that way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .weights import Constant, Empirical, HrgRadial, Pareto, PowerLawTail, Uniform01, hrg_radius


class KernelError(ValueError):
    pass


def _arr(x):
    return np.asarray(x, dtype=np.float64)


def _out(x, *inputs):
    if all(np.ndim(a) == 0 for a in inputs):
        return float(x)
    return x


def _check_t(t):
    if np.any(t < 0):
        raise KernelError("distance must be >= 0")


@dataclass(frozen=True)
class Kernel:
    # declared alpha of E[kappa(t, W1, W2)] <= A t^-alpha, and the prefactor A
    tail_exponent: float | None = field(default=None, kw_only=True)
    prefactor: float = field(default=1.0, kw_only=True)

    weight_dependent = True
    # +1: nondecreasing in each weight, -1: nonincreasing, 0: independent
    weight_monotone = 1
    name = "kernel"

    def __post_init__(self):
        if self.prefactor < 1:
            raise KernelError(f"tail prefactor must be >= 1, got {self.prefactor}")

    @property
    def kernel_id(self) -> str:
        params = ",".join(
            f"{k}={v}" for k, v in self.__dict__.items()
            if k not in ("tail_exponent", "prefactor") and not callable(v)
        )
        return f"{self.name}({params})"

    def finite(self, t, w1, w2, n, total_weight=None):
        return self.limit(t, w1, w2)

    def limit(self, t, w1, w2, mean_weight=None):
        raise NotImplementedError

    def upper_bound(self, t_lo, wa_lo, wa_hi, wb_lo, wb_hi, n, total_weight=None):
        if self.weight_monotone > 0:
            return self.finite(t_lo, wa_hi, wb_hi, n, total_weight)
        if self.weight_monotone < 0:
            return self.finite(t_lo, wa_lo, wb_lo, n, total_weight)
        return self.finite(t_lo, wa_hi, wb_hi, n, total_weight)

    def breakpoints(self, w0, w1, mean_weight=None):
        """Distances where the limit kernel jumps, for quadrature."""
        return ()


@dataclass(frozen=True)
class ConstantKernel(Kernel):
    """kappa identically p; p = 0 and p = 1 give the empty and complete graphs."""

    p: float = 0.0
    weight_dependent = False
    weight_monotone = 0
    name = "constant"

    def __post_init__(self):
        super().__post_init__()
        if not 0 <= self.p <= 1:
            raise KernelError(f"constant kernel value must be in [0, 1], got {self.p}")

    def limit(self, t, w1, w2, mean_weight=None):
        t = _arr(t)
        _check_t(t)
        out = np.broadcast_to(self.p, np.broadcast_shapes(t.shape, np.shape(w1), np.shape(w2)))
        return _out(np.array(out, dtype=float), t, w1, w2)


@dataclass(frozen=True)
class Threshold(Kernel):
    r0: float = 1.0
    weight_dependent = False
    weight_monotone = 0
    name = "threshold"

    def limit(self, t, w1, w2, mean_weight=None):
        t = _arr(t)
        _check_t(t)
        shape = np.broadcast_shapes(t.shape, np.shape(w1), np.shape(w2))
        out = np.broadcast_to((t <= self.r0).astype(float), shape).copy()
        return _out(out, t, w1, w2)

    def breakpoints(self, w0, w1, mean_weight=None):
        return (self.r0,)


@dataclass(frozen=True)
class PowerProfile:
    """f(t) = scale * t**(-exponent), a decreasing distance profile."""

    scale: float = 1.0
    exponent: float = 1.0

    def __call__(self, t):
        with np.errstate(divide="ignore", over="ignore"):
            return self.scale * _arr(t) ** (-self.exponent)


@dataclass(frozen=True)
class ProductCoupler:
    """g(x, y) = scale * (x*y)**exponent."""

    scale: float = 1.0
    exponent: float = 1.0

    def __call__(self, x, y):
        return self.scale * (_arr(x) * _arr(y)) ** self.exponent

    def sup(self, a_lo, a_hi, b_lo, b_hi):
        if self.exponent >= 0:
            return self(a_hi, b_hi)
        return self(a_lo, b_lo)


@dataclass(frozen=True)
class ProductPSIRG(Kernel):
    """kappa(t, x, y) = 1 ^ f(t) g(x, y)."""

    f: Callable = PowerProfile()
    g: Callable = ProductCoupler()
    alpha_p: float = 1.0
    beta_p: float = 1.0
    name = "psirg"

    @property
    def kernel_id(self) -> str:
        return f"psirg(f={self.f!r},g={self.g!r},alpha_p={self.alpha_p},beta_p={self.beta_p})"

    @property
    def gamma_p(self) -> float:
        return min(self.alpha_p, self.alpha_p * self.beta_p)

    def limit(self, t, w1, w2, mean_weight=None):
        t = _arr(t)
        _check_t(t)
        with np.errstate(invalid="ignore"):
            prod = self.f(t) * self.g(_arr(w1), _arr(w2))
        prod = np.nan_to_num(prod, nan=0.0, posinf=1.0)
        return _out(np.clip(prod, 0.0, 1.0), t, w1, w2)

    def upper_bound(self, t_lo, wa_lo, wa_hi, wb_lo, wb_hi, n, total_weight=None):
        sup = getattr(self.g, "sup", None)
        if sup is None:
            return None
        t_lo = _arr(t_lo)
        with np.errstate(invalid="ignore"):
            prod = self.f(t_lo) * sup(wa_lo, wa_hi, wb_lo, wb_hi)
        return np.clip(np.nan_to_num(prod, nan=0.0, posinf=1.0), 0.0, 1.0)


@dataclass(frozen=True)
class Girg(Kernel):
    """GIRG kernel; ``alpha_g = math.inf`` gives the threshold variant."""

    alpha_g: float = 2.0
    d: int = 1
    name = "girg"

    def __post_init__(self):
        super().__post_init__()
        if not self.alpha_g > 1:
            raise KernelError(f"GIRG needs alpha_G > 1, got {self.alpha_g}")

    def _eval(self, t, ratio):
        # ratio = w1 w2 / (normalizing weight), already scaled to blown-up units
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if math.isinf(self.alpha_g):
                out = (t <= ratio ** (1.0 / self.d)).astype(float)
            else:
                out = np.minimum(1.0, (ratio / t ** self.d) ** self.alpha_g)
        return np.where(t == 0, 1.0, np.nan_to_num(out, nan=1.0))

    def limit(self, t, w1, w2, mean_weight=None):
        if mean_weight is None:
            raise KernelError("the limiting GIRG kernel needs the mean weight")
        t = _arr(t)
        _check_t(t)
        out = self._eval(t, _arr(w1) * _arr(w2) / mean_weight)
        return _out(out, t, w1, w2)

    def finite(self, t, w1, w2, n, total_weight=None):
        if total_weight is None:
            raise KernelError("the finite GIRG kernel needs the total weight")
        t = _arr(t)
        _check_t(t)
        # (w1 w2 / sum W)^a / (n^(-1/d) t)^(d a) == (n w1 w2 / sum W / t^d)^a
        out = self._eval(t, n * _arr(w1) * _arr(w2) / total_weight)
        return _out(out, t, w1, w2)

    def breakpoints(self, w0, w1, mean_weight=None):
        return (float((w0 * w1 / mean_weight) ** (1.0 / self.d)),)


def hyperbolic_distance(r1, theta1, r2, theta2):
    """Distance in the hyperbolic plane between polar points (r, theta).

    Uses cosh d = cosh(r1 - r2) + 2 sinh r1 sinh r2 sin^2((theta1 - theta2)/2),
    the law of cosines rearranged to avoid cancellation for close angles.
    """
    r1, r2 = _arr(r1), _arr(r2)
    if np.any(r1 < 0) or np.any(r2 < 0):
        raise KernelError("hyperbolic radii must be >= 0")
    s = np.sin((_arr(theta1) - _arr(theta2)) / 2.0)
    return _hyperbolic_from_sin(r1, r2, s)


def _hyperbolic_from_sin(r1, r2, s):
    c = np.cosh(r1 - r2) + 2.0 * np.sinh(r1) * np.sinh(r2) * s * s
    out = np.arccosh(np.maximum(c, 1.0))
    return _out(out, r1, r2, s)


@dataclass(frozen=True)
class _Hyperbolic(Kernel):
    nu: float = 1.0

    def _finite_distance(self, t, w1, w2, n):
        # angle difference 2 pi t / n, radii g_n(w) = R_n - 2 log w
        radius = hrg_radius(n, self.nu)
        r1 = np.maximum(radius - 2.0 * np.log(_arr(w1)), 0.0)
        r2 = np.maximum(radius - 2.0 * np.log(_arr(w2)), 0.0)
        s = np.sin(np.pi * _arr(t) / n)
        return _hyperbolic_from_sin(r1, r2, s), radius

    def upper_bound(self, *args, **kwargs):
        # periodic in the angle, so not monotone in blown-up distance
        return None


@dataclass(frozen=True)
class ThrgLimit(_Hyperbolic):
    name = "thrg"

    def limit(self, t, w1, w2, mean_weight=None):
        t = _arr(t)
        _check_t(t)
        out = (t <= self.nu * _arr(w1) * _arr(w2) / math.pi).astype(float)
        return _out(out, t, w1, w2)

    def finite(self, t, w1, w2, n, total_weight=None):
        t = _arr(t)
        _check_t(t)
        dist, radius = self._finite_distance(t, w1, w2, n)
        return _out((np.asarray(dist) <= radius).astype(float), t, w1, w2)

    def native(self, dist, radius):
        return (_arr(dist) <= radius).astype(float)

    def breakpoints(self, w0, w1, mean_weight=None):
        return (float(self.nu * w0 * w1 / math.pi),)


@dataclass(frozen=True)
class PhrgLimit(_Hyperbolic):
    temperature: float = 0.5
    name = "phrg"

    def __post_init__(self):
        super().__post_init__()
        if not 0 < self.temperature < 1:
            raise KernelError(f"T_H must be in (0, 1), got {self.temperature}")

    def limit(self, t, w1, w2, mean_weight=None):
        t = _arr(t)
        _check_t(t)
        with np.errstate(divide="ignore", over="ignore"):
            u = (math.pi * t / (self.nu * _arr(w1) * _arr(w2))) ** (1.0 / self.temperature)
            out = 1.0 / (1.0 + u)
        return _out(out, t, w1, w2)

    def native(self, dist, radius):
        return expit(-(_arr(dist) - radius) / (2.0 * self.temperature))

    def finite(self, t, w1, w2, n, total_weight=None):
        t = _arr(t)
        _check_t(t)
        dist, radius = self._finite_distance(t, w1, w2, n)
        return _out(self.native(dist, radius), t, w1, w2)

    def dominating_product(self, weight_tail: float) -> ProductPSIRG:
        """1 ^ (nu x y / (pi t))^(1/T), which dominates the limit kernel.

        ``weight_tail`` is the Pareto exponent of the weights (2 alpha_H for
        hyperbolic weights); g(W1, W2) then has tail exponent T times it.
        """
        a = 1.0 / self.temperature
        return ProductPSIRG(
            f=PowerProfile(1.0, a),
            g=ProductCoupler((self.nu / math.pi) ** a, a),
            alpha_p=a,
            beta_p=weight_tail * self.temperature,
            tail_exponent=self.tail_exponent,
            prefactor=self.prefactor,
        )


@dataclass(frozen=True)
class Csfp(Kernel):
    """1 - exp(-lam x y / t^alpha)."""

    lam: float = 1.0
    alpha: float = 3.0
    name = "csfp"

    def __post_init__(self):
        super().__post_init__()
        if not (self.lam > 0 and self.alpha > 0):
            raise KernelError("CSFP needs lambda > 0 and alpha > 0")

    def limit(self, t, w1, w2, mean_weight=None):
        t = _arr(t)
        _check_t(t)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            rate = self.lam * _arr(w1) * _arr(w2) * t ** (-self.alpha)
            out = -np.expm1(-rate)
        out = np.where(t == 0, 1.0, out)
        return _out(out, t, w1, w2)


@dataclass(frozen=True)
class Wdrcm(Kernel):
    """rho(h(s1, s2, t)) with rho(u) = 1 ^ u^-eta and h = t^d (s1 s2)^gamma.

    Vertices carry the mark s in [0, 1] itself as their weight (small mark =
    strong vertex), so for gamma > 0 the kernel decreases in each weight.
    """

    eta: float = 2.0
    gamma: float = 1.0
    d: int = 1
    name = "wdrcm"

    @property
    def weight_monotone(self):
        return -1 if self.gamma >= 0 else 1

    def limit(self, t, w1, w2, mean_weight=None):
        t = _arr(t)
        _check_t(t)
        h = t ** self.d * (_arr(w1) * _arr(w2)) ** self.gamma
        with np.errstate(divide="ignore", over="ignore"):
            out = np.minimum(1.0, h ** (-self.eta))
        return _out(out, t, w1, w2)


def eval_finite(spec: Kernel, n: int, t, w1, w2, total_weight=None):
    """Edge probability for blown-up distance t in a graph of size n."""
    return spec.finite(t, w1, w2, n, total_weight)


def eval_limit(spec: Kernel, t, w1, w2, mean_weight=None):
    return spec.limit(t, w1, w2, mean_weight)


def declared_gamma(spec: Kernel, law=None) -> float:
    """The tail exponent a kernel/weight pair is expected to satisfy.

    An explicit ``tail_exponent`` wins; otherwise the exponent of the
    dominating product kernel is derived for the known model families.
    """
    if spec.tail_exponent is not None:
        return float(spec.tail_exponent)
    if isinstance(spec, (ConstantKernel, Threshold)):
        return math.inf if isinstance(spec, Threshold) or spec.p == 0 else 0.0
    if isinstance(spec, ProductPSIRG):
        return spec.gamma_p
    pareto = None
    if isinstance(law, Pareto):
        pareto = law.beta
    elif isinstance(law, PowerLawTail):
        pareto = law.beta_g - 1.0
    elif isinstance(law, HrgRadial):
        pareto = 2.0 * law.alpha_h
    if isinstance(spec, Csfp) and pareto is not None:
        return min(spec.alpha, spec.alpha * pareto)
    if isinstance(spec, Girg) and pareto is not None:
        if math.isinf(spec.alpha_g):
            return spec.d * pareto
        return min(spec.d * spec.alpha_g, spec.d * pareto)
    if isinstance(spec, PhrgLimit) and pareto is not None:
        return min(1.0 / spec.temperature, pareto)
    if isinstance(spec, ThrgLimit) and pareto is not None:
        return pareto
    if isinstance(law, (Constant, Uniform01, Empirical)):  # bounded weights
        if isinstance(spec, Csfp):
            return spec.alpha
        if isinstance(spec, Girg):
            return math.inf if math.isinf(spec.alpha_g) else spec.d * spec.alpha_g
        if isinstance(spec, PhrgLimit):
            return 1.0 / spec.temperature
        if isinstance(spec, ThrgLimit):
            return math.inf
    if isinstance(spec, Wdrcm):
        return spec.d * spec.eta
    raise KernelError(f"no declared tail exponent for {spec.kernel_id}; set tail_exponent")


@dataclass(frozen=True)
class TailEstimate:
    mean: float
    stderr: float


def tail_expectation(spec: Kernel, t: float, law, samples: int,
                     rng: np.random.Generator, mean_weight=None) -> TailEstimate:
    """Monte Carlo estimate of E[kappa(t, W1, W2)] for independent weights."""
    if samples < 2:
        raise KernelError("need at least two weight pairs")
    if mean_weight is None and isinstance(spec, Girg):
        mean_weight = law.mean()
    w1 = law.sample(samples, rng)
    w2 = law.sample(samples, rng)
    vals = np.asarray(spec.limit(np.full(samples, float(t)), w1, w2, mean_weight))
    return TailEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)))


@dataclass(frozen=True)
class TailBoundRow:
    t: float
    estimate: float
    stderr: float
    bound: float
    passed: bool


@dataclass(frozen=True)
class TailBoundReport:
    gamma: float
    eps: float
    prefactor: float
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def verify_tail_bound(spec: Kernel, law, t_grid, eps: float, samples: int,
                      rng: np.random.Generator, gamma: float | None = None,
                      prefactor: float | None = None, t0: float = 0.0,
                      mean_weight=None) -> TailBoundReport:
    """Check E[kappa(t, W1, W2)] <= A t^(-gamma + eps) on a grid of large t.

    A grid point passes when the estimate minus three standard errors stays
    below the bound. Failures are reported, not raised.
    """
    gamma = declared_gamma(spec, law) if gamma is None else gamma
    prefactor = spec.prefactor if prefactor is None else prefactor
    rows = []
    for t in t_grid:
        if t <= t0:
            raise KernelError(f"t={t} is not beyond t0={t0}")
        est = tail_expectation(spec, t, law, samples, rng, mean_weight)
        bound = prefactor * t ** (-gamma + eps) if math.isfinite(gamma) else 0.0
        rows.append(TailBoundRow(float(t), est.mean, est.stderr, bound,
                                 est.mean - 3.0 * est.stderr <= bound))
    return TailBoundReport(gamma, eps, prefactor, tuple(rows))
