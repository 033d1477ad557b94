"""Experiment configuration: a flat YAML mapping validated into a dataclass."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from ..kernels import (ConstantKernel, Csfp, Girg, Kernel, PhrgLimit, Threshold, ThrgLimit,
                       Wdrcm, declared_gamma)
from ..weights import Constant, Empirical, Pareto, PowerLawTail, Uniform01


class ConfigError(ValueError):
    pass


MODELS = ("threshold", "constant", "csfp", "girg", "thrg", "phrg", "wdrcm")
WEIGHTS = ("constant", "uniform", "pareto", "powerlaw", "empirical", "hrg")


@dataclass
class ExperimentConfig:
    # model
    model: str = "threshold"
    d: int = 1
    metric: str = "euclidean"
    r0: float = 1.0
    p: float = 0.0
    lam: float = 1.0
    alpha: float = 3.0
    alpha_g: float = 2.0
    nu: float = 1.0
    temperature: float = 0.5
    alpha_h: float = 1.0
    eta: float = 2.0
    gamma: float = 1.0
    tail_exponent: float | None = None
    prefactor: float = 1.0
    # weights
    weights: str = "constant"
    weight_c: float = 1.0
    weight_beta: float = 2.0
    beta_g: float = 2.5
    weight_file: str | None = None
    # sizes and replication
    n_grid: list = field(default_factory=lambda: [100, 1000, 10000])
    replicas: int = 50
    root_replicas: int = 10000
    mode: str = "grid"
    seed: int = 1
    workers: int = 1
    # neighborhoods and coupling
    K: int = 1
    a: float = 2.0
    m: float = 3.0
    m_grid: list = field(default_factory=lambda: [2, 3, 4])
    r: float | None = None
    cap: int = 64
    coupling_roots: int = 500
    # clustering, degrees, distances
    ks: list = field(default_factory=lambda: [2, 3, 4, 5])
    M_grid: list = field(default_factory=lambda: [0, 5, 10, 20, 50])
    kmax: int = 60
    w0_samples: int = 10000
    C_grid: list = field(default_factory=lambda: [1.2])
    pairs: int = 1000
    exceedance_floor: float = 0.9
    tv_max: float = 0.05
    # kernel tail check
    t_grid: list = field(default_factory=lambda: [10.0, 30.0, 100.0])
    eps: float = 0.25
    samples: int = 100000
    dominating: bool = False
    override_gates: bool = False

    def __post_init__(self):
        self.validate()

    # derived objects

    def kernel(self) -> Kernel:
        extra = {"tail_exponent": self.tail_exponent, "prefactor": self.prefactor}
        if self.model == "threshold":
            return Threshold(r0=self.r0, **extra)
        if self.model == "constant":
            return ConstantKernel(p=self.p, **extra)
        if self.model == "csfp":
            return Csfp(lam=self.lam, alpha=self.alpha, **extra)
        if self.model == "girg":
            return Girg(alpha_g=self.alpha_g, d=self.d, **extra)
        if self.model == "thrg":
            return ThrgLimit(nu=self.nu, **extra)
        if self.model == "phrg":
            return PhrgLimit(nu=self.nu, temperature=self.temperature, **extra)
        return Wdrcm(eta=self.eta, gamma=self.gamma, d=self.d, **extra)

    def weight_law(self):
        """The weight law of the limit graph (Pareto(2 alpha_H) for hyperbolic models)."""
        w = self.weights
        if self.model in ("thrg", "phrg") or w == "hrg":
            return Pareto(2.0 * self.alpha_h)
        if w == "constant":
            return Constant(self.weight_c)
        if w == "uniform":
            return Uniform01()
        if w == "pareto":
            return Pareto(self.weight_beta)
        if w == "powerlaw":
            return PowerLawTail(self.beta_g)
        return Empirical.from_file(self.weight_file)

    @property
    def is_hyperbolic(self) -> bool:
        return self.model in ("thrg", "phrg")

    def tail_kernel(self) -> Kernel:
        """Kernel checked by verify-kernel: the dominating product for PHRG when asked."""
        k = self.kernel()
        if self.dominating:
            if not isinstance(k, PhrgLimit):
                raise ConfigError("dominating=true is only defined for the phrg model")
            return k.dominating_product(2.0 * self.alpha_h)
        return k

    def declared_alpha(self) -> float:
        law = self.weight_law()
        return declared_gamma(self.kernel(), law)

    def coupling_r(self) -> float:
        from ..neighborhoods import coupling_radius
        return self.r if self.r is not None else coupling_radius(self.a, self.m, self.K)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest_dict(self) -> dict:
        """Settings that affect results (the worker count does not)."""
        out = asdict(self)
        out.pop("workers")
        return out

    # validation

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.weights not in WEIGHTS:
            raise ConfigError(f"weights must be one of {WEIGHTS}, got {self.weights!r}")
        if self.metric not in ("euclidean", "torus"):
            raise ConfigError(f"metric must be euclidean or torus, got {self.metric!r}")
        if self.mode not in ("exact", "grid"):
            raise ConfigError(f"mode must be exact or grid, got {self.mode!r}")
        if not (isinstance(self.d, int) and self.d >= 1):
            raise ConfigError(f"d must be a positive integer, got {self.d!r}")
        for name in ("n_grid", "m_grid", "ks", "M_grid", "C_grid", "t_grid"):
            if not isinstance(getattr(self, name), list) or not getattr(self, name):
                raise ConfigError(f"{name} must be a nonempty list")
        if any(int(n) < 1 for n in self.n_grid):
            raise ConfigError("every n in n_grid must be >= 1")
        for name in ("replicas", "root_replicas", "workers", "pairs", "samples", "w0_samples",
                     "coupling_roots", "cap"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.K < 0:
            raise ConfigError("K must be >= 0")
        if self.weights == "empirical" and not self.weight_file:
            raise ConfigError("empirical weights need weight_file")
        if self.is_hyperbolic:
            if self.d != 1:
                raise ConfigError("hyperbolic models are one-dimensional")
            if not self.alpha_h > 0.5:
                raise ConfigError(f"alpha_h must be > 1/2, got {self.alpha_h}")
            if not self.nu > 0:
                raise ConfigError(f"nu must be > 0, got {self.nu}")
            if self.model == "phrg" and not 0 < self.temperature < 1:
                raise ConfigError(f"temperature must be in (0, 1), got {self.temperature}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        try:
            self.kernel()
            self.weight_law()
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from None

    def require_limit(self) -> float:
        """Limit experiments need a declared tail exponent above d."""
        try:
            alpha = self.declared_alpha()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not alpha > self.d:
            raise ConfigError(f"declared tail exponent {alpha} must exceed d={self.d}")
        return alpha

    def require_clustering(self) -> float:
        alpha = self.require_limit()
        if not alpha > 2 * self.d:
            if not self.override_gates:
                raise ConfigError(f"global clustering needs tail exponent > 2d, got {alpha}; "
                                  "set override_gates: true to run anyway")
            warnings.warn("running global clustering below the 2d gate", stacklevel=2)
        return alpha


def config_from_mapping(data: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None, **overrides) -> ExperimentConfig:
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a key-value mapping")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_mapping(data)
