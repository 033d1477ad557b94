"""Spatial inhomogeneous random graphs and their local limits."""

from .generator import (SpatialGraph, generate_finite, generate_hrg_native, sample_edges,
                        sample_limit_ball)
from .geometry import BallSpec, BoxSpec, PointCloud, ball_volume, distance
from .kernels import (ConstantKernel, Csfp, Girg, PhrgLimit, ProductPSIRG, Threshold, ThrgLimit,
                      Wdrcm, eval_finite, eval_limit, verify_tail_bound)
from .neighborhoods import (RootedGraph, canonical_code, coupling_check, coupling_radius,
                            graph_ball, rooted_isomorphic)
from .weights import Constant, Empirical, HrgRadial, Pareto, PowerLawTail, Uniform01

__version__ = "0.1.0"

__all__ = [
    "SpatialGraph", "generate_finite", "generate_hrg_native", "sample_edges", "sample_limit_ball",
    "BallSpec", "BoxSpec", "PointCloud", "ball_volume", "distance", "ConstantKernel", "Csfp",
    "Girg", "PhrgLimit", "ProductPSIRG", "Threshold", "ThrgLimit", "Wdrcm", "eval_finite",
    "eval_limit", "verify_tail_bound", "RootedGraph", "canonical_code", "coupling_check",
    "coupling_radius", "graph_ball", "rooted_isomorphic", "Constant", "Empirical", "HrgRadial",
    "Pareto", "PowerLawTail", "Uniform01",
]
