"""Forward-reverse bridge estimator: endpoint joins, kernels and the adaptive loop."""
from .estimator import (
    BridgeConfig,
    BridgeEstimate,
    NoBridgeError,
    adaptive_estimate,
    coefficient_of_variation,
    density_estimate,
    forward_reverse_density,
    ratio_standard_error,
    simulate_clouds,
    weighted_averages,
)
from .join import EndpointCloud, JoinResult, box_join, join_clouds, kronecker_join, naive_join
from .kernels import EPANECHNIKOV, KRONECKER, Kernel, epanechnikov, kernel_eval
from .transform import TransformH, compute_transform, transform_alpha, unit_ball_volume

__all__ = [
    "BridgeConfig", "BridgeEstimate", "NoBridgeError", "adaptive_estimate", "coefficient_of_variation",
    "density_estimate", "forward_reverse_density", "ratio_standard_error", "simulate_clouds",
    "weighted_averages", "EndpointCloud", "JoinResult", "box_join", "join_clouds", "kronecker_join",
    "naive_join", "EPANECHNIKOV", "KRONECKER", "Kernel", "epanechnikov", "kernel_eval", "TransformH",
    "compute_transform", "transform_alpha", "unit_ball_volume",
]
