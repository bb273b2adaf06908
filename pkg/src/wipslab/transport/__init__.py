"""Wasserstein-1 solvers and Lipschitz-net machinery."""

from .exact import (ASSIGNMENT_CAP, W1Result, as_points, gaussian_lower_partial,
                    gaussian_upper_partial, w1_1d, w1_assignment, w1_gaussian_1d, w1_points,
                    w1_to_gaussian_sorted, w1_to_law_1d)
from .nets import LipschitzNet, build_net, covering_count, w1_net_lower
from .sinkhorn import w1_sinkhorn

__all__ = [
    "ASSIGNMENT_CAP", "W1Result", "as_points", "gaussian_lower_partial", "gaussian_upper_partial",
    "w1_1d", "w1_assignment", "w1_gaussian_1d", "w1_points", "w1_to_gaussian_sorted",
    "w1_to_law_1d", "LipschitzNet", "build_net", "covering_count", "w1_net_lower", "w1_sinkhorn",
]
