"""Optimal control of homogeneous discrete-time systems by value iteration on a compact manifold."""

from .dilation import DilationSpec, DilationWeights, dilate, dilate_power, scale_input_sequence, signed_power
from .systems import SystemModel, simulate, van_der_pol_extended, verify_dynamics_homogeneity
from .costs import CostModel, CostWeights, eval_cost
from .manifold import ManifoldGrid, PointManifold, project_to_manifold
from .homvi import VIConfig, ValueEnvelope, hom_vi_iterate, query_lower, query_upper
from .classic_vi import StateGrid, brute_force_value, classic_vi_iterate

__all__ = [
    "DilationSpec", "DilationWeights", "dilate", "dilate_power", "scale_input_sequence", "signed_power",
    "SystemModel", "simulate", "van_der_pol_extended", "verify_dynamics_homogeneity",
    "CostModel", "CostWeights", "eval_cost",
    "ManifoldGrid", "PointManifold", "project_to_manifold",
    "VIConfig", "ValueEnvelope", "hom_vi_iterate", "query_lower", "query_upper",
    "StateGrid", "brute_force_value", "classic_vi_iterate",
]
