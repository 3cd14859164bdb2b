"""Control-landscape laboratory for n-level systems with a polarizability term."""

from .dynamics import ControlField, HamiltonianModel, Trajectory, endpoint_variation_basis, generator_at, propagate
from .landscape import AscentConfig, GoalGate, RunRecord, fidelity, fidelity_gradient, randomized_ascent
from .matrix_core import commutator, expm_skew, lie_closure_rank, random_su, random_unitary_goal, trace_inner

__version__ = "0.1.0"

__all__ = [
    "AscentConfig",
    "ControlField",
    "GoalGate",
    "HamiltonianModel",
    "RunRecord",
    "Trajectory",
    "commutator",
    "endpoint_variation_basis",
    "expm_skew",
    "fidelity",
    "fidelity_gradient",
    "generator_at",
    "lie_closure_rank",
    "propagate",
    "random_su",
    "random_unitary_goal",
    "randomized_ascent",
    "trace_inner",
]
