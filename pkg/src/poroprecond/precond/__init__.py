"""Two-stage block preconditioner components."""
from .amg import AMGHierarchy, AMGParams, amg_setup
from .cpr import CPRReduction, cpr_reduce
from .fixed_stress import (FixedStressFlowMatrix, build_fixed_stress, build_rsl_diagonals,
                           fixed_stress_diagonals)
from .smoothers import ILU0, BlockGaussSeidel, local_smoother, local_smoother_apply
from .stack import (MechanicsPreconditioner, PrecondOptions, PreconditionerStack, apply,
                    build_sdc, component_index, richardson)

__all__ = [
    "AMGHierarchy", "AMGParams", "BlockGaussSeidel", "CPRReduction",
    "FixedStressFlowMatrix", "ILU0", "MechanicsPreconditioner", "PrecondOptions",
    "PreconditionerStack", "amg_setup", "apply", "build_fixed_stress",
    "build_rsl_diagonals", "build_sdc", "component_index", "cpr_reduce",
    "fixed_stress_diagonals", "local_smoother", "local_smoother_apply", "richardson",
]
