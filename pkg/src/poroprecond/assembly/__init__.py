"""Residual and Jacobian assembly for the coupled system."""
from .fem import DofMap, ElementKernels, apply_bcs, q1_kernels
from .flow import face_density, phase_properties, tpfa_flux, well_sources
from .system import (BlockJacobian, BlockResidual, PoroModel, Reference, ScalingRecord,
                     SystemState, assemble_jacobian, assemble_residual, row_scale)

__all__ = [
    "BlockJacobian", "BlockResidual", "DofMap", "ElementKernels", "PoroModel",
    "Reference", "ScalingRecord", "SystemState", "apply_bcs", "assemble_jacobian",
    "assemble_residual", "face_density", "phase_properties", "q1_kernels",
    "row_scale", "tpfa_flux", "well_sources",
]
