"""Curvilinear extruded-hex DPG discretization."""

from .mesh2d import CrossSectionMesh, box_cross_section, disk_cross_section
from .mesh3d import ExtrudedMesh, extrude
from .spaces import DiscreteSpaces, TestNormConfig
from .driver import (BoundarySpec, ConvergenceError, DPGSolution,
                     SolverError, WaveguideProblem, assemble_solve,
                     discrete_infsup_probe, tag_epsilon)
from .boundary import (StretchProfile, absorbing_carrier, decay_slope,
                       modal_impedance, standing_wave_ratio)

__all__ = [
    "CrossSectionMesh", "box_cross_section", "disk_cross_section",
    "ExtrudedMesh", "extrude",
    "DiscreteSpaces", "TestNormConfig",
    "BoundarySpec", "WaveguideProblem", "DPGSolution",
    "SolverError", "ConvergenceError",
    "assemble_solve", "discrete_infsup_probe", "tag_epsilon",
    "StretchProfile", "absorbing_carrier", "decay_slope",
    "modal_impedance", "standing_wave_ratio",
]
