"""Edge-element solver for time-harmonic Maxwell cavities with impedance walls."""
from .assembly import DofMap, SourceField, SystemBlocks, assemble_blocks, assemble_rhs, assemble_system
from .boundary import (AdmissibilityError, ImpedancePatch, MaterialSpec, build_sigma_theta, kernel_decomposition,
                       regularize_lambda, vacuum, validate_lambda, validate_sigma_theta)
from .helmholtz import NodalSpace, project_div_free, reduce_source
from .linalg import SingularSystemError, solve_linear
from .mesh import MeshError, TetMesh, generate_box_mesh, read_mesh, write_mesh
from .solver import (FieldSolution, MaxwellProblem, NearResonanceError, SolveConfig, Sources, compute_delta0,
                     frequency_sweep, limiting_absorption, solve_maxwell)

__version__ = "0.1.0"

__all__ = [
    "DofMap",
    "SourceField",
    "SystemBlocks",
    "assemble_blocks",
    "assemble_rhs",
    "assemble_system",
    "AdmissibilityError",
    "ImpedancePatch",
    "MaterialSpec",
    "build_sigma_theta",
    "kernel_decomposition",
    "regularize_lambda",
    "vacuum",
    "validate_lambda",
    "validate_sigma_theta",
    "NodalSpace",
    "project_div_free",
    "reduce_source",
    "SingularSystemError",
    "solve_linear",
    "MeshError",
    "TetMesh",
    "generate_box_mesh",
    "read_mesh",
    "write_mesh",
    "FieldSolution",
    "MaxwellProblem",
    "NearResonanceError",
    "SolveConfig",
    "Sources",
    "compute_delta0",
    "frequency_sweep",
    "limiting_absorption",
    "solve_maxwell",
]
