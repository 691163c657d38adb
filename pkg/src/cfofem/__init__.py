"""Conservative flux optimization (CFO) finite elements on triangular meshes.

The discrete solution pairs a continuous P_k potential with a P_{k-1} normal flux on
each edge. The flux satisfies the mass balance on every triangle exactly, and the
pair minimizes a Galerkin energy plus an ``h^beta``-weighted flux mismatch.
"""

__version__ = "0.1.0"

from .analysis import (ConvergenceTable, ErrorReport, compute_errors, conservation_audit, convergence_study,
                       estimator_fields)
from .assembly import AssemblyConfig, CfoSolution, SaddleSystem, assemble_cfo, assemble_ritz, solve_cfo
from .fem import DofLayout, SpaceConfig, build_dof_layout, local_dof_count
from .mesh import TriMesh, build_uniform_mesh
from .problems import ProblemDefinition, get_problem, test_case_1, test_case_2, test_case_3, test_case_4
from .solver import SolverError, solve_spd, solve_symmetric_indefinite

__all__ = [
    "AssemblyConfig", "CfoSolution", "ConvergenceTable", "DofLayout", "ErrorReport", "ProblemDefinition",
    "SaddleSystem", "SolverError", "SpaceConfig", "TriMesh", "assemble_cfo", "assemble_ritz", "build_dof_layout",
    "build_uniform_mesh", "compute_errors", "conservation_audit", "convergence_study", "estimator_fields",
    "get_problem", "local_dof_count", "solve_cfo", "solve_spd", "solve_symmetric_indefinite", "test_case_1",
    "test_case_2", "test_case_3", "test_case_4",
]
