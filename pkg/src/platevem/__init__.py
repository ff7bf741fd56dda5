"""Lowest-order C1 virtual elements for the plate vibration eigenproblem
``Delta^2 u = lambda u`` on polygonal meshes, with a residual error
estimator and adaptive refinement."""

from .adapt import StepRecord, StudyError, StudyHistory, adaptive_loop, mesh_sequence_study
from .assembly import (DofMap, EigenSolution, SolverError, assemble, build_dof_map,
                       relative_residuals, solve_eigen)
from .backend import DEFAULT_BACKEND, ElementBatch, element_batch
from .element import ElementError, ElementOperators, element_operators, local_mass, local_stiffness
from .estimator import (UNDEFINED, EstimatorBreakdown, convergence_rate, dorfler_mark, effectivity,
                        element_estimator, estimate, global_estimator)
from .io import (ConfigError, RunConfig, export_snapshot, load_config, read_history_csv,
                 write_history_csv)
from .mesh import (ElementGeometry, Mesh, MeshError, generate_structured, generate_voronoi,
                   load_mesh, quality_report, refine, save_mesh)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DEFAULT_BACKEND", "DofMap", "EigenSolution", "ElementBatch", "ElementError",
    "ElementGeometry", "ElementOperators", "EstimatorBreakdown", "Mesh", "MeshError", "RunConfig",
    "SolverError", "StepRecord", "StudyError", "StudyHistory", "UNDEFINED", "adaptive_loop",
    "assemble", "build_dof_map", "convergence_rate", "dorfler_mark", "effectivity",
    "element_batch", "element_estimator", "element_operators", "estimate", "export_snapshot",
    "generate_structured", "generate_voronoi", "global_estimator", "load_config", "load_mesh",
    "local_mass", "local_stiffness", "mesh_sequence_study", "quality_report",
    "read_history_csv", "refine", "relative_residuals", "save_mesh", "solve_eigen",
    "write_history_csv",
]
