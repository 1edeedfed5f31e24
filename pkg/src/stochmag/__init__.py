"""Stochastic core reluctivity via a hierarchical-matrix Karhunen-Loeve
expansion, propagated through 2D magnetostatic finite elements."""

from .config import RunConfig, load_config, parse_config
from .errors import (BudgetError, ConfigError, GeometryError, MeshFormatError, NeedMoreEigenpairs,
                     NumericalError, SolverError, StochmagError, TaggingError)
from .fem import MaterialConfig, assemble_affine_stiffness, assemble_load, solve
from .hmatrix import assemble_covariance_hmatrix, memory_report, relative_error_dense
from .kle import CovarianceKernel, KleModel, analytic_eigenpairs_1d, sample_field, solve_kle, truncate
from .mesh import (ReferenceGeometry, Region, TriMesh, core_geometries, generate_reference_geometry,
                   load_triangle_mesh)
from .uq import moments, run_collocation, tensor_grid

__version__ = "0.1.0"

__all__ = [
    "BudgetError", "ConfigError", "CovarianceKernel", "GeometryError", "KleModel", "MaterialConfig",
    "MeshFormatError", "NeedMoreEigenpairs", "NumericalError", "ReferenceGeometry", "Region", "RunConfig",
    "SolverError", "StochmagError", "TaggingError", "TriMesh", "analytic_eigenpairs_1d",
    "assemble_affine_stiffness", "assemble_covariance_hmatrix", "assemble_load", "core_geometries",
    "generate_reference_geometry", "load_config", "load_triangle_mesh", "memory_report", "moments",
    "parse_config", "relative_error_dense", "run_collocation", "sample_field", "solve", "solve_kle",
    "tensor_grid", "truncate",
]
