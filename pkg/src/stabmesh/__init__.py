"""Stabilized P1 finite elements on anisotropic adapted meshes."""

from .mesh import ElementGeometry, Mesh, MeshError, directional_diameter, element_geometry, h_variant
from .meshio import MeshFormatError, read_mesh, write_mesh, write_vtk
from .exact_error import (
    ClosedFormInputs,
    ErrorTerms,
    conv_deriv_sq,
    element_error_bound,
    grad_seminorm_sq,
    laplacian_sq,
    nadler_l2_sq,
    q_closed_forms,
)
from .recovery import HessianField, recover_gradient, recover_hessian, regularize
from .stabilization import StabParams, classical_alpha, compute_field, nsp_alpha, nsp_alpha_theoretical
from .assembly import LinearSystem, Problem, assemble, energy_norm, l2_error, oscillation_indicator, solve
from .metric import MetricField, metric_edge_length, monitor_l2, monitor_nsp, normalize
from .adapt import AdaptParams, adapt, conformity_stats, quality_in_metric
from .driver import AdaptReport, BenchmarkProblem, RunConfig, adaptive_solve, compare_strategies, example1, example2

__version__ = "0.1.0"
