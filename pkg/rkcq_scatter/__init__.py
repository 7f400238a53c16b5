"""
rkcq-scatter
============

Runge-Kutta convolution quadrature coupled to a two-dimensional Galerkin
boundary element method, for the sound-soft wave scattering problem.

The package compares two time-stepping schemes for the Dirichlet-to-Neumann
map of the interior problem:

* the *standard* scheme, CQ applied to DtN(s) on the Dirichlet data g,
* the *differentiated* scheme, CQ applied to s^-1 DtN(s) on the time
  derivative of g, which converges with order min(q+2, p) for a stiffly
  accurate method of stage order q and classical order p.

Key Modules:
------------
- `butcher`: Radau IIA / Lobatto IIIC tableaux, validation, R(z) and Delta(zeta).
- `cq`: symbols, stage grids, weight sequences and CQ application.
- `kernels`: modified Bessel functions and fundamental solutions of -Delta + s^2.
- `bem2d`: polygon meshes, trace spaces, Galerkin operators, DtN/DtI maps, norms.
- `timedomain`: travelling-wave data and the two scattering schemes.
- `config`, `plotting`, `cli`: the reproducible experiment driver.

Example Usage:
--------------
```python
import numpy as np
from rkcq_scatter import radau_iia, StageGrid, Symbol, apply_symbol

tableau = radau_iia(3)
grid = StageGrid(k=0.05, N=80, c=tableau.c)
inverse = Symbol.scalar("1/s", lambda s: 1.0 / s)
samples = np.cos(grid.stage_times)
integral = apply_symbol(inverse, tableau, grid, samples)
```
"""

import logging

__version__ = "0.2.1"


def get_rkcq_logger(name: str) -> logging.Logger:
    """
    Return a logger in the ``rkcq_scatter`` hierarchy.

    A NullHandler is attached to the package logger so that library use emits
    nothing unless the application configures logging.
    """
    root = logging.getLogger("rkcq_scatter")
    if not root.handlers:
        root.addHandler(logging.NullHandler())
    if name == "rkcq_scatter" or name.startswith("rkcq_scatter."):
        return logging.getLogger(name)
    return logging.getLogger(f"rkcq_scatter.{name}")


from .exceptions import (
    RKCQError,
    NotImplementedFeatureError,
    TableauError,
    DomainError,
    SingularityError,
    DiagonalizationError,
    ContractError,
    SymbolEvaluationError,
    GeometryError,
    AssemblyError,
    LinearAlgebraError,
    MatrixIntegrityError,
    ConfigurationError,
    CausalityError,
)

from .butcher import (
    ButcherTableau,
    CheckResult,
    ValidationReport,
    radau_iia,
    lobatto_iiic,
    get_tableau,
    available_tableaux,
    validate,
    stability_function,
    delta,
    delta_eigen,
    DeltaEigen,
    imaginary_axis_defect,
    rooted_trees,
)

from .cq import (
    Symbol,
    StageGrid,
    WeightSequence,
    RateFit,
    contour_radius,
    weights,
    apply_convolution,
    apply_symbol,
    convergence_rate,
    scalar_convergence,
)

from .kernels import (
    FrequencyPoint,
    bessel_k0,
    bessel_k1,
    bessel_k0_scaled,
    bessel_k1_scaled,
    fundamental_solution,
    fundamental_solution_gradient_2d,
    dlp_kernel_2d,
)

from .bem2d import (
    Panel,
    PolygonBoundary,
    BoundarySpace,
    GalerkinMatrix,
    OperatorCache,
    L_SHAPE_VERTICES,
    UNIT_SQUARE_VERTICES,
    mesh_polygon,
    assemble_single_layer,
    assemble_double_layer,
    assemble_mass,
    assemble_stiffness,
    l2_project,
    dtn_apply,
    dti_apply,
    dtn_jump_apply,
    indirect_apply,
    dtn_symbol,
    dti_symbol,
    QuadratureSettings,
    ManufacturedResult,
    manufactured_dtn_error,
    energy_norm,
    operator_norm,
)

from .timedomain import (
    IncidentWave,
    SchemeRun,
    DecompositionReport,
    trace_samples,
    reference_solution,
    solve_schemes,
    solve_standard,
    solve_differentiated,
    scheme_decomposition_check,
    floor_filtered_rate,
)

__all__ = [
    "__version__",
    "get_rkcq_logger",
    # exceptions
    "RKCQError",
    "NotImplementedFeatureError",
    "TableauError",
    "DomainError",
    "SingularityError",
    "DiagonalizationError",
    "ContractError",
    "SymbolEvaluationError",
    "GeometryError",
    "AssemblyError",
    "LinearAlgebraError",
    "MatrixIntegrityError",
    "ConfigurationError",
    "CausalityError",
    # butcher
    "ButcherTableau",
    "CheckResult",
    "ValidationReport",
    "radau_iia",
    "lobatto_iiic",
    "get_tableau",
    "available_tableaux",
    "validate",
    "stability_function",
    "delta",
    "delta_eigen",
    "DeltaEigen",
    "imaginary_axis_defect",
    "rooted_trees",
    # cq
    "Symbol",
    "StageGrid",
    "WeightSequence",
    "RateFit",
    "contour_radius",
    "weights",
    "apply_convolution",
    "apply_symbol",
    "convergence_rate",
    "scalar_convergence",
    # kernels
    "FrequencyPoint",
    "bessel_k0",
    "bessel_k1",
    "bessel_k0_scaled",
    "bessel_k1_scaled",
    "fundamental_solution",
    "fundamental_solution_gradient_2d",
    "dlp_kernel_2d",
    # bem2d
    "Panel",
    "PolygonBoundary",
    "BoundarySpace",
    "GalerkinMatrix",
    "OperatorCache",
    "L_SHAPE_VERTICES",
    "UNIT_SQUARE_VERTICES",
    "mesh_polygon",
    "assemble_single_layer",
    "assemble_double_layer",
    "assemble_mass",
    "assemble_stiffness",
    "l2_project",
    "dtn_apply",
    "dti_apply",
    "dtn_jump_apply",
    "indirect_apply",
    "dtn_symbol",
    "dti_symbol",
    "QuadratureSettings",
    "ManufacturedResult",
    "manufactured_dtn_error",
    "energy_norm",
    "operator_norm",
    # timedomain
    "IncidentWave",
    "SchemeRun",
    "DecompositionReport",
    "trace_samples",
    "reference_solution",
    "solve_schemes",
    "solve_standard",
    "solve_differentiated",
    "scheme_decomposition_check",
    "floor_filtered_rate",
]
