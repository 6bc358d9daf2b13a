"""Fractional p-Laplacians on finite metric measure spaces through extension domains."""

from .cheeger import (
    DifferentialStructure,
    ISOTROPIC,
    el_form,
    example_structure,
    flux,
    gradient,
    monotonicity_gap,
    p_energy,
    p_energy_grad,
)
from .errors import FraclapError, NonConvergence, ValidationError
from .extension import (
    ExtensionDomain,
    FractionalParams,
    build_product_extension,
    dampen,
    graph_domain,
    lattice_domain,
    truncate,
)
from .fractional import (
    BesovFunction,
    besov_form,
    dual_bound_check,
    et_form,
    extend,
    frac_apply,
    frac_solve,
    nu_J_norm,
    trace,
    weight_J,
)
from .solve import (
    BoundaryData,
    Solution,
    SolverOptions,
    a_priori_check,
    boundary_data,
    solve_dirichlet,
    solve_neumann,
    solve_neumann_exhaustion,
)
from .space import (
    MetricMeasureSpace,
    chain_space,
    cycle_space,
    grid_space,
    space_from_coords,
    validate_space,
)

__version__ = "0.1.0"

__all__ = [
    "a_priori_check",
    "besov_form",
    "BesovFunction",
    "boundary_data",
    "BoundaryData",
    "build_product_extension",
    "chain_space",
    "cycle_space",
    "dampen",
    "DifferentialStructure",
    "dual_bound_check",
    "el_form",
    "et_form",
    "example_structure",
    "extend",
    "ExtensionDomain",
    "flux",
    "frac_apply",
    "frac_solve",
    "FraclapError",
    "FractionalParams",
    "gradient",
    "graph_domain",
    "grid_space",
    "ISOTROPIC",
    "lattice_domain",
    "MetricMeasureSpace",
    "monotonicity_gap",
    "NonConvergence",
    "nu_J_norm",
    "p_energy",
    "p_energy_grad",
    "Solution",
    "solve_dirichlet",
    "solve_neumann",
    "solve_neumann_exhaustion",
    "SolverOptions",
    "space_from_coords",
    "trace",
    "truncate",
    "validate_space",
    "ValidationError",
    "weight_J",
]
