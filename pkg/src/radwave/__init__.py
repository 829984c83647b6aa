"""Radial defocusing semilinear wave equation with a nonlinearity-adapted conformal map."""

from .conformal import ConformalChart, Region, alpha_p, curve_H_and_interval_J, pull_solution, push_slice, push_solution
from .grid import (
    FieldKind,
    GridSpec,
    InitialDataSpec,
    SpacetimeField,
    TimeSlice,
    build_grid,
    interpolate,
    sample_initial_data,
)
from .kernels import BACKEND
from .solver import (
    EvolutionReport,
    convergence_order,
    evolve_forward,
    evolve_slice,
    evolve_transformed,
    exact_linear_solution,
)

__version__ = "0.1.0"
