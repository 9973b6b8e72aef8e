"""Differentially private minimization of piecewise-affine convex functions over boxes."""

from .core import (
    AdjacencySpec,
    Box,
    Instance,
    InputError,
    PrivacyBudget,
    PwaObjective,
    ResourceAllocationInstance,
    SizeError,
    box_diameter,
    data_sensitivity,
    evaluate,
    gen_gaussian,
    gen_l1,
    gen_linf,
    gen_resource_allocation,
    true_subgradient,
)
from .mechanisms import (
    DpSubgradConfig,
    MechanismOutput,
    dp_subgradient_method,
    mech_data_laplace,
    mech_exponential,
    mech_solution_laplace,
    private_subgradient,
)
from .samplers import McmcConfig, RandomSource
from .solver import StepSchedule, brute_force_optimum, projected_subgradient

__version__ = "0.1.0"
