"""Incoherently pumped three-level cascade atom: EIT spectra and photon correlations."""

__version__ = "0.1.0"

from .lindblad import (
    Liouvillian,
    ParameterError,
    StateError,
    SystemParams,
    apply_generator,
    basis_state,
    build_liouvillian,
    devectorize,
    validate_density_matrix,
    vectorize,
)
from .steady import (
    DegenerateSteadyStateError,
    SolverError,
    SteadyStateSolution,
    population_difference,
    solve_steady_state,
)
from .dynamics import Method, PropagationResult, expm, matrix_exponential, propagate
from .correlations import CorrelationCurve, Region, Transition, classify_regions, g2
from .spectra import (
    DipMetrics,
    SpectrumCurve,
    dip_metrics,
    integrated_absorption,
    peak_positions,
    sweep_probe_detuning,
    to_physical_units,
)

__all__ = [
    "__version__",
    "Liouvillian",
    "ParameterError",
    "StateError",
    "SystemParams",
    "apply_generator",
    "basis_state",
    "build_liouvillian",
    "devectorize",
    "validate_density_matrix",
    "vectorize",
    "DegenerateSteadyStateError",
    "SolverError",
    "SteadyStateSolution",
    "population_difference",
    "solve_steady_state",
    "Method",
    "PropagationResult",
    "expm",
    "matrix_exponential",
    "propagate",
    "CorrelationCurve",
    "Region",
    "Transition",
    "classify_regions",
    "g2",
    "DipMetrics",
    "SpectrumCurve",
    "dip_metrics",
    "integrated_absorption",
    "peak_positions",
    "sweep_probe_detuning",
    "to_physical_units",
]
