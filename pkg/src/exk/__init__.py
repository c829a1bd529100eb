"""Simulation and verification toolkit for a population model with protein exchange between cells."""

from .errors import ConfigError, ConvergenceError, NumericalError
from .exchange import (
    BetaFraction,
    PointFraction,
    TriangularFraction,
    UniformFraction,
    apply_T,
    contraction_constant,
    measure_contraction,
    relaxation_constant,
    steady_state,
    steady_state_scaled,
)
from .kinetic import (
    AffineClippedFitness,
    ConstantFitness,
    KineticParams,
    PopulationState,
    SaturatingFitness,
    simulate,
    simulate_pure_exchange,
)
from .measures import Ensemble, Exponential, PointMass, ScaledBeta, Uniform, make_rng, moments, sample_from, wasserstein

__version__ = "0.1.0"
