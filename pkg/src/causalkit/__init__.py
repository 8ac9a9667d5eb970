"""Causal inference toolkit: randomized experiments, observational studies,
instrumental variables, sensitivity analysis and mediation."""

from .reporting import (
    CausalkitError,
    ConvergenceError,
    EstimateReport,
    NumericError,
    SeparationError,
    SingularDesignError,
    ValidationError,
    WeakInstrumentError,
)

__version__ = "0.1.0"
