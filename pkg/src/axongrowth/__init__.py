"""Simulation and event-triggered backstepping control of axon growth."""
from .model import (BioParams, DerivedConstants, ErrorState, PlantState, derive_constants,
                    from_error_state, nonlinear_terms, steady_state_profile, to_error_state)

__all__ = [
    "BioParams",
    "DerivedConstants",
    "ErrorState",
    "PlantState",
    "derive_constants",
    "from_error_state",
    "nonlinear_terms",
    "steady_state_profile",
    "to_error_state",
]
__version__ = "0.1.0"
