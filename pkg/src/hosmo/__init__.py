"""Higher-order sliding-mode unknown-input observers for LTI systems."""

from .errors import HosmoError, NumericalError, ValidationError
from .linalg import RankTolerance
from .model import LtiSystem, check_observer_matching, eliminate_feedthrough, is_strongly_observable
from .normalform import NormalFormResult, transform, validate_structure
from .observer import ObserverConfig, check_gain_condition, default_gains, synthesize
from .sim import (
    DisturbanceSpec,
    FeedbackSpec,
    Scenario,
    Trace,
    augment_for_input_reconstruction,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "DisturbanceSpec",
    "FeedbackSpec",
    "HosmoError",
    "LtiSystem",
    "NormalFormResult",
    "NumericalError",
    "ObserverConfig",
    "RankTolerance",
    "Scenario",
    "Trace",
    "ValidationError",
    "augment_for_input_reconstruction",
    "check_gain_condition",
    "check_observer_matching",
    "default_gains",
    "eliminate_feedthrough",
    "is_strongly_observable",
    "simulate",
    "synthesize",
    "transform",
    "validate_structure",
]
