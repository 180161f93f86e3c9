"""Finite-time identification of an LTI plant and exosystem, followed by a
gradient-flow search for the discounted LQR tracking gain."""

from .errors import ExcitationError, IntegrationError, NotStabilizingError, ScenarioError
from .model import (AugmentedSystem, ExcitationSpec, Exosystem, FilterConfig, LtiPlant,
                    ScenarioConfig, build_augmented, load_scenario)

__version__ = "0.1.0"

__all__ = [
    "AugmentedSystem", "ExcitationSpec", "Exosystem", "FilterConfig", "LtiPlant",
    "ScenarioConfig", "build_augmented", "load_scenario",
    "ExcitationError", "IntegrationError", "NotStabilizingError", "ScenarioError",
]
