"""Forward models: the shared contract plus the built-in simulators."""

from .base import (
    ForwardModel,
    ObservationSeries,
    SimulationRun,
    Trajectory,
    ValidationResult,
    observe,
    synthetic_observation,
    validate_trajectory,
)
from .idm import HighwayScenario, IDMParams, IntelligentDriverModel
from .sfm import RoomScenario, SFMParams, SocialForceModel
from .toy import GaussianCloudModel

MODELS = {
    "sfm": SocialForceModel,
    "idm": IntelligentDriverModel,
}

__all__ = [
    "ForwardModel",
    "ObservationSeries",
    "SimulationRun",
    "Trajectory",
    "ValidationResult",
    "observe",
    "synthetic_observation",
    "validate_trajectory",
    "HighwayScenario",
    "IDMParams",
    "IntelligentDriverModel",
    "RoomScenario",
    "SFMParams",
    "SocialForceModel",
    "GaussianCloudModel",
    "MODELS",
]
