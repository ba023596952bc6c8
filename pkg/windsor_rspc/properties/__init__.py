from .controller_properties import ControllerProperties
from .estimator_properties import EstimatorProperties
from .plant_properties import PlantProperties
from .run_properties import (
    GROUPS,
    RunConfig,
    RunProperties,
    ScenarioProperties,
    load_config,
)

__all__ = [
    "GROUPS",
    "ControllerProperties",
    "EstimatorProperties",
    "PlantProperties",
    "RunConfig",
    "RunProperties",
    "ScenarioProperties",
    "load_config",
]
