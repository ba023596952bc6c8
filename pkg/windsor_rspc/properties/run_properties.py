import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from ..functions.errors import ConfigError
from .controller_properties import ControllerProperties
from .estimator_properties import EstimatorProperties
from .plant_properties import PlantProperties
from .schema import PropertyGroup, prop

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

DEFAULT_STEPS = (
    (0.0, 0.0),
    (30.0, 3.0),
    (60.0, -3.0),
    (90.0, 5.0),
    (120.0, -5.0),
    (150.0, 2.0),
    (180.0, -2.0),
    (210.0, 4.0),
    (240.0, -4.0),
    (270.0, 0.0),
)


@dataclass(frozen=True)
class ScenarioProperties(PropertyGroup):
    section = "scenario"

    kind: str = prop(
        "sinusoid",
        name="Scenario",
        description="Yaw profile",
        items=("constant", "sinusoid", "steps", "sweep"),
    )
    duration: float = prop(
        300.0, name="Duration", description="Simulated seconds", min=0.0
    )
    amplitude: float = prop(
        3.0,
        name="Yaw Amplitude",
        description="Sinusoid amplitude, degrees",
        min=0.0,
        max=5.0,
    )
    period: float = prop(
        200.0, name="Yaw Period", description="Sinusoid period, s", min=1e-3
    )
    steps: tuple = prop(
        DEFAULT_STEPS,
        name="Yaw Steps",
        description="(time s, yaw degrees) pairs, each held until the next",
    )
    sweep_dwell: float = prop(
        30.0,
        name="Sweep Dwell",
        description="Seconds spent at each yaw angle of the sweep",
        min=1e-3,
    )
    beta: float = prop(
        0.0,
        name="Constant Yaw",
        description="Yaw angle of the constant scenario, degrees",
        min=-5.0,
        max=5.0,
    )
    grid_height: float = prop(
        -200.0,
        name="Grid Height",
        description="Turbulence grid height, mm",
        min=-200.0,
        max=100.0,
    )
    grid_steps: tuple = prop(
        (),
        name="Grid Steps",
        description="(time s, grid height mm) pairs; overrides the constant height",
    )

    def validate(self):
        for name, low, high in (("steps", -5.0, 5.0), ("grid_steps", -200.0, 100.0)):
            table = getattr(self, name)
            for entry in table:
                if len(entry) != 2:
                    raise ConfigError(
                        f"scenario.{name} entries are (time, value) pairs"
                    )
                if not low <= entry[1] <= high:
                    raise ConfigError(
                        f"scenario.{name} value {entry[1]} outside [{low}, {high}]"
                    )
            times = [entry[0] for entry in table]
            if table and (times[0] > 0.0 or times != sorted(times)):
                raise ConfigError(
                    f"scenario.{name} must start at t = 0 with increasing times"
                )
        if self.kind == "steps" and not self.steps:
            raise ConfigError("scenario.steps is empty")


@dataclass(frozen=True)
class RunProperties(PropertyGroup):
    section = "run"

    control: bool = prop(True, name="Control", description="Close the loop")
    seed: int = prop(
        0, name="Seed", description="Seed of noise and excitation draws", min=0
    )
    output_dir: str = prop(
        "runs", name="Output Directory", description="Where CSV files are written"
    )
    workers: int = prop(
        2, name="Workers", description="Worker threads for paired runs", min=1
    )


GROUPS = {
    group.section: group
    for group in (
        PlantProperties,
        EstimatorProperties,
        ControllerProperties,
        ScenarioProperties,
        RunProperties,
    )
}


@dataclass(frozen=True)
class RunConfig:
    plant: PlantProperties = field(default_factory=PlantProperties)
    estimator: EstimatorProperties = field(default_factory=EstimatorProperties)
    controller: ControllerProperties = field(default_factory=ControllerProperties)
    scenario: ScenarioProperties = field(default_factory=ScenarioProperties)
    run: RunProperties = field(default_factory=RunProperties)

    def __post_init__(self):
        if self.scenario.duration <= 0.0:
            raise ConfigError("scenario.duration must be positive")
        if self.run.control and self.scenario.duration < self.warmup_seconds:
            raise ConfigError(
                f"scenario.duration {self.scenario.duration} s is shorter than the "
                f"{self.warmup_seconds:.1f} s warm-up"
            )

    @property
    def steps(self) -> int:
        return int(round(self.scenario.duration / self.plant.sample_period))

    @property
    def warmup_samples(self) -> int:
        """Samples before control can engage: ring fill plus excited dwell"""
        return self.controller.engagement_sample(
            self.estimator.rho, self.estimator.span, self.plant.sample_period
        )

    @property
    def warmup_seconds(self) -> float:
        return self.warmup_samples * self.plant.sample_period

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        unknown = sorted(set(data) - set(GROUPS))
        if unknown:
            raise ConfigError(f"Unknown configuration sections: {', '.join(unknown)}")
        return cls(
            **{
                section: group.from_mapping(data.get(section))
                for section, group in GROUPS.items()
            }
        )

    def to_mapping(self) -> Dict[str, Dict[str, Any]]:
        return {section: getattr(self, section).to_mapping() for section in GROUPS}

    def with_overrides(
        self,
        *,
        scenario: Optional[str] = None,
        control: Optional[bool] = None,
        seed: Optional[int] = None,
        output_dir: Optional[str] = None,
        duration: Optional[float] = None,
    ) -> "RunConfig":
        scenario_changes: Dict[str, Any] = {}
        run_changes: Dict[str, Any] = {}
        if scenario is not None:
            scenario_changes["kind"] = scenario
        if duration is not None:
            scenario_changes["duration"] = duration
        if control is not None:
            run_changes["control"] = control
        if seed is not None:
            run_changes["seed"] = seed
        if output_dir is not None:
            run_changes["output_dir"] = output_dir
        return replace(
            self,
            scenario=_rebuild(self.scenario, scenario_changes),
            run=_rebuild(self.run, run_changes),
        )

    def echo(self) -> str:
        """Fully resolved configuration as JSON"""
        return json.dumps(self.to_mapping(), indent=2, sort_keys=True) + "\n"


def _rebuild(group: PropertyGroup, changes: Dict[str, Any]):
    if not changes:
        return group
    try:
        return group.with_values(**changes)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Read a TOML configuration; no path gives the defaults"""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        with path.open("rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Configuration file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Malformed configuration {path}: {e}") from e
    return RunConfig.from_mapping(data)

