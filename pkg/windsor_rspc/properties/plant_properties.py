from dataclasses import dataclass

from ..functions.errors import ConfigError
from .schema import PropertyGroup, prop


@dataclass(frozen=True)
class PlantProperties(PropertyGroup):
    section = "plant"

    # Sampling and actuator
    sample_period: float = prop(
        0.1, name="Sample Period", description="Seconds per sample", min=1e-3
    )
    amplitude_limit: float = prop(
        7.0, name="Flap Amplitude", description="Flap saturation, degrees", min=0.0
    )
    rate_limit: float = prop(
        10.0,
        name="Flap Rate",
        description="Flap angular velocity limit, degrees/s",
        min=0.0,
    )

    # Noise and observer
    innovation_std: float = prop(
        0.3,
        name="Innovation Std",
        description="Output innovation standard deviation, percent",
        min=0.0,
    )
    observer_pole: float = prop(
        0.3,
        name="Observer Pole",
        description="Double eigenvalue of A - KC per observed mode",
        min=0.0,
        max=0.95,
    )
    filter_cutoff: float = prop(
        2.5,
        name="Filter Cutoff",
        description="Sensor low-pass cutoff folded into the output dynamics, Hz",
        min=0.01,
    )

    # Mode poles
    gradient_pole: float = prop(
        0.84,
        name="Gradient Pole",
        description="Pole of both gradient modes at zero yaw",
        min=0.0,
        max=0.95,
    )
    level_pole: float = prop(
        0.86,
        name="Level Pole",
        description="Pole of the pressure-level mode",
        min=0.0,
        max=0.95,
    )
    twist_pole: float = prop(
        0.3,
        name="Twist Pole",
        description="Pole of the unobserved diagonal mode",
        min=0.0,
        max=0.95,
    )
    pole_yaw_slope: float = prop(
        0.004,
        name="Pole Yaw Slope",
        description="Gradient pole increase per degree of |yaw|",
        min=0.0,
    )

    # Flap gains, percent per degree
    differential_gain: float = prop(
        0.8,
        name="Differential Gain",
        description="Gradient response to differential flap deflection",
        min=0.0,
    )
    level_gain: float = prop(
        0.4,
        name="Level Gain",
        description="Level response to symmetric flap deflection",
        min=0.0,
    )
    twist_gain: float = prop(
        0.3,
        name="Twist Gain",
        description="Diagonal response to cross deflection",
        min=0.0,
    )
    yaw_cross: float = prop(
        0.01,
        name="Yaw Cross Gain",
        description="Horizontal response to symmetric deflection per degree of yaw",
    )
    grid_cross: float = prop(
        0.03,
        name="Grid Cross Gain",
        description="Vertical response to symmetric deflection per 100 mm of grid",
    )

    # Baseline pressure distribution, percent
    yaw_gradient: float = prop(
        1.0, name="Yaw Gradient", description="Horizontal gradient per degree of yaw"
    )
    vertical_offset: float = prop(
        -4.0,
        name="Vertical Offset",
        description="Vertical gradient in the reference configuration",
    )
    vertical_yaw: float = prop(
        0.6, name="Vertical Yaw", description="Vertical gradient per degree of |yaw|"
    )
    vertical_grid: float = prop(
        0.5,
        name="Vertical Grid",
        description="Vertical gradient per 100 mm of grid height",
    )
    level_offset: float = prop(
        -80.0,
        name="Level Offset",
        description="Summed pressure level in the reference configuration",
    )
    level_yaw: float = prop(
        1.0, name="Level Yaw", description="Level drop per degree of |yaw|"
    )
    level_grid: float = prop(
        0.3, name="Level Grid", description="Level change per 100 mm of grid height"
    )
    baseline_time_constant: float = prop(
        2.0,
        name="Flow Settling",
        description="Time constant of the baseline response to yaw and grid, s",
        min=0.0,
    )

    # Scheduling grid
    beta_anchors: tuple = prop(
        (-5.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0),
        name="Yaw Anchors",
        description="Yaw angles of the anchor realizations, degrees",
        min=-5.0,
        max=5.0,
    )
    grid_anchors: tuple = prop(
        (-200.0, -100.0, 0.0, 100.0),
        name="Grid Anchors",
        description="Grid heights of the anchor realizations, mm",
        min=-200.0,
        max=100.0,
    )
    lipschitz_bound: float = prop(
        0.05,
        name="Lipschitz Bound",
        description="Bound on |A(p) - A(p')|_F per degree of yaw",
        min=0.0,
    )

    def validate(self):
        for name in ("beta_anchors", "grid_anchors"):
            anchors = getattr(self, name)
            if len(anchors) < 2 or any(b <= a for a, b in zip(anchors, anchors[1:])):
                raise ConfigError(
                    f"plant.{name} must be strictly increasing with two or more entries"
                )
        if self.gradient_pole + 5.0 * self.pole_yaw_slope >= 1.0:
            raise ConfigError(
                "plant.gradient_pole + 5 * plant.pole_yaw_slope must stay below 1"
            )

    @property
    def max_flap_step(self) -> float:
        return self.rate_limit * self.sample_period
