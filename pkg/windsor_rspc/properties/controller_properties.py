from dataclasses import dataclass

from ..functions.errors import ConfigError
from .schema import PropertyGroup, prop


@dataclass(frozen=True)
class ControllerProperties(PropertyGroup):
    section = "controller"

    objective: str = prop(
        "symmetric",
        name="Objective",
        description="Zero-yaw distribution (symmetric) or a raised level (uplift)",
        items=("symmetric", "uplift"),
    )
    uplift: float = prop(
        4.0,
        name="Level Uplift",
        description="Pressure-level increase of the uplift objective, percent",
    )
    reference: tuple = prop(
        (),
        name="Reference",
        description="Explicit output reference; overrides the objective when set",
    )
    output_weights: tuple = prop(
        (1.0, 1.0, 1.0),
        name="Output Weights",
        description="Diagonal of the per-step output weight",
        min=0.0,
    )
    input_weights: tuple = prop(
        (0.1, 0.1, 0.1, 0.1),
        name="Input Weights",
        description="Diagonal of the per-step input-increment weight",
        min=0.0,
    )
    u_min: float = prop(
        -7.0, name="Lower Bound", description="Lowest commanded flap angle, degrees"
    )
    u_max: float = prop(
        7.0, name="Upper Bound", description="Highest commanded flap angle, degrees"
    )
    max_iter: int = prop(
        200, name="Dual Sweeps", description="Hildreth sweep limit", min=1
    )
    tol: float = prop(
        1e-8,
        name="Dual Tolerance",
        description="Largest multiplier change at convergence",
        min=0.0,
    )
    dwell: float = prop(
        10.0,
        name="Estimation Dwell",
        description="Seconds of excited estimation before control engages",
        min=0.0,
    )
    excitation_amplitude: float = prop(
        3.0,
        name="Excitation Amplitude",
        description="PRBS level applied during the dwell, degrees",
        min=0.0,
    )
    excitation_switch: int = prop(
        5,
        name="Excitation Switch",
        description="Samples each PRBS level is held during the dwell",
        min=1,
    )

    def validate(self):
        if self.u_min >= self.u_max:
            raise ConfigError("controller.u_min must be below controller.u_max")
        if len(self.output_weights) != 3 or min(self.output_weights) <= 0.0:
            raise ConfigError("controller.output_weights needs 3 positive entries")
        if len(self.input_weights) != 4 or min(self.input_weights) <= 0.0:
            raise ConfigError("controller.input_weights needs 4 positive entries")
        if self.reference and len(self.reference) != 3:
            raise ConfigError("controller.reference needs 3 entries when set")

    def dwell_samples(self, sample_period: float) -> int:
        return int(round(self.dwell / sample_period))

    def engagement_sample(self, rho: int, span: int, sample_period: float) -> int:
        """
        First sample at which control may engage: rings filled, the excited
        dwell elapsed and at least one predictor update done
        """
        predictor_start = max(rho + span, 2 * span)
        return max(rho + span + self.dwell_samples(sample_period), predictor_start + 1)
