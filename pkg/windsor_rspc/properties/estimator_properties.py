from dataclasses import dataclass

from .schema import PropertyGroup, prop


@dataclass(frozen=True)
class EstimatorProperties(PropertyGroup):
    section = "estimator"

    rho: int = prop(
        30, name="Past Window", description="Past window rho, samples", min=1
    )
    span: int = prop(
        40, name="Future Window", description="Prediction horizon l, samples", min=1
    )
    innovation_forgetting: float = prop(
        0.995,
        name="Innovation Forgetting",
        description="Forgetting factor of the innovation estimator",
        min=1e-3,
        max=1.0,
    )
    predictor_forgetting: float = prop(
        0.995,
        name="Predictor Forgetting",
        description="Forgetting factor of the predictor estimator",
        min=1e-3,
        max=1.0,
    )
    initial_covariance: float = prop(
        1e4,
        name="Initial Covariance",
        description="Scale delta of the initial covariance delta * I",
        min=1e-12,
    )
    health_check_interval: int = prop(
        1,
        name="Health Check Interval",
        description="Updates between eigenvalue-floor checks of P",
        min=1,
    )
    covariance_ceiling: bool = prop(
        True,
        name="Covariance Ceiling",
        description="Suspend forgetting while trace(P) exceeds its initial value",
    )
    operating_point_forgetting: float = prop(
        0.99,
        name="Operating Point Forgetting",
        description="Weight of the running operating-point mean removed from data",
        min=0.0,
        max=1.0,
    )
    dump_dir: str = prop(
        "",
        name="State Dump Directory",
        description="Output subdirectory for the final estimator matrices, or empty",
    )
