import numpy as np
import pytest
from scipy.stats import ortho_group

from windsor_rspc.functions.plant import REFERENCE_POINT, PlantModel
from windsor_rspc.functions.subspace import LtiRealization


def random_realization(
    seed: int, n_x: int = 8, n_u: int = 4, n_y: int = 3, noise: float = 0.1
) -> LtiRealization:
    """
    Stable innovation-form realization with a fast predictor: A is symmetric
    with eigenvalues in [-0.3, 0.3] and K C is small, so |A - KC| stays
    well inside the unit circle.
    """
    rng = np.random.default_rng(seed)
    Q = ortho_group.rvs(n_x, random_state=seed)
    A = Q @ np.diag(rng.uniform(-0.3, 0.3, n_x)) @ Q.T
    B = rng.standard_normal((n_x, n_u))
    C = rng.standard_normal((n_y, n_x)) / np.sqrt(n_x)
    K = 0.01 * rng.standard_normal((n_x, n_y))
    return LtiRealization(A, B, C, K=K, R_e=noise**2 * np.eye(n_y))


@pytest.fixture
def lti() -> LtiRealization:
    return random_realization(7)


@pytest.fixture(scope="session")
def model() -> PlantModel:
    return PlantModel()


@pytest.fixture(scope="session")
def windsor(model) -> LtiRealization:
    """Output-level realization of the plant at zero yaw"""
    return model.output_realization_at(REFERENCE_POINT)
