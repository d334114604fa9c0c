import numpy as np
import pytest

from hyposplit.models import DriftSplit, ModelSpec, kramers_model
from hyposplit.observe import build_observations
from hyposplit.simulate import simulate_em, subsample

THETA0 = np.array([6.5, 1.0, 0.6, 0.1])


def _identity_flow(h, x, v, beta):
    return v


def linear_test_model(a_x=-2.0, a_v=-1.0, b=1.3, sig=0.0) -> ModelSpec:
    """Globally linear drift, so the splitting has no nonlinear remainder."""

    def drift(x, v, beta):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return a_x * (x - b) + a_v * v

    def split(beta):
        return DriftSplit(
            a_x=np.array([[a_x]]),
            a_v=np.array([[a_v]]),
            fixed_point=lambda x: np.full_like(np.asarray(x, dtype=float), b),
            nonlinear=lambda x, v: np.zeros_like(np.asarray(v, dtype=float)),
        )

    return ModelSpec(
        d=1,
        beta_dim=0,
        sigma_dim=0,
        drift=drift,
        split=split,
        nonlinear_flow=_identity_flow,
        nonlinear_flow_rough_inverse=_identity_flow,
        sigma=lambda sp: np.array([[sig]]),
        name="linear-test",
    )


@pytest.fixture(scope="session")
def model():
    return kramers_model()


@pytest.fixture(scope="session")
def theta0():
    return THETA0.copy()


def _well_start(theta):
    return np.array([np.sqrt(theta[1] / theta[2]), 0.0])


@pytest.fixture(scope="session")
def path_h01(model):
    """theta0 path at h = 0.1, N = 5000 (fine EM at 1e-3, stride 100)."""
    fine = simulate_em(model, THETA0, _well_start(THETA0), 1e-3, 500_000, seed=101)
    return subsample(fine, 100)


@pytest.fixture(scope="session")
def obs_c_h01(path_h01):
    return build_observations(path_h01, "complete")


@pytest.fixture(scope="session")
def obs_p_h01(path_h01):
    return build_observations(path_h01, "partial")


@pytest.fixture(scope="session")
def path_h001(model):
    """theta0 path at h = 0.01, N = 5000 (fine EM at 1e-4, stride 100)."""
    fine = simulate_em(model, THETA0, _well_start(THETA0), 1e-4, 500_000, seed=202)
    return subsample(fine, 100)


@pytest.fixture(scope="session")
def path_n2000(model):
    """theta0 path at h = 0.1, N = 2000."""
    fine = simulate_em(model, THETA0, _well_start(THETA0), 1e-3, 200_000, seed=303)
    return subsample(fine, 100)


@pytest.fixture(scope="session")
def obs_c_n2000(path_n2000):
    return build_observations(path_n2000, "complete")
