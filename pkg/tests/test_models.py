import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyposplit.errors import DomainError
from hyposplit.models import (
    KramersParams,
    a_tilde,
    kramers_model,
    rk4_nonlinear_flow,
    sigma_tilde,
    validate_split,
)

BETA0 = np.array([6.5, 1.0, 0.6])


def test_drift_vanishes_at_stable_point(model):
    x_star = np.sqrt(BETA0[1] / BETA0[2])
    split = model.split(BETA0)
    assert split.nonlinear(x_star, 0.0) == pytest.approx(0.0, abs=1e-14)
    assert model.drift(x_star, 0.0, BETA0) == pytest.approx(0.0, abs=1e-14)


@given(
    x=st.floats(-3.0, 3.0, allow_nan=False),
    v=st.floats(-3.0, 3.0, allow_nan=False),
)
@settings(max_examples=200, deadline=None)
def test_split_reconstructs_drift(x, v):
    model = kramers_model()
    split = model.split(BETA0)
    b = float(split.fixed_point(x))
    reassembled = float(split.a_x[0, 0]) * (x - b) + float(split.a_v[0, 0]) * v + float(
        split.nonlinear(x, v)
    )
    assert reassembled == pytest.approx(float(model.drift(x, v, BETA0)), abs=1e-12)


def test_flow_inverse_roundtrip(model):
    x, v, h = 0.4, -1.2, 0.1
    w = model.nonlinear_flow_rough_inverse(h, x, v, BETA0)
    assert model.nonlinear_flow(h, x, w, BETA0) == pytest.approx(v, abs=1e-14)
    # and the other composition order
    w2 = model.nonlinear_flow(h, x, v, BETA0)
    assert model.nonlinear_flow_rough_inverse(h, x, w2, BETA0) == pytest.approx(v, abs=1e-14)


def test_flow_semigroup(model):
    x, v = -0.7, 0.9
    assert model.nonlinear_flow(0.0, x, v, BETA0) == pytest.approx(v, abs=0.0)
    one_step = model.nonlinear_flow(0.1, x, v, BETA0)
    stepped = v
    for _ in range(10):
        stepped = model.nonlinear_flow(0.01, x, stepped, BETA0)
    assert stepped == pytest.approx(one_step, rel=1e-14)


def test_validate_split_kramers_theta0(model):
    rng = np.random.default_rng(7)
    pts = rng.uniform(-3.0, 3.0, size=(1000, 2))
    report = validate_split(model, BETA0, pts)
    assert report.max_abs_error < 1e-12
    assert not report.flagged
    assert report.n_points == 1000


def test_validate_split_fig1_parameters(model):
    rng = np.random.default_rng(8)
    pts = rng.uniform(-3.0, 3.0, size=(1000, 2))
    report = validate_split(model, np.array([62.5, 297.0, 219.0]), pts)
    assert report.max_abs_error < 1e-9


def test_validate_split_flags_wrong_nonlinearity(model):
    def wrong_split(beta):
        good = kramers_model().split(beta)
        return dataclasses.replace(
            good, nonlinear=lambda x, v: good.nonlinear(x, v) + 0.01
        )

    broken = dataclasses.replace(model, split=wrong_split)
    pts = np.array([[0.5, 0.0], [-1.0, 2.0]])
    report = validate_split(broken, BETA0, pts)
    assert report.flagged
    assert report.max_abs_error == pytest.approx(0.01, rel=1e-9)


def test_split_rejects_nonpositive_stiffness(model):
    with pytest.raises(DomainError):
        model.split(np.array([6.5, -1.0, 0.6]))
    with pytest.raises(DomainError):
        model.split(np.array([6.5, 1.0, 0.0]))


def test_sigma_rejects_nonpositive_variance(model):
    with pytest.raises(DomainError):
        model.sigma(np.array([0.0]))
    with pytest.raises(DomainError):
        model.sigma(np.array([-0.1]))


def test_sigma_gram_is_positive_definite(model):
    for s2 in (1e-6, 0.1, 100.0):
        sig = model.sigma(np.array([s2]))
        gram = sig @ sig.T
        assert np.allclose(gram, gram.T)
        assert np.all(np.linalg.eigvalsh(gram) > 0)
        assert gram[0, 0] == pytest.approx(s2)


def test_kramers_params_validation():
    p = KramersParams(6.5, 1.0, 0.6, 0.1)
    assert np.allclose(p.theta, [6.5, 1.0, 0.6, 0.1])
    assert np.allclose(p.wells, [-np.sqrt(1 / 0.6), np.sqrt(1 / 0.6)])
    assert KramersParams.from_theta(p.theta) == p
    with pytest.raises(DomainError):
        KramersParams(-0.1, 1.0, 0.6, 0.1)
    with pytest.raises(DomainError):
        KramersParams(6.5, 1.0, 0.6, 0.0)
    with pytest.raises(DomainError):
        KramersParams(6.5, np.inf, 0.6, 0.1)
    # eta = 0 (undamped) is admissible
    KramersParams(0.0, 1.0, 0.6, 0.1)


def test_fixed_point_convention_at_origin(model):
    split = model.split(BETA0)
    x_star = np.sqrt(BETA0[1] / BETA0[2])
    assert float(split.fixed_point(0.0)) == pytest.approx(x_star)
    assert float(split.fixed_point(-1e-12)) == pytest.approx(-x_star)


def test_a_tilde_and_sigma_tilde_structure(model):
    split = model.split(BETA0)
    amat = a_tilde(split)
    assert amat.shape == (2, 2)
    assert np.allclose(amat, [[0.0, 1.0], [-2.0 * BETA0[1], -BETA0[0]]])
    smat = sigma_tilde(model.sigma([0.1]))
    assert smat.shape == (2, 1)
    assert smat[0, 0] == 0.0
    assert smat[1, 0] == pytest.approx(np.sqrt(0.1))


def test_rk4_fallback_matches_exponential_decay():
    lam = 1.3
    flow = rk4_nonlinear_flow(lambda x, v: -lam * v)
    h = 0.1
    v0 = 2.0
    assert flow(h, 0.0, v0) == pytest.approx(v0 * np.exp(-lam * h), rel=1e-8)
    # backwards integration inverts the flow
    assert flow(-h, 0.0, flow(h, 0.0, v0)) == pytest.approx(v0, rel=1e-9)
