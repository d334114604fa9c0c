import numpy as np
import pytest
from scipy.linalg import expm, solve_continuous_lyapunov

from hyposplit.observe import (
    SCHEMES,
    DifferenceSeries,
    ObservationSet,
    build_observations,
    finite_difference,
)
from hyposplit.simulate import (
    Trajectory,
    load_trajectory,
    save_trajectory,
    simulate_em,
    simulate_strang,
    subsample,
)

from conftest import THETA0, _well_start


def test_linear_series_recovers_slope_exactly():
    # dyadic slope and step keep every quotient exact
    c, h = 3.5, 0.25
    x = c * h * np.arange(20)
    for scheme in SCHEMES:
        fd = finite_difference(x, h, scheme)
        assert np.array_equal(fd.values[:, 0], np.full(fd.values.shape[0], c))
    assert np.array_equal(finite_difference(x, h, "forward").indices, np.arange(0, 19))
    assert np.array_equal(finite_difference(x, h, "backward").indices, np.arange(1, 20))
    assert np.array_equal(finite_difference(x, h, "central").indices, np.arange(1, 19))


def test_forward_and_backward_share_values_shifted():
    rng = np.random.default_rng(5)
    x = rng.normal(size=50)
    fwd = finite_difference(x, 0.1, "forward")
    bwd = finite_difference(x, 0.1, "backward")
    assert np.array_equal(fwd.values, bwd.values)
    assert np.array_equal(fwd.indices + 1, bwd.indices)


def test_central_averages_the_one_sided_schemes():
    rng = np.random.default_rng(6)
    x = rng.normal(size=50)
    fwd = finite_difference(x, 0.1, "forward").values
    bwd = finite_difference(x, 0.1, "backward").values
    cen = finite_difference(x, 0.1, "central").values
    assert np.allclose(cen, 0.5 * (fwd[1:] + bwd[:-1]), atol=1e-14)


def test_difference_argument_validation():
    x = np.arange(5.0)
    with pytest.raises(ValueError):
        finite_difference(x, 0.0)
    with pytest.raises(ValueError):
        finite_difference(x, 0.1, "upwind")
    with pytest.raises(ValueError):
        finite_difference(np.array([1.0]), 0.1, "forward")
    with pytest.raises(ValueError):
        finite_difference(np.array([1.0, 2.0]), 0.1, "central")


def test_partial_frames_on_uniform_motion():
    h = 0.1
    x = h * np.arange(6)
    traj = Trajectory(h=h, times=h * np.arange(6), x=x[:, None])
    obs = build_observations(traj, "partial")
    assert obs.n_frames == 4
    assert obs.n_obs == 5
    assert np.allclose(obs.prev[:, 1], 1.0, atol=1e-12)
    assert np.allclose(obs.curr[:, 1], 1.0, atol=1e-12)
    assert np.allclose(obs.prev[:, 0], x[:4], atol=0)
    assert np.allclose(obs.curr[:, 0], x[1:5], atol=0)


def test_four_points_give_two_partial_frames():
    traj = Trajectory(h=0.1, times=0.1 * np.arange(4), x=np.array([0.0, 1.0, 3.0, 6.0])[:, None])
    obs = build_observations(traj, "partial")
    assert obs.n_obs == 3
    assert obs.n_frames == 2


def test_complete_frames_pair_consecutive_states(model, theta0):
    traj = simulate_strang(model, theta0, _well_start(theta0), 0.1, 30, seed=9)
    obs = build_observations(traj, "complete")
    states = traj.state()
    assert obs.n_frames == traj.n_points - 1 == obs.n_obs
    assert np.array_equal(obs.prev, states[:-1])
    assert np.array_equal(obs.curr, states[1:])
    assert obs.scheme is None


def test_complete_requires_velocities():
    traj = Trajectory(h=0.1, times=0.1 * np.arange(4), x=np.zeros((4, 1)))
    with pytest.raises(ValueError):
        build_observations(traj, "complete")
    with pytest.raises(ValueError):
        build_observations(traj, "sparse")


def test_observation_set_survives_serialization(tmp_path, model, theta0):
    traj = simulate_strang(model, theta0, _well_start(theta0), 0.1, 40, seed=13)
    before = build_observations(traj, "complete")
    path = save_trajectory(traj, tmp_path / "t.csv")
    after = build_observations(load_trajectory(path), "complete")
    assert np.array_equal(before.frames, after.frames)
    assert before.h == after.h


def test_forward_difference_averages_fine_velocities(model, theta0):
    # the position update is noise free, so coarse increments telescope
    # into means of left-endpoint fine velocities
    fine = simulate_em(model, theta0, _well_start(theta0), 1e-3, 2000, seed=17)
    coarse = subsample(fine, 10)
    fd = finite_difference(coarse.x, coarse.h, "forward")
    window_means = fine.v[:-1, 0].reshape(200, 10).mean(axis=1)
    assert np.allclose(fd.values[:, 0], window_means, atol=1e-10)


def _marginal_ratio(h, eta, a, sigma_sq):
    """Var(forward difference)/Var(V) for the linearised well, exactly.

    The well linearisation has curvature 2a, so the stationary law of
    (x, v) solves a 2x2 Lyapunov equation and the difference-series
    variance follows from the lag-h autocovariance.
    """
    amat = np.array([[0.0, 1.0], [-2.0 * a, -eta]])
    g = np.array([[0.0, 0.0], [0.0, sigma_sq]])
    s = solve_continuous_lyapunov(amat, -g)
    c_h = (expm(amat * h) @ s)[0, 0]
    return 2.0 * (s[0, 0] - c_h) / (h**2 * s[1, 1])


def test_difference_variance_tracks_exact_ratio_coarse(path_h01, theta0):
    eta, a, _, s2 = theta0
    sv = s2 / (2 * eta)
    fwd = np.var(finite_difference(path_h01.x, path_h01.h, "forward").values) / sv
    cen = np.var(finite_difference(path_h01.x, path_h01.h, "central").values) / sv
    # the central quotient spans 2h, so its marginal ratio is the
    # forward one evaluated at twice the step
    assert abs(fwd - _marginal_ratio(0.1, eta, a, s2)) < 0.08
    assert abs(cen - _marginal_ratio(0.2, eta, a, s2)) < 0.08
    assert cen < fwd < 1.1


def test_difference_variance_tracks_exact_ratio_fine(path_h001, path_h01, theta0):
    eta, a, _, s2 = theta0
    sv = s2 / (2 * eta)
    fine = np.var(finite_difference(path_h001.x, path_h001.h, "forward").values) / sv
    coarse = np.var(finite_difference(path_h01.x, path_h01.h, "forward").values) / sv
    assert abs(fine - _marginal_ratio(0.01, eta, a, s2)) < 0.15
    # deflation weakens as the step shrinks
    assert fine > coarse


def test_difference_series_records_scheme_and_step():
    fd = finite_difference(np.arange(4.0), 0.5, "backward")
    assert isinstance(fd, DifferenceSeries)
    assert fd.scheme == "backward"
    assert fd.h == 0.5


def test_observation_set_shape_validation():
    with pytest.raises(ValueError):
        ObservationSet(kind="complete", h=0.1, frames=np.zeros((3, 2, 3)))
    with pytest.raises(ValueError):
        ObservationSet(kind="complete", h=0.1, frames=np.zeros((3, 3, 2)))
