"""Release gate: twelve end-to-end checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v`` to get a single
pass/fail line per criterion.  Each test computes its quantities first
and prints them before asserting, so a failing line carries its own
diagnosis.  The three simulation studies dominate the runtime (roughly
fifteen minutes on one core); everything else is seconds.
"""

import numpy as np
import pytest

from conftest import THETA0
from oracles import gl_omega

from hyposplit.asymptotics import (
    c_sigma,
    confidence_intervals,
    kramers_asymptotic_info,
    kramers_invariant_density,
    kramers_tau,
    tau_ci_delta,
)
from hyposplit.functionals import check_moments, sample_functionals
from hyposplit.linear_ou import omega_expansion, ou_covariance
from hyposplit.models import KramersParams, a_tilde, kramers_model, sigma_tilde
from hyposplit.objectives import ObjectiveKind, objective
from hyposplit.observe import build_observations
from hyposplit.pipeline import StudyConfig, run_simulation_study
from hyposplit.simulate import simulate_em, subsample

# frequent-transition regime: mean passage time near 4, stationary v-variance 73
THETA_HOT = np.array([62.5, 296.7, 219.1, 9125.0])
PARAMS = ("eta", "a", "b", "sigma_sq")
DRIFT = ("eta", "a", "b")


def _kramers_matrices(theta):
    model = kramers_model()
    params = KramersParams.from_theta(theta)
    split = model.split(params.beta)
    return a_tilde(split), sigma_tilde(model.sigma(theta[3:]))


# ---------------------------------------------------------------------------
# simulation studies shared by criteria 7, 8, 9 and 11


@pytest.fixture(scope="module")
def consistency_study():
    return run_simulation_study(StudyConfig(
        theta0=THETA0, h=0.1, h_sim=1e-3, n_obs=5000, replicates=100,
        seed=7, kinds=("CF", "PF", "PR", "EM-PR", "LG-CF"), max_workers=1,
    ))


@pytest.fixture(scope="module")
def variance_study():
    theta = np.array([6.5, 1.0, 0.6, 100.0])
    return run_simulation_study(StudyConfig(
        theta0=theta, h=0.02, h_sim=1e-3, n_obs=5000, replicates=200,
        seed=8, kinds=("CF", "CR", "PF", "PR"), max_workers=1,
    ))


@pytest.fixture(scope="module")
def coverage_study():
    return run_simulation_study(StudyConfig(
        theta0=THETA_HOT, h=0.02, h_sim=5e-4, n_obs=2500, replicates=200,
        seed=11, kinds=("PR",), max_workers=1,
    ))


def _median_errors(frame, kind):
    group = frame[(frame["kind"] == kind) & ~frame["failed"]]
    signed = {p: float(group[f"err_{p}"].median()) for p in PARAMS}
    absolute = {p: float(group[f"err_{p}"].abs().median()) for p in PARAMS}
    return signed, absolute


# ---------------------------------------------------------------------------
# criteria


def test_criterion_01_passage_time_and_interval():
    tau = float(kramers_tau(*THETA_HOT))
    info = kramers_asymptotic_info(THETA_HOT, ObjectiveKind.PR, n=2500, h=0.02)
    ci = tau_ci_delta(THETA_HOT, info)
    print(f"tau {tau:.6f}  CI95 [{ci.low:.6f}, {ci.high:.6f}]")
    assert tau == pytest.approx(3.97, abs=0.01)
    assert ci.low == pytest.approx(3.00, abs=0.15)
    assert ci.high == pytest.approx(4.94, abs=0.15)


def test_criterion_02_noise_information_constant():
    for sigma_sq in (0.1, 100.0):
        value = c_sigma(np.array([sigma_sq]))[0, 0]
        target = 1.0 / (sigma_sq * sigma_sq)
        print(f"sigma_sq {sigma_sq:g}: C {value:.12e} vs 1/sigma^4 {target:.12e}")
        assert value == pytest.approx(target, rel=1e-12)


def test_criterion_03_covariance_vs_quadrature():
    worst = 0.0
    amat, smat = _kramers_matrices(THETA0)
    for h in (0.02, 0.1):
        exact = ou_covariance(amat, smat, h)
        oracle = gl_omega(amat, smat, h)
        worst = max(worst, np.linalg.norm(exact - oracle) / np.linalg.norm(oracle))
    rng = np.random.default_rng(321)
    n_cases = 0
    while n_cases < 100:
        d = int(rng.integers(1, 4))
        a_x = rng.normal(size=(d, d))
        a_v = rng.normal(size=(d, d))
        at = np.block([[np.zeros((d, d)), np.eye(d)], [a_x, a_v]])
        if np.max(np.linalg.eigvals(at).real) >= -0.05:
            continue
        n_cases += 1
        st = np.vstack([np.zeros((d, d)), rng.normal(size=(d, d)) + 0.5 * np.eye(d)])
        h = float(rng.uniform(0.01, 0.3))
        exact = ou_covariance(at, st, h)
        oracle = gl_omega(at, st, h)
        worst = max(worst, np.linalg.norm(exact - oracle) / np.linalg.norm(oracle))
    print(f"worst relative Frobenius error over Kramers + 100 random drifts: {worst:.3e}")
    assert worst < 1e-8


def test_criterion_04_expansion_order_factors():
    amat, smat = _kramers_matrices(THETA0)
    a_v = amat[1:, 1:]
    g_rr = (smat @ smat.T)[1:, 1:]
    blocks = {"ss": [], "sr": [], "rs": [], "rr": []}
    for h in (0.1, 0.05, 0.025):
        exact = ou_covariance(amat, smat, h)
        approx = omega_expansion(a_v, g_rr, h)
        blocks["ss"].append(np.linalg.norm(exact[:1, :1] - approx.ss))
        blocks["sr"].append(np.linalg.norm(exact[:1, 1:] - approx.sr))
        blocks["rs"].append(np.linalg.norm(exact[1:, :1] - approx.rs))
        blocks["rr"].append(np.linalg.norm(exact[1:, 1:] - approx.rr))
    predicted = {"ss": 32.0, "sr": 16.0, "rs": 16.0, "rr": 8.0}
    for name, residuals in blocks.items():
        for coarse, fine in zip(residuals, residuals[1:]):
            factor = coarse / fine
            print(f"{name}: halving factor {factor:.2f} (predicted {predicted[name]:g})")
            assert factor == pytest.approx(predicted[name], rel=0.25)


def test_criterion_05_gaussian_moment_identities():
    draws = sample_functionals(100_000, 1000, seed=42)
    report = check_moments(draws)
    print(f"max |z| {report.max_z:.2f} over {len(report.checks)} identities")
    assert report.all_passed


def test_criterion_06_difference_variance_deflation(path_h01):
    x = path_h01.x[:, 0]
    h = path_h01.h
    stationary = THETA0[3] / (2.0 * THETA0[0])
    forward = float(np.var(np.diff(x) / h)) / stationary
    central = float(np.var((x[2:] - x[:-2]) / (2.0 * h))) / stationary
    print(f"forward ratio {forward:.4f} (window [0.60, 0.73]), "
          f"central ratio {central:.4f} (window [0.37, 0.47])")
    assert 0.60 <= forward <= 0.73
    assert 0.37 <= central <= 0.47


def test_criterion_07_estimator_consistency(consistency_study):
    frame = consistency_study.frame
    cf_signed, cf_abs = _median_errors(frame, "CF")
    print("CF median |err|: " + " ".join(f"{p}={cf_abs[p]:.4f}" for p in PARAMS))
    for baseline, reference in (("EM-PR", "PR"), ("LG-CF", "CF")):
        base_signed, _ = _median_errors(frame, baseline)
        ref_signed, _ = _median_errors(frame, reference)
        wins = sum(abs(base_signed[p]) > abs(ref_signed[p]) for p in DRIFT)
        print(f"{baseline} vs {reference}: larger |median err| on {wins}/3 drift parameters")
        assert wins >= 2
    assert cf_abs["sigma_sq"] < 0.05
    for p in DRIFT:
        assert cf_abs[p] < 0.10


def test_criterion_08_noise_variance_ratios(variance_study):
    frame = variance_study.frame
    ok = frame[~frame["failed"]]
    var = {k: float(g["sigma_sq"].var(ddof=1)) for k, g in ok.groupby("kind", sort=False)}
    ratios = {
        "CR/CF": var["CR"] / var["CF"],
        "PF/CF": var["PF"] / var["CF"],
        "PR/CF": var["PR"] / var["CF"],
        "PF/PR": var["PF"] / var["PR"],
    }
    print("  ".join(f"{name} {value:.3f}" for name, value in ratios.items()))
    assert 1.5 <= ratios["CR/CF"] <= 2.6
    assert 1.7 <= ratios["PF/CF"] <= 2.9
    assert 1.7 <= ratios["PR/CF"] <= 2.9
    assert 0.8 <= ratios["PF/PR"] <= 1.25


def test_criterion_09_partial_bias_ordering(consistency_study):
    frame = consistency_study.frame
    pr_signed, _ = _median_errors(frame, "PR")
    pf_signed, _ = _median_errors(frame, "PF")
    print(f"median sigma_sq error: PR {pr_signed['sigma_sq']:+.4f}  PF {pf_signed['sigma_sq']:+.4f}")
    assert abs(pr_signed["sigma_sq"]) <= abs(pf_signed["sigma_sq"])


def test_criterion_10_objective_decomposition():
    model = kramers_model()
    rng = np.random.default_rng(77)
    worst_rel = 0.0
    min_gap = np.inf
    for _ in range(20):
        theta_data = THETA0 * np.exp(rng.uniform(-0.3, 0.3, size=4))
        theta_eval = THETA0 * np.exp(rng.uniform(-0.3, 0.3, size=4))
        y0 = np.array([np.sqrt(theta_data[1] / theta_data[2]), 0.0])
        fine = simulate_em(model, theta_data, y0, 5e-3, 1200, seed=int(rng.integers(1 << 31)))
        traj = subsample(fine, 4)
        obs_c = build_observations(traj, "complete")
        obs_p = build_observations(traj, "partial")
        cf = objective(model, theta_eval, obs_c, "CF")
        cr = objective(model, theta_eval, obs_c, "CR")
        csr = objective(model, theta_eval, obs_c, "CSR")
        worst_rel = max(worst_rel, abs(cf - (cr + csr)) / max(1.0, abs(cf)))
        pf = objective(model, theta_eval, obs_p, "PF")
        pr = objective(model, theta_eval, obs_p, "PR")
        psr = objective(model, theta_eval, obs_p, "PSR")
        min_gap = min(min_gap, abs(pf - (pr + psr)))
    print(f"complete split worst relative gap {worst_rel:.3e}; "
          f"partial smallest |PF - (PR + PSR)| {min_gap:.4g}")
    assert worst_rel <= 1e-9
    assert min_gap > 1e-6


def test_criterion_11_interval_coverage(coverage_study):
    frame = coverage_study.frame
    ok = frame[~frame["failed"]]
    covered = {p: 0 for p in PARAMS}
    for _, row in ok.iterrows():
        theta_hat = np.array([row[p] for p in PARAMS])
        info = kramers_asymptotic_info(theta_hat, ObjectiveKind.PR, n=2500, h=0.02)
        info = confidence_intervals(theta_hat, info)
        ci = np.vstack([info.ci_beta, info.ci_sigma])
        for p, (lo, hi), true in zip(PARAMS, ci, THETA_HOT):
            covered[p] += int(lo <= true <= hi)
    n = len(ok)
    rates = {p: covered[p] / n for p in PARAMS}
    print("coverage: " + "  ".join(f"{p} {rates[p]:.3f}" for p in PARAMS))
    for p in PARAMS:
        assert 0.88 <= rates[p] <= 0.99


def test_criterion_12_invariant_density():
    for theta in (THETA0, THETA_HOT):
        density = kramers_invariant_density(theta)
        limit = density.support_limit
        x = np.linspace(-limit, limit, 400_001)
        x_mass = float(np.trapezoid(density.x_density(x), x))
        v_sd = np.sqrt(density.v_variance)
        v = np.linspace(-10.0 * v_sd, 10.0 * v_sd, 200_001)
        v_mass = float(np.trapezoid(density.v_density(v), v))
        print(f"theta {theta}: x mass {x_mass:.8f}, v mass {v_mass:.8f}")
        assert x_mass == pytest.approx(1.0, abs=1e-6)
        assert v_mass == pytest.approx(1.0, abs=1e-6)

        xg = np.linspace(-1.5, 1.5, 5).reshape(-1, 1) * limit / 1.5
        vg = np.linspace(-3.0, 3.0, 7).reshape(1, -1) * v_sd
        joint = density.joint(xg, vg)
        assert np.allclose(joint, density.x_density(xg) * density.v_density(vg), rtol=1e-12)

        well = np.sqrt(theta[1] / theta[2])
        assert density.modes == pytest.approx([-well, well], rel=1e-12)
        probe = well + np.linspace(-1e-3, 1e-3, 2001)
        peak = probe[int(np.argmax(density.x_density(probe)))]
        assert peak == pytest.approx(well, abs=2e-5)
