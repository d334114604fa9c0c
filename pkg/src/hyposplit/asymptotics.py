"""Asymptotic covariances, confidence intervals, invariant density, and
the Kramers mean first passage time.

Under the rapidly increasing design (h -> 0, N h -> inf, N h^2 -> 0) the
estimators satisfy

    sqrt(N h) (beta_hat - beta0)   -> N(0, C_beta^{-1})
    sqrt(N)   (sigma_hat - sigma0) -> N(0, c_obj C_sigma^{-1})

with independent blocks.  C_beta integrates the drift sensitivities
against the invariant law; it is approximated either by an ergodic
average over the data or, for the Kramers oscillator, by quadrature of
the known invariant density.  c_obj is a pure table per objective kind.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .errors import DomainError, NumericalError
from .models import KramersParams, ModelSpec
from .objectives import ObjectiveKind
from .observe import ObservationSet

__all__ = [
    "C_OBJ",
    "AsymptoticInfo",
    "c_beta_empirical",
    "kramers_c_beta_quadrature",
    "c_sigma",
    "kramers_asymptotic_info",
    "empirical_asymptotic_info",
    "confidence_intervals",
    "joint_asymptotic_covariance",
    "TauEstimate",
    "kramers_tau",
    "TauInterval",
    "tau_ci_delta",
    "InvariantDensity",
    "kramers_invariant_density",
]

# variance inflation of the sigma block per objective kind (CSR/PSR and the
# baselines have no such constant in the limit theorem)
C_OBJ = {
    ObjectiveKind.CF: 1.0,
    ObjectiveKind.CR: 2.0,
    ObjectiveKind.PF: 9.0 / 4.0,
    ObjectiveKind.PR: 9.0 / 4.0,
}

FD_REL_STEP = 1e-6
SINGULAR_COND = 1e12


@dataclass(frozen=True)
class AsymptoticInfo:
    """Asymptotic variance ingredients, optionally with intervals filled.

    ``ci_beta`` and ``ci_sigma`` are (dim, 2) arrays of lower/upper
    bounds once confidence_intervals has run; ``singular`` flags that a
    pseudo-inverse had to stand in for a proper inverse.
    """

    c_beta: np.ndarray
    c_sigma: np.ndarray
    c_obj: float
    n: int
    h: float
    ci_beta: np.ndarray | None = None
    ci_sigma: np.ndarray | None = None
    alpha: float | None = None
    singular: bool = False


def _central_diff_drift(model: ModelSpec, beta, x, v):
    """Stacked central-difference sensitivities dF/dbeta_i over states."""
    r = len(beta)
    grads = []
    for i in range(r):
        step = FD_REL_STEP * (1.0 + abs(float(beta[i])))
        bp = np.array(beta, dtype=float)
        bm = np.array(beta, dtype=float)
        bp[i] += step
        bm[i] -= step
        fp = np.asarray(model.drift(x, v, bp), dtype=float)
        fm = np.asarray(model.drift(x, v, bm), dtype=float)
        grads.append((fp - fm) / (2.0 * step))
    return np.stack(grads, axis=0)  # (r, n_states, d)


def c_beta_empirical(model: ModelSpec, theta_hat, obs: ObservationSet) -> np.ndarray:
    """Drift information matrix via the ergodic average over observed states.

    Approximates the invariant-law integral of
    (dF/dbeta_i)^T (Sigma Sigma^T)^{-1} (dF/dbeta_j) by the sample mean
    over the frames' starting states, with numeric drift sensitivities.
    """
    if obs.n_frames == 0:
        raise ValueError("observation set is empty")
    beta, sigma_params = model.split_theta(theta_hat)
    d = model.d
    x = obs.prev[:, :d]
    v = obs.prev[:, d:]
    sigma = model.sigma(sigma_params)
    weight = np.linalg.inv(sigma @ sigma.T)
    grads = _central_diff_drift(model, beta, x, v)
    c = np.einsum("ind,de,jne->ij", grads, weight, grads) / obs.n_frames
    return 0.5 * (c + c.T)


def _kramers_position_moments(params: KramersParams):
    """Normalizer and x^{2,4,6} moments of the position marginal."""
    eta, a, b, s2 = params.eta, params.a, params.b, params.sigma_sq
    if eta == 0:
        raise DomainError("invariant density needs positive damping eta")
    kappa = 2.0 * eta / s2
    x_star = np.sqrt(a / b)
    u_min = -a * a / (4.0 * b)

    def log_unnorm(x):
        u = -0.5 * a * x * x + 0.25 * b * x ** 4
        return -kappa * (u - u_min)

    def unnorm(x):
        return np.exp(log_unnorm(x))

    # widen the window until the integrand is negligible at the edges
    width = np.sqrt(s2 / (4.0 * a * eta))
    limit = x_star + max(12.0 * width, 2.0 * x_star)
    while log_unnorm(limit) > np.log(1e-300) and limit < 1e6:
        limit *= 1.5

    def moment(power):
        val, err = integrate.quad(
            lambda x: x ** power * unnorm(x),
            -limit,
            limit,
            points=[-x_star, 0.0, x_star],
            limit=200,
            epsabs=0.0,
            epsrel=1e-10,
        )
        if not np.isfinite(val) or (val > 0 and err / val > 1e-6):
            raise NumericalError(
                f"quadrature of the order-{power} moment did not converge (value {val}, error {err})"
            )
        return val

    z = moment(0)
    return {
        "normalizer": z,
        "kappa": kappa,
        "u_min": u_min,
        "limit": limit,
        "m2": moment(2) / z,
        "m4": moment(4) / z,
        "m6": moment(6) / z,
    }


def kramers_c_beta_quadrature(theta) -> np.ndarray:
    """Drift information matrix of the Kramers oscillator by quadrature.

        [[1/(2 eta),      0,           0     ],
         [0,            m2/s2,      -m4/s2   ],
         [0,           -m4/s2,       m6/s2   ]]

    with m_j the invariant x^j moments.
    """
    params = theta if isinstance(theta, KramersParams) else KramersParams.from_theta(theta)
    mom = _kramers_position_moments(params)
    s2 = params.sigma_sq
    return np.array(
        [
            [1.0 / (2.0 * params.eta), 0.0, 0.0],
            [0.0, mom["m2"] / s2, -mom["m4"] / s2],
            [0.0, -mom["m4"] / s2, mom["m6"] / s2],
        ]
    )


def c_sigma(sigma_params, sigma_parametrization: str = "variance") -> np.ndarray:
    """Diffusion information matrix tr((dG) G^{-1} (dG) G^{-1}), G = Sigma Sigma^T.

    'variance' treats the parameters as the diagonal variances of G
    (the Kramers sigma_sq convention), giving diag(1/s_j^2); 'std'
    treats them as standard deviations, giving diag(4/s_j^2).
    """
    s = np.asarray(sigma_params, dtype=float).reshape(-1)
    if np.any(s <= 0):
        raise DomainError(f"diffusion parameters must be positive, got {s}")
    if sigma_parametrization == "variance":
        return np.diag(1.0 / s ** 2)
    if sigma_parametrization == "std":
        return np.diag(4.0 / s ** 2)
    raise ValueError(
        f"unknown sigma parametrization {sigma_parametrization!r}; expected 'variance' or 'std'"
    )


def kramers_asymptotic_info(theta_hat, kind, n: int, h: float) -> AsymptoticInfo:
    """Quadrature-based AsymptoticInfo for a Kramers fit."""
    kind = ObjectiveKind.coerce(kind)
    if kind not in C_OBJ:
        raise ValueError(f"no asymptotic variance constant for objective {kind.value}")
    theta_hat = np.asarray(theta_hat, dtype=float)
    return AsymptoticInfo(
        c_beta=kramers_c_beta_quadrature(theta_hat),
        c_sigma=c_sigma(theta_hat[3:]),
        c_obj=C_OBJ[kind],
        n=int(n),
        h=float(h),
    )


def empirical_asymptotic_info(model: ModelSpec, theta_hat, obs: ObservationSet,
                              kind) -> AsymptoticInfo:
    """Ergodic-average AsymptoticInfo; works for any model."""
    kind = ObjectiveKind.coerce(kind)
    if kind not in C_OBJ:
        raise ValueError(f"no asymptotic variance constant for objective {kind.value}")
    theta_hat = np.asarray(theta_hat, dtype=float)
    _, sigma_params = model.split_theta(theta_hat)
    return AsymptoticInfo(
        c_beta=c_beta_empirical(model, theta_hat, obs),
        c_sigma=c_sigma(sigma_params),
        c_obj=C_OBJ[kind],
        n=obs.n_obs,
        h=obs.h,
    )


def _inverse_diagonal(info_matrix: np.ndarray):
    """Diagonal of the inverse; singular directions come back infinite."""
    mat = 0.5 * (info_matrix + info_matrix.T)
    w, vecs = np.linalg.eigh(mat)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    tol = scale / SINGULAR_COND if scale > 0 else 0.0
    singular = bool(np.any(w <= tol))
    diag = np.empty(mat.shape[0])
    for i in range(mat.shape[0]):
        contributions = vecs[i] ** 2
        if np.any(contributions[w <= tol] > 1e-14):
            diag[i] = np.inf
        else:
            good = w > tol
            diag[i] = float(np.sum(contributions[good] / w[good]))
    return diag, singular


def confidence_intervals(theta_hat, info: AsymptoticInfo, alpha: float = 0.05) -> AsymptoticInfo:
    """Per-parameter normal intervals at significance level alpha.

        beta_i  +- z_{1-alpha/2} sqrt([C_beta^{-1}]_ii / (N h))
        sigma_j +- z_{1-alpha/2} sqrt(c_obj [C_sigma^{-1}]_jj / N)

    Returns a copy of ``info`` with the intervals filled in.  Singular
    information matrices are flagged and yield infinite widths along the
    unidentified directions.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    theta_hat = np.asarray(theta_hat, dtype=float)
    r = info.c_beta.shape[0]
    s = info.c_sigma.shape[0]
    if theta_hat.size != r + s:
        raise ValueError(
            f"theta_hat has {theta_hat.size} entries but info describes {r}+{s} parameters"
        )
    z = norm.ppf(1.0 - alpha / 2.0)
    beta_diag, beta_singular = _inverse_diagonal(info.c_beta)
    sigma_diag, sigma_singular = _inverse_diagonal(info.c_sigma)
    if beta_singular or sigma_singular:
        warnings.warn(
            "singular asymptotic information; intervals widened to infinity "
            "along unidentified directions",
            RuntimeWarning,
            stacklevel=2,
        )
    half_beta = z * np.sqrt(beta_diag / (info.n * info.h))
    half_sigma = z * np.sqrt(info.c_obj * sigma_diag / info.n)
    beta_hat = theta_hat[:r]
    sigma_hat = theta_hat[r:]
    ci_beta = np.column_stack([beta_hat - half_beta, beta_hat + half_beta])
    ci_sigma = np.column_stack([sigma_hat - half_sigma, sigma_hat + half_sigma])
    return dataclasses.replace(
        info,
        ci_beta=ci_beta,
        ci_sigma=ci_sigma,
        alpha=alpha,
        singular=beta_singular or sigma_singular,
    )


def joint_asymptotic_covariance(info: AsymptoticInfo, n: int | None = None,
                                h: float | None = None) -> np.ndarray:
    """Finite-sample covariance of theta_hat: block-diagonal assembly of
    C_beta^{-1}/(N h) and c_obj C_sigma^{-1}/N (independent blocks)."""
    n = info.n if n is None else int(n)
    h = info.h if h is None else float(h)
    r = info.c_beta.shape[0]
    s = info.c_sigma.shape[0]
    cov = np.zeros((r + s, r + s))
    cov[:r, :r] = np.linalg.inv(info.c_beta) / (n * h)
    cov[r:, r:] = info.c_obj * np.linalg.inv(info.c_sigma) / n
    return cov


# ---------------------------------------------------------------------------
# Mean first passage time


@dataclass(frozen=True)
class TauEstimate:
    """Kramers' rate approximation of the well-to-well passage time.

        tau = sqrt(2) pi / (sqrt(a + eta^2/4) - eta/2) * exp(a^2 eta / (2 b sigma_sq))

    The closed form assumes strong damping and weak noise; the two
    ratios quantify how well the regime holds (large damping_ratio,
    small noise_ratio) and are reported, never enforced.
    """

    value: float
    prefactor: float
    exponent: float
    damping_ratio: float
    noise_ratio: float

    def __float__(self) -> float:
        return self.value


def kramers_tau(eta: float, a: float, b: float, sigma_sq: float) -> TauEstimate:
    params = KramersParams(eta, a, b, sigma_sq)  # validates positivity
    if eta == 0:
        raise DomainError("the passage-time formula needs positive damping eta")
    prefactor = np.sqrt(2.0) * np.pi / (np.sqrt(a + 0.25 * eta * eta) - 0.5 * eta)
    exponent = a * a * eta / (2.0 * b * sigma_sq)
    return TauEstimate(
        value=float(prefactor * np.exp(exponent)),
        prefactor=float(prefactor),
        exponent=float(exponent),
        damping_ratio=float(eta / np.sqrt(a)),
        noise_ratio=float((sigma_sq / (2.0 * eta)) / (a * a / (4.0 * b))),
    )


@dataclass(frozen=True)
class TauInterval:
    value: float
    low: float
    high: float
    gradient: np.ndarray
    alpha: float


def tau_ci_delta(theta_hat, info, n: int | None = None,
                 h: float | None = None, alpha: float = 0.05) -> TauInterval:
    """Delta-method interval for tau at theta_hat.

    ``info`` is either an AsymptoticInfo (the joint covariance is
    assembled from it with the given n, h) or an already-scaled 4x4
    covariance of theta_hat.  The gradient of tau is taken by central
    differences with relative step 1e-6.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    theta_hat = np.asarray(theta_hat, dtype=float).reshape(4)
    if isinstance(info, AsymptoticInfo):
        cov = joint_asymptotic_covariance(info, n=n, h=h)
    else:
        cov = np.asarray(info, dtype=float)
        if cov.shape != (4, 4):
            raise ValueError(f"covariance must be 4x4, got {cov.shape}")
    grad = np.empty(4)
    for i in range(4):
        step = FD_REL_STEP * (1.0 + abs(theta_hat[i]))
        tp = theta_hat.copy()
        tm = theta_hat.copy()
        tp[i] += step
        tm[i] -= step
        grad[i] = (kramers_tau(*tp).value - kramers_tau(*tm).value) / (2.0 * step)
    variance = float(grad @ cov @ grad)
    if variance < 0:
        raise NumericalError(f"delta-method variance came out negative: {variance}")
    half = norm.ppf(1.0 - alpha / 2.0) * np.sqrt(variance)
    value = kramers_tau(*theta_hat).value
    return TauInterval(value=value, low=value - half, high=value + half,
                       gradient=grad, alpha=alpha)


# ---------------------------------------------------------------------------
# Invariant density


@dataclass(frozen=True)
class InvariantDensity:
    """Stationary law of the Kramers oscillator.

    Positions follow exp(-2 eta U(x)/sigma_sq)/Z with the double-well
    potential U(x) = -a x^2/2 + b x^4/4; velocities are independently
    N(0, sigma_sq/(2 eta)).  All evaluators broadcast over grids.
    """

    params: KramersParams
    normalizer: float
    modes: np.ndarray
    v_variance: float
    _kappa: float
    _u_min: float
    support_limit: float

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * self.params.a * x ** 2 + 0.25 * self.params.b * x ** 4

    def x_density(self, x):
        return np.exp(-self._kappa * (self.potential(x) - self._u_min)) / self.normalizer

    def v_density(self, v):
        v = np.asarray(v, dtype=float)
        return np.exp(-0.5 * v ** 2 / self.v_variance) / np.sqrt(2.0 * np.pi * self.v_variance)

    def joint(self, x, v):
        return self.x_density(x) * self.v_density(v)


def kramers_invariant_density(theta) -> InvariantDensity:
    params = theta if isinstance(theta, KramersParams) else KramersParams.from_theta(theta)
    mom = _kramers_position_moments(params)
    return InvariantDensity(
        params=params,
        normalizer=mom["normalizer"],
        modes=params.wells,
        v_variance=params.sigma_sq / (2.0 * params.eta),
        _kappa=mom["kappa"],
        _u_min=mom["u_min"],
        support_limit=mom["limit"],
    )
