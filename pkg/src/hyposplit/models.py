"""Second-order SDE models and their splitting structure.

A model describes the system

    dX_t = V_t dt
    dV_t = F(X_t, V_t; beta) dt + Sigma dW_t

through a decomposition of the acceleration field

    F(x, v) = A_x (x - b) + A_v v + N(x, v),

where the linear part generates an exactly solvable Ornstein-Uhlenbeck
flow and the nonlinear remainder N is integrated by its own deterministic
flow over half steps.  The fixed point b may depend on the current
position (piecewise-linear splittings), in which case it is evaluated
frame by frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError

__all__ = [
    "DriftSplit",
    "ModelSpec",
    "KramersParams",
    "kramers_model",
    "a_tilde",
    "sigma_tilde",
    "rk4_nonlinear_flow",
    "validate_split",
    "SplitReport",
]

SPLIT_TOLERANCE = 1e-8


@dataclass(frozen=True)
class DriftSplit:
    """Decomposition F(x, v) = A_x (x - b(x)) + A_v v + N(x, v) at fixed beta.

    ``fixed_point`` maps positions to the linearisation point b; for
    globally linear splittings it simply broadcasts a constant.
    ``nonlinear`` evaluates the remainder N and must vanish wherever the
    linear part already matches F.
    """

    a_x: np.ndarray
    a_v: np.ndarray
    fixed_point: Callable[[np.ndarray], np.ndarray]
    nonlinear: Callable[[np.ndarray, np.ndarray], np.ndarray]

    @property
    def dim(self) -> int:
        return self.a_x.shape[0]


@dataclass(frozen=True)
class ModelSpec:
    """Everything the simulators and estimators need to know about a model.

    All callables accept scalars or arrays whose trailing axis is the
    state dimension and broadcast over leading axes.

    drift(x, v, beta)
        Full acceleration F.
    split(beta)
        DriftSplit of F at this beta.
    nonlinear_flow(h, x, v, beta)
        Velocity after integrating dv/dt = N(x, v) for time h at frozen x.
    nonlinear_flow_rough_inverse(h, x, v, beta)
        Inverse of the flow in the velocity argument (x unchanged).
    sigma(sigma_params)
        Diffusion matrix Sigma of shape (d, d).
    flow_logdet_v(h, x, v, beta)
        log |det D_v f_h|; optional, omit to fall back on finite
        differences in the estimators.
    scalar_drift(beta)
        Optional d = 1 specialisation: returns a float-in, float-out
        closure for F used by the tight Euler-Maruyama loop.
    """

    d: int
    beta_dim: int
    sigma_dim: int
    drift: Callable
    split: Callable
    nonlinear_flow: Callable
    nonlinear_flow_rough_inverse: Callable
    sigma: Callable
    flow_logdet_v: Callable | None = None
    scalar_drift: Callable | None = None
    name: str = "model"
    default_theta: tuple | None = None

    @property
    def theta_dim(self) -> int:
        return self.beta_dim + self.sigma_dim

    def split_theta(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """Split a full parameter vector into (beta, sigma_params)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.theta_dim,):
            raise ValueError(
                f"theta must have shape ({self.theta_dim},), got {theta.shape}"
            )
        return theta[: self.beta_dim], theta[self.beta_dim :]


def a_tilde(split: DriftSplit) -> np.ndarray:
    """Full-state drift matrix [[0, I], [A_x, A_v]] of the linear part."""
    d = split.dim
    top = np.hstack([np.zeros((d, d)), np.eye(d)])
    bottom = np.hstack([split.a_x, split.a_v])
    return np.vstack([top, bottom])


def sigma_tilde(sigma: np.ndarray) -> np.ndarray:
    """Lift the velocity diffusion to the full state: (0, Sigma)^T."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    return np.vstack([np.zeros_like(sigma), sigma])


def rk4_nonlinear_flow(nonlinear: Callable, substeps: int = 4) -> Callable:
    """Fixed-step RK4 integrator for dv/dt = N(x, v) at frozen x.

    Fallback for models without a closed-form nonlinear flow.  The
    returned callable has the (h, x, v) signature of ModelSpec flows with
    beta already bound into ``nonlinear``; negative h integrates
    backwards, which is how the rough inverse is obtained.
    """

    def flow(h, x, v):
        dt = h / substeps
        for _ in range(substeps):
            k1 = nonlinear(x, v)
            k2 = nonlinear(x, v + 0.5 * dt * k1)
            k3 = nonlinear(x, v + 0.5 * dt * k2)
            k4 = nonlinear(x, v + dt * k3)
            v = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return v

    return flow


# ---------------------------------------------------------------------------
# Kramers oscillator


@dataclass(frozen=True)
class KramersParams:
    """Parameters (eta, a, b, sigma_sq) of the Kramers oscillator.

    The acceleration is F(x, v) = -eta v + a x - b x^3 with additive
    noise of variance sigma_sq.  Stationarity and identifiability require
    a, b, sigma_sq > 0 and eta >= 0.
    """

    eta: float
    a: float
    b: float
    sigma_sq: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.theta)):
            raise DomainError("Kramers parameters must be finite")
        if self.eta < 0:
            raise DomainError(f"damping eta must be nonnegative, got {self.eta}")
        for label, value in (("a", self.a), ("b", self.b), ("sigma_sq", self.sigma_sq)):
            if value <= 0:
                raise DomainError(f"{label} must be positive, got {value}")

    @property
    def beta(self) -> np.ndarray:
        return np.array([self.eta, self.a, self.b])

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.eta, self.a, self.b, self.sigma_sq])

    @property
    def wells(self) -> np.ndarray:
        """Stable fixed points +-sqrt(a/b) of the noiseless dynamics."""
        xs = np.sqrt(self.a / self.b)
        return np.array([-xs, xs])

    @classmethod
    def from_theta(cls, theta) -> "KramersParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (4,):
            raise ValueError(f"expected 4 parameters (eta, a, b, sigma_sq), got shape {theta.shape}")
        return cls(*theta)


def _check_kramers_beta(beta):
    eta = float(beta[0])
    a = float(beta[1])
    b = float(beta[2])
    if not (np.isfinite(eta) and np.isfinite(a) and np.isfinite(b)):
        raise DomainError("Kramers drift parameters must be finite")
    if a <= 0 or b <= 0:
        raise DomainError(f"Kramers split requires a > 0 and b > 0, got a={a}, b={b}")
    return eta, a, b


def _kramers_drift(x, v, beta):
    eta, a, b = float(beta[0]), float(beta[1]), float(beta[2])
    return -eta * v + a * x - b * x * x * x


def _kramers_split(beta) -> DriftSplit:
    eta, a, b = _check_kramers_beta(beta)
    x_star = np.sqrt(a / b)

    def fixed_point(x):
        # nearest well; x = 0 is assigned to the positive one
        return np.where(np.asarray(x) >= 0, x_star, -x_star)

    def nonlinear(x, v):
        return a * x - b * x * x * x + 2.0 * a * (x - fixed_point(x))

    a_x = np.array([[-2.0 * a]])
    a_v = np.array([[-eta]])
    return DriftSplit(a_x=a_x, a_v=a_v, fixed_point=fixed_point, nonlinear=nonlinear)


def _kramers_nonlinear(x, beta):
    eta, a, b = float(beta[0]), float(beta[1]), float(beta[2])
    x_star = np.sqrt(a / b)
    bfix = np.where(np.asarray(x) >= 0, x_star, -x_star)
    return a * x - b * x * x * x + 2.0 * a * (x - bfix)


def _kramers_flow(h, x, v, beta):
    # N does not depend on v, so the half-step flow is exactly Euler
    return v + h * _kramers_nonlinear(x, beta)


def _kramers_flow_inverse(h, x, v, beta):
    return v - h * _kramers_nonlinear(x, beta)


def _kramers_flow_logdet(h, x, v, beta):
    # D_v f_h = 1 identically
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(v)).shape)


def _kramers_scalar_drift(beta):
    eta, a, b = float(beta[0]), float(beta[1]), float(beta[2])

    def drift(x, v):
        return -eta * v + a * x - b * x * x * x

    return drift


def _kramers_sigma(sigma_params):
    s2 = float(np.asarray(sigma_params).reshape(-1)[0])
    if not np.isfinite(s2) or s2 <= 0:
        raise DomainError(f"sigma_sq must be positive, got {s2}")
    return np.array([[np.sqrt(s2)]])


def kramers_model(p: KramersParams | None = None) -> ModelSpec:
    """Kramers oscillator: F(x, v) = -eta v + a x - b x^3, scalar noise.

    The splitting linearises the bistable force around the well nearest
    the current position,

        A_x = -2a,  A_v = -eta,  b(x) = sign(x) sqrt(a/b),
        N(x) = a x - b x^3 + 2a (x - b(x)),

    which keeps the OU part mean reverting inside each well.  N is
    velocity free, so its flow is exact Euler and the velocity Jacobian
    of the half-step map is identically one.

    ``p`` is validated and stored as the default parameter point; the
    returned model itself is parameter free and every callable takes the
    parameters it needs.
    """
    default = None
    if p is not None:
        if not isinstance(p, KramersParams):
            p = KramersParams.from_theta(np.asarray(p, dtype=float))
        default = tuple(p.theta)
    return ModelSpec(
        d=1,
        beta_dim=3,
        sigma_dim=1,
        drift=_kramers_drift,
        split=lambda beta: _kramers_split(beta),
        nonlinear_flow=_kramers_flow,
        nonlinear_flow_rough_inverse=_kramers_flow_inverse,
        sigma=_kramers_sigma,
        flow_logdet_v=_kramers_flow_logdet,
        scalar_drift=_kramers_scalar_drift,
        name="kramers",
        default_theta=default,
    )


# ---------------------------------------------------------------------------
# Split validation


@dataclass(frozen=True)
class SplitReport:
    """Result of checking A_x (x - b) + A_v v + N(x, v) against F(x, v)."""

    max_abs_error: float
    n_points: int
    threshold: float
    flagged: bool

    def __str__(self) -> str:
        status = "FLAGGED" if self.flagged else "ok"
        return (
            f"split check over {self.n_points} points: "
            f"max |F - (linear + N)| = {self.max_abs_error:.3e} ({status})"
        )


def validate_split(model: ModelSpec, beta, sample_points,
                   threshold: float = SPLIT_TOLERANCE) -> SplitReport:
    """Check that the declared split reassembles the drift.

    ``sample_points`` is an (n, 2 d) array of (x, v) states.  The report
    carries the maximum discrepancy and flags it when it exceeds
    ``threshold``; it never raises, so it can run on adversarial inputs.
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    d = model.d
    if pts.shape[1] != 2 * d:
        raise ValueError(f"sample points must have {2 * d} columns, got {pts.shape[1]}")
    x = pts[:, :d]
    v = pts[:, d:]
    split = model.split(beta)
    b = np.broadcast_to(np.asarray(split.fixed_point(x), dtype=float), x.shape)
    linear = (x - b) @ split.a_x.T + v @ split.a_v.T
    reassembled = linear + np.broadcast_to(
        np.asarray(split.nonlinear(x, v), dtype=float), x.shape
    )
    full = np.broadcast_to(np.asarray(model.drift(x, v, beta), dtype=float), x.shape)
    err = float(np.max(np.abs(full - reassembled))) if len(pts) else 0.0
    return SplitReport(
        max_abs_error=err,
        n_points=len(pts),
        threshold=threshold,
        flagged=bool(err > threshold),
    )
