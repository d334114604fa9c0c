"""Exact mean and covariance of the linear (OU) sub-flow.

For dY = A (Y - b) dt + S dW the transition over a step h is Gaussian,

    Y_h | Y_0 = y  ~  N( b + e^{A h} (y - b),  Omega_h ),
    Omega_h = int_0^h e^{A (h - s)} S S^T e^{A^T (h - s)} ds.

Both e^{A h} and Omega_h come out of a single matrix exponential of the
block matrix [[A, S S^T], [0, -A^T]] (Van Loan 1978): with
e^{h M} = [[P, Q], [0, R]] one has e^{A h} = P and Omega_h = Q P^T.

The flow object also carries the block decomposition of Omega into
smooth (position) and rough (velocity) coordinates together with the
conditional pieces used by the smooth-given-rough objectives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import NumericalError

__all__ = [
    "OUFlow",
    "ou_flow",
    "ou_mean",
    "ou_covariance",
    "OmegaExpansion",
    "omega_expansion",
    "RescaledLogdet",
    "omega_rescaled",
]

# relative eigenvalue threshold below which a covariance is declared broken
PSD_REL_TOL = 1e-12


def _expm_and_omega(a: np.ndarray, gram: np.ndarray, h: float):
    """One Van Loan exponential: returns (e^{a h}, Omega_h)."""
    m = a.shape[0]
    block = np.zeros((2 * m, 2 * m))
    block[:m, :m] = a
    block[:m, m:] = gram
    block[m:, m:] = -a.T
    e = expm(h * block)
    exp_ah = e[:m, :m]
    omega = e[:m, m:] @ exp_ah.T
    return exp_ah, omega


def _repair_covariance(omega: np.ndarray, h: float) -> np.ndarray:
    """Symmetrise and clip rounding-level negative eigenvalues.

    Genuinely indefinite results (eigenvalues below -PSD_REL_TOL times
    the matrix scale) indicate a broken input and raise instead of being
    silently patched.
    """
    omega = 0.5 * (omega + omega.T)
    scale = max(1.0, float(np.max(np.abs(omega))))
    eigvals = np.linalg.eigvalsh(omega)
    if eigvals[0] < -PSD_REL_TOL * scale:
        raise NumericalError(
            f"OU covariance at h={h} lost positive semidefiniteness: "
            f"min eigenvalue {eigvals[0]:.3e} (scale {scale:.3e})"
        )
    if eigvals[0] < 0.0:
        w, vecs = np.linalg.eigh(omega)
        omega = (vecs * np.clip(w, 0.0, None)) @ vecs.T
        omega = 0.5 * (omega + omega.T)
    return omega


def _logdet(mat: np.ndarray, label: str) -> float:
    if not np.all(np.isfinite(mat)):
        raise NumericalError(f"{label} has non-finite entries")
    sign, val = np.linalg.slogdet(mat)
    if sign <= 0 or not np.isfinite(val):
        raise NumericalError(f"{label} is not positive definite (slogdet sign {sign})")
    return float(val)


@dataclass(frozen=True)
class OUFlow:
    """Precomputed transition quantities of the OU sub-flow at one step size.

    Blocks use the (smooth, rough) = (position, velocity) ordering of the
    full state.  ``gain`` is Omega^SR (Omega^RR)^{-1} and ``schur`` the
    conditional covariance Omega^SS - gain Omega^RS of the smooth block
    given the rough one.  Inverses are precomputed; state dimensions are
    small so explicit inversion is both cheap and accurate enough.
    """

    h: float
    d: int
    exp_ah: np.ndarray
    omega: np.ndarray
    omega_ss: np.ndarray
    omega_sr: np.ndarray
    omega_rs: np.ndarray
    omega_rr: np.ndarray
    gain: np.ndarray
    schur: np.ndarray
    omega_inv: np.ndarray
    omega_rr_inv: np.ndarray
    schur_inv: np.ndarray
    logdet_full: float
    logdet_rr: float
    logdet_schur: float

    def mean(self, y: np.ndarray, b_tilde: np.ndarray) -> np.ndarray:
        """Conditional mean b + e^{A h} (y - b), broadcasting over frames."""
        y = np.asarray(y, dtype=float)
        b_tilde = np.asarray(b_tilde, dtype=float)
        return b_tilde + (y - b_tilde) @ self.exp_ah.T


def ou_flow(a_tilde: np.ndarray, sigma_tilde: np.ndarray, h: float) -> OUFlow:
    """Build the full transition structure for step size h > 0."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    a_tilde = np.asarray(a_tilde, dtype=float)
    sigma_tilde = np.asarray(sigma_tilde, dtype=float)
    m = a_tilde.shape[0]
    if a_tilde.shape != (m, m) or m % 2:
        raise ValueError(f"a_tilde must be square with even size, got {a_tilde.shape}")
    d = m // 2
    gram = sigma_tilde @ sigma_tilde.T
    exp_ah, omega = _expm_and_omega(a_tilde, gram, h)
    omega = _repair_covariance(omega, h)

    omega_ss = omega[:d, :d]
    omega_sr = omega[:d, d:]
    omega_rs = omega[d:, :d]
    omega_rr = omega[d:, d:]
    # check definiteness before any solve so degenerate noise surfaces as a
    # package error rather than a bare LinAlgError
    logdet_full = _logdet(omega, "full OU covariance")
    logdet_rr = _logdet(omega_rr, "rough OU covariance block")
    gain = np.linalg.solve(omega_rr, omega_sr.T).T
    schur = omega_ss - gain @ omega_rs
    schur = 0.5 * (schur + schur.T)

    return OUFlow(
        h=h,
        d=d,
        exp_ah=exp_ah,
        omega=omega,
        omega_ss=omega_ss,
        omega_sr=omega_sr,
        omega_rs=omega_rs,
        omega_rr=omega_rr,
        gain=gain,
        schur=schur,
        omega_inv=np.linalg.inv(omega),
        omega_rr_inv=np.linalg.inv(omega_rr),
        schur_inv=np.linalg.inv(schur),
        logdet_full=logdet_full,
        logdet_rr=logdet_rr,
        logdet_schur=_logdet(schur, "conditional smooth covariance"),
    )


def ou_mean(a_tilde: np.ndarray, b_tilde: np.ndarray, h: float, y: np.ndarray) -> np.ndarray:
    """Transition mean b + e^{A h}(y - b); h = 0 returns y unchanged."""
    if h < 0:
        raise ValueError(f"step size must be nonnegative, got {h}")
    a_tilde = np.asarray(a_tilde, dtype=float)
    y = np.asarray(y, dtype=float)
    b_tilde = np.asarray(b_tilde, dtype=float)
    exp_ah = expm(h * a_tilde)
    return b_tilde + (y - b_tilde) @ exp_ah.T


def ou_covariance(a_tilde: np.ndarray, sigma_tilde: np.ndarray, h: float) -> np.ndarray:
    """Transition covariance Omega_h alone (symmetrised, PSD-checked)."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    a_tilde = np.asarray(a_tilde, dtype=float)
    sigma_tilde = np.asarray(sigma_tilde, dtype=float)
    gram = sigma_tilde @ sigma_tilde.T
    _, omega = _expm_and_omega(a_tilde, gram, h)
    return _repair_covariance(omega, h)


# ---------------------------------------------------------------------------
# Small-step expansions, used as cross-checks of the exact construction


@dataclass(frozen=True)
class OmegaExpansion:
    """Two leading orders of each Omega block for small h.

    With G = Sigma Sigma^T and A_v the velocity-velocity drift block:

        ss: h^3/3 G + h^4/8 (A_v G + G A_v^T)
        sr: h^2/2 G + h^3/6 (A_v G + 2 G A_v^T)
        rs: h^2/2 G + h^3/6 (2 A_v G + G A_v^T)
        rr: h   G + h^2/2 (A_v G + G A_v^T)
    """

    h: float
    ss: np.ndarray
    sr: np.ndarray
    rs: np.ndarray
    rr: np.ndarray


def omega_expansion(a_v: np.ndarray, sigma_sigma_t: np.ndarray, h: float) -> OmegaExpansion:
    a_v = np.atleast_2d(np.asarray(a_v, dtype=float))
    g = np.atleast_2d(np.asarray(sigma_sigma_t, dtype=float))
    ag = a_v @ g
    ga = g @ a_v.T
    return OmegaExpansion(
        h=h,
        ss=(h ** 3 / 3.0) * g + (h ** 4 / 8.0) * (ag + ga),
        sr=(h ** 2 / 2.0) * g + (h ** 3 / 6.0) * (ag + 2.0 * ga),
        rs=(h ** 2 / 2.0) * g + (h ** 3 / 6.0) * (2.0 * ag + ga),
        rr=h * g + (h ** 2 / 2.0) * (ag + ga),
    )


@dataclass(frozen=True)
class RescaledLogdet:
    """Log-determinants at a rescaled step h/c with their c-multiplied forms.

    The partial-observation objectives replace N log det Omega_h by
    c (N - 1) log det Omega_{h/c} with c = 4/3 (full state, step 3h/4)
    or c = 2/3 (rough block, step 3h/2); c = 1 recovers the plain terms.
    """

    c: float
    h: float
    h_scaled: float
    logdet_full: float
    logdet_rr: float
    logdet_schur: float
    scaled_full: float
    scaled_rr: float
    scaled_schur: float


def omega_rescaled(flow_builder, theta, h: float, c: float) -> RescaledLogdet:
    """Evaluate log-det terms of the flow at step h/c.

    ``flow_builder(theta, h)`` must return an OUFlow; this keeps the
    rescaling logic independent of any particular model.
    """
    if c <= 0:
        raise ValueError(f"rescaling constant must be positive, got {c}")
    h_scaled = h / c
    flow = flow_builder(theta, h_scaled)
    return RescaledLogdet(
        c=c,
        h=h,
        h_scaled=h_scaled,
        logdet_full=flow.logdet_full,
        logdet_rr=flow.logdet_rr,
        logdet_schur=flow.logdet_schur,
        scaled_full=c * flow.logdet_full,
        scaled_rr=c * flow.logdet_rr,
        scaled_schur=c * flow.logdet_schur,
    )
