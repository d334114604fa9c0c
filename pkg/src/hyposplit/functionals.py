"""Monte Carlo oracle for the Gaussian functionals of the Wiener path.

The asymptotic analysis of the partial-observation objectives rests on
the per-interval integrals (unit step, so the step size drops out)

    eta  = int dW,        xi   = int t dW,        xi'  = int (1 - t) dW,
    zeta = int t^2 dW,    zeta' = int (1 - t)^2 dW,

and the cross-interval combinations U_k = xi'_k + xi_{k-1} and
Q_k = zeta'_k + 2 eta_{k-1} - zeta_{k-1}.  This module simulates them by
left-endpoint Ito sums on a fine grid along one long Wiener path, so
all functionals of one interval share increments and U, Q couple across
intervals exactly as in the theory.  check_moments then verifies the
second-moment identities and the fourth-moment quadratic-form identities
against their closed forms, with Monte Carlo standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FunctionalDraw",
    "FunctionalDraws",
    "sample_functionals",
    "MomentCheck",
    "MomentReport",
    "check_moments",
]

MIN_SUBSTEPS = 100
MIN_DRAWS_FOR_CHECK = 10_000
CHUNK_INTERVALS = 512


@dataclass(frozen=True)
class FunctionalDraw:
    """Functionals of one interval; u and q are None for the first one."""

    eta: np.ndarray
    xi: np.ndarray
    xi_prime: np.ndarray
    zeta: np.ndarray
    zeta_prime: np.ndarray
    u: np.ndarray | None
    q: np.ndarray | None


class FunctionalDraws:
    """Per-interval functional arrays of shape (n_intervals, d).

    ``u`` and ``q`` have one row fewer since they straddle interval
    boundaries; u[k-1] and q[k-1] belong to the boundary between
    intervals k-1 and k.
    """

    def __init__(self, eta, xi, xi_prime, zeta, zeta_prime, n_substeps, seed):
        self.eta = eta
        self.xi = xi
        self.xi_prime = xi_prime
        self.zeta = zeta
        self.zeta_prime = zeta_prime
        self.u = xi_prime[1:] + xi[:-1]
        self.q = zeta_prime[1:] + 2.0 * eta[:-1] - zeta[:-1]
        self.n_substeps = n_substeps
        self.seed = seed

    @property
    def n_intervals(self) -> int:
        return self.eta.shape[0]

    @property
    def d(self) -> int:
        return self.eta.shape[1]

    def __len__(self) -> int:
        return self.n_intervals

    def __getitem__(self, k: int) -> FunctionalDraw:
        if k < 0:
            k += self.n_intervals
        return FunctionalDraw(
            eta=self.eta[k],
            xi=self.xi[k],
            xi_prime=self.xi_prime[k],
            zeta=self.zeta[k],
            zeta_prime=self.zeta_prime[k],
            u=self.u[k - 1] if k >= 1 else None,
            q=self.q[k - 1] if k >= 1 else None,
        )

    def u_alternative(self) -> np.ndarray:
        """xi'_k + eta_{k-1} - xi'_{k-1}, equal to u pathwise."""
        return self.xi_prime[1:] + self.eta[:-1] - self.xi_prime[:-1]


def sample_functionals(n_intervals: int, n_substeps: int, seed, d: int = 1) -> FunctionalDraws:
    """Simulate the functionals over n_intervals consecutive unit intervals.

    Each interval is split into n_substeps pieces; the Ito integrals use
    left-endpoint weights, e.g. xi sums (i / n) dW_i.  Intervals use
    disjoint increments of one path, so functionals of different
    intervals are independent while U and Q combine neighbours.
    """
    if n_substeps < MIN_SUBSTEPS:
        raise ValueError(f"need at least {MIN_SUBSTEPS} substeps, got {n_substeps}")
    if n_intervals < 2:
        raise ValueError(f"need at least 2 intervals for U and Q, got {n_intervals}")
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    n = n_substeps
    i = np.arange(n)
    root = np.sqrt(float(n))
    # columns: eta, xi, xi', zeta, zeta' weights per substep increment
    weights = np.column_stack(
        [
            np.full(n, 1.0 / root),
            i / (n * root),
            (n - i) / (n * root),
            i ** 2 / (n ** 2 * root),
            (n - i) ** 2 / (n ** 2 * root),
        ]
    )

    out = [np.empty((n_intervals, d)) for _ in range(5)]
    done = 0
    while done < n_intervals:
        count = min(CHUNK_INTERVALS, n_intervals - done)
        increments = rng.standard_normal((count, n, d))
        vals = np.einsum("cnd,nf->fcd", increments, weights, optimize=True)
        for f in range(5):
            out[f][done : done + count] = vals[f]
        done += count
    return FunctionalDraws(*out, n_substeps=n_substeps, seed=seed)


# ---------------------------------------------------------------------------
# Moment verification


@dataclass(frozen=True)
class MomentCheck:
    """One identity: sample estimate vs closed-form target."""

    name: str
    estimate: float
    target: float
    se: float
    z_score: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "target": self.target,
            "se": self.se,
            "z_score": self.z_score,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class MomentReport:
    checks: tuple
    max_z: float
    n_draws: int
    tolerance_se: float

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "n_draws": self.n_draws,
            "tolerance_se": self.tolerance_se,
            "max_abs_z": self.max_z,
            "all_passed": self.all_passed,
            "checks": [c.as_dict() for c in self.checks],
        }

    def __str__(self) -> str:
        lines = [
            f"{'identity':<42}{'estimate':>12}{'target':>10}{'z':>8}  status"
        ]
        for c in self.checks:
            status = "ok" if c.passed else "FAIL"
            lines.append(
                f"{c.name:<42}{c.estimate:>12.5f}{c.target:>10.5f}{c.z_score:>8.2f}  {status}"
            )
        verdict = "all passed" if self.all_passed else f"{len(self.failed())} FAILED"
        lines.append(f"{len(self.checks)} identities at {self.n_draws} draws: {verdict}")
        return "\n".join(lines)


def _mean_with_se(series: np.ndarray, lag_coupled: bool):
    """Mean and standard error of a per-interval scalar series.

    U- and Q-based series are 1-dependent (neighbouring values share an
    interval), so their standard error gets the lag-1 correction; the
    max with the plain term keeps it from undershooting on noise.
    """
    n = series.shape[0]
    mean = float(np.mean(series))
    centered = series - mean
    gamma0 = float(centered @ centered) / n
    var = gamma0 / n
    if lag_coupled and n > 2:
        gamma1 = float(centered[:-1] @ centered[1:]) / n
        var = max(var, (gamma0 + 2.0 * gamma1) / n)
    return mean, float(np.sqrt(var))


def _default_quadratic_forms(d: int):
    b1 = np.diag(1.0 + np.arange(d)) + 0.2 * np.ones((d, d))
    b2 = np.eye(d) + 0.1 * np.ones((d, d))
    return b1, b2


def check_moments(draws: FunctionalDraws, b1=None, b2=None, max_z: float = 4.0) -> MomentReport:
    """Verify the second- and fourth-moment identities on the draws.

    Second moments (identity matrices scaled by the stated constants):

        E[eta eta^T] = I        E[eta xi^T] = E[eta xi'^T] = I/2
        E[xi xi'^T]  = I/6      E[xi xi^T]  = E[xi' xi'^T] = I/3
        E[U U^T] = (2/3) I      E[U (U + 2 xi'_{k-1})^T] = I

    Fourth moments for symmetric positive definite B1, B2:

        E[(eta^T B1 eta)(eta^T B2 eta)] = 2 tr(B1 B2) + tr B1 tr B2
        same with xi or xi'             : (2/9) tr + (1/9) tr tr
        mixed xi, xi'                   : (1/18) tr + (1/9) tr tr

    Every scalar comparison gets a Monte Carlo standard error and passes
    when |z| <= max_z.
    """
    if draws.n_intervals < MIN_DRAWS_FOR_CHECK:
        raise ValueError(
            f"need at least {MIN_DRAWS_FOR_CHECK} draws for stable z-scores, "
            f"got {draws.n_intervals}"
        )
    d = draws.d
    if b1 is None or b2 is None:
        default_b1, default_b2 = _default_quadratic_forms(d)
        b1 = default_b1 if b1 is None else np.atleast_2d(np.asarray(b1, dtype=float))
        b2 = default_b2 if b2 is None else np.atleast_2d(np.asarray(b2, dtype=float))
    else:
        b1 = np.atleast_2d(np.asarray(b1, dtype=float))
        b2 = np.atleast_2d(np.asarray(b2, dtype=float))

    eye = np.eye(d)
    u_partner = draws.u + 2.0 * draws.xi_prime[:-1]
    second = [
        ("E[eta eta^T]", draws.eta, draws.eta, eye, False),
        ("E[eta xi^T]", draws.eta, draws.xi, eye / 2.0, False),
        ("E[eta xi'^T]", draws.eta, draws.xi_prime, eye / 2.0, False),
        ("E[xi xi'^T]", draws.xi, draws.xi_prime, eye / 6.0, False),
        ("E[xi xi^T]", draws.xi, draws.xi, eye / 3.0, False),
        ("E[xi' xi'^T]", draws.xi_prime, draws.xi_prime, eye / 3.0, False),
        ("E[U U^T]", draws.u, draws.u, (2.0 / 3.0) * eye, False),
        ("E[U (U + 2 xi'_prev)^T]", draws.u, u_partner, eye, True),
    ]
    # U U^T is also lag-coupled; fix the flag
    second[6] = ("E[U U^T]", draws.u, draws.u, (2.0 / 3.0) * eye, True)

    checks = []
    for name, left, right, target, coupled in second:
        for p in range(d):
            for q in range(d):
                series = left[:, p] * right[:, q]
                est, se = _mean_with_se(series, coupled)
                label = name if d == 1 else f"{name}[{p},{q}]"
                z = (est - target[p, q]) / se if se > 0 else 0.0
                checks.append(
                    MomentCheck(label, est, float(target[p, q]), se, float(z),
                                bool(abs(z) <= max_z))
                )

    tr12 = float(np.trace(b1 @ b2))
    tr1 = float(np.trace(b1))
    tr2 = float(np.trace(b2))
    fourth = [
        ("E[(eta'B1 eta)(eta'B2 eta)]", draws.eta, draws.eta,
         2.0 * tr12 + tr1 * tr2),
        ("E[(xi'B1 xi)(xi'B2 xi)]", draws.xi, draws.xi,
         (2.0 / 9.0) * tr12 + (1.0 / 9.0) * tr1 * tr2),
        ("E[(xi_p'B1 xi_p)(xi_p'B2 xi_p)]", draws.xi_prime, draws.xi_prime,
         (2.0 / 9.0) * tr12 + (1.0 / 9.0) * tr1 * tr2),
        ("E[(xi'B1 xi)(xi_p'B2 xi_p)]", draws.xi, draws.xi_prime,
         (1.0 / 18.0) * tr12 + (1.0 / 9.0) * tr1 * tr2),
    ]
    for name, left, right, target in fourth:
        series = np.einsum("nd,de,ne->n", left, b1, left) * np.einsum(
            "nd,de,ne->n", right, b2, right
        )
        est, se = _mean_with_se(series, False)
        z = (est - target) / se if se > 0 else 0.0
        checks.append(MomentCheck(name, est, target, se, float(z), bool(abs(z) <= max_z)))

    max_abs = max(abs(c.z_score) for c in checks)
    return MomentReport(
        checks=tuple(checks),
        max_z=float(max_abs),
        n_draws=draws.n_intervals,
        tolerance_se=float(max_z),
    )
