"""Numerical minimisation of the objectives with robust defaults.

Estimation runs in a transformed parameter space (log by default, so
positivity constraints never bind), starts with Nelder-Mead, restarts it
once from the incumbent, and polishes with BFGS on numeric gradients.
Proposals where the objective is undefined or non-finite are treated as
+infinity rather than as errors, which lets the simplex retreat from
infeasible regions on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize as sp_optimize

from .errors import DomainError, EstimationError, NumericalError
from .models import ModelSpec
from .objectives import ObjectiveKind, objective
from .observe import ObservationSet

__all__ = [
    "EstimationOptions",
    "EstimationResult",
    "estimate",
    "ProfileCurve",
    "profile_objective",
]

DEFAULT_START = 0.1
DEFAULT_TOL = 1e-5
DEFAULT_MAX_ITERS = 2000


@dataclass
class EstimationOptions:
    """Tuning knobs of estimate(); defaults follow the study settings.

    ``fixed`` maps parameter indices to frozen values, excluded from the
    search (e.g. a known sigma_sq).  ``start`` is on the natural scale.
    """

    start: Sequence[float] | None = None
    transform: str = "log"
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    polish: bool = True
    restarts: int = 1
    fixed: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.transform not in ("log", "identity"):
            raise ValueError(f"transform must be 'log' or 'identity', got {self.transform!r}")
        if self.tol <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")


@dataclass
class EstimationResult:
    """Outcome of one estimation run, on the natural parameter scale."""

    theta_hat: np.ndarray
    objective_value: float
    kind: ObjectiveKind
    iterations: int
    converged: bool
    start_point: np.ndarray
    transform_spec: dict

    def __str__(self) -> str:
        par = ", ".join(f"{v:.6g}" for v in self.theta_hat)
        tag = "converged" if self.converged else "NOT converged"
        return (
            f"{self.kind.value} estimate [{par}] "
            f"(objective {self.objective_value:.6g}, {self.iterations} iterations, {tag})"
        )


def _transform_pair(name: str):
    if name == "log":
        return np.log, np.exp
    return (lambda z: np.asarray(z, dtype=float)), (lambda z: np.asarray(z, dtype=float))


def estimate(model: ModelSpec, obs: ObservationSet, kind, options=None) -> EstimationResult:
    """Minimise the chosen objective over theta.

    Two-stage scheme: Nelder-Mead in the transformed space, restarted
    once from its own output, then a BFGS polish with numeric gradients
    that is kept only when it improves the incumbent.  Convergence means
    the final stage met its parameter-change criterion (tol, default
    1e-5) before the iteration cap.
    """
    kind = ObjectiveKind.coerce(kind)
    if options is None:
        options = EstimationOptions()
    elif isinstance(options, dict):
        options = EstimationOptions(**options)

    n_par = model.theta_dim
    fixed = {int(k): float(v) for k, v in options.fixed.items()}
    for idx in fixed:
        if not 0 <= idx < n_par:
            raise ValueError(f"fixed index {idx} outside parameter range 0..{n_par - 1}")
    free = [i for i in range(n_par) if i not in fixed]
    if not free:
        raise ValueError("all parameters fixed, nothing to estimate")

    if options.start is None:
        start = np.full(n_par, DEFAULT_START)
        for idx, val in fixed.items():
            start[idx] = val
    else:
        start = np.asarray(options.start, dtype=float)
        if start.shape != (n_par,):
            raise ValueError(f"start must have shape ({n_par},), got {start.shape}")

    fwd, back = _transform_pair(options.transform)
    if options.transform == "log" and np.any(start[free] <= 0):
        raise ValueError("log transform needs a strictly positive start point")

    def assemble(z_free):
        theta = np.empty(n_par)
        theta[free] = back(z_free)
        for idx, val in fixed.items():
            theta[idx] = val
        return theta

    def safe_objective(z_free):
        try:
            value = objective(model, assemble(z_free), obs, kind)
        except (DomainError, NumericalError, FloatingPointError, np.linalg.LinAlgError):
            return np.inf
        if not np.isfinite(value):
            return np.inf
        return value

    z0 = fwd(start[free])
    f0 = safe_objective(z0)
    if not np.isfinite(f0):
        raise EstimationError(
            f"objective {kind.value} is not finite at the start point {start}"
        )

    total_iters = 0
    incumbent_z, incumbent_f = np.asarray(z0, dtype=float), f0
    converged = False
    for _ in range(1 + max(0, options.restarts)):
        res = sp_optimize.minimize(
            safe_objective,
            incumbent_z,
            method="Nelder-Mead",
            options={
                "xatol": options.tol,
                "fatol": options.tol * max(1.0, abs(incumbent_f)) * 1e-3,
                "maxiter": options.max_iters,
                "adaptive": True,
            },
        )
        total_iters += int(res.nit)
        if res.fun <= incumbent_f:
            incumbent_z, incumbent_f = res.x, float(res.fun)
        converged = bool(res.success)

    if options.polish:
        with np.errstate(all="ignore"):
            res = sp_optimize.minimize(
                safe_objective,
                incumbent_z,
                method="BFGS",
                options={"maxiter": 200, "xrtol": options.tol * 1e-2},
            )
        total_iters += int(res.nit)
        if np.isfinite(res.fun) and res.fun <= incumbent_f:
            step = float(np.max(np.abs(res.x - incumbent_z)))
            incumbent_z, incumbent_f = res.x, float(res.fun)
            converged = converged or bool(res.success) or step < options.tol

    return EstimationResult(
        theta_hat=assemble(incumbent_z),
        objective_value=incumbent_f,
        kind=kind,
        iterations=total_iters,
        converged=converged,
        start_point=start,
        transform_spec={"transform": options.transform, "fixed": dict(fixed)},
    )


@dataclass(frozen=True)
class ProfileCurve:
    """One-dimensional slice of an objective along a parameter axis."""

    axis: int
    grid: np.ndarray
    values: np.ndarray
    monotone: bool

    @property
    def argmin(self) -> int:
        return int(np.argmin(self.values))


def profile_objective(model: ModelSpec, obs: ObservationSet, kind, theta_center,
                      axis: int, grid) -> ProfileCurve:
    """Evaluate the objective along one axis, holding the rest at
    theta_center.  Infeasible points appear as +inf; a monotone slice is
    flagged since it usually means the data cannot identify that axis."""
    kind = ObjectiveKind.coerce(kind)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    theta_center = np.asarray(theta_center, dtype=float).copy()
    if not 0 <= axis < theta_center.size:
        raise ValueError(f"axis {axis} outside parameter range 0..{theta_center.size - 1}")
    values = np.empty(grid.size)
    for i, g in enumerate(grid):
        theta = theta_center.copy()
        theta[axis] = g
        try:
            values[i] = objective(model, theta, obs, kind)
        except (DomainError, NumericalError, FloatingPointError, np.linalg.LinAlgError):
            values[i] = np.inf
    diffs = np.diff(values[np.isfinite(values)])
    monotone = bool(diffs.size > 0 and (np.all(diffs > 0) or np.all(diffs < 0)))
    return ProfileCurve(axis=axis, grid=grid, values=values, monotone=monotone)
