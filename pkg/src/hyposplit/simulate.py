"""Path simulation: fine-grid Euler-Maruyama and the Strang splitting scheme.

Both simulators are deterministic functions of their seed; re-running
with the same seed reproduces the trajectory bit for bit.  Seeds are
plain integers, numpy SeedSequences, or ready-made Generators; studies
spawn per-replicate SeedSequences so replicates are independent yet
reproducible individually.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from scipy.linalg import expm

from .errors import SimulationError
from .linear_ou import ou_covariance
from .models import ModelSpec, a_tilde, sigma_tilde

__all__ = [
    "Trajectory",
    "simulate_em",
    "simulate_strang",
    "subsample",
    "save_trajectory",
    "load_trajectory",
]

# beyond this magnitude a path is declared divergent rather than rounded on
EXPLOSION_BOUND = 1e8


@dataclass
class Trajectory:
    """A discretely observed path: times, positions, optional velocities.

    ``x`` and ``v`` have shape (n_points, d); ``v`` is None for
    position-only series (e.g. ingested data).  ``meta`` records how the
    path was produced (scheme, seed, step sizes, subsampling).
    """

    h: float
    times: np.ndarray
    x: np.ndarray
    v: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if self.x.shape[0] == 1 and self.times.size > 1:
            self.x = self.x.T
        if self.v is not None:
            self.v = np.atleast_2d(np.asarray(self.v, dtype=float))
            if self.v.shape[0] == 1 and self.times.size > 1:
                self.v = self.v.T
            if self.v.shape != self.x.shape:
                raise ValueError(
                    f"velocity shape {self.v.shape} does not match positions {self.x.shape}"
                )
        if self.x.shape[0] != self.times.size:
            raise ValueError(
                f"{self.times.size} time stamps but {self.x.shape[0]} states"
            )

    @property
    def n_points(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def has_velocity(self) -> bool:
        return self.v is not None

    def state(self) -> np.ndarray:
        """Full (n_points, 2 d) state array; requires velocities."""
        if self.v is None:
            raise ValueError("trajectory has no velocities")
        return np.hstack([self.x, self.v])


def _make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _check_y0(y0, d) -> np.ndarray:
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if y0.size != 2 * d:
        raise ValueError(f"initial state must have {2 * d} entries (x, v), got {y0.size}")
    return y0


def simulate_em(model: ModelSpec, theta, y0, h_sim: float, n_steps: int, seed) -> Trajectory:
    """Euler-Maruyama on the fine grid.

        x_{k+1} = x_k + h v_k
        v_{k+1} = v_k + h F(x_k, v_k) + Sigma sqrt(h) eps_k

    The position update is noise free, so position increments telescope
    into exact averages of left-endpoint velocities.  Paths leaving
    [-1e8, 1e8] raise SimulationError instead of propagating overflow.
    """
    if h_sim <= 0:
        raise ValueError(f"step size must be positive, got {h_sim}")
    if n_steps < 1:
        raise ValueError(f"need at least one step, got {n_steps}")
    beta, sigma_params = model.split_theta(theta)
    sigma = model.sigma(sigma_params)
    d = model.d
    y0 = _check_y0(y0, d)
    rng = _make_rng(seed)

    if d == 1:
        return _simulate_em_scalar(model, beta, float(sigma[0, 0]), y0, h_sim, n_steps, rng, seed)

    x = np.empty((n_steps + 1, d))
    v = np.empty((n_steps + 1, d))
    x[0] = y0[:d]
    v[0] = y0[d:]
    noise = rng.standard_normal((n_steps, d)) @ (np.sqrt(h_sim) * sigma).T
    for k in range(n_steps):
        xk, vk = x[k], v[k]
        x[k + 1] = xk + h_sim * vk
        v[k + 1] = vk + h_sim * np.asarray(model.drift(xk, vk, beta)) + noise[k]
        if not (np.all(np.abs(x[k + 1]) < EXPLOSION_BOUND) and np.all(np.abs(v[k + 1]) < EXPLOSION_BOUND)):
            raise SimulationError(f"Euler-Maruyama path diverged at step {k + 1}")
    times = h_sim * np.arange(n_steps + 1)
    meta = {"scheme": "em", "h_sim": h_sim, "seed": _seed_repr(seed)}
    return Trajectory(h=h_sim, times=times, x=x, v=v, meta=meta)


def _simulate_em_scalar(model, beta, sigma_scalar, y0, h_sim, n_steps, rng, seed) -> Trajectory:
    # tight float loop; the recurrence cannot be vectorised over time
    if model.scalar_drift is not None:
        drift = model.scalar_drift(beta)
    else:
        full = model.drift

        def drift(x, v):
            return float(full(x, v, beta))

    noise = rng.standard_normal(n_steps)
    noise *= sigma_scalar * np.sqrt(h_sim)
    xs = np.empty(n_steps + 1)
    vs = np.empty(n_steps + 1)
    xk = xs[0] = y0[0]
    vk = vs[0] = y0[1]
    bound = EXPLOSION_BOUND
    eps = noise.tolist()
    h = h_sim
    for k in range(n_steps):
        xn = xk + h * vk
        vk = vk + h * drift(xk, vk) + eps[k]
        xk = xn
        xs[k + 1] = xk
        vs[k + 1] = vk
        if not (-bound < xk < bound and -bound < vk < bound):
            raise SimulationError(f"Euler-Maruyama path diverged at step {k + 1}")
    times = h_sim * np.arange(n_steps + 1)
    meta = {"scheme": "em", "h_sim": h_sim, "seed": _seed_repr(seed)}
    return Trajectory(h=h_sim, times=times, x=xs[:, None], v=vs[:, None], meta=meta)


def _covariance_factor(omega: np.ndarray) -> np.ndarray:
    """Cholesky factor, falling back to an eigenvalue square root.

    The OU covariance is positive definite for h > 0 but can brush the
    semidefinite boundary numerically for very stiff drifts; the
    eigenvalue route then still yields a valid factor.
    """
    try:
        return np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        w, vecs = np.linalg.eigh(omega)
        return vecs * np.sqrt(np.clip(w, 0.0, None))


def simulate_strang(model: ModelSpec, theta, y0, h: float, n_steps: int, seed,
                    deterministic: bool = False) -> Trajectory:
    """Strang splitting on the observation grid.

    One step composes half-step nonlinear flow, exact OU transition with
    noise N(0, Omega_h), half-step nonlinear flow.  For splittings with a
    position-dependent fixed point the OU centre is re-selected from the
    position at the start of each step.  ``deterministic`` drops the
    noise, which exposes the pure flow composition to tests.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    if n_steps < 1:
        raise ValueError(f"need at least one step, got {n_steps}")
    beta, sigma_params = model.split_theta(theta)
    d = model.d
    y0 = _check_y0(y0, d)
    split = model.split(beta)
    amat = a_tilde(split)
    # noise-free linear sub-steps are legitimate here, so build the
    # covariance directly instead of the strictly-PD estimation structure
    omega = ou_covariance(amat, sigma_tilde(model.sigma(sigma_params)), h)
    factor = _covariance_factor(omega)
    rng = _make_rng(seed)
    if deterministic:
        noise = np.zeros((n_steps, 2 * d))
    else:
        noise = rng.standard_normal((n_steps, 2 * d)) @ factor.T

    exp_ah = expm(h * amat)
    half = 0.5 * h
    y = np.empty((n_steps + 1, 2 * d))
    y[0] = y0
    x = y0[:d].copy()
    v = y0[d:].copy()
    for k in range(n_steps):
        v = np.asarray(model.nonlinear_flow(half, x, v, beta), dtype=float).reshape(d)
        b = np.asarray(split.fixed_point(x), dtype=float).reshape(d)
        dev_x = x - b
        full_dev = np.concatenate([dev_x, v])
        drifted = exp_ah @ full_dev
        x = b + drifted[:d] + noise[k, :d]
        v = drifted[d:] + noise[k, d:]
        v = np.asarray(model.nonlinear_flow(half, x, v, beta), dtype=float).reshape(d)
        y[k + 1, :d] = x
        y[k + 1, d:] = v
        if not np.all(np.abs(y[k + 1]) < EXPLOSION_BOUND):
            raise SimulationError(f"Strang path diverged at step {k + 1}")
    times = h * np.arange(n_steps + 1)
    meta = {"scheme": "strang", "seed": _seed_repr(seed), "deterministic": deterministic}
    return Trajectory(h=h, times=times, x=y[:, :d], v=y[:, d:], meta=meta)


def subsample(traj: Trajectory, stride: int) -> Trajectory:
    """Keep every stride-th point; the step size scales accordingly."""
    if not isinstance(stride, (int, np.integer)) or stride < 1:
        raise ValueError(f"stride must be a positive integer, got {stride!r}")
    if (traj.n_points - 1) % stride:
        raise ValueError(
            f"stride {stride} does not divide the {traj.n_points - 1} steps"
        )
    idx = np.arange(0, traj.n_points, stride)
    meta = dict(traj.meta)
    meta.update({"subsample_stride": int(stride), "source_h": traj.h})
    return Trajectory(
        h=traj.h * stride,
        times=traj.times[idx],
        x=traj.x[idx],
        v=None if traj.v is None else traj.v[idx],
        meta=meta,
    )


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    if isinstance(seed, np.random.Generator):
        return "generator"
    return int(seed)


# ---------------------------------------------------------------------------
# CSV round trip; metadata rides in a JSON sidecar


def save_trajectory(traj: Trajectory, path) -> Path:
    """Write t, x[, v] columns as CSV plus a .meta.json sidecar."""
    import pandas as pd

    path = Path(path)
    cols = {"t": traj.times}
    if traj.d == 1:
        cols["x"] = traj.x[:, 0]
        if traj.v is not None:
            cols["v"] = traj.v[:, 0]
    else:
        for j in range(traj.d):
            cols[f"x{j}"] = traj.x[:, j]
        if traj.v is not None:
            for j in range(traj.d):
                cols[f"v{j}"] = traj.v[:, j]
    pd.DataFrame(cols).to_csv(path, index=False)
    sidecar = path.with_suffix(".meta.json")
    payload = {"h": traj.h, "d": traj.d, "has_velocity": traj.has_velocity, "meta": traj.meta}
    sidecar.write_text(json.dumps(payload, sort_keys=True, indent=2, default=str) + "\n")
    return path


def load_trajectory(path) -> Trajectory:
    """Inverse of save_trajectory; infers h from the time column if the
    sidecar is missing."""
    import pandas as pd

    path = Path(path)
    frame = pd.read_csv(path, float_precision="round_trip")
    if "t" not in frame.columns:
        raise ValueError(f"{path} has no 't' column")
    times = frame["t"].to_numpy(dtype=float)
    x_cols = [c for c in frame.columns if c == "x" or (c.startswith("x") and c[1:].isdigit())]
    v_cols = [c for c in frame.columns if c == "v" or (c.startswith("v") and c[1:].isdigit())]
    if not x_cols:
        raise ValueError(f"{path} has no position columns")
    x = frame[x_cols].to_numpy(dtype=float)
    v = frame[v_cols].to_numpy(dtype=float) if v_cols else None

    sidecar = path.with_suffix(".meta.json")
    if sidecar.exists():
        payload = json.loads(sidecar.read_text())
        h = float(payload["h"])
        meta = payload.get("meta", {})
    else:
        if times.size < 2:
            raise ValueError(f"{path} has fewer than two rows and no metadata sidecar")
        h = float(np.median(np.diff(times)))
        meta = {}
    return Trajectory(h=h, times=times, x=x, v=v, meta=meta)
