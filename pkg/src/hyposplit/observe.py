"""Turning trajectories into estimation-ready observation frames.

A frame is a consecutive pair of full states (y_{k-1}, y_k).  Under
complete observation the velocities are the recorded ones; under partial
observation they are imputed by finite differences of the positions, by
default the forward scheme

    v_k ~ (x_{k+1} - x_k) / h,

which is the convention the partial-observation objectives and their
correction factors are derived for.  Imputation shortens the usable
index range; the containers keep track of which original indices
survive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .simulate import Trajectory

__all__ = [
    "DifferenceSeries",
    "finite_difference",
    "ObservationSet",
    "build_observations",
    "SCHEMES",
]

SCHEMES = ("forward", "backward", "central")


@dataclass(frozen=True)
class DifferenceSeries:
    """Imputed velocities with the original indices they attach to.

    ``values[i]`` estimates the velocity at time index ``indices[i]`` of
    the source series.  Forward differences lose the last index,
    backward the first, central both.
    """

    values: np.ndarray
    indices: np.ndarray
    scheme: str
    h: float


def finite_difference(x_series, h: float, scheme: str = "forward") -> DifferenceSeries:
    """Difference quotients of a position series at step h."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    x = np.asarray(x_series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2 or (scheme == "central" and n < 3):
        raise ValueError(f"series of length {n} too short for {scheme} differences")
    if scheme == "forward":
        values = (x[1:] - x[:-1]) / h
        indices = np.arange(0, n - 1)
    elif scheme == "backward":
        values = (x[1:] - x[:-1]) / h
        indices = np.arange(1, n)
    else:
        values = (x[2:] - x[:-2]) / (2.0 * h)
        indices = np.arange(1, n - 1)
    return DifferenceSeries(values=values, indices=indices, scheme=scheme, h=h)


@dataclass
class ObservationSet:
    """Frames (y_{k-1}, y_k) ready for residual and objective evaluation.

    ``frames`` has shape (n_frames, 2, 2 d): frames[:, 0] are the
    previous states, frames[:, 1] the current ones.  ``n_obs`` is the
    number N of transitions in the raw position series; partial frames
    are fewer because imputation trims the ends.  ``x_raw`` keeps the
    original positions for estimators that work on them directly.
    """

    kind: str
    h: float
    frames: np.ndarray
    scheme: str | None = None
    x_raw: np.ndarray | None = None
    n_obs: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("complete", "partial"):
            raise ValueError(f"kind must be 'complete' or 'partial', got {self.kind!r}")
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 3 or self.frames.shape[1] != 2 or self.frames.shape[2] % 2:
            raise ValueError(f"frames must have shape (m, 2, 2d), got {self.frames.shape}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def d(self) -> int:
        return self.frames.shape[2] // 2

    @property
    def prev(self) -> np.ndarray:
        return self.frames[:, 0]

    @property
    def curr(self) -> np.ndarray:
        return self.frames[:, 1]


def _frames_from_states(states: np.ndarray) -> np.ndarray:
    return np.stack([states[:-1], states[1:]], axis=1)


def build_observations(traj: Trajectory, kind: str, scheme: str = "forward") -> ObservationSet:
    """Assemble frames from a trajectory.

    complete
        Uses recorded velocities; requires them; ``scheme`` is ignored.
    partial
        Discards velocities, imputes them from positions with ``scheme``
        and pairs consecutive imputed states.  Forward differences on a
        series with N transitions leave N - 1 frames.
    """
    if kind == "complete":
        if not traj.has_velocity:
            raise ValueError("complete observations need recorded velocities")
        states = traj.state()
        return ObservationSet(
            kind="complete",
            h=traj.h,
            frames=_frames_from_states(states),
            scheme=None,
            x_raw=traj.x.copy(),
            n_obs=traj.n_points - 1,
            meta=dict(traj.meta),
        )
    if kind != "partial":
        raise ValueError(f"kind must be 'complete' or 'partial', got {kind!r}")
    diffs = finite_difference(traj.x, traj.h, scheme)
    states = np.hstack([traj.x[diffs.indices], diffs.values])
    return ObservationSet(
        kind="partial",
        h=traj.h,
        frames=_frames_from_states(states),
        scheme=scheme,
        x_raw=traj.x.copy(),
        n_obs=traj.n_points - 1,
        meta=dict(traj.meta),
    )
