"""Data ingestion, metastability analysis, and the simulation-study harness.

Ingestion turns an irregular raw series into an equidistant position
trajectory: filter to a time window, average into fixed-width bins,
transform, center, and impute missing bins.  Crossing analysis smooths a
series and reports alternating level crossings with per-state occupancy
statistics.  The study harness runs seeded replicates of
simulate/subsample/estimate across estimator kinds and aggregates a flat
table, deterministically regardless of worker count.
"""

from __future__ import annotations

import dataclasses
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import IngestionError, StudyError
from .models import kramers_model
from .objectives import ObjectiveKind
from .observe import build_observations
from .optimize import EstimationOptions, estimate
from .simulate import Trajectory, simulate_em, subsample

__all__ = [
    "IngestSpec",
    "ingest_series",
    "CrossingReport",
    "crossing_analysis",
    "StudyConfig",
    "StudyTable",
    "run_simulation_study",
]

WORKER_ENV_VAR = "HYPOSPLIT_THREADS"
MAX_FAILURE_FRACTION = 0.05


# ---------------------------------------------------------------------------
# Ingestion


@dataclass(frozen=True)
class IngestSpec:
    """How to turn a raw CSV into an equidistant position series.

    Values are averaged within half-open bins [t0 + i w, t0 + (i+1) w)
    of width w = bin_width, stamped at bin centers; the transform is
    applied to the bin averages, centering subtracts the mean of the
    transformed series.  ``impute`` decides what to do with interior
    bins that caught no observations.
    """

    source: str
    time_column: str = "t"
    value_column: str = "value"
    bin_width: float = 1.0
    transform: str = "none"
    center: bool = False
    time_range: tuple[float, float] | None = None
    impute: str = "linear"

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")
        if self.transform not in ("none", "neg-log"):
            raise ValueError(f"transform must be 'none' or 'neg-log', got {self.transform!r}")
        if self.impute not in ("linear", "fail"):
            raise ValueError(f"impute must be 'linear' or 'fail', got {self.impute!r}")
        if self.time_range is not None:
            lo, hi = self.time_range
            if not lo < hi:
                raise ValueError(f"time_range must satisfy t_min < t_max, got {self.time_range}")


def ingest_series(spec: IngestSpec) -> Trajectory:
    """Read, bin, transform, center, and impute a raw series.

    Boundary bins without data are trimmed (with a warning); interior
    gaps are linearly interpolated or, with impute='fail', raise.
    """
    path = Path(spec.source)
    if not path.exists():
        raise IngestionError(f"source file {path} does not exist")
    frame = pd.read_csv(path, float_precision="round_trip")
    for col in (spec.time_column, spec.value_column):
        if col not in frame.columns:
            raise IngestionError(f"column {col!r} not found in {path} (has {list(frame.columns)})")
    t = frame[spec.time_column].to_numpy(dtype=float)
    val = frame[spec.value_column].to_numpy(dtype=float)
    keep = np.isfinite(t) & np.isfinite(val)
    t, val = t[keep], val[keep]
    if spec.time_range is not None:
        lo, hi = spec.time_range
        inside = (t >= lo) & (t <= hi)
        t, val = t[inside], val[inside]
        t0 = float(lo)
        n_bins = int(np.floor((hi - lo) / spec.bin_width + 1e-9))
    else:
        if t.size == 0:
            raise IngestionError("no finite observations to ingest")
        # first bin centered on the first observation, so re-ingesting a
        # binned series reproduces it exactly (timestamps included)
        t0 = float(np.min(t)) - spec.bin_width / 2.0
        n_bins = int(np.floor((float(np.max(t)) - t0) / spec.bin_width + 1e-9)) + 1
    if t.size == 0 or n_bins < 1:
        raise IngestionError("no observations inside the requested time range")

    already_on_grid = _on_grid(t, spec.bin_width)
    if already_on_grid is not None:
        # one observation per bin at the requested spacing: binning would
        # only shuffle floating point, so keep the series as-is (this makes
        # re-ingesting an ingested file reproduce it bit for bit)
        order = already_on_grid
        centers = t[order]
        binned = val[order].astype(float)
        missing = np.zeros(binned.size, dtype=bool)
        first = 0
        n_trimmed = 0
    else:
        idx = np.floor((t - t0) / spec.bin_width + 1e-9).astype(int)
        idx = np.clip(idx, 0, n_bins - 1)
        sums = np.bincount(idx, weights=val, minlength=n_bins)
        counts = np.bincount(idx, minlength=n_bins)
        with np.errstate(invalid="ignore"):
            binned = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

        filled = counts > 0
        first, last = int(np.argmax(filled)), n_bins - 1 - int(np.argmax(filled[::-1]))
        n_trimmed = first + (n_bins - 1 - last)
        if n_trimmed:
            warnings.warn(
                f"trimmed {n_trimmed} empty boundary bins", RuntimeWarning, stacklevel=2
            )
        binned = binned[first : last + 1]
        centers = t0 + (first + np.arange(binned.size) + 0.5) * spec.bin_width
        missing = ~np.isfinite(binned)
    if np.all(missing):
        raise IngestionError("all bins are empty after trimming")
    if np.any(missing):
        if spec.impute == "fail":
            raise IngestionError(f"{int(missing.sum())} interior bins are empty and impute='fail'")
        pos = np.arange(binned.size)
        binned[missing] = np.interp(pos[missing], pos[~missing], binned[~missing])

    if spec.transform == "neg-log":
        if np.any(binned <= 0):
            raise IngestionError("neg-log transform needs strictly positive bin averages")
        binned = -np.log(binned)
    centering_constant = float(np.mean(binned)) if spec.center else 0.0
    binned = binned - centering_constant

    meta = {
        "source": str(path),
        "bin_width": spec.bin_width,
        "transform": spec.transform,
        "centering_constant": centering_constant,
        "imputed_bins": int(missing.sum()),
        "trimmed_bins": n_trimmed,
        "time_range": list(spec.time_range) if spec.time_range else None,
    }
    return Trajectory(h=spec.bin_width, times=centers, x=binned[:, None], v=None, meta=meta)


def _on_grid(t: np.ndarray, width: float):
    """Stable sort order if t is already equidistant at the bin width."""
    if t.size < 2:
        return None
    order = np.argsort(t, kind="stable")
    gaps = np.diff(t[order])
    if np.all(np.abs(gaps - width) <= 1e-9 * width):
        return order
    return None


# ---------------------------------------------------------------------------
# Crossing analysis


@dataclass(frozen=True)
class CrossingReport:
    """Alternating level crossings of a smoothed series.

    ``events`` is a list of (time, kind) with kind 'up' (crossed above
    +level) or 'down' (crossed below -level), strictly alternating.
    Occupancy durations: 'high' spans an up event to the next down
    event, 'low' the reverse.  Summary statistics pool both states.
    """

    window: int
    level: float
    events: tuple
    occupancy_high: np.ndarray
    occupancy_low: np.ndarray

    @property
    def n_events(self) -> int:
        return len(self.events)

    def _all_durations(self) -> np.ndarray:
        return np.concatenate([self.occupancy_high, self.occupancy_low])

    def summary(self) -> dict:
        out = {
            "window": self.window,
            "level": self.level,
            "n_events": self.n_events,
            "mean_high": float(np.mean(self.occupancy_high)) if self.occupancy_high.size else None,
            "mean_low": float(np.mean(self.occupancy_low)) if self.occupancy_low.size else None,
        }
        durations = self._all_durations()
        if durations.size:
            q25, q75 = np.percentile(durations, [25, 75])
            out.update(
                min=float(np.min(durations)),
                max=float(np.max(durations)),
                iqr=[float(q25), float(q75)],
                mean=float(np.mean(durations)),
            )
        else:
            out.update(min=None, max=None, iqr=None, mean=None)
        return out


def _moving_average(x: np.ndarray, window: int) -> np.ndarray:
    if window == 1:
        return x.copy()
    kernel = np.full(window, 1.0 / window)
    return np.convolve(x, kernel, mode="valid")


def crossing_analysis(series, window: int, level: float, h: float = 1.0,
                      t0: float = 0.0) -> CrossingReport:
    """Detect alternating +level/-level crossings of the smoothed series.

    ``series`` may be a Trajectory (its h and start time are used) or a
    plain array with explicit ``h`` and ``t0``.  The smoothing window is
    a centered moving average over ``window`` points (odd).  A crossing
    only counts once the opposite level has been crossed, which removes
    the chatter of repeated same-side excursions.
    """
    if isinstance(series, Trajectory):
        values = series.x[:, 0]
        h = series.h
        t0 = float(series.times[0])
    else:
        values = np.asarray(series, dtype=float).reshape(-1)
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    if level <= 0:
        raise ValueError(f"level must be positive, got {level}")
    if values.size < window:
        raise ValueError(f"series of length {values.size} shorter than window {window}")

    smooth = _moving_average(values, window)
    offset = (window - 1) // 2
    times = t0 + (offset + np.arange(smooth.size)) * h

    events = []
    state = None  # 'high' after an up event, 'low' after a down event
    for i in range(smooth.size):
        s = smooth[i]
        if state != "high" and s >= level:
            events.append((float(times[i]), "up"))
            state = "high"
        elif state != "low" and s <= -level:
            events.append((float(times[i]), "down"))
            state = "low"

    high, low = [], []
    for (t_a, kind_a), (t_b, _) in zip(events, events[1:]):
        duration = t_b - t_a
        if kind_a == "up":
            high.append(duration)
        else:
            low.append(duration)
    return CrossingReport(
        window=window,
        level=level,
        events=tuple(events),
        occupancy_high=np.asarray(high, dtype=float),
        occupancy_low=np.asarray(low, dtype=float),
    )


# ---------------------------------------------------------------------------
# Simulation studies


@dataclass
class StudyConfig:
    """Settings of one simulation study (Kramers oscillator).

    Each replicate simulates a fine Euler-Maruyama path at h_sim from
    theta0, subsamples to the observation step h, builds complete and
    partial observation sets as needed, and estimates under every kind
    in ``kinds``.  ``start`` defaults to theta0 (recorded in the
    resolved config).  Replicate seeds are spawned from ``seed`` so any
    replicate can be reproduced in isolation.
    """

    theta0: np.ndarray
    h: float
    h_sim: float
    n_obs: int
    replicates: int
    seed: int = 0
    kinds: tuple = ("CF",)
    start: np.ndarray | None = None
    y0: np.ndarray | None = None
    scheme: str = "forward"
    burn_in: float = 0.0
    max_workers: int | None = None

    def __post_init__(self):
        self.theta0 = np.asarray(self.theta0, dtype=float)
        if self.theta0.shape != (4,):
            raise ValueError(f"theta0 must be (eta, a, b, sigma_sq), got shape {self.theta0.shape}")
        if self.h <= 0 or self.h_sim <= 0:
            raise ValueError("step sizes must be positive")
        stride = round(self.h / self.h_sim)
        if stride < 1 or abs(stride * self.h_sim - self.h) > 1e-12 * self.h:
            raise ValueError(
                f"h = {self.h} is not an integer multiple of h_sim = {self.h_sim}"
            )
        if self.replicates < 1:
            raise ValueError(f"need at least one replicate, got {self.replicates}")
        if self.n_obs < 2:
            raise ValueError(f"need at least two observed transitions, got {self.n_obs}")
        self.kinds = tuple(ObjectiveKind.coerce(k) for k in self.kinds)
        if self.start is not None:
            self.start = np.asarray(self.start, dtype=float)
        if self.y0 is not None:
            self.y0 = np.asarray(self.y0, dtype=float)
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be nonnegative, got {self.burn_in}")

    @property
    def stride(self) -> int:
        return round(self.h / self.h_sim)

    def resolved(self) -> dict:
        """Everything a rerun needs, defaults filled in."""
        return {
            "theta0": self.theta0.tolist(),
            "h": self.h,
            "h_sim": self.h_sim,
            "n_obs": self.n_obs,
            "replicates": self.replicates,
            "seed": self.seed,
            "kinds": [k.value for k in self.kinds],
            "start": (self.start if self.start is not None else self.theta0).tolist(),
            "y0": self._initial_state().tolist(),
            "scheme": self.scheme,
            "burn_in": self.burn_in,
            "stride": self.stride,
        }

    def _initial_state(self) -> np.ndarray:
        if self.y0 is not None:
            return self.y0
        # start in the positive well
        return np.array([np.sqrt(self.theta0[1] / self.theta0[2]), 0.0])


TABLE_COLUMNS = [
    "replicate", "kind", "eta", "a", "b", "sigma_sq",
    "err_eta", "err_a", "err_b", "err_sigma_sq",
    "objective", "iterations", "converged", "failed", "message",
]


@dataclass
class StudyTable:
    """One row per (replicate, kind); schema fixed by TABLE_COLUMNS."""

    frame: pd.DataFrame
    config: StudyConfig
    n_failed_replicates: int

    def write(self, out_dir) -> Path:
        """Emit table.csv, summary.json, resolved_config.json."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(out_dir / "table.csv", index=False)
        (out_dir / "summary.json").write_text(
            json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"
        )
        (out_dir / "resolved_config.json").write_text(
            json.dumps(self.config.resolved(), sort_keys=True, indent=2) + "\n"
        )
        return out_dir

    def summary(self) -> dict:
        ok = self.frame[~self.frame["failed"]]
        by_kind = {}
        for kind, group in ok.groupby("kind", sort=False):
            by_kind[kind] = {
                "replicates": int(len(group)),
                "median_err": {
                    p: float(group[f"err_{p}"].median())
                    for p in ("eta", "a", "b", "sigma_sq")
                },
                "median_abs_err": {
                    p: float(group[f"err_{p}"].abs().median())
                    for p in ("eta", "a", "b", "sigma_sq")
                },
                "var_sigma_sq": float(group["sigma_sq"].var(ddof=1)) if len(group) > 1 else None,
                "converged_fraction": float(group["converged"].mean()),
            }
        return {
            "theta0": self.config.theta0.tolist(),
            "n_replicates": self.config.replicates,
            "n_failed_replicates": self.n_failed_replicates,
            "kinds": by_kind,
        }

    def sigma_sq_variance(self, kind) -> float:
        kind = ObjectiveKind.coerce(kind).value
        ok = self.frame[(~self.frame["failed"]) & (self.frame["kind"] == kind)]
        return float(ok["sigma_sq"].var(ddof=1))


def _replicate_rows(config: StudyConfig, replicate: int) -> tuple[list, bool]:
    """Simulate and estimate one replicate; returns (rows, failed)."""
    model = kramers_model()
    theta0 = config.theta0
    seed = np.random.SeedSequence(entropy=config.seed, spawn_key=(replicate,))
    burn_steps = round(config.burn_in / config.h_sim)
    n_fine = config.n_obs * config.stride + burn_steps
    rows = []
    failed = False
    try:
        fine = simulate_em(model, theta0, config._initial_state(), config.h_sim, n_fine, seed)
        if burn_steps:
            fine = Trajectory(
                h=fine.h,
                times=fine.times[burn_steps:],
                x=fine.x[burn_steps:],
                v=fine.v[burn_steps:],
                meta=fine.meta,
            )
        traj = subsample(fine, config.stride)
        obs_cache = {}
        for kind in config.kinds:
            if kind.observation_kind not in obs_cache:
                obs_cache[kind.observation_kind] = build_observations(
                    traj, kind.observation_kind, config.scheme
                )
    except Exception as exc:  # simulation failure poisons the whole replicate
        for kind in config.kinds:
            rows.append(_failed_row(replicate, kind, f"simulation: {exc}"))
        return rows, True

    start = config.start if config.start is not None else theta0
    for kind in config.kinds:
        try:
            result = estimate(
                model,
                obs_cache[kind.observation_kind],
                kind,
                EstimationOptions(start=start),
            )
            err = (result.theta_hat - theta0) / theta0
            rows.append(
                {
                    "replicate": replicate,
                    "kind": kind.value,
                    "eta": result.theta_hat[0],
                    "a": result.theta_hat[1],
                    "b": result.theta_hat[2],
                    "sigma_sq": result.theta_hat[3],
                    "err_eta": err[0],
                    "err_a": err[1],
                    "err_b": err[2],
                    "err_sigma_sq": err[3],
                    "objective": result.objective_value,
                    "iterations": result.iterations,
                    "converged": result.converged,
                    "failed": False,
                    "message": "",
                }
            )
        except Exception as exc:
            rows.append(_failed_row(replicate, kind, str(exc)))
            failed = True
    return rows, failed


def _failed_row(replicate: int, kind: ObjectiveKind, message: str) -> dict:
    row = {col: np.nan for col in TABLE_COLUMNS}
    row.update(
        replicate=replicate,
        kind=kind.value,
        converged=False,
        failed=True,
        message=message,
        iterations=0,
    )
    return row


def _worker(args):
    config_dict, replicate = args
    config = StudyConfig(**config_dict)
    return replicate, _replicate_rows(config, replicate)


def run_simulation_study(config: StudyConfig) -> StudyTable:
    """Run all replicates and aggregate the flat estimate table.

    Replicates are independent (spawned seeds) and may run in worker
    processes; rows are merged in replicate order so the table is
    identical whatever the parallelism.  More than 5% failed replicates
    abort the study with StudyError.
    """
    workers = config.max_workers
    if workers is None:
        env = os.environ.get(WORKER_ENV_VAR)
        workers = int(env) if env else (os.cpu_count() or 1)
    workers = max(1, min(workers, config.replicates))

    results = {}
    if workers == 1:
        for rep in range(config.replicates):
            results[rep] = _replicate_rows(config, rep)
    else:
        config_dict = dataclasses.asdict(config)
        config_dict["kinds"] = [k.value for k in config.kinds]
        jobs = [(config_dict, rep) for rep in range(config.replicates)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rep, payload in pool.map(_worker, jobs):
                results[rep] = payload

    rows = []
    n_failed = 0
    for rep in range(config.replicates):
        rep_rows, rep_failed = results[rep]
        rows.extend(rep_rows)
        n_failed += int(rep_failed)
    frame = pd.DataFrame(rows, columns=TABLE_COLUMNS)
    table = StudyTable(frame=frame, config=config, n_failed_replicates=n_failed)
    if n_failed > MAX_FAILURE_FRACTION * config.replicates:
        raise StudyError(
            f"{n_failed} of {config.replicates} replicates failed "
            f"(threshold {MAX_FAILURE_FRACTION:.0%}); table not trustworthy"
        )
    return table
