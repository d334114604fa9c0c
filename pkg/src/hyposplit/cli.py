"""Command-line surface.

Machine-readable outputs (CSV/JSON) plus a human summary on stdout.
Exit codes: 0 success, 1 runtime failure (diagnostic on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .asymptotics import (
    C_OBJ,
    confidence_intervals,
    kramers_asymptotic_info,
    kramers_invariant_density,
    kramers_tau,
    tau_ci_delta,
)
from .errors import HyposplitError
from .functionals import check_moments, sample_functionals
from .models import KramersParams, kramers_model
from .objectives import ObjectiveKind
from .observe import build_observations
from .optimize import EstimationOptions, estimate
from .pipeline import (
    CrossingReport,
    IngestSpec,
    StudyConfig,
    crossing_analysis,
    ingest_series,
    run_simulation_study,
)
from .simulate import load_trajectory, save_trajectory, simulate_em, simulate_strang

__all__ = ["cli_dispatch", "main"]

PARAM_NAMES = ("eta", "a", "b", "sigma_sq")


def _parse_theta(text: str) -> np.ndarray:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 4:
        raise ValueError(f"theta needs 4 values eta,a,b,sigma_sq; got {len(parts)}")
    return np.array([float(p) for p in parts])


def _load_config(path: str) -> dict:
    raw = Path(path).read_bytes()
    if path.endswith(".json"):
        return json.loads(raw)
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(raw.decode())


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_simulate(args) -> int:
    theta = _parse_theta(args.theta)
    model = kramers_model()
    y0 = np.array([args.x0 if args.x0 is not None else np.sqrt(theta[1] / theta[2]), args.v0])
    if args.method == "em":
        traj = simulate_em(model, theta, y0, args.h, args.n_steps, args.seed)
    else:
        traj = simulate_strang(model, theta, y0, args.h, args.n_steps, args.seed)
    save_trajectory(traj, args.out)
    print(f"wrote {traj.n_points} points (h={traj.h}) to {args.out}")
    return 0


def _tau_lines(theta: np.ndarray, info=None, n=None, h=None, alpha=0.05) -> list[str]:
    tau = kramers_tau(*theta)
    lines = [
        "tau (mean transition time):",
        f"  value          = {float(tau):.3g}",
        f"  prefactor      = {tau.prefactor:.4g}",
        f"  exponent       = {tau.exponent:.4g}",
        f"  damping_ratio  = {tau.damping_ratio:.4g}",
        f"  noise_ratio    = {tau.noise_ratio:.4g}",
    ]
    if info is not None:
        interval = tau_ci_delta(theta, info, n=n, h=h, alpha=alpha)
        lines.append(
            f"  CI{100 * (1 - alpha):.0f}           = [{interval.low:.4g}, {interval.high:.4g}]"
        )
    return lines


def _cmd_estimate(args) -> int:
    traj = load_trajectory(args.data)
    kind = ObjectiveKind.coerce(args.kind)
    obs = build_observations(traj, kind.observation_kind, scheme=args.scheme)
    model = kramers_model()
    options = EstimationOptions(
        start=_parse_theta(args.start) if args.start else None,
        transform=args.transform,
    )
    result = estimate(model, obs, kind, options)
    theta_hat = result.theta_hat

    n, h = traj.n_points, traj.h
    payload = {
        "kind": kind.value,
        "observations": kind.observation_kind,
        "n": n,
        "h": h,
        "theta_hat": dict(zip(PARAM_NAMES, theta_hat.tolist())),
        "objective": result.objective_value,
        "iterations": result.iterations,
        "converged": result.converged,
    }
    print(f"kind {kind.value} ({kind.observation_kind} observations, n={n}, h={h})")
    if kind in C_OBJ:
        info = kramers_asymptotic_info(theta_hat, kind, n, h)
        info = confidence_intervals(theta_hat, info, alpha=args.alpha)
        ci = np.vstack([info.ci_beta, info.ci_sigma])
        payload["ci"] = {
            name: [float(lo), float(hi)]
            for name, (lo, hi) in zip(PARAM_NAMES, ci)
        }
        payload["alpha"] = args.alpha
        for name, value, (lo, hi) in zip(PARAM_NAMES, theta_hat, ci):
            print(f"  {name:<9} = {value:<12.6g} CI{100 * (1 - args.alpha):.0f} [{lo:.6g}, {hi:.6g}]")
        for line in _tau_lines(theta_hat, info, n=n, h=h, alpha=args.alpha):
            print(line)
        payload["tau"] = float(kramers_tau(*theta_hat))
    else:
        for name, value in zip(PARAM_NAMES, theta_hat):
            print(f"  {name:<9} = {value:.6g}")
        print(f"  (no asymptotic variance constant for {kind.value}; intervals omitted)")
        for line in _tau_lines(theta_hat):
            print(line)
        payload["tau"] = float(kramers_tau(*theta_hat))
    if args.json:
        _write_json(Path(args.json), payload)
    return 0


def _cmd_tau(args) -> int:
    theta = np.array([args.eta, args.a, args.b, args.sigma_sq])
    if args.n is not None:
        info = kramers_asymptotic_info(theta, args.kind, args.n, args.h)
        for line in _tau_lines(theta, info, n=args.n, h=args.h, alpha=args.alpha):
            print(line)
    else:
        for line in _tau_lines(theta):
            print(line)
    return 0


def _cmd_study(args) -> int:
    settings = _load_config(args.config) if args.config else {}
    for key, value in (
        ("replicates", args.replicates),
        ("seed", args.seed),
        ("h", args.h),
        ("h_sim", args.h_sim),
        ("n_obs", args.n_obs),
    ):
        if value is not None:
            settings[key] = value
    if args.theta0:
        settings["theta0"] = _parse_theta(args.theta0)
    if args.kinds:
        settings["kinds"] = [k for part in args.kinds for k in part.split(",") if k]
    if args.max_workers is not None:
        settings["max_workers"] = args.max_workers
    config = StudyConfig(**settings)
    table = run_simulation_study(config)
    out_dir = table.write(args.out)
    summary = table.summary()
    print(f"study: {config.replicates} replicates, kinds {[k.value for k in config.kinds]}")
    print(f"  failed replicates: {table.n_failed_replicates}")
    for kind, stats in summary["kinds"].items():
        med = stats["median_abs_err"]
        print(
            f"  {kind:<6} median |err|: "
            + "  ".join(f"{p}={med[p]:.3g}" for p in PARAM_NAMES)
        )
    print(f"  wrote {out_dir / 'table.csv'}, summary.json, resolved_config.json")
    return 0


def _cmd_ingest(args) -> int:
    settings = _load_config(args.config) if args.config else {}
    if args.source:
        settings["source"] = args.source
    for key, value in (
        ("time_column", args.time_column),
        ("value_column", args.value_column),
        ("bin_width", args.bin_width),
        ("transform", args.transform),
        ("impute", args.impute),
    ):
        if value is not None:
            settings[key] = value
    if args.center:
        settings["center"] = True
    if args.time_range:
        settings["time_range"] = tuple(args.time_range)
    spec = IngestSpec(**settings)
    traj = ingest_series(spec)
    save_trajectory(traj, args.out)
    print(
        f"ingested {traj.n_points} points (h={traj.h}, "
        f"{traj.meta.get('imputed_bins', 0)} imputed) to {args.out}"
    )
    return 0


def _cmd_analyze(args) -> int:
    traj = load_trajectory(args.data)
    report = crossing_analysis(traj, window=args.window, level=args.level)
    summary = report.summary()
    print(f"crossings: {report.n_events} events (window={args.window}, level={args.level})")
    if report.n_events:
        print(
            f"  occupancy mean high/low: {summary['mean_high']} / {summary['mean_low']}"
        )
        print(f"  durations min={summary['min']:.4g} max={summary['max']:.4g} iqr={summary['iqr']}")
    if args.json:
        payload = dict(summary)
        payload["events"] = [[t, kind] for t, kind in report.events]
        payload["occupancy_high"] = report.occupancy_high.tolist()
        payload["occupancy_low"] = report.occupancy_low.tolist()
        _write_json(Path(args.json), payload)
    return 0


def _cmd_moments(args) -> int:
    draws = sample_functionals(args.draws, args.substeps, seed=args.seed, d=args.dim)
    report = check_moments(draws)
    print(report)
    if args.json:
        _write_json(Path(args.json), report.as_dict())
    return 0 if report.all_passed else 1


def _cmd_densities(args) -> int:
    theta = _parse_theta(args.theta)
    density = kramers_invariant_density(theta)
    params = KramersParams.from_theta(theta)
    x_star = params.wells[1]
    half_width = args.half_width if args.half_width is not None else 3.0 * x_star
    x = np.linspace(-half_width, half_width, args.points)
    v_sd = np.sqrt(density.v_variance)
    v = np.linspace(-4 * v_sd, 4 * v_sd, args.points)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savetxt(
        out_dir / "x_density.csv",
        np.column_stack([x, density.x_density(x), density.potential(x)]),
        delimiter=",",
        header="x,density,potential",
        comments="",
    )
    np.savetxt(
        out_dir / "v_density.csv",
        np.column_stack([v, density.v_density(v)]),
        delimiter=",",
        header="v,density",
        comments="",
    )
    _write_json(
        out_dir / "densities.json",
        {
            "theta": dict(zip(PARAM_NAMES, theta.tolist())),
            "modes": [-x_star, x_star],
            "v_variance": density.v_variance,
            "points": args.points,
        },
    )
    print(f"wrote x_density.csv, v_density.csv, densities.json to {out_dir}")
    print(f"  modes at ±{x_star:.6g}, velocity variance {density.v_variance:.6g}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyposplit",
        description="Simulation and splitting-based estimation for second-order SDEs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a Kramers oscillator path to CSV")
    p.add_argument("--theta", required=True, help="eta,a,b,sigma_sq")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--n-steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("em", "strang"), default="em")
    p.add_argument("--x0", type=float, default=None, help="default: positive well")
    p.add_argument("--v0", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="fit a trajectory CSV, print theta with intervals")
    p.add_argument("data")
    p.add_argument("--kind", default="CF")
    p.add_argument("--scheme", default="forward", help="difference scheme for partial kinds")
    p.add_argument("--start", default=None, help="eta,a,b,sigma_sq")
    p.add_argument("--transform", default="log", choices=("log", "none"))
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--json", default=None, help="also write the result as JSON")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("tau", help="mean transition time report for given parameters")
    p.add_argument("eta", type=float)
    p.add_argument("a", type=float)
    p.add_argument("b", type=float)
    p.add_argument("sigma_sq", type=float)
    p.add_argument("--n", type=int, default=None, help="sample size for a delta-method CI")
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--kind", default="PR")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=_cmd_tau)

    p = sub.add_parser("study", help="run a seeded simulation study")
    p.add_argument("--config", default=None, help="TOML or JSON study settings")
    p.add_argument("--theta0", default=None)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--h-sim", type=float, default=None)
    p.add_argument("--n-obs", type=int, default=None)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--kinds", nargs="*", default=None)
    p.add_argument("--max-workers", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_study)

    p = sub.add_parser("ingest", help="bin and transform a raw series into a trajectory CSV")
    p.add_argument("--config", default=None, help="TOML or JSON ingest settings")
    p.add_argument("--source", default=None)
    p.add_argument("--time-column", default=None)
    p.add_argument("--value-column", default=None)
    p.add_argument("--bin-width", type=float, default=None)
    p.add_argument("--transform", choices=("none", "neg-log"), default=None)
    p.add_argument("--center", action="store_true")
    p.add_argument("--time-range", type=float, nargs=2, default=None)
    p.add_argument("--impute", choices=("linear", "fail"), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("analyze", help="crossing report for a trajectory CSV")
    p.add_argument("data")
    p.add_argument("--window", type=int, default=11)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--json", default=None)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("moments", help="sample Gaussian functionals and check their moments")
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--substeps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--json", default=None)
    p.set_defaults(func=_cmd_moments)

    p = sub.add_parser("densities", help="invariant density grids (data only, no rendering)")
    p.add_argument("--theta", required=True)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--half-width", type=float, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_densities)

    return parser


def cli_dispatch(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (HyposplitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch())
