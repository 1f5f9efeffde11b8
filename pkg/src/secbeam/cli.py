"""Command-line front end: single solves, secrecy/power sweeps, and the
antenna-allocation versus fixed-support comparison.

Exit codes: 0 solved, 2 usage error, 3 infeasible, 4 numerical failure,
1 unexpected error.  Given identical inputs and seed, ``report.json`` is
byte-identical across runs; wall-clock timing only appears in the trace and
the console summary.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import metrics, optimizer, report as report_mod
from .optimizer import AllInfeasibleError
from .scenario import ScenarioConfig, ScenarioError, LambdaGridSpec, load_scenario, mw_to_dbm, dbm_to_mw

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

MODES = ("solve", "sweep-secrecy", "sweep-power", "compare-allocation")


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: what to run, on which scenario, into which directory."""

    mode: str
    scenario_path: str
    out_dir: str
    sweep_values: tuple[float, ...] = ()
    num_rf_links: int | None = None
    workers: int = 1
    seed: int = 0
    lambda_grid: LambdaGridSpec | None = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ScenarioError(f"unknown mode {self.mode!r}")
        if self.sweep_values and any(
            b <= a for a, b in zip(self.sweep_values, self.sweep_values[1:])
        ):
            raise ScenarioError("sweep values must be strictly increasing")
        out = Path(self.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        try:
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ScenarioError(f"output directory {self.out_dir} is not writable: {exc}") from exc


def _load_cfg(spec: ExperimentSpec) -> ScenarioConfig:
    path = Path(spec.scenario_path)
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    cfg = load_scenario(path)
    if spec.num_rf_links is not None:
        cfg = replace(cfg, num_rf_links=spec.num_rf_links)
    if spec.lambda_grid is not None:
        cfg = replace(cfg, lambda_grid=spec.lambda_grid)
    return cfg


def _principal_angles(cfg: ScenarioConfig) -> list[float]:
    """Up to five desired directions, innermost first, for the power self-check."""
    angles = sorted(list(cfg.target_angles) + [cfg.user_angle], key=abs)
    return angles[:5]


def _mc_self_check(rep: report_mod.DesignReport, seed: int) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    cfg = rep.scenario
    for ang in _principal_angles(cfg):
        exact = metrics.radiated_power(ang, rep.design.W_c, rep.design.S, cfg.spacing_ratio)
        est = metrics.mc_radiated_power(
            rep.design.W_c, rep.design.S, ang, num_draws=100_000, rng=rng,
            spacing_ratio=cfg.spacing_ratio,
        )
        worst = max(worst, abs(est - exact) / max(exact, 1e-300))
    return {"mc_power_rel_err_max": worst, "mc_power_seed": float(seed)}


def _write_solve_outputs(rep: report_mod.DesignReport, out_dir: str) -> None:
    out = Path(out_dir)
    (out / "report.json").write_text(report_mod.report_json(rep))
    (out / "beampattern.csv").write_text(rep.beampattern_csv())
    (out / "trace.jsonl").write_text(rep.trace_jsonl())


def run_solve(spec: ExperimentSpec) -> report_mod.DesignReport:
    """Solve the scenario once and write report.json / beampattern.csv / trace.jsonl."""
    spec.validate()
    cfg = _load_cfg(spec)
    rep = optimizer.alternating_optimize(cfg, workers=spec.workers)
    rep.checks.update(_mc_self_check(rep, spec.seed))
    _write_solve_outputs(rep, spec.out_dir)
    return rep


def _with_power_dbm(cfg: ScenarioConfig, power_dbm: float) -> ScenarioConfig:
    """New budget with the noise floor untouched; an explicit per-antenna cap
    scales proportionally so the budget stays feasible, the default cap
    tracks the budget by itself."""
    factor = dbm_to_mw(power_dbm) / cfg.total_power_mw
    cap = None if cfg.per_antenna_cap_mw is None else cfg.per_antenna_cap_mw * factor
    return replace(cfg, total_power_mw=dbm_to_mw(power_dbm), per_antenna_cap_mw=cap)


def _point_runner(args):
    """Worker for one sweep point; returns (value, report-or-None, error text)."""
    cfg, value, kind = args
    try:
        if kind == "secrecy":
            cfg = replace(cfg, secrecy_floor=value)
        else:
            cfg = _with_power_dbm(cfg, value)
        rep = optimizer.alternating_optimize(cfg, workers=1)
        return value, rep, ""
    except AllInfeasibleError as exc:
        return value, None, f"infeasible: {exc}"
    except Exception as exc:  # recorded in-row, sweep continues
        return value, None, f"error: {exc}"


def _run_points(cfg: ScenarioConfig, values, kind: str, workers: int):
    tasks = [(cfg, float(v), kind) for v in values]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            return list(pool.map(_point_runner, tasks))
    return [_point_runner(t) for t in tasks]


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def run_sweep_secrecy(spec: ExperimentSpec) -> str:
    """One solve per secrecy floor; returns the sweep.csv payload."""
    spec.validate()
    if not spec.sweep_values:
        raise ScenarioError("sweep-secrecy needs --values")
    if spec.num_rf_links is None:
        raise ScenarioError("sweeps require an explicit --g")
    cfg = _load_cfg(spec)
    rows = ["secrecy_floor,eaves_comm_power_mw,eaves_power_spread_rel,secrecy_rate,matching_error,status"]
    for value, rep, err in _run_points(cfg, spec.sweep_values, "secrecy", spec.workers):
        if rep is None:
            rows.append(f"{value!r},,,,,{err}")
            continue
        powers = np.asarray(rep.eaves_comm_power_mw)
        spread = float(powers.max() / max(powers.min(), 1e-300) - 1.0) if powers.size > 1 else 0.0
        rows.append(
            f"{value!r},{_fmt(powers.mean())},{_fmt(spread)},{_fmt(rep.secrecy_rate)},"
            f"{_fmt(rep.matching_error)},ok"
        )
    payload = "\n".join(rows) + "\n"
    (Path(spec.out_dir) / "sweep.csv").write_text(payload)
    return payload


def run_sweep_power(spec: ExperimentSpec) -> str:
    """One solve per total-power level (dBm); returns the sweep.csv payload."""
    spec.validate()
    if not spec.sweep_values:
        raise ScenarioError("sweep-power needs --values")
    if spec.num_rf_links is None:
        raise ScenarioError("sweeps require an explicit --g")
    cfg = _load_cfg(spec)
    rows = [
        "total_power_dbm,user_power_mw,min_target_illumination_mw,eaves_comm_power_mw,"
        "secrecy_rate,matching_error,status"
    ]
    for value, rep, err in _run_points(cfg, spec.sweep_values, "power", spec.workers):
        if rep is None:
            rows.append(f"{value!r},,,,,,{err}")
            continue
        rows.append(
            f"{value!r},{_fmt(rep.user_power_mw)},{_fmt(min(rep.target_illumination_mw))},"
            f"{_fmt(np.mean(rep.eaves_comm_power_mw))},{_fmt(rep.secrecy_rate)},"
            f"{_fmt(rep.matching_error)},ok"
        )
    payload = "\n".join(rows) + "\n"
    (Path(spec.out_dir) / "sweep.csv").write_text(payload)
    return payload


def _compare_runner(args):
    cfg, value, arm = args
    try:
        if value is not None:
            cfg = _with_power_dbm(cfg, value)
        if arm == "aa":
            rep = optimizer.alternating_optimize(cfg, workers=1)
        else:
            rep = optimizer.solve_fixed_allocation(cfg, workers=1)
        return value, arm, rep, ""
    except AllInfeasibleError as exc:
        return value, arm, None, f"infeasible: {exc}"
    except Exception as exc:
        return value, arm, None, f"error: {exc}"


def run_compare_allocation(spec: ExperimentSpec):
    """Optimized allocation versus the fixed contiguous-support baseline.

    Returns (csv payload, {(power, arm): report}).
    """
    spec.validate()
    cfg = _load_cfg(spec)
    if cfg.num_rf_links > cfg.num_antennas:
        raise ScenarioError("compare-allocation needs G <= M")
    values = list(spec.sweep_values) if spec.sweep_values else [None]
    tasks = [(cfg, v, arm) for v in values for arm in ("aa", "baseline")]
    if spec.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(spec.workers, len(tasks))) as pool:
            results = list(pool.map(_compare_runner, tasks))
    else:
        results = [_compare_runner(t) for t in tasks]

    rows = [
        "total_power_dbm,arm,matching_error,min_target_illumination_mw,user_power_mw,"
        "eaves_comm_power_mw,secrecy_rate,status"
    ]
    reports = {}
    for value, arm, rep, err in results:
        shown = mw_to_dbm(cfg.total_power_mw) if value is None else value
        if rep is None:
            rows.append(f"{shown!r},{arm},,,,,,{err}")
            continue
        reports[(value, arm)] = rep
        rows.append(
            f"{shown!r},{arm},{_fmt(rep.matching_error)},{_fmt(min(rep.target_illumination_mw))},"
            f"{_fmt(rep.user_power_mw)},{_fmt(np.mean(rep.eaves_comm_power_mw))},"
            f"{_fmt(rep.secrecy_rate)},ok"
        )
    payload = "\n".join(rows) + "\n"
    (Path(spec.out_dir) / "sweep.csv").write_text(payload)
    return payload, reports


def _parse_lambda_grid(text: str) -> LambdaGridSpec:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--lambda-grid expects min,max,count")
    return LambdaGridSpec(float(parts[0]), float(parts[1]), int(parts[2]))


def _parse_values(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="secbeam",
        description="Secure ISAC transmit beamforming with joint antenna allocation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, values_help=None):
        p.add_argument("--scenario", required=True, help="path to a scenario YAML file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--g", type=int, default=None, help="override the RF-link count")
        p.add_argument("--workers", type=int, default=1, help="concurrent subproblem solves")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized self-checks")
        p.add_argument("--lambda-grid", type=_parse_lambda_grid, default=None,
                       help="cap-search grid as min,max,count")
        if values_help:
            p.add_argument("--values", type=_parse_values, default=(), help=values_help)

    common(sub.add_parser("solve", help="solve one scenario"))
    common(sub.add_parser("sweep-secrecy", help="sweep the secrecy floor"),
           "comma-separated secrecy floors (bps/Hz)")
    common(sub.add_parser("sweep-power", help="sweep the total power"),
           "comma-separated power levels (dBm)")
    common(sub.add_parser("compare-aa", help="optimized allocation vs fixed support"),
           "optional comma-separated power levels (dBm)")
    return parser


def _spec_from_args(args) -> ExperimentSpec:
    mode = {"compare-aa": "compare-allocation"}.get(args.command, args.command)
    return ExperimentSpec(
        mode=mode,
        scenario_path=args.scenario,
        out_dir=args.out,
        sweep_values=tuple(sorted(getattr(args, "values", ()) or ())),
        num_rf_links=args.g,
        workers=args.workers,
        seed=args.seed,
        lambda_grid=args.lambda_grid,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    spec = _spec_from_args(args)
    try:
        if args.command == "solve":
            rep = run_solve(spec)
            print(
                f"solved: K={rep.matching_error:.6g}  Rs={rep.secrecy_rate:.4f} bps/Hz "
                f"(floor {rep.scenario.secrecy_floor})  selected={rep.design.allocation.sum():.0f} "
                f"antennas  lambda*={rep.lam_star:.4g}  [{rep.wall_seconds:.1f}s]"
            )
        elif args.command == "sweep-secrecy":
            print(run_sweep_secrecy(spec), end="")
        elif args.command == "sweep-power":
            print(run_sweep_power(spec), end="")
        else:
            payload, _ = run_compare_allocation(spec)
            print(payload, end="")
        return EXIT_OK
    except FileNotFoundError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AllInfeasibleError as exc:
        statuses = set(exc.statuses.values())
        if statuses and statuses <= {"numerical-failure"}:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # pragma: no cover - defensive
        print(f"unexpected error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
