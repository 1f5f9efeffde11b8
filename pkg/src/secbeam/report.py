"""Design reports: final metrics, beampattern payloads, iteration traces.

``report.json`` is deterministic for identical inputs (wall-clock timing is
kept out of it and lives in the trace / summary instead).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .metrics import AngleGrid, BeamformingDesign, beampattern_csv
from .scenario import ScenarioConfig, serialize_scenario


@dataclass(eq=False)
class IterationRecord:
    """One (outer iteration, cap candidate) subproblem outcome."""

    outer: int | str
    lam: float
    status: str
    objective: float | None
    binariness: float | None
    wall_ms: float


@dataclass(eq=False)
class DesignReport:
    """Everything a solve produces: the design, its metrics, and the trace.

    Iteration-trace objective values are in budget-normalized units; multiply
    by ``objective_scale`` to recover mW^2.  All other reported powers are
    physical milliwatts.
    """

    scenario: ScenarioConfig
    design: BeamformingDesign
    matching_error: float
    secrecy_rate: float
    sinr_user: float
    sinr_targets: tuple[float, ...]
    user_power_mw: float
    target_illumination_mw: tuple[float, ...]
    eaves_comm_power_mw: tuple[float, ...]
    lam_star: float
    converged: bool
    outer_iterations: int
    objective_scale: float
    grid: AngleGrid
    radiated_mw: np.ndarray
    trace: tuple[IterationRecord, ...] = ()
    outer_summary: tuple[dict, ...] = ()
    checks: dict[str, float] = field(default_factory=dict)
    status: str = "feasible"
    wall_seconds: float = 0.0

    def beampattern_csv(self) -> str:
        return beampattern_csv(self.grid, self.radiated_mw)

    def trace_jsonl(self) -> str:
        lines = []
        for rec in self.trace:
            lines.append(
                json.dumps(
                    {
                        "outer": rec.outer,
                        "lambda": rec.lam,
                        "status": rec.status,
                        "objective": rec.objective,
                        "binariness": rec.binariness,
                        "wall_ms": round(rec.wall_ms, 3),
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")


def _complex_matrix(X: np.ndarray) -> dict:
    X = np.asarray(X, dtype=complex)
    return {"re": X.real.tolist(), "im": X.imag.tolist()}


def report_json_dict(report: DesignReport) -> dict:
    """JSON-ready dictionary; deterministic for identical inputs (no timing)."""
    design = report.design
    out = {
        "status": report.status,
        "scenario_yaml": serialize_scenario(report.scenario),
        "matching_error": report.matching_error,
        "secrecy_rate": report.secrecy_rate,
        "secrecy_floor": report.scenario.secrecy_floor,
        "sinr_user": report.sinr_user,
        "sinr_targets": list(report.sinr_targets),
        "user_power_mw": report.user_power_mw,
        "target_illumination_mw": list(report.target_illumination_mw),
        "eaves_comm_power_mw": list(report.eaves_comm_power_mw),
        "target_angles": list(report.scenario.target_angles),
        "untrusted_indices": list(report.scenario.untrusted_indices),
        "mu": design.mu,
        "lambda_star": report.lam_star,
        "allocation": design.allocation.tolist(),
        "num_selected": int(round(float(design.allocation.sum()))),
        "converged": report.converged,
        "outer_iterations": report.outer_iterations,
        "outer_summary": [dict(sorted(row.items())) for row in report.outer_summary],
        "objective_scale": report.objective_scale,
        "total_power_mw": design.total_power_mw(),
        "checks": {k: report.checks[k] for k in sorted(report.checks)},
        "comm_covariance": _complex_matrix(design.W_c),
        "sensing_covariance": _complex_matrix(design.S),
    }
    if design.comm_beam is not None:
        out["comm_beam"] = _complex_matrix(design.comm_beam.reshape(1, -1))
    if design.sensing_beams is not None:
        out["sensing_beams"] = _complex_matrix(design.sensing_beams)
        out["num_sensing_beams"] = int(design.sensing_beams.shape[0])
    return out


def report_json(report: DesignReport) -> str:
    return json.dumps(report_json_dict(report), sort_keys=True, indent=1) + "\n"
