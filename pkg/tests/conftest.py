import os
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from secbeam import alternating_optimize, paper_scenario, solve_fixed_allocation
from secbeam.cli import ExperimentSpec, run_solve
from secbeam.scenario import LambdaGridSpec, ScenarioConfig, dbm_to_mw

WORKERS = min(os.cpu_count() or 1, 4)


def small_scenario(**overrides) -> ScenarioConfig:
    """Two targets, one untrusted, six antennas; fast enough for unit tests."""
    base = dict(
        num_antennas=6,
        num_rf_links=4,
        target_angles=(-50.0, 40.0),
        untrusted_indices=(0,),
        total_power_mw=1.0,
        noise_user_mw=1e-4,
        secrecy_floor=1.0,
        beam_halfwidth=8.0,
        grid_size=61,
        lambda_grid=LambdaGridSpec(1e-2, 1e2, 9),
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def tiny_scenario(**overrides) -> ScenarioConfig:
    """Four antennas, two RF links; small enough for exhaustive enumeration."""
    base = dict(
        num_antennas=4,
        num_rf_links=2,
        target_angles=(-50.0, 40.0),
        untrusted_indices=(0,),
        total_power_mw=1.0,
        noise_user_mw=1e-4,
        secrecy_floor=1.0,
        beam_halfwidth=8.0,
        grid_size=91,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def medium_scenario(**overrides) -> ScenarioConfig:
    """Six antennas, three RF links, three targets; exhaustive still tractable."""
    base = dict(
        num_antennas=6,
        num_rf_links=3,
        target_angles=(-55.0, 35.0, 60.0),
        untrusted_indices=(2,),
        total_power_mw=1.0,
        noise_user_mw=1e-4,
        secrecy_floor=1.0,
        beam_halfwidth=8.0,
        grid_size=91,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture(scope="session")
def small_cfg():
    return small_scenario()


@pytest.fixture(scope="session")
def small_run(small_cfg):
    return alternating_optimize(small_cfg, workers=WORKERS)


@pytest.fixture(scope="session")
def paper_solve(tmp_path_factory):
    """Paper-setup run through the CLI entry point; shared across criteria.

    Returns (report, output dir, wall seconds of the whole run).
    """
    out = tmp_path_factory.mktemp("paper_solve")
    scenario_path = os.path.join(os.path.dirname(__file__), "..", "scenarios", "paper.yaml")
    spec = ExperimentSpec(
        mode="solve",
        scenario_path=scenario_path,
        out_dir=str(out),
        workers=WORKERS,
        seed=20240,
    )
    t0 = time.perf_counter()
    report = run_solve(spec)
    return report, str(out), time.perf_counter() - t0


@pytest.fixture(scope="session")
def paper35_runs():
    """Paper geometry at 35 dBm over secrecy floors 1..5 (allocation arm)."""
    cfg = paper_scenario(total_power_mw=dbm_to_mw(35.0))
    out = {}
    for floor in (1.0, 2.0, 3.0, 4.0, 5.0):
        out[floor] = alternating_optimize(replace(cfg, secrecy_floor=floor), workers=WORKERS)
    return out


@pytest.fixture(scope="session")
def aa_runs(paper_solve, paper35_runs):
    """Allocation-arm reports keyed by total power (dBm) at the paper floor."""
    cfg25 = paper_scenario(total_power_mw=dbm_to_mw(25.0))
    return {
        25.0: alternating_optimize(cfg25, workers=WORKERS),
        30.0: paper_solve[0],
        35.0: paper35_runs[5.0],
    }


@pytest.fixture(scope="session")
def baseline_runs():
    """Fixed contiguous-support baseline at the paper floor, per power level."""
    out = {}
    for dbm in (25.0, 30.0, 35.0):
        cfg = paper_scenario(total_power_mw=dbm_to_mw(dbm))
        out[dbm] = solve_fixed_allocation(cfg, workers=WORKERS)
    return out
