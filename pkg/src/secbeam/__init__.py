"""Secure ISAC transmit beamforming with joint antenna allocation."""

from .scenario import (
    ChannelSet,
    LambdaGridSpec,
    ScenarioConfig,
    ScenarioError,
    build_channels,
    dbm_to_mw,
    load_scenario,
    mw_to_dbm,
    paper_scenario,
    parse_scenario,
    serialize_scenario,
    steering_vector,
)
from .metrics import (
    AngleGrid,
    BeamformingDesign,
    DegeneratePatternError,
    beampattern,
    desired_pattern,
    make_grid,
    matching_error,
    mc_radiated_power,
    optimal_mu,
    radiated_power,
    secrecy_rate,
    sinr_target,
    sinr_user,
)
from .conic import (
    ConeProgram,
    ConeSolution,
    NonHermitianError,
    SolverTolerances,
    embed_hermitian,
    deembed_hermitian,
    quadratic_form_coefficients,
    solve,
)
from .optimizer import (
    AllInfeasibleError,
    DegenerateCommunicationError,
    LambdaSearchResult,
    PolishInfeasibleError,
    alternating_optimize,
    binariness,
    build_sdr_p5,
    extract_sensing_beams,
    lambda_search,
    pscp_linearize,
    rank_one_reconstruct,
    round_and_polish,
    solve_fixed_allocation,
    solve_subproblem,
)
from .report import DesignReport, report_json, report_json_dict

__version__ = "0.1.0"
