"""Alternating design driver: penalized sequential convex programming over the
antenna allocation, a 1D search over the eavesdropper-SINR cap, semidefinite
relaxation of each beamforming subproblem, and exact rank-one reconstruction
of the communication beam.

The driver normalizes all powers by the total budget before solving (the
problem is exactly equivariant under a common scaling of powers and noise
floors) and scales covariances back on output, so iteration traces record
dimensionless objective values.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import conic, metrics
from .conic import ConeProgram, PsdBlock, SolverTolerances
from .metrics import AngleGrid, BeamformingDesign, make_grid
from .report import DesignReport, IterationRecord
from .scenario import ChannelSet, ScenarioConfig, build_channels

MAX_OUTER_DEFAULT = 30
CONVERGENCE_REL = 1e-5
BINARY_STOP = 1e-6
PENALTY_CAP = 1e8
DESCENT_SLACK = 1e-6
TIE_TOLERANCE = 1e-7

# The full pipeline solves tighter than the generic solver default so that
# cross-candidate objective noise stays well below the cap tie tolerance and
# the majorization descent margin.
PIPELINE_TOLERANCES = SolverTolerances(
    feasibility=1e-9, relative_gap=1e-9, absolute_gap=1e-10, max_iterations=200
)


class DegenerateCommunicationError(RuntimeError):
    """No communication power reaches the user; rank-one reconstruction undefined."""


class AllInfeasibleError(RuntimeError):
    """Every candidate cap value produced an infeasible (or failed) subproblem."""

    def __init__(self, message: str, statuses: dict[float, str]):
        super().__init__(message)
        self.statuses = dict(statuses)
        self.most_relaxed_status = statuses[max(statuses)] if statuses else "unknown"


class PolishInfeasibleError(AllInfeasibleError):
    """The rounded antenna support admits no feasible beamformers."""

    def __init__(self, message: str, statuses: dict[float, str], fractional_u: np.ndarray):
        super().__init__(message, statuses)
        self.fractional_u = np.asarray(fractional_u, dtype=float)


# --- binary-penalty machinery ----------------------------------------------

def binariness(u: np.ndarray) -> float:
    """Sum of u_m - u_m^2; zero exactly on binary vectors, positive inside [0,1]."""
    u = np.asarray(u, dtype=float)
    return float(np.sum(u - u * u))


@dataclass(eq=False)
class AffinePenalty:
    """Affine majorizer of the binariness penalty around a linearization point."""

    coeffs: np.ndarray
    offset: float
    anchor: np.ndarray

    def evaluate(self, u: np.ndarray) -> float:
        return float(self.coeffs @ np.asarray(u, dtype=float) + self.offset)


def pscp_linearize(u_prev: np.ndarray) -> AffinePenalty:
    """Tangent-line upper bound of the binariness penalty at ``u_prev``.

    The quadratic part is concave in the penalty, so dropping it to its
    first-order expansion yields an affine function that dominates the
    penalty everywhere and touches it at the anchor.
    """
    u_prev = np.asarray(u_prev, dtype=float)
    if np.any(u_prev < -1e-12) or np.any(u_prev > 1 + 1e-12):
        raise ValueError("linearization point must lie in [0, 1]^M")
    return AffinePenalty(coeffs=1.0 - 2.0 * u_prev, offset=float(np.sum(u_prev**2)), anchor=u_prev.copy())


# --- subproblem template ----------------------------------------------------


class SdrTemplate:
    """Cached static structure of the relaxed subproblem for one antenna support.

    ``support=None`` keeps the allocation vector as box-constrained variables
    with a cardinality equality; an explicit support fixes the allocation to
    binary values and drops the unselected antennas from the matrices, which
    keeps their rows exactly zero in the recovered covariances.

    The beampattern samples enter through auxiliary correlation variables
    (one per distinct antenna-position gap) linked to the covariance entries
    by sparse equalities; for a ULA the pattern depends on the covariance
    only through those sums, which keeps the epigraph cone sparse.
    """

    def __init__(self, cfg: ScenarioConfig, channels: ChannelSet, grid: AngleGrid, support=None):
        M_full = cfg.num_antennas
        self.cfg = cfg
        self.grid = grid
        self.free_u = support is None
        sup = np.arange(M_full) if support is None else np.sort(np.asarray(support, dtype=int))
        if sup.size == 0 or sup[0] < 0 or sup[-1] >= M_full or np.unique(sup).size != sup.size:
            raise ValueError(f"support must be distinct antenna indices in 0..{M_full - 1}")
        self.support = sup
        M = int(sup.size)
        self.M = M
        iu, ju = np.triu_indices(M, k=1)
        self._iu, self._ju = iu, ju
        nh = M * M
        self.nh = nh

        gaps = np.unique(sup[ju] - sup[iu]) if iu.size else np.array([], dtype=int)
        self.gaps = gaps
        nc = 1 + 2 * gaps.size
        self.nc = nc

        n_u = M if self.free_u else 0
        self.off_t = 0
        self.off_mu = 1
        self.off_u = 2
        self.off_c = 2 + n_u
        self.off_w = self.off_c + nc
        self.off_s = self.off_w + nh
        self.n = self.off_s + nh
        n = self.n

        names = ["t", "mu"]
        if self.free_u:
            names += [f"u[{a}]" for a in sup]
        names.append("corr.d")
        names += [f"corr.re[{g}]" for g in gaps]
        names += [f"corr.im[{g}]" for g in gaps]
        for tag in ("Wc", "S"):
            names += [f"{tag}.d[{sup[i]}]" for i in range(M)]
            names += [f"{tag}.re[{sup[i]},{sup[j]}]" for i, j in zip(iu, ju)]
            names += [f"{tag}.im[{sup[i]},{sup[j]}]" for i, j in zip(iu, ju)]
        self.var_names = tuple(names)

        # static equalities: power budget, allocation cardinality, correlation links
        eq_rows, eq_rhs, eq_labels = [], [], []
        row = np.zeros(n)
        row[self.off_w : self.off_w + M] = 1.0
        row[self.off_s : self.off_s + M] = 1.0
        eq_rows.append(row)
        eq_rhs.append(cfg.total_power_mw)
        eq_labels.append("total_power")
        if self.free_u:
            row = np.zeros(n)
            row[self.off_u : self.off_u + M] = 1.0
            eq_rows.append(row)
            eq_rhs.append(float(cfg.num_rf_links))
            eq_labels.append("alloc_sum")
        row = np.zeros(n)
        row[self.off_c] = 1.0
        row[self.off_w : self.off_w + M] = -1.0
        row[self.off_s : self.off_s + M] = -1.0
        eq_rows.append(row)
        eq_rhs.append(0.0)
        eq_labels.append("pattern_link")
        for gi, g in enumerate(gaps):
            sel = np.where(sup[ju] - sup[iu] == g)[0]
            row = np.zeros(n)
            row[self.off_c + 1 + gi] = 1.0
            row[self.off_w + M + sel] = -1.0
            row[self.off_s + M + sel] = -1.0
            eq_rows.append(row)
            eq_rhs.append(0.0)
            eq_labels.append("pattern_link")
            row = np.zeros(n)
            row[self.off_c + 1 + gaps.size + gi] = 1.0
            row[self.off_w + M + iu.size + sel] = -1.0
            row[self.off_s + M + iu.size + sel] = -1.0
            eq_rows.append(row)
            eq_rhs.append(0.0)
            eq_labels.append("pattern_link")
        self._eq = sp.csr_matrix(np.asarray(eq_rows))
        self._eq_rhs = np.asarray(eq_rhs)
        self._eq_labels = tuple(eq_labels)

        # static inequalities: per-antenna caps, allocation box, scale sign
        ub_rows, ub_rhs, ub_labels = [], [], []
        cap = cfg.antenna_cap_mw()
        for i in range(M):
            row = np.zeros(n)
            row[self.off_w + i] = 1.0
            row[self.off_s + i] = 1.0
            if self.free_u:
                row[self.off_u + i] = -cap
                ub_rhs.append(0.0)
            else:
                ub_rhs.append(cap)
            ub_rows.append(row)
            ub_labels.append("antenna_cap")
        if self.free_u:
            for i in range(M):
                row = np.zeros(n)
                row[self.off_u + i] = 1.0
                ub_rows.append(row)
                ub_rhs.append(1.0)
                ub_labels.append("alloc_box")
                row = np.zeros(n)
                row[self.off_u + i] = -1.0
                ub_rows.append(row)
                ub_rhs.append(0.0)
                ub_labels.append("alloc_box")
        row = np.zeros(n)
        row[self.off_mu] = -1.0
        ub_rows.append(row)
        ub_rhs.append(0.0)
        ub_labels.append("mu_nonneg")
        self._ub = sp.csr_matrix(np.asarray(ub_rows))
        self._ub_rhs = np.asarray(ub_rhs)
        self._ub_labels = tuple(ub_labels)

        # channel quadratic forms on the selected antennas
        self.h_sub = channels.user[sup]
        self._qf_h = conic.quadratic_form_params(self.h_sub)
        self.untrusted = tuple(cfg.untrusted_indices)
        self.g_subs = [channels.targets[j][sup] for j in self.untrusted]
        self._qf_g = [conic.quadratic_form_params(g) for g in self.g_subs]
        self._noise_g = [cfg.target_noise_mw()[j] for j in self.untrusted]

        # epigraph cone: s0 = t+1, s1 = t-1, s[2+q] = 2 r_q with r the
        # scaled pattern residual, so membership means t >= sum r_q^2
        Q = len(grid)
        omega = 2.0 * np.pi * cfg.spacing_ratio * np.sin(np.deg2rad(grid.angles_deg))
        V = np.zeros((Q, nc))
        V[:, 0] = 1.0
        if gaps.size:
            V[:, 1 : 1 + gaps.size] = 2.0 * np.cos(np.outer(omega, gaps))
            V[:, 1 + gaps.size :] = -2.0 * np.sin(np.outer(omega, gaps))
        self._pattern_basis = V
        soc = np.zeros((Q + 2, n))
        soc_off = np.zeros(Q + 2)
        soc[0, self.off_t] = 1.0
        soc_off[0] = 1.0
        soc[1, self.off_t] = 1.0
        soc_off[1] = -1.0
        rtQ = np.sqrt(float(Q))
        soc[2:, self.off_c : self.off_c + nc] = 2.0 * V / rtQ
        soc[2:, self.off_mu] = -2.0 * grid.desired / rtQ
        self._soc = sp.csr_matrix(soc)
        self._soc_off = soc_off

        emb = conic.embedding_map(M)
        zero_w = sp.csr_matrix((emb.shape[0], self.off_w))
        zero_tail = sp.csr_matrix((emb.shape[0], n - self.off_w - nh))
        map_w = sp.hstack([zero_w, emb, zero_tail]).tocsr()
        zero_s = sp.csr_matrix((emb.shape[0], self.off_s))
        map_s = sp.hstack([zero_s, emb]).tocsr()
        self._psd = (
            PsdBlock("Wc_embedded", 2 * M, map_w),
            PsdBlock("S_embedded", 2 * M, map_s),
        )

    # -- per-candidate assembly ------------------------------------------
    def build(self, lam: float, u_prev: np.ndarray | None = None, eta: float = 0.0,
              eaves_cap: bool = True) -> ConeProgram:
        if lam <= 0:
            raise ValueError(f"the eavesdropper-SINR cap must be positive, got {lam}")
        cfg = self.cfg
        n = self.n
        beta = 2.0 ** cfg.secrecy_floor * (1.0 + lam) - 1.0
        rows, rhs, labels = [], [], []
        if eaves_cap:
            for qf, noise in zip(self._qf_g, self._noise_g):
                row = np.zeros(n)
                row[self.off_w : self.off_w + self.nh] = qf
                row[self.off_s : self.off_s + self.nh] = -lam * qf
                scale = 1.0 / max(1.0, lam)  # keep row coefficients near unit size
                rows.append(row * scale)
                rhs.append(lam * noise * scale)
                labels.append("eaves_cap")
        row = np.zeros(n)
        row[self.off_w : self.off_w + self.nh] = -self._qf_h
        row[self.off_s : self.off_s + self.nh] = beta * self._qf_h
        scale = 1.0 / max(1.0, beta)
        rows.append(row * scale)
        rhs.append(-beta * cfg.noise_user_mw * scale)
        labels.append("user_floor")

        ineq = sp.vstack([self._ub, sp.csr_matrix(np.asarray(rows))]).tocsr()
        ineq_rhs = np.concatenate([self._ub_rhs, np.asarray(rhs)])
        ineq_labels = self._ub_labels + tuple(labels)

        objective = np.zeros(n)
        objective[self.off_t] = 1.0
        offset = 0.0
        if self.free_u and eta > 0.0:
            if u_prev is None:
                raise ValueError("a linearization point is required when the penalty is active")
            pen = pscp_linearize(np.asarray(u_prev, dtype=float))
            objective[self.off_u : self.off_u + self.M] = eta * pen.coeffs
            offset = eta * pen.offset

        return ConeProgram(
            var_names=self.var_names,
            objective=objective,
            objective_offset=offset,
            eq_coeffs=self._eq,
            eq_rhs=self._eq_rhs,
            eq_labels=self._eq_labels,
            ineq_coeffs=ineq,
            ineq_rhs=ineq_rhs,
            ineq_labels=ineq_labels,
            soc_coeffs=self._soc,
            soc_offset=self._soc_off,
            psd_blocks=self._psd,
        )

    # -- solution recovery -------------------------------------------------
    def extract(self, x: np.ndarray) -> "SubproblemSolution":
        M_full = self.cfg.num_antennas
        M = self.M
        W_sub = conic.unpack_hermitian(x[self.off_w : self.off_w + self.nh], M)
        S_sub = conic.unpack_hermitian(x[self.off_s : self.off_s + self.nh], M)
        W = np.zeros((M_full, M_full), dtype=complex)
        S = np.zeros((M_full, M_full), dtype=complex)
        ix = np.ix_(self.support, self.support)
        W[ix] = W_sub
        S[ix] = S_sub
        u = np.zeros(M_full)
        if self.free_u:
            u[self.support] = x[self.off_u : self.off_u + M]
        else:
            u[self.support] = 1.0
        return SubproblemSolution(
            W_c=W, S=S, mu=float(x[self.off_mu]), u=u, epigraph=float(x[self.off_t])
        )


@dataclass(eq=False)
class SubproblemSolution:
    """Recovered covariances, pattern scale, and allocation from one solve."""

    W_c: np.ndarray
    S: np.ndarray
    mu: float
    u: np.ndarray
    epigraph: float


@dataclass(eq=False)
class SubproblemResult:
    status: str
    solution: SubproblemSolution | None
    objective: float
    cone: ConeSolution

    @property
    def feasible(self) -> bool:
        return self.status == conic.OPTIMAL


def build_sdr_p5(
    cfg: ScenarioConfig,
    channels: ChannelSet,
    grid: AngleGrid,
    lam: float,
    u_prev: np.ndarray | None = None,
    eta: float = 0.0,
    eaves_cap: bool = True,
) -> ConeProgram:
    """Relaxed beamforming subproblem for one cap value, allocation free in [0,1]."""
    return SdrTemplate(cfg, channels, grid).build(lam, u_prev, eta, eaves_cap=eaves_cap)


def _layout_from_names(names: Sequence[str]) -> dict[str, slice]:
    spans: dict[str, list[int]] = {}
    for i, name in enumerate(names):
        key = name.split(".")[0].split("[")[0]
        spans.setdefault(key, []).append(i)
    out = {}
    for key, idx in spans.items():
        lo, hi = min(idx), max(idx) + 1
        if idx != list(range(lo, hi)):
            raise ValueError(f"variable family {key!r} is not contiguous")
        out[key] = slice(lo, hi)
    return out


def solve_subproblem(
    program: ConeProgram, tolerances: SolverTolerances = SolverTolerances()
) -> SubproblemResult:
    """Solve one relaxed subproblem; infeasibility is a valid outcome."""
    sol = conic.solve(program, tolerances)
    if not sol.optimal:
        return SubproblemResult(sol.status, None, float("inf"), sol)
    layout = _layout_from_names(program.var_names)
    nh = layout["Wc"].stop - layout["Wc"].start
    M = int(round(np.sqrt(nh)))
    W = conic.unpack_hermitian(sol.x[layout["Wc"]], M)
    S = conic.unpack_hermitian(sol.x[layout["S"]], M)
    u = sol.x[layout["u"]] if "u" in layout else np.ones(M)
    solution = SubproblemSolution(
        W_c=W,
        S=S,
        mu=float(sol.x[layout["mu"]][0]),
        u=np.asarray(u, dtype=float),
        epigraph=float(sol.x[layout["t"]][0]),
    )
    return SubproblemResult(conic.OPTIMAL, solution, float(sol.objective), sol)


# --- 1D search over the eavesdropper-SINR cap -------------------------------


@dataclass(eq=False)
class LambdaSearchResult:
    """Objective landscape over the cap grid and the winning subproblem."""

    candidates: np.ndarray
    objectives: np.ndarray
    statuses: tuple[str, ...]
    lam_star: float
    best: SubproblemResult
    wall_times: np.ndarray

    def as_mapping(self) -> dict[float, float]:
        return {float(l): float(f) for l, f in zip(self.candidates, self.objectives)}


def _solve_batch(programs, tolerances: SolverTolerances, workers: int) -> list[ConeSolution]:
    if workers <= 1 or len(programs) <= 1:
        return [conic.solve(p, tolerances) for p in programs]
    with ProcessPoolExecutor(max_workers=min(workers, len(programs))) as pool:
        futures = [pool.submit(conic.solve, p, tolerances) for p in programs]
        return [f.result() for f in futures]


def _evaluate_candidates(template, lams, u_prev, eta, tolerances, workers, results):
    todo = [lam for lam in lams if lam not in results]
    if not todo:
        return
    programs = [template.build(lam, u_prev, eta) for lam in todo]
    t0 = time.perf_counter()
    solutions = _solve_batch(programs, tolerances, workers)
    elapsed = (time.perf_counter() - t0) / max(len(todo), 1)
    for lam, cone_sol in zip(todo, solutions):
        if cone_sol.optimal:
            res = SubproblemResult(
                conic.OPTIMAL, template.extract(cone_sol.x), float(cone_sol.objective), cone_sol
            )
        else:
            res = SubproblemResult(cone_sol.status, None, float("inf"), cone_sol)
        results[lam] = (res, elapsed)


def lambda_search(
    cfg: ScenarioConfig,
    channels: ChannelSet,
    grid: AngleGrid,
    u_prev: np.ndarray | None = None,
    eta: float = 0.0,
    *,
    support=None,
    extra_candidates: Sequence[float] = (),
    workers: int = 1,
    tolerances: SolverTolerances = SolverTolerances(),
    template: SdrTemplate | None = None,
) -> LambdaSearchResult:
    """Minimize the subproblem objective over a log grid of cap values.

    A coarse pass over the configured grid is followed by one refinement pass
    of 11 points spanning the two neighbors of the coarse argmin.  Infeasible
    candidates score infinity.  Candidates within solver tolerance of the
    minimum count as tied, and ties break toward the smallest (most
    protective) cap, which keeps the winner stable when the objective is flat
    in the cap.  Candidate solves are independent and run concurrently when
    ``workers`` > 1.
    """
    if template is None:
        template = SdrTemplate(cfg, channels, grid, support=support)
    coarse = [float(l) for l in cfg.lambda_grid.points()]
    extras = [float(l) for l in extra_candidates]
    if any(l <= 0 for l in coarse + extras):
        raise ValueError("cap candidates must be strictly positive")

    results: dict[float, tuple[SubproblemResult, float]] = {}
    _evaluate_candidates(template, coarse + extras, u_prev, eta, tolerances, workers, results)

    finite = [l for l in coarse if np.isfinite(results[l][0].objective)]
    if finite:
        i = int(np.argmin([results[l][0].objective for l in coarse]))
        lo = coarse[max(i - 1, 0)]
        hi = coarse[min(i + 1, len(coarse) - 1)]
        refined = [float(l) for l in np.logspace(np.log10(lo), np.log10(hi), 11)]
        _evaluate_candidates(template, refined, u_prev, eta, tolerances, workers, results)

    lams = sorted(results)
    objectives = np.array([results[l][0].objective for l in lams])
    statuses = tuple(results[l][0].status for l in lams)
    walls = np.array([results[l][1] for l in lams])
    if not np.isfinite(objectives).any():
        raise AllInfeasibleError(
            "no cap value admits a feasible design (secrecy floor "
            f"{cfg.secrecy_floor} bps/Hz at budget {cfg.total_power_mw} mW); "
            f"most relaxed candidate ended {statuses[-1]}",
            {l: s for l, s in zip(lams, statuses)},
        )
    # candidates within solver tolerance of the minimum count as tied, and
    # ties break toward the smallest (most protective) cap
    f_min = float(np.nanmin(np.where(np.isfinite(objectives), objectives, np.nan)))
    tie = f_min + TIE_TOLERANCE * (1.0 + abs(f_min))
    best_i = int(np.argmax(objectives <= tie))
    lam_star = lams[best_i]
    return LambdaSearchResult(
        candidates=np.asarray(lams),
        objectives=objectives,
        statuses=statuses,
        lam_star=lam_star,
        best=results[lam_star][0],
        wall_times=walls,
    )


# --- rank-one reconstruction and beam extraction ----------------------------


def rank_one_reconstruct(W_star: np.ndarray, S_star: np.ndarray, h_user: np.ndarray):
    """Closed-form rank-one communication beam from a high-rank relaxed solution.

    Returns (w_hat, W_hat, S_hat) with W_hat = w_hat w_hat^H and
    S_hat = S_star + W_star - W_hat.  The construction preserves the total
    covariance (hence every pattern sample and the objective), both
    user-side quadratic forms, and positive semidefiniteness of the moved
    remainder W_star - W_hat.
    """
    W_star = np.asarray(W_star, dtype=complex)
    S_star = np.asarray(S_star, dtype=complex)
    h_user = np.asarray(h_user, dtype=complex)
    received = float((h_user.conj() @ W_star @ h_user).real)
    trace = float(np.trace(W_star).real)
    if received <= 1e-12 * max(trace, 1e-300):
        raise DegenerateCommunicationError(
            f"user-side power {received:.3e} is negligible against trace {trace:.3e}; "
            "no communication beam can be extracted"
        )
    w_hat = (W_star @ h_user) / np.sqrt(received)
    W_hat = np.outer(w_hat, w_hat.conj())
    S_hat = S_star + W_star - W_hat
    S_hat = 0.5 * (S_hat + S_hat.conj().T)
    return w_hat, W_hat, S_hat


def extract_sensing_beams(S_hat: np.ndarray, threshold: float = 1e-6) -> np.ndarray:
    """Sensing beams from the eigendecomposition of the sensing covariance.

    Keeps eigenpairs above ``threshold`` times the largest eigenvalue and
    returns sqrt(eigenvalue)-scaled eigenvectors, strongest first; the outer
    products of the returned beams reconstruct the covariance up to the
    discarded tail.
    """
    S_hat = np.asarray(S_hat, dtype=complex)
    vals, vecs = np.linalg.eigh(S_hat)
    vmax = float(vals.max(initial=0.0))
    if vmax <= 0:
        return np.zeros((0, S_hat.shape[0]), dtype=complex)
    keep = np.where(vals > threshold * vmax)[0][::-1]  # descending
    return (vecs[:, keep] * np.sqrt(vals[keep])).T


# --- rounding, polish, and the outer loop -----------------------------------


def round_allocation(u_frac: np.ndarray, num_links: int) -> np.ndarray:
    """Indices of the largest allocation entries; ties go to lower indices."""
    u_frac = np.asarray(u_frac, dtype=float)
    order = np.argsort(-u_frac, kind="stable")
    return np.sort(order[:num_links])


def round_and_polish(
    u_frac: np.ndarray,
    cfg: ScenarioConfig,
    channels: ChannelSet,
    grid: AngleGrid,
    lam_star: float | None = None,
    *,
    workers: int = 1,
    tolerances: SolverTolerances = PIPELINE_TOLERANCES,
) -> tuple[BeamformingDesign, LambdaSearchResult]:
    """Fix the top-G antennas, re-solve with the penalty dropped, reconstruct.

    The cap search is repeated on the binary support (seeding the fractional
    winner) so the polished design and any fixed-support baseline are solved
    by the identical path.
    """
    support = round_allocation(u_frac, cfg.num_rf_links)
    try:
        search = lambda_search(
            cfg,
            channels,
            grid,
            support=support,
            extra_candidates=() if lam_star is None else (lam_star,),
            workers=workers,
            tolerances=tolerances,
        )
    except AllInfeasibleError as exc:
        raise PolishInfeasibleError(
            f"rounded support {support.tolist()} admits no feasible beamformers: {exc}",
            exc.statuses,
            u_frac,
        ) from exc
    design = _reconstruct_design(search.best.solution, channels)
    return design, search


def _reconstruct_design(sol: SubproblemSolution, channels: ChannelSet) -> BeamformingDesign:
    w_hat, W_hat, S_hat = rank_one_reconstruct(sol.W_c, sol.S, channels.user)
    return BeamformingDesign(
        W_c=W_hat,
        S=S_hat,
        mu=sol.mu,
        allocation=sol.u,
        comm_beam=w_hat,
        sensing_beams=extract_sensing_beams(S_hat),
    )


def _rescale_design(design: BeamformingDesign, factor: float) -> BeamformingDesign:
    root = np.sqrt(factor)
    return BeamformingDesign(
        W_c=design.W_c * factor,
        S=design.S * factor,
        mu=design.mu * factor,
        allocation=design.allocation,
        comm_beam=None if design.comm_beam is None else design.comm_beam * root,
        sensing_beams=None if design.sensing_beams is None else design.sensing_beams * root,
    )


@dataclass(eq=False)
class OptimizeState:
    """Trace of the outer loop, in budget-normalized objective units."""

    records: list[IterationRecord]
    penalized_objectives: list[float]
    matching_errors: list[float]
    binariness_history: list[float]
    etas: list[float]
    lam_stars: list[float]
    converged: bool = False


def _trace_search(state: OptimizeState, outer, search: LambdaSearchResult, hval) -> None:
    for lam, f, status, wall in zip(
        search.candidates, search.objectives, search.statuses, search.wall_times
    ):
        state.records.append(
            IterationRecord(
                outer=outer,
                lam=float(lam),
                status=status,
                objective=None if not np.isfinite(f) else float(f),
                binariness=hval,
                wall_ms=float(wall) * 1e3,
            )
        )


def run_pscp(
    cfg: ScenarioConfig,
    channels: ChannelSet,
    grid: AngleGrid,
    *,
    workers: int = 1,
    max_outer: int = MAX_OUTER_DEFAULT,
    tolerances: SolverTolerances = PIPELINE_TOLERANCES,
) -> tuple[SubproblemSolution, float, OptimizeState]:
    """Penalized SCP outer loop; returns the final fractional iterate.

    Works in whatever power units ``cfg`` carries; ``alternating_optimize``
    invokes it on the budget-normalized copy.  The first pass runs without
    the penalty to measure the objective scale; the penalty then starts at
    ten times that scale and grows tenfold whenever the binariness gap fails
    to shrink by a decade between iterations.
    """
    M = cfg.num_antennas
    u_prev = np.full(M, cfg.num_rf_links / M)
    eta = cfg.penalty
    state = OptimizeState([], [], [], [], [], [])
    prev_solution: SubproblemSolution | None = None
    prev_K = None
    lam_prev: float | None = None
    template = SdrTemplate(cfg, channels, grid)

    for outer in range(1, max_outer + 1):
        extras = () if lam_prev is None else (lam_prev,)
        search = lambda_search(
            cfg,
            channels,
            grid,
            u_prev,
            eta,
            extra_candidates=extras,
            workers=workers,
            tolerances=tolerances,
            template=template,
        )
        best = search.best.solution
        # solver box feasibility is approximate; the next linearization point
        # and the recorded binariness live in [0, 1] exactly
        u_new = np.clip(best.u, 0.0, 1.0)
        K = best.epigraph
        hval = binariness(u_new)
        _trace_search(state, outer, search, hval)
        F_new = K + eta * hval
        state.penalized_objectives.append(F_new)
        state.matching_errors.append(K)
        state.binariness_history.append(hval)
        state.etas.append(eta)
        state.lam_stars.append(search.lam_star)

        stop = hval <= BINARY_STOP * M
        if prev_solution is not None and eta > 0:
            F_old = prev_K + eta * binariness(u_prev)
            if abs(F_old - F_new) <= CONVERGENCE_REL * (1.0 + abs(F_new)):
                stop = True

        h_prev_iter = binariness(u_prev)
        prev_solution, prev_K, lam_prev = best, K, search.lam_star
        u_prev = u_new
        if stop:
            state.converged = True
            break
        if outer == 1 and eta == 0.0:
            eta = 10.0 * max(K, 1e-12)
        elif hval > h_prev_iter / 10.0:
            eta = min(eta * 10.0, PENALTY_CAP)

    return prev_solution, lam_prev, state


def _proposition_checks(
    starred: SubproblemSolution,
    design: BeamformingDesign,
    channels: ChannelSet,
    cfg: ScenarioConfig,
    grid: AngleGrid,
    lam_star: float,
) -> dict[str, float]:
    """Reconstruction diagnostics: objective / trace / user-form preservation,
    PSD of the moved remainder, and transfer of the eavesdropper caps."""
    h = channels.user
    K_star = metrics.matching_error(starred.W_c, starred.S, starred.mu, grid, cfg.spacing_ratio)
    K_hat = metrics.matching_error(design.W_c, design.S, design.mu, grid, cfg.spacing_ratio)
    tr_star = float(np.trace(starred.W_c + starred.S).real)
    tr_hat = float(np.trace(design.W_c + design.S).real)
    diff = starred.W_c - design.W_c
    out = {
        "objective_shift_rel": abs(K_hat - K_star) / (1.0 + abs(K_star)),
        "trace_shift_rel": abs(tr_hat - tr_star) / max(abs(tr_star), 1e-300),
        "user_comm_form_shift_rel": abs(
            float((h.conj() @ (design.W_c - starred.W_c) @ h).real)
        ) / max(float((h.conj() @ starred.W_c @ h).real), 1e-300),
        "user_sense_form_shift_rel": abs(
            float((h.conj() @ (design.S - starred.S) @ h).real)
        ) / max(float((h.conj() @ starred.S @ h).real), 1e-300),
        "moved_remainder_min_eig_rel": float(np.linalg.eigvalsh(diff).min())
        / max(float(np.trace(starred.W_c).real), 1e-300),
        "sensing_min_eig_rel": float(np.linalg.eigvalsh(design.S).min())
        / max(float(np.trace(design.S).real), 1e-300),
        "comm_second_eig_rel": float(np.sort(np.linalg.eigvalsh(design.W_c))[-2])
        / max(float(np.linalg.eigvalsh(design.W_c).max()), 1e-300)
        if design.W_c.shape[0] > 1
        else 0.0,
    }
    margins = []
    noises = cfg.target_noise_mw()
    for j in cfg.untrusted_indices:
        g = channels.targets[j]
        lhs = float((g.conj() @ design.W_c @ g).real)
        rhs = lam_star * (float((g.conj() @ design.S @ g).real) + noises[j])
        margins.append(rhs - lhs)
    out["eaves_cap_margin_min"] = min(margins) if margins else float("inf")
    return out


def _assemble_report(
    cfg: ScenarioConfig,
    channels: ChannelSet,
    grid: AngleGrid,
    design: BeamformingDesign,
    lam_star: float,
    state: OptimizeState,
    checks: dict[str, float],
    wall_seconds: float,
) -> DesignReport:
    radiated = metrics.beampattern(design.W_c, design.S, grid.angles_deg, cfg.spacing_ratio)
    h = channels.user
    noises = cfg.target_noise_mw()
    sinr_targets = tuple(
        metrics.sinr_target(design.W_c, design.S, channels.targets[j], noises[j])
        for j in range(cfg.num_targets)
    )
    illum = tuple(
        metrics.radiated_power(a, design.W_c, design.S, cfg.spacing_ratio) for a in cfg.target_angles
    )
    eaves_power = tuple(
        float((channels.targets[j].conj() @ design.W_c @ channels.targets[j]).real)
        for j in cfg.untrusted_indices
    )
    outer_summary = tuple(
        {
            "iteration": k + 1,
            "matching_error": state.matching_errors[k],
            "binariness": state.binariness_history[k],
            "eta": state.etas[k],
            "lambda_star": state.lam_stars[k],
            "penalized_objective": state.penalized_objectives[k],
        }
        for k in range(len(state.penalized_objectives))
    )
    return DesignReport(
        scenario=cfg,
        design=design,
        matching_error=metrics.matching_error(design.W_c, design.S, design.mu, grid, cfg.spacing_ratio),
        secrecy_rate=metrics.secrecy_rate(design, channels, cfg),
        sinr_user=metrics.sinr_user(design.W_c, design.S, h, cfg.noise_user_mw),
        sinr_targets=sinr_targets,
        user_power_mw=float((h.conj() @ design.W_c @ h).real),
        target_illumination_mw=illum,
        eaves_comm_power_mw=eaves_power,
        lam_star=lam_star,
        converged=state.converged,
        outer_iterations=len(state.penalized_objectives),
        objective_scale=cfg.total_power_mw**2,
        grid=grid,
        radiated_mw=radiated,
        trace=tuple(state.records),
        outer_summary=outer_summary,
        checks=checks,
        status="feasible",
        wall_seconds=wall_seconds,
    )


def alternating_optimize(
    cfg: ScenarioConfig,
    *,
    workers: int = 1,
    max_outer: int = MAX_OUTER_DEFAULT,
    tolerances: SolverTolerances = PIPELINE_TOLERANCES,
) -> DesignReport:
    """Full design pipeline: penalized SCP, cap search, rounding, polish.

    Powers are normalized by the total budget internally (the design problem
    is exactly equivariant under that scaling) and restored on output.
    """
    t0 = time.perf_counter()
    channels = build_channels(cfg)
    grid = make_grid(cfg)
    scale = cfg.total_power_mw
    cfg_n = cfg.scaled_powers(1.0 / scale)
    if cfg.penalty > 0:
        cfg_n = replace(cfg_n, penalty=cfg.penalty / scale**2)

    final_frac, lam_prev, state = run_pscp(
        cfg_n, channels, grid, workers=workers, max_outer=max_outer, tolerances=tolerances
    )
    design_n, polish_search = round_and_polish(
        final_frac.u, cfg_n, channels, grid, lam_prev, workers=workers, tolerances=tolerances
    )
    _trace_search(state, "polish", polish_search, binariness(design_n.allocation))
    checks = _proposition_checks(
        polish_search.best.solution, design_n, channels, cfg_n, grid, polish_search.lam_star
    )
    design = _rescale_design(design_n, scale)
    return _assemble_report(
        cfg, channels, grid, design, polish_search.lam_star, state, checks,
        time.perf_counter() - t0,
    )


def solve_fixed_allocation(
    cfg: ScenarioConfig,
    support: Sequence[int] | None = None,
    *,
    workers: int = 1,
    tolerances: SolverTolerances = PIPELINE_TOLERANCES,
) -> DesignReport:
    """Design with a fixed binary allocation (default: first G antennas).

    Shares the cap-search / reconstruction path with the polish step, so it
    serves as the no-allocation baseline arm for comparisons.
    """
    t0 = time.perf_counter()
    channels = build_channels(cfg)
    grid = make_grid(cfg)
    scale = cfg.total_power_mw
    cfg_n = cfg.scaled_powers(1.0 / scale)
    if support is None:
        support = np.arange(cfg.num_rf_links)
    support = np.sort(np.asarray(support, dtype=int))
    if support.size != cfg.num_rf_links:
        raise ValueError(f"support has {support.size} antennas but G = {cfg.num_rf_links}")

    search = lambda_search(
        cfg_n, channels, grid, support=support, workers=workers, tolerances=tolerances
    )
    design_n = _reconstruct_design(search.best.solution, channels)
    state = OptimizeState([], [search.best.objective], [search.best.solution.epigraph], [0.0],
                          [0.0], [search.lam_star], converged=True)
    _trace_search(state, "fixed", search, 0.0)
    checks = _proposition_checks(
        search.best.solution, design_n, channels, cfg_n, grid, search.lam_star
    )
    design = _rescale_design(design_n, scale)
    return _assemble_report(
        cfg, channels, grid, design, search.lam_star, state, checks, time.perf_counter() - t0
    )
