"""Solver-agnostic cone programs over real scalars with embedded Hermitian blocks.

Complex Hermitian matrix variables are carried as real parameter vectors
(diagonal, then upper-triangle real parts, then upper-triangle imaginary
parts) and enter the positive-semidefinite cone through the standard real
embedding  H -> [[Re H, -Im H], [Im H, Re H]]  of size 2M x 2M, which is PSD
exactly when H is.  The embedding doubles traces and eigenvalue
multiplicities but leaves quadratic forms unchanged on stacked
[Re z; Im z] vectors.

The concrete backend is Clarabel; ``solve`` is the only function that
touches it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

import clarabel

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"


class NonHermitianError(ValueError):
    """Input matrix is measurably non-Hermitian."""


# --- Hermitian <-> real parameter vector ----------------------------------

def hermitian_param_count(dim: int) -> int:
    return dim * dim


def _upper_indices(dim: int):
    return np.triu_indices(dim, k=1)


def pack_hermitian(H: np.ndarray) -> np.ndarray:
    """Real parameters of a Hermitian matrix: [diag, Re upper, Im upper]."""
    H = np.asarray(H, dtype=complex)
    check_hermitian(H)
    iu, ju = _upper_indices(H.shape[0])
    return np.concatenate([np.diag(H).real, H[iu, ju].real, H[iu, ju].imag])


def unpack_hermitian(params: np.ndarray, dim: int) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    n_off = dim * (dim - 1) // 2
    if params.size != dim + 2 * n_off:
        raise ValueError(f"expected {dim + 2 * n_off} parameters for dim {dim}, got {params.size}")
    H = np.zeros((dim, dim), dtype=complex)
    iu, ju = _upper_indices(dim)
    H[np.arange(dim), np.arange(dim)] = params[:dim]
    upper = params[dim : dim + n_off] + 1j * params[dim + n_off :]
    H[iu, ju] = upper
    H[ju, iu] = upper.conj()
    return H


def check_hermitian(H: np.ndarray, rel_tol: float = 1e-10) -> None:
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise NonHermitianError(f"expected a square matrix, got shape {H.shape}")
    scale = max(float(np.abs(H).max(initial=0.0)), 1e-300)
    gap = float(np.abs(H - H.conj().T).max(initial=0.0))
    if gap > rel_tol * scale:
        raise NonHermitianError(f"matrix deviates from Hermitian by {gap:.3e} (scale {scale:.3e})")


def embed_hermitian(H: np.ndarray) -> np.ndarray:
    """Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] of a Hermitian H.

    PSD iff H is PSD; every eigenvalue of H appears twice; trace doubles.
    """
    H = np.asarray(H, dtype=complex)
    check_hermitian(H)
    A, B = H.real, H.imag
    return np.block([[A, -B], [B, A]])


def deembed_hermitian(E: np.ndarray) -> np.ndarray:
    """Inverse of ``embed_hermitian``, averaging the two redundant copies of
    each block to symmetrize numerical noise."""
    E = np.asarray(E, dtype=float)
    dim = E.shape[0]
    if dim % 2 != 0 or E.shape != (dim, dim):
        raise ValueError(f"embedded matrix must be square with even dimension, got {E.shape}")
    M = dim // 2
    A = 0.5 * (E[:M, :M] + E[M:, M:])
    B = 0.5 * (E[M:, :M] - E[:M, M:])
    H = A + 1j * B
    return 0.5 * (H + H.conj().T)


def quadratic_form_coefficients(a: np.ndarray) -> np.ndarray:
    """Real matrix C with  a^H X a = sum(C * embed(X))  for every Hermitian X.

    The embedding doubles traces, hence the factor 1/2 relative to the
    rank-one embedding of a a^H.
    """
    a = np.asarray(a, dtype=complex)
    return 0.5 * embed_hermitian(np.outer(a, a.conj()))


def quadratic_form_params(a: np.ndarray) -> np.ndarray:
    """Coefficient vector of  X -> a^H X a  over the Hermitian parameters."""
    a = np.asarray(a, dtype=complex)
    dim = a.shape[0]
    iu, ju = _upper_indices(dim)
    cross = a.conj()[:, None] * a[None, :]
    return np.concatenate([np.abs(a) ** 2, 2 * cross[iu, ju].real, -2 * cross[iu, ju].imag])


@lru_cache(maxsize=None)
def embedding_map(dim: int) -> sp.csr_matrix:
    """Sparse map from Hermitian parameters to vec(embedding), row-major.

    Column k is vec(embed(B_k)) for the k-th Hermitian basis matrix.
    """
    n_off = dim * (dim - 1) // 2
    edim = 2 * dim
    rows, cols, vals = [], [], []

    def put(i, j, col, val):
        rows.append(i * edim + j)
        cols.append(col)
        vals.append(val)

    for m in range(dim):
        put(m, m, m, 1.0)
        put(dim + m, dim + m, m, 1.0)
    iu, ju = _upper_indices(dim)
    for k in range(n_off):
        m, n = int(iu[k]), int(ju[k])
        # real part: symmetric in both diagonal blocks
        for (i, j) in ((m, n), (n, m), (dim + m, dim + n), (dim + n, dim + m)):
            put(i, j, dim + k, 1.0)
        # imaginary part: antisymmetric across the off-diagonal blocks
        put(m, dim + n, dim + n_off + k, -1.0)
        put(dim + n, m, dim + n_off + k, -1.0)
        put(n, dim + m, dim + n_off + k, 1.0)
        put(dim + m, n, dim + n_off + k, 1.0)
    return sp.coo_matrix((vals, (rows, cols)), shape=(edim * edim, dim * dim)).tocsr()


# --- program representation ------------------------------------------------


@dataclass(eq=False)
class PsdBlock:
    """One embedded PSD constraint: reshape(coeffs @ x, (dim, dim)) must be PSD."""

    name: str
    dim: int
    coeffs: sp.csr_matrix

    def matrix_at(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.coeffs @ x).reshape(self.dim, self.dim)


@dataclass(eq=False)
class ConeProgram:
    """Linear objective over scalars with affine, one SOC, and PSD-block constraints.

    Constraint semantics on the flat variable vector x:
      eq_coeffs @ x == eq_rhs
      ineq_coeffs @ x <= ineq_rhs
      s = soc_coeffs @ x + soc_offset  with  s[0] >= ||s[1:]||  (if present)
      each PSD block matrix PSD
    """

    var_names: tuple[str, ...]
    objective: np.ndarray
    objective_offset: float = 0.0
    eq_coeffs: sp.csr_matrix | None = None
    eq_rhs: np.ndarray | None = None
    eq_labels: tuple[str, ...] = ()
    ineq_coeffs: sp.csr_matrix | None = None
    ineq_rhs: np.ndarray | None = None
    ineq_labels: tuple[str, ...] = ()
    soc_coeffs: sp.csr_matrix | None = None
    soc_offset: np.ndarray | None = None
    psd_blocks: tuple[PsdBlock, ...] = ()

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    def validate(self) -> None:
        n = self.num_vars
        if self.objective.shape != (n,):
            raise ValueError("objective length must match the variable count")
        for mat, rhs, what in (
            (self.eq_coeffs, self.eq_rhs, "equality"),
            (self.ineq_coeffs, self.ineq_rhs, "inequality"),
        ):
            if (mat is None) != (rhs is None):
                raise ValueError(f"{what} coefficients and rhs must come together")
            if mat is not None:
                if mat.shape[1] != n:
                    raise ValueError(f"{what} rows reference undeclared variables")
                if mat.shape[0] != rhs.shape[0]:
                    raise ValueError(f"{what} rhs length mismatch")
        if (self.soc_coeffs is None) != (self.soc_offset is None):
            raise ValueError("SOC coefficients and offset must come together")
        if self.soc_coeffs is not None:
            if self.soc_coeffs.shape[1] != n:
                raise ValueError("SOC rows reference undeclared variables")
            if self.soc_coeffs.shape[0] != self.soc_offset.shape[0] or self.soc_coeffs.shape[0] < 2:
                raise ValueError("SOC needs at least two consistent rows")
        for blk in self.psd_blocks:
            if blk.dim % 2 != 0:
                raise ValueError(f"PSD block {blk.name} has odd dimension {blk.dim}; embeddings are even")
            if blk.coeffs.shape != (blk.dim * blk.dim, n):
                raise ValueError(f"PSD block {blk.name} map shape {blk.coeffs.shape} inconsistent")

    def label_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for lab in list(self.eq_labels) + list(self.ineq_labels):
            counts[lab] = counts.get(lab, 0) + 1
        return counts

    def data_norm(self) -> float:
        pieces = [np.abs(self.objective).max(initial=0.0)]
        for mat in (self.eq_coeffs, self.ineq_coeffs, self.soc_coeffs):
            if mat is not None and mat.nnz:
                pieces.append(float(np.abs(mat.data).max()))
        for vec in (self.eq_rhs, self.ineq_rhs, self.soc_offset):
            if vec is not None and vec.size:
                pieces.append(float(np.abs(vec).max()))
        return max(pieces)


@dataclass(frozen=True)
class SolverTolerances:
    feasibility: float = 1e-8
    relative_gap: float = 1e-8
    absolute_gap: float = 1e-9
    max_iterations: int = 200


@dataclass(eq=False)
class ConeSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    residuals: dict[str, float] = field(default_factory=dict)
    iterations: int = 0
    solver_status: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _svec_rows(block: PsdBlock) -> tuple[sp.csr_matrix, np.ndarray]:
    """Clarabel scaled-triangle rows for one PSD block (upper, column-major)."""
    d = block.dim
    coeffs = block.coeffs.tocsr()
    idx = []
    scale = []
    for j in range(d):
        for i in range(j + 1):
            idx.append(i * d + j)
            scale.append(1.0 if i == j else np.sqrt(2.0))
    rows = coeffs[idx, :].multiply(np.asarray(scale)[:, None]).tocsr()
    return rows, np.zeros(len(idx))


def primal_residuals(program: ConeProgram, x: np.ndarray) -> dict[str, float]:
    """Worst-case violation of each constraint family at x."""
    out: dict[str, float] = {}
    if program.eq_coeffs is not None and program.eq_coeffs.shape[0]:
        out["equality"] = float(np.abs(program.eq_coeffs @ x - program.eq_rhs).max())
    if program.ineq_coeffs is not None and program.ineq_coeffs.shape[0]:
        out["inequality"] = float(np.maximum(program.ineq_coeffs @ x - program.ineq_rhs, 0.0).max())
    if program.soc_coeffs is not None:
        s = program.soc_coeffs @ x + program.soc_offset
        out["soc"] = float(max(np.linalg.norm(s[1:]) - s[0], 0.0))
    for blk in program.psd_blocks:
        mineig = float(np.linalg.eigvalsh(blk.matrix_at(x)).min())
        out[f"psd:{blk.name}"] = max(-mineig, 0.0)
    return out


def solve(program: ConeProgram, tolerances: SolverTolerances = SolverTolerances()) -> ConeSolution:
    """Solve the cone program with Clarabel; deterministic for fixed inputs."""
    program.validate()
    n = program.num_vars
    mats = []
    rhs = []
    cones = []
    if program.eq_coeffs is not None and program.eq_coeffs.shape[0]:
        mats.append(program.eq_coeffs)
        rhs.append(np.asarray(program.eq_rhs, dtype=float))
        cones.append(clarabel.ZeroConeT(program.eq_coeffs.shape[0]))
    if program.ineq_coeffs is not None and program.ineq_coeffs.shape[0]:
        mats.append(program.ineq_coeffs)
        rhs.append(np.asarray(program.ineq_rhs, dtype=float))
        cones.append(clarabel.NonnegativeConeT(program.ineq_coeffs.shape[0]))
    if program.soc_coeffs is not None:
        # s = b - Ax must land in the cone, so A = -coeffs, b = offset
        mats.append(-program.soc_coeffs)
        rhs.append(np.asarray(program.soc_offset, dtype=float))
        cones.append(clarabel.SecondOrderConeT(program.soc_coeffs.shape[0]))
    for blk in program.psd_blocks:
        rows, offs = _svec_rows(blk)
        mats.append(-rows)
        rhs.append(offs)
        cones.append(clarabel.PSDTriangleConeT(blk.dim))

    A = sp.vstack([m.tocsc() for m in mats]).tocsc() if mats else sp.csc_matrix((0, n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    P = sp.csc_matrix((n, n))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = tolerances.max_iterations
    settings.tol_feas = tolerances.feasibility
    settings.tol_gap_rel = tolerances.relative_gap
    settings.tol_gap_abs = tolerances.absolute_gap

    solver = clarabel.DefaultSolver(P, np.asarray(program.objective, dtype=float), A, b, cones, settings)
    result = solver.solve()
    raw = str(result.status)

    if result.status in (clarabel.SolverStatus.Solved, clarabel.SolverStatus.AlmostSolved):
        x = np.asarray(result.x, dtype=float)
        resid = primal_residuals(program, x)
        status = OPTIMAL
        if resid and max(resid.values()) > 1e-6 * (1.0 + program.data_norm()):
            status = NUMERICAL_FAILURE
        return ConeSolution(
            status=status,
            x=x,
            objective=float(program.objective @ x + program.objective_offset),
            residuals=resid,
            iterations=result.iterations,
            solver_status=raw,
        )
    if result.status in (
        clarabel.SolverStatus.PrimalInfeasible,
        clarabel.SolverStatus.AlmostPrimalInfeasible,
    ):
        return ConeSolution(INFEASIBLE, None, None, {}, result.iterations, raw)
    return ConeSolution(NUMERICAL_FAILURE, None, None, {}, result.iterations, raw)


def dump_program(program: ConeProgram) -> str:
    """Human-readable listing of variables, cones, and constraint rows."""
    lines = [f"cone program: {program.num_vars} variables"]
    lines.append("variables: " + ", ".join(program.var_names))

    def term(coef, j):
        return f"{coef:+.6g}*{program.var_names[j]}"

    def row_text(mat, i):
        row = mat.getrow(i)
        return " ".join(term(v, j) for j, v in zip(row.indices, row.data)) or "0"

    if program.eq_coeffs is not None:
        for i in range(program.eq_coeffs.shape[0]):
            lab = program.eq_labels[i] if i < len(program.eq_labels) else "eq"
            lines.append(f"[eq:{lab}] {row_text(program.eq_coeffs, i)} == {program.eq_rhs[i]:.6g}")
    if program.ineq_coeffs is not None:
        for i in range(program.ineq_coeffs.shape[0]):
            lab = program.ineq_labels[i] if i < len(program.ineq_labels) else "ineq"
            lines.append(f"[ineq:{lab}] {row_text(program.ineq_coeffs, i)} <= {program.ineq_rhs[i]:.6g}")
    if program.soc_coeffs is not None:
        lines.append(f"[soc] dimension {program.soc_coeffs.shape[0]}: s[0] >= ||s[1:]|| with rows")
        for i in range(program.soc_coeffs.shape[0]):
            lines.append(f"  s[{i}] = {row_text(program.soc_coeffs, i)} {program.soc_offset[i]:+.6g}")
    for blk in program.psd_blocks:
        lines.append(f"[psd:{blk.name}] dimension {blk.dim} ({blk.coeffs.nnz} coefficients)")
    obj = " ".join(term(v, j) for j, v in enumerate(program.objective) if v != 0.0) or "0"
    lines.append(f"minimize {obj} {program.objective_offset:+.6g}")
    return "\n".join(lines)
