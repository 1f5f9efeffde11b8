"""Performance metrics: beampatterns, SINRs, secrecy rate, matching error.

All functions are pure and operate on immutable inputs, so they are safe to
evaluate concurrently (e.g. across grid angles or sweep points).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import ChannelSet, ScenarioConfig, steering_vector


class DegeneratePatternError(ValueError):
    """Desired pattern has no active angles, so the scale fit is undefined."""


@dataclass(eq=False)
class AngleGrid:
    """Discrete sample angles with the desired (0/1) pattern at each."""

    angles_deg: np.ndarray
    desired: np.ndarray

    def __post_init__(self) -> None:
        self.angles_deg = np.asarray(self.angles_deg, dtype=float)
        self.desired = np.asarray(self.desired, dtype=float)
        if self.angles_deg.shape != self.desired.shape:
            raise ValueError("angles and desired pattern must have equal length")
        if np.any(np.diff(self.angles_deg) < 0):
            raise ValueError("grid angles must be sorted ascending")
        if not np.all((self.desired == 0) | (self.desired == 1)):
            raise ValueError("desired pattern values must be 0 or 1")
        self.angles_deg.setflags(write=False)
        self.desired.setflags(write=False)

    def __len__(self) -> int:
        return self.angles_deg.shape[0]


def desired_pattern(
    grid_angles_deg: np.ndarray,
    target_angles_deg: Sequence[float],
    user_angle_deg: float,
    halfwidth_deg: float,
) -> np.ndarray:
    """Binary mask: 1 within ``halfwidth`` (inclusive) of any target or the user."""
    if halfwidth_deg <= 0:
        raise ValueError(f"halfwidth must be positive, got {halfwidth_deg}")
    grid = np.asarray(grid_angles_deg, dtype=float)
    centers = np.append(np.asarray(target_angles_deg, dtype=float), user_angle_deg)
    hit = np.abs(grid[:, None] - centers[None, :]) <= halfwidth_deg
    return hit.any(axis=1).astype(float)


def make_grid(cfg: ScenarioConfig) -> AngleGrid:
    angles = cfg.grid_angles()
    return AngleGrid(
        angles_deg=angles,
        desired=desired_pattern(angles, cfg.target_angles, cfg.user_angle, cfg.beam_halfwidth),
    )


def steering_matrix(angles_deg: np.ndarray, num_antennas: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Stack of steering vectors, shape (len(angles), M)."""
    phases = 2.0 * np.pi * spacing_ratio * np.sin(np.deg2rad(np.asarray(angles_deg, dtype=float)))
    return np.exp(1j * np.outer(phases, np.arange(num_antennas)))


def radiated_power(angle_deg: float, W_c: np.ndarray, S: np.ndarray, spacing_ratio: float = 0.5) -> float:
    """Transmitted power toward one direction: a^H (W_c + S) a, in mW."""
    a = steering_vector(angle_deg, W_c.shape[0], spacing_ratio)
    return float((a.conj() @ (W_c + S) @ a).real)


def beampattern(
    W_c: np.ndarray, S: np.ndarray, angles_deg: np.ndarray, spacing_ratio: float = 0.5
) -> np.ndarray:
    """Radiated power at every grid angle, vectorized."""
    A = steering_matrix(angles_deg, W_c.shape[0], spacing_ratio)
    return np.einsum("qi,ij,qj->q", A.conj(), W_c + S, A).real


def matching_error(
    W_c: np.ndarray, S: np.ndarray, mu: float, grid: AngleGrid, spacing_ratio: float = 0.5
) -> float:
    """Mean squared gap between the radiated pattern and mu times the desired mask."""
    J = beampattern(W_c, S, grid.angles_deg, spacing_ratio)
    return float(np.mean((J - mu * grid.desired) ** 2))


def optimal_mu(J_samples: np.ndarray, D_samples: np.ndarray) -> float:
    """Least-squares scale for the desired mask given fixed covariances."""
    J = np.asarray(J_samples, dtype=float)
    D = np.asarray(D_samples, dtype=float)
    denom = float(D @ D)
    if denom <= 0:
        raise DegeneratePatternError("desired pattern is all-zero; scale fit undefined")
    return float(J @ D) / denom


def _sinr(W_c: np.ndarray, S: np.ndarray, chan: np.ndarray, noise_mw: float) -> float:
    if noise_mw <= 0:
        raise ValueError(f"noise power must be positive, got {noise_mw}")
    sig = float((chan.conj() @ W_c @ chan).real)
    interf = float((chan.conj() @ S @ chan).real)
    return sig / (interf + noise_mw)


def sinr_user(W_c: np.ndarray, S: np.ndarray, h_user: np.ndarray, noise_mw: float) -> float:
    """Communication SINR: user-directed signal power over sensing interference plus noise."""
    return _sinr(W_c, S, h_user, noise_mw)


def sinr_target(W_c: np.ndarray, S: np.ndarray, g_target: np.ndarray, noise_mw: float) -> float:
    """SINR of the communication stream as received at a (potentially untrusted) target."""
    return _sinr(W_c, S, g_target, noise_mw)


@dataclass(eq=False)
class BeamformingDesign:
    """One transmit design: communication covariance, aggregate sensing
    covariance, pattern scale, and the antenna allocation."""

    W_c: np.ndarray
    S: np.ndarray
    mu: float
    allocation: np.ndarray
    comm_beam: np.ndarray | None = None
    sensing_beams: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.W_c = np.asarray(self.W_c, dtype=complex)
        self.S = np.asarray(self.S, dtype=complex)
        self.allocation = np.asarray(self.allocation, dtype=float)
        for arr in (self.W_c, self.S, self.allocation):
            arr.setflags(write=False)
        if self.comm_beam is not None:
            self.comm_beam = np.asarray(self.comm_beam, dtype=complex)
            self.comm_beam.setflags(write=False)
        if self.sensing_beams is not None:
            self.sensing_beams = np.atleast_2d(np.asarray(self.sensing_beams, dtype=complex))
            self.sensing_beams.setflags(write=False)

    @property
    def num_antennas(self) -> int:
        return self.W_c.shape[0]

    def total_power_mw(self) -> float:
        return float(np.trace(self.W_c).real + np.trace(self.S).real)

    def validate(self, cfg: ScenarioConfig) -> list[str]:
        """Check the design invariants; returns a list of violations (empty = ok)."""
        problems = []
        for name, X in (("W_c", self.W_c), ("S", self.S)):
            if not np.allclose(X, X.conj().T, atol=1e-10 * max(1.0, float(np.abs(X).max(initial=0.0)))):
                problems.append(f"{name} is not Hermitian")
                continue
            tr = float(np.trace(X).real)
            mineig = float(np.linalg.eigvalsh(X).min())
            if mineig < -1e-8 * max(tr, 1e-300):
                problems.append(f"{name} min eigenvalue {mineig:.3e} below PSD slack for trace {tr:.3e}")
        total = self.total_power_mw()
        if abs(total - cfg.total_power_mw) > 1e-6 * cfg.total_power_mw:
            problems.append(f"total power {total} != budget {cfg.total_power_mw}")
        if self.mu < -1e-12:
            problems.append(f"mu = {self.mu} is negative")
        if np.any(self.allocation < -1e-9) or np.any(self.allocation > 1 + 1e-9):
            problems.append("allocation outside [0, 1]")
        diag = np.diag(self.W_c + self.S).real
        cap = self.allocation * cfg.antenna_cap_mw() + 1e-8
        if np.any(diag > cap):
            worst = int(np.argmax(diag - cap))
            problems.append(
                f"antenna {worst} power {diag[worst]:.6e} exceeds cap {cap[worst]:.6e}"
            )
        if self.comm_beam is not None:
            outer = np.outer(self.comm_beam, self.comm_beam.conj())
            denom = max(np.linalg.norm(self.W_c), 1e-300)
            rel = np.linalg.norm(outer - self.W_c) / denom
            if rel > 1e-6:
                problems.append(f"comm_beam outer product misses W_c by {rel:.3e} relative")
        return problems


def secrecy_rate(design: BeamformingDesign, channels: ChannelSet, cfg: ScenarioConfig) -> float:
    """User rate minus the best untrusted-target rate, bits/s/Hz (may be negative)."""
    if not cfg.untrusted_indices:
        raise ValueError("secrecy rate needs a nonempty untrusted set")
    rate_user = np.log2(1.0 + sinr_user(design.W_c, design.S, channels.user, cfg.noise_user_mw))
    noise = cfg.target_noise_mw()
    worst = max(
        np.log2(1.0 + sinr_target(design.W_c, design.S, channels.targets[j], noise[j]))
        for j in cfg.untrusted_indices
    )
    return float(rate_user - worst)


def mc_radiated_power(
    W_c: np.ndarray,
    S: np.ndarray,
    angle_deg: float,
    num_draws: int = 100_000,
    rng: np.random.Generator | None = None,
    spacing_ratio: float = 0.5,
) -> float:
    """Monte-Carlo estimate of the power toward one angle.

    Draws unit-variance circularly-symmetric symbols through beamformers taken
    from the Hermitian square roots of the two covariances and averages
    |a^H x|^2.  Converges to ``radiated_power`` as the draw count grows.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    M = W_c.shape[0]
    a = steering_vector(angle_deg, M, spacing_ratio)

    def herm_sqrt(X):
        vals, vecs = np.linalg.eigh(X)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))

    # a^H x = (a^H [Bw Bs]) s with s ~ CN(0, I); work with the row vector.
    row = a.conj() @ np.hstack([herm_sqrt(W_c), herm_sqrt(S)])
    total = 0.0
    remaining = int(num_draws)
    chunk = max(1, int(2e6 // max(row.size, 1)))
    while remaining > 0:
        n = min(chunk, remaining)
        s = (rng.standard_normal((row.size, n)) + 1j * rng.standard_normal((row.size, n))) / np.sqrt(2.0)
        total += float(np.sum(np.abs(row @ s) ** 2))
        remaining -= n
    return total / num_draws


def beampattern_csv(grid: AngleGrid, radiated_mw: np.ndarray) -> str:
    """CSV payload with header ``angle_deg,desired,radiated_mw``."""
    radiated = np.asarray(radiated_mw, dtype=float)
    if radiated.shape != grid.angles_deg.shape:
        raise ValueError("radiated power length must match the grid")
    buf = io.StringIO()
    buf.write("angle_deg,desired,radiated_mw\n")
    for ang, d, j in zip(grid.angles_deg, grid.desired, radiated):
        buf.write(f"{float(ang)!r},{int(d)},{float(j)!r}\n")
    return buf.getvalue()
