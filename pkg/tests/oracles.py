"""Independent reference implementations used to cross-check the package.

Everything here recomputes quantities by a different route than the code
under test: explicit loops instead of vectorized forms, eigendecompositions
instead of matrix quadratic forms, an external convex-modeling stack instead
of the native cone backend, and exhaustive enumeration instead of the
relaxation pipeline.
"""

import itertools

import numpy as np

from secbeam.metrics import make_grid
from secbeam.optimizer import PIPELINE_TOLERANCES, lambda_search
from secbeam.scenario import build_channels, steering_vector


def desired_count_scan(grid_angles, centers, halfwidth):
    """Count desired-pattern ones by direct interval membership, one angle at a time."""
    count = 0
    for ang in grid_angles:
        inside = False
        for c in centers:
            if c - halfwidth <= ang <= c + halfwidth:
                inside = True
        if inside:
            count += 1
    return count


def matching_error_loops(W_c, S, mu, grid, spacing_ratio=0.5):
    """Mean-square pattern error via an explicit double loop."""
    total = 0.0
    Q = len(grid)
    for q in range(Q):
        a = steering_vector(grid.angles_deg[q], W_c.shape[0], spacing_ratio)
        J = 0.0
        for m in range(W_c.shape[0]):
            for n in range(W_c.shape[0]):
                J += (np.conj(a[m]) * (W_c[m, n] + S[m, n]) * a[n]).real
        total += (J - mu * grid.desired[q]) ** 2
    return total / Q


def mu_grid_search(J, D, step=1e-3):
    """Scale minimizing the pattern error by brute-force grid search."""
    J = np.asarray(J, float)
    D = np.asarray(D, float)
    hi = max(float(np.abs(J).max(initial=0.0)) * 2, 1.0)
    best_mu, best_err = 0.0, np.mean(J**2)
    mu = step
    while mu <= hi:
        err = np.mean((J - mu * D) ** 2)
        if err < best_err:
            best_mu, best_err = mu, err
        mu += step
    return best_mu


def sinr_from_eigenbeams(W_c, S, chan, noise):
    """SINR via the rank-one expansion of the sensing covariance."""
    vals, vecs = np.linalg.eigh(S)
    interference = 0.0
    for lam, v in zip(vals, vecs.T):
        if lam > 0:
            beam = np.sqrt(lam) * v
            interference += abs(np.vdot(chan, beam)) ** 2
    signal = float((chan.conj() @ W_c @ chan).real)
    return signal / (interference + noise)


def secrecy_by_enumeration(W_c, S, channels, cfg):
    """Secrecy rate as the minimum over per-eavesdropper rate differences."""
    noises = cfg.target_noise_mw()
    user_rate = np.log2(1 + sinr_from_eigenbeams(W_c, S, channels.user, cfg.noise_user_mw))
    diffs = []
    for j in cfg.untrusted_indices:
        rate_j = np.log2(1 + sinr_from_eigenbeams(W_c, S, channels.targets[j], noises[j]))
        diffs.append(user_rate - rate_j)
    return min(diffs)


def cvxpy_reference_objective(cfg, support, lam, solver="CLARABEL"):
    """Optimal relaxed-subproblem objective via an independent modeling stack.

    Models the complex Hermitian variables directly (no real embedding, no
    epigraph); the allocation is fixed to the given binary support.
    """
    import cvxpy as cp

    channels = build_channels(cfg)
    grid = make_grid(cfg)
    sup = np.asarray(support, dtype=int)
    M = sup.size  # unselected antennas carry no power, so they are dropped
    A = np.stack(
        [steering_vector(a, cfg.num_antennas, cfg.spacing_ratio)[sup] for a in grid.angles_deg]
    )
    beta = 2.0**cfg.secrecy_floor * (1 + lam) - 1

    W = cp.Variable((M, M), hermitian=True)
    S = cp.Variable((M, M), hermitian=True)
    mu = cp.Variable(nonneg=True)
    J = cp.real(cp.sum(cp.multiply(A.conj() @ (W + S), A), axis=1))
    h = channels.user[sup]
    constraints = [
        cp.real(cp.trace(W) + cp.trace(S)) == cfg.total_power_mw,
        cp.real(cp.diag(W) + cp.diag(S)) <= np.full(M, cfg.antenna_cap_mw()),
        W >> 0,
        S >> 0,
        cp.real(cp.quad_form(h, W))
        >= beta * (cp.real(cp.quad_form(h, S)) + cfg.noise_user_mw),
    ]
    noises = cfg.target_noise_mw()
    for j in cfg.untrusted_indices:
        g = channels.targets[j][sup]
        constraints.append(
            cp.real(cp.quad_form(g, W)) <= lam * (cp.real(cp.quad_form(g, S)) + noises[j])
        )
    problem = cp.Problem(cp.Minimize(cp.sum_squares(J - mu * grid.desired) / len(grid)), constraints)
    problem.solve(solver=solver)
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"reference solve ended {problem.status}")
    return float(problem.value)


def best_support_by_enumeration(cfg, workers=1):
    """Exhaustive search over binary supports, each solved with the scenario's cap grid.

    Returns (best objective, best support, per-support objectives).
    """
    channels = build_channels(cfg)
    grid = make_grid(cfg)
    results = {}
    for support in itertools.combinations(range(cfg.num_antennas), cfg.num_rf_links):
        try:
            search = lambda_search(
                cfg, channels, grid, support=np.asarray(support),
                workers=workers, tolerances=PIPELINE_TOLERANCES,
            )
            results[support] = search.best.objective
        except Exception:
            results[support] = float("inf")
    best = min(results, key=lambda s: results[s])
    return results[best], best, results


def local_maxima_angles(angles_deg, values):
    """Angles of strict-or-plateau local maxima of a sampled curve."""
    values = np.asarray(values, float)
    peaks = []
    n = values.size
    for i in range(n):
        left = values[i - 1] if i > 0 else -np.inf
        right = values[i + 1] if i < n - 1 else -np.inf
        if values[i] >= left and values[i] >= right:
            peaks.append(float(angles_deg[i]))
    return peaks
