"""Fixed-step RK4 for implicit linear ODEs M(t) a' = r(t, a).

Each stage solves the linear system by minimum-norm least squares through a
truncated SVD. In full-rank mode a rank drop aborts the run; otherwise the
per-stage residual is monitored against a tolerance. Coefficients are
re-evaluated at every stage time so the scheme keeps fourth order for
time-varying systems.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import RankDeficiencyError, StageFailureError

__all__ = ["LstsqIntegration", "lstsq_rk4", "min_norm_lstsq"]


def min_norm_lstsq(matrix: np.ndarray, rhs: np.ndarray, rel_tol: float):
    """Minimum-norm least-squares solution with singular values below
    rel_tol * sigma_1 truncated. Returns (solution, residual_2norm, rank)."""
    u_svd, s, vt = np.linalg.svd(matrix, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        rank = 0
        sol = np.zeros(matrix.shape[1])
    else:
        rank = int(np.count_nonzero(s > rel_tol * s[0]))
        coeffs = (u_svd[:, :rank].T @ rhs) / s[:rank]
        sol = vt[:rank].T @ coeffs
    residual = float(np.linalg.norm(matrix @ sol - rhs))
    return sol, residual, rank


@dataclass
class LstsqIntegration:
    times: np.ndarray         # node times, shape (steps+1,)
    alphas: np.ndarray        # node states, shape (dim, steps+1)
    alpha_dots: np.ndarray    # node derivatives, shape (dim, steps+1)
    rank_ok: np.ndarray       # full-row-rank flag per node
    stage_residual_sup: float # sup of least-squares residuals over all stages
    node_residual_sup: float  # sup of ||M a' - r|| over the stored nodes


def lstsq_rk4(
    matrix_at: Callable[[float], np.ndarray],
    rhs_at: Callable[[float, np.ndarray], np.ndarray],
    alpha0: np.ndarray,
    t0: float,
    step: float,
    n_steps: int,
    rel_tol: float,
    require_full_rank: bool,
    stage_tol: float,
) -> LstsqIntegration:
    if step <= 0.0:
        raise ValueError("step must be positive")
    if n_steps < 1:
        raise ValueError("need at least one step")
    alpha0 = np.asarray(alpha0, dtype=float)
    dim = alpha0.size

    stage_sup = 0.0

    def stage(t: float, a: np.ndarray):
        nonlocal stage_sup
        mat = matrix_at(t)
        rhs = rhs_at(t, a)
        sol, residual, rank = min_norm_lstsq(mat, rhs, rel_tol)
        full = rank == mat.shape[0]
        if require_full_rank and not full:
            raise RankDeficiencyError(
                f"coefficient matrix rank {rank} < {mat.shape[0]} rows at t={t:.6g}",
                time=t,
            )
        if not require_full_rank and residual > stage_tol:
            raise StageFailureError(
                f"stage residual {residual:.3e} exceeds {stage_tol:.1e} at t={t:.6g}",
                time=t,
                residual=residual,
            )
        stage_sup = max(stage_sup, residual)
        return sol, full, residual

    times = t0 + step * np.arange(n_steps + 1)
    alphas = np.empty((dim, n_steps + 1))
    alpha_dots = np.empty((dim, n_steps + 1))
    rank_ok = np.zeros(n_steps + 1, dtype=bool)
    node_sup = 0.0

    alphas[:, 0] = alpha0
    half = 0.5 * step
    for k in range(n_steps):
        t = times[k]
        a = alphas[:, k]
        k1, full1, res1 = stage(t, a)
        k2, _, _ = stage(t + half, a + half * k1)
        k3, _, _ = stage(t + half, a + half * k2)
        k4, _, _ = stage(t + step, a + step * k3)
        alphas[:, k + 1] = a + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        alpha_dots[:, k] = k1
        rank_ok[k] = full1
        node_sup = max(node_sup, res1)

    kf, fullf, resf = stage(times[-1], alphas[:, -1])
    alpha_dots[:, -1] = kf
    rank_ok[-1] = fullf
    node_sup = max(node_sup, resf)

    return LstsqIntegration(
        times=times,
        alphas=alphas,
        alpha_dots=alpha_dots,
        rank_ok=rank_ok,
        stage_residual_sup=stage_sup,
        node_residual_sup=node_sup,
    )
