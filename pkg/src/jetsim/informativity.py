"""Rank analysis of stacked data matrices.

Decides whether a dataset pins down its generating behavior by probing the
numerical rank of the stacked jet matrix over a set of times, and checks the
full-row-rank property of the reduced stack used by the explicit simulator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamatrix import DataMatrixView, stacked_eval

__all__ = [
    "numerical_rank",
    "InformativityReport",
    "FullRowRankReport",
    "check_informativity",
    "check_full_row_rank",
    "default_sample_times",
]

DEFAULT_REL_TOL = 1e-8

# A singular value within this factor of the rank threshold, on either side,
# marks the time as marginal.
_MARGINAL_FACTOR = 10.0


def numerical_rank(matrix: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> int:
    """Count singular values above rel_tol times the largest one."""
    matrix = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix must be finite")
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    if matrix.size == 0:
        return 0
    s = np.linalg.svd(matrix, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


def default_sample_times(view: DataMatrixView, count: int = 20) -> np.ndarray:
    """Equispaced probe times over the usable window, excluding the band where
    estimated derivative layers are degraded."""
    lo, hi = view.window(exclude_boundary=True)
    if hi < lo:
        raise ValueError("no usable window left after excluding the boundary band")
    return np.linspace(lo, hi, count)


def _sigma_ratios(s: np.ndarray, r: int) -> tuple[float, float]:
    """(sigma_r / sigma_1, sigma_{r+1} / sigma_1) with zeros past the spectrum."""
    if s.size == 0 or s[0] == 0.0:
        return 0.0, 0.0
    s1 = s[0]
    ratio_r = float(s[r - 1] / s1) if 0 < r <= s.size else 0.0
    ratio_r1 = float(s[r] / s1) if r < s.size else 0.0
    return ratio_r, ratio_r1


@dataclass
class InformativityReport:
    """Per-time rank probe results against the required rank m(L+1)+n."""

    times: np.ndarray
    ranks: np.ndarray
    required_rank: int
    sigma_r_ratio: np.ndarray
    sigma_r1_ratio: np.ndarray
    marginal: np.ndarray
    verdict: str
    annihilator_basis: np.ndarray | None
    rel_tol: float

    @property
    def informative(self) -> bool:
        return self.verdict == "informative"

    def summary(self) -> str:
        ranks = np.unique(self.ranks)
        return (
            f"verdict={self.verdict} required_rank={self.required_rank} "
            f"observed_ranks={','.join(str(r) for r in ranks)} "
            f"times_checked={self.times.size}"
        )

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,rank,sigma_r_over_sigma_1,sigma_r1_over_sigma_1,marginal\n")
            for k in range(self.times.size):
                fh.write(
                    "%.17g,%d,%.17g,%.17g,%d\n"
                    % (
                        self.times[k],
                        self.ranks[k],
                        self.sigma_r_ratio[k],
                        self.sigma_r1_ratio[k],
                        int(self.marginal[k]),
                    )
                )


def check_informativity(
    view: DataMatrixView,
    n: int,
    sample_times=None,
    rel_tol: float = DEFAULT_REL_TOL,
    num_times: int = 20,
) -> InformativityReport:
    """Probe the stacked jet matrix rank at several times.

    The dataset is judged informative when every probed time reaches rank
    m(L+1)+n, with n the minimal state dimension supplied by the caller. When
    it does, the left-null-space basis at the first probe time is attached as
    the annihilator estimate.
    """
    if view.jet is None or not view.is_full_selector():
        raise ValueError("informativity check requires a full-selector jet view")
    if int(n) != n or n < 1:
        raise ValueError(f"state dimension n must be a positive integer, got {n}")
    if sample_times is None:
        sample_times = default_sample_times(view, num_times)
    times = np.atleast_1d(np.asarray(sample_times, dtype=float))
    if times.size == 0:
        raise ValueError("sample_times must be non-empty")

    required = view.jet.m * (view.jet.L + 1) + int(n)
    ranks = np.zeros(times.size, dtype=int)
    ratio_r = np.zeros(times.size)
    ratio_r1 = np.zeros(times.size)
    marginal = np.zeros(times.size, dtype=bool)
    first_u = None
    first_rank = 0
    for k, t in enumerate(times):
        mat = stacked_eval(view, float(t))
        u_svd, s, _ = np.linalg.svd(mat)
        if s[0] == 0.0:
            ranks[k] = 0
        else:
            thr = rel_tol * s[0]
            ranks[k] = int(np.count_nonzero(s > thr))
            marginal[k] = bool(
                np.any((s > thr / _MARGINAL_FACTOR) & (s < thr * _MARGINAL_FACTOR))
            )
        ratio_r[k], ratio_r1[k] = _sigma_ratios(s, required)
        if k == 0:
            first_u = u_svd
            first_rank = ranks[0]

    if not np.all(ranks == ranks[0]):
        verdict = "rank_inconstant"
    elif ranks[0] == required:
        verdict = "informative"
    else:
        verdict = "not_informative"

    annihilator = None
    if verdict == "informative" and first_u is not None:
        annihilator = first_u[:, first_rank:].T.copy()

    return InformativityReport(
        times=times,
        ranks=ranks,
        required_rank=required,
        sigma_r_ratio=ratio_r,
        sigma_r1_ratio=ratio_r1,
        marginal=marginal,
        verdict=verdict,
        annihilator_basis=annihilator,
        rel_tol=rel_tol,
    )


@dataclass
class FullRowRankReport:
    """Per-time full-row-rank probe of a reduced stack."""

    times: np.ndarray
    ranks: np.ndarray
    row_count: int
    full_row_rank: np.ndarray
    rel_tol: float

    @property
    def all_full(self) -> bool:
        return bool(np.all(self.full_row_rank))


def check_full_row_rank(
    view: DataMatrixView,
    sample_times=None,
    rel_tol: float = DEFAULT_REL_TOL,
    num_times: int = 20,
) -> FullRowRankReport:
    """Check whether the stack keeps full row rank at each probe time."""
    if sample_times is None:
        sample_times = default_sample_times(view, num_times)
    times = np.atleast_1d(np.asarray(sample_times, dtype=float))
    if times.size == 0:
        raise ValueError("sample_times must be non-empty")
    rows = view.row_count
    ranks = np.array([numerical_rank(stacked_eval(view, float(t)), rel_tol) for t in times])
    return FullRowRankReport(
        times=times,
        ranks=ranks,
        row_count=rows,
        full_row_rank=ranks == rows,
        rel_tol=rel_tol,
    )
