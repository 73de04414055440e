"""Candidate jets from weighting trajectories and admissibility checks.

A weighting trajectory alpha turns the evaluated data stack into a candidate
jet. The candidate is admissible exactly when either of two equivalent
families of differential conditions holds: the derivative of each weighted
block advances to the next block, or equivalently every non-top block
annihilates the derivative of alpha. Both are checked as residuals with
explicit tolerances; the two families are tied together by the product rule,
and the reported gap between them isolates numerical differentiation error.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._ode import lstsq_rk4, min_norm_lstsq
from .datamatrix import DataMatrixView, hankel_eval, stacked_eval_many
from .errors import InconsistentInitialConditionsError, OutOfDomainError
from .signals import JetTrajectory, TimeGrid, Trajectory, differentiate

__all__ = [
    "AlphaTrajectory",
    "ConditionRecord",
    "ConditionReport",
    "generate_jet",
    "check_conditions",
    "check_latent_conditions",
    "check_state_conditions",
    "StateAlphaResult",
    "solve_state_alpha",
]


@dataclass(frozen=True, eq=False)
class AlphaTrajectory:
    """Weighting trajectory with an optional first-derivative layer.

    The derivative layer is what makes the smoothness claim checkable: it is
    exact when alpha comes from an ODE solve (the right-hand side is stored
    directly) and estimated otherwise.
    """

    inner: Trajectory
    derivative: Trajectory | None = None

    def __post_init__(self):
        if self.derivative is not None:
            if self.derivative.grid != self.inner.grid:
                raise ValueError("derivative layer must share the weighting grid")
            if self.derivative.channels != self.inner.channels:
                raise ValueError("derivative layer must match the channel count")

    @property
    def channels(self) -> int:
        return self.inner.channels

    @property
    def smoothness(self) -> str:
        return "c1_verified" if self.derivative is not None else "unverified"

    def value_at(self, t: float) -> np.ndarray:
        return self.inner.eval_at(t)

    def derivative_at(self, t: float) -> np.ndarray:
        if self.derivative is None:
            raise ValueError("alpha has no derivative layer (smoothness unverified)")
        return self.derivative.eval_at(t)

    @classmethod
    def constant(cls, vector, grid: TimeGrid) -> "AlphaTrajectory":
        """Constant weighting; its derivative layer is exactly zero."""
        vec = np.asarray(vector, dtype=float).reshape(-1)
        vals = np.tile(vec[:, None], (1, grid.count))
        return cls(Trajectory(grid, vals), Trajectory(grid, np.zeros_like(vals)))

    @classmethod
    def with_estimated_derivative(cls, inner: Trajectory, method: str = "central4") -> "AlphaTrajectory":
        return cls(inner, differentiate(inner, 1, method))


@dataclass(frozen=True)
class ConditionRecord:
    """Residuals of both condition families for one block pair at one time."""

    time: float
    order: int
    family: str
    rows: int
    condition2: float
    condition3: float
    leibniz_gap: float


@dataclass
class ConditionReport:
    records: tuple[ConditionRecord, ...]
    tol: float

    @property
    def condition2_max(self) -> float:
        return max((r.condition2 for r in self.records), default=0.0)

    @property
    def condition3_max(self) -> float:
        return max((r.condition3 for r in self.records), default=0.0)

    @property
    def leibniz_gap_max(self) -> float:
        return max((r.leibniz_gap for r in self.records), default=0.0)

    @property
    def max_residual(self) -> float:
        return max(self.condition2_max, self.condition3_max)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,i,family,rows,residual\n")
            for r in self.records:
                fh.write("%.17g,%d,%s.cond2,%d,%.17g\n" % (r.time, r.order, r.family, r.rows, r.condition2))
                fh.write("%.17g,%d,%s.cond3,%d,%.17g\n" % (r.time, r.order, r.family, r.rows, r.condition3))


def _require_c1(alpha: AlphaTrajectory) -> None:
    if alpha.smoothness != "c1_verified":
        raise ValueError("alpha must be c1_verified (attach or estimate a derivative layer)")


def _check_alpha_channels(view: DataMatrixView, alpha: AlphaTrajectory) -> None:
    if alpha.channels != view.spec.columns:
        raise ValueError(
            f"alpha has {alpha.channels} channels but the stack has {view.spec.columns} columns"
        )


def generate_jet(view: DataMatrixView, alpha: AlphaTrajectory, eval_grid: TimeGrid) -> JetTrajectory:
    """Candidate jet: every stacked block evaluated against alpha over a grid.

    No admissibility is implied; run a condition check for that.
    """
    if view.jet is None or not view.is_full_selector():
        raise ValueError("candidate jets are generated from a full-selector jet view")
    _check_alpha_channels(view, alpha)
    lo, hi = view.window()
    tol = 1e-9 * view.grid.dt
    if eval_grid.t0 < lo - tol or eval_grid.t_end > hi + tol:
        raise OutOfDomainError(
            f"evaluation grid [{eval_grid.t0:.12g}, {eval_grid.t_end:.12g}] exceeds "
            f"the usable window [{lo:.12g}, {hi:.12g}]"
        )
    ts = eval_grid.times()
    avals = alpha.inner.values_at(ts)  # (M+1, K)
    stacks = stacked_eval_many(view, ts)  # (rows, M+1, K)
    combined = np.einsum("rjk,jk->rk", stacks, avals)
    jet = view.jet
    layers = []
    offset = 0
    for lay in view.layers:
        layers.append(Trajectory(eval_grid, combined[offset: offset + lay.channels]))
        offset += lay.channels
    return JetTrajectory(jet.m, jet.p, jet.L, tuple(layers))


def _condition_records(
    view: DataMatrixView,
    pairs: Sequence[tuple[int, int, str]],
    alpha: AlphaTrajectory,
    probe_times,
    tol: float,
) -> ConditionReport:
    """Shared residual machinery for all three condition checkers.

    For each (lower, upper) block pair the first family compares a central
    finite-difference derivative of (block @ alpha) with (upper block @ alpha);
    the second family is (lower block @ alpha'). Their difference is the
    product-rule identity and isolates differentiation error.
    """
    _require_c1(alpha)
    _check_alpha_channels(view, alpha)
    times = np.atleast_1d(np.asarray(probe_times, dtype=float))
    if times.size == 0:
        raise ValueError("probe_times must be non-empty")
    dt = view.grid.dt
    spec = view.spec
    lo, hi = view.window()
    records = []
    fd_offsets = np.array([-2.0, -1.0, 1.0, 2.0]) * dt
    fd_weights = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * dt)
    for t in times:
        if t + fd_offsets[0] < lo - 1e-9 * dt or t + fd_offsets[-1] > hi + 1e-9 * dt:
            raise OutOfDomainError(
                f"probe t={t:.12g} too close to the window edge for the derivative stencil"
            )
        a_t = alpha.value_at(t)
        ad_t = alpha.derivative_at(t)
        a_off = [alpha.value_at(t + o) for o in fd_offsets]
        for (idx_lo, idx_hi, family) in pairs:
            lay_lo = view.layers[idx_lo]
            lay_hi = view.layers[idx_hi]
            g_off = [
                hankel_eval(lay_lo, spec, t + o) @ a for o, a in zip(fd_offsets, a_off)
            ]
            dg = sum(w * g for w, g in zip(fd_weights, g_off))
            advance = hankel_eval(lay_hi, spec, t) @ a_t
            hold = hankel_eval(lay_lo, spec, t) @ ad_t
            cond2 = float(np.max(np.abs(dg - advance)))
            cond3 = float(np.max(np.abs(hold)))
            gap = float(np.max(np.abs(dg - advance - hold)))
            records.append(
                ConditionRecord(
                    time=float(t),
                    order=idx_lo if view.jet is None else _order_of(view, idx_lo),
                    family=family,
                    rows=lay_lo.channels,
                    condition2=cond2,
                    condition3=cond3,
                    leibniz_gap=gap,
                )
            )
    return ConditionReport(records=tuple(records), tol=tol)


def _order_of(view: DataMatrixView, layer_idx: int) -> int:
    L = view.jet.L
    return layer_idx if layer_idx <= L else layer_idx - (L + 1)


def check_conditions(
    view: DataMatrixView,
    alpha: AlphaTrajectory,
    probe_times,
    tol: float = 1e-6,
) -> ConditionReport:
    """Admissibility conditions for a candidate generated from an input-output
    jet view: both families for derivative orders 0..L-1 on both signals."""
    if view.jet is None or not view.is_full_selector():
        raise ValueError("check_conditions requires a full-selector jet view")
    L = view.jet.L
    if L < 1:
        raise ValueError("conditions are empty for a jet of order 0")
    pairs = [(i, i + 1, "u") for i in range(L)]
    pairs += [(L + 1 + i, L + 2 + i, "y") for i in range(L)]
    return _condition_records(view, pairs, alpha, probe_times, tol)


def check_latent_conditions(
    latent_view: DataMatrixView,
    alpha: AlphaTrajectory,
    probe_times,
    tol: float = 1e-6,
) -> ConditionReport:
    """Same conditions expressed on a latent-signal derivative stack (layers
    ordered by derivative order 0..L)."""
    if len(latent_view.layers) < 2:
        raise ValueError("latent stack needs at least orders 0 and 1")
    pairs = [(i, i + 1, "l") for i in range(len(latent_view.layers) - 1)]
    return _condition_records(latent_view, pairs, alpha, probe_times, tol)


def check_state_conditions(
    state_view: DataMatrixView,
    alpha: AlphaTrajectory,
    probe_times,
    tol: float = 1e-6,
) -> ConditionReport:
    """Conditions on an input-state stack (u, u', x, x'), i.e. the order-1 jet
    of the pair (u, x)."""
    if state_view.jet is None or not state_view.is_full_selector() or state_view.jet.L != 1:
        raise ValueError("state conditions require a full-selector order-1 (u, x) jet view")
    pairs = [(0, 1, "u"), (2, 3, "x")]
    return _condition_records(state_view, pairs, alpha, probe_times, tol)


@dataclass
class StateAlphaResult:
    alpha: AlphaTrajectory
    init_residual: float
    stage_residual_sup: float


def solve_state_alpha(
    state_view: DataMatrixView,
    ubar: Trajectory,
    ubar_dot: Trajectory,
    x0_target,
    horizon: float,
    step: float,
    t_start: float | None = None,
    rel_tol: float = 1e-8,
    init_tol: float = 1e-6,
    stage_tol: float = 1e-6,
) -> StateAlphaResult:
    """Weighting trajectory for the state-measurement formulation.

    Integrates the implicit system whose upper block forces the weighted input
    derivative to track the target and whose lower (state) block derivative is
    zero; the initial weighting matches the target input value and initial
    state by least squares.
    """
    if state_view.jet is None or not state_view.is_full_selector() or state_view.jet.L != 1:
        raise ValueError("solve_state_alpha requires a full-selector order-1 (u, x) jet view")
    jet = state_view.jet
    m, nx = jet.m, jet.p
    u0, u1, x0_layer = jet.layers[0], jet.layers[1], jet.layers[2]
    spec = state_view.spec
    lo, hi = state_view.window(exclude_boundary=True)
    if t_start is None:
        t_start = lo
    if t_start < lo - 1e-9 * jet.grid.dt or t_start + horizon > hi + 1e-9 * jet.grid.dt:
        raise OutOfDomainError(
            f"simulation span [{t_start:.12g}, {t_start + horizon:.12g}] exceeds "
            f"the usable window [{lo:.12g}, {hi:.12g}]"
        )
    x0_target = np.asarray(x0_target, dtype=float).reshape(nx)

    def matrix_at(t: float) -> np.ndarray:
        return np.vstack([hankel_eval(u0, spec, t), hankel_eval(x0_layer, spec, t)])

    def rhs_at(t: float, a: np.ndarray) -> np.ndarray:
        top = ubar_dot.eval_at(t) - hankel_eval(u1, spec, t) @ a
        return np.concatenate([top, np.zeros(nx)])

    rhs0 = np.concatenate([ubar.eval_at(t_start), x0_target])
    alpha0, init_res, _ = min_norm_lstsq(matrix_at(t_start), rhs0, rel_tol)
    if init_res > init_tol:
        raise InconsistentInitialConditionsError(
            f"initial weighting residual {init_res:.3e} exceeds {init_tol:.1e}",
            residual=init_res,
        )
    n_steps = max(1, int(round(horizon / step)))
    integ = lstsq_rk4(matrix_at, rhs_at, alpha0, t_start, step, n_steps,
                      rel_tol, require_full_rank=False, stage_tol=stage_tol)
    out_grid = TimeGrid(t_start, step, n_steps + 1)
    alpha = AlphaTrajectory(
        Trajectory(out_grid, integ.alphas),
        Trajectory(out_grid, integ.alpha_dots),
    )
    return StateAlphaResult(alpha=alpha, init_residual=init_res,
                            stage_residual_sup=integ.stage_residual_sup)
