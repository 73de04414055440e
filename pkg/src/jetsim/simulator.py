"""Data-driven simulation from recorded trajectories.

Given informative data, a smooth target input, and the output initial
derivative values, the weighting trajectory alpha solves a linear implicit ODE
whose coefficient matrix is the reduced data stack (input layers to order L,
output layers to order L-1). The only forcing enters through the top input
block: the order-L weighted input derivative is driven to track the target's
order-(L+1) derivative. The output is then reconstructed as the weighted
order-0 output block.

Two modes share one fixed-step RK4 integrator and one minimum-norm SVD solve
per stage. "explicit" insists the reduced stack keeps full row rank (so the
stage solve is an exact right inverse) and aborts on a rank drop; the
"implicit_lsq" mode tolerates rank-deficient stacks and instead monitors the
per-stage least-squares residual. On full-row-rank data both modes perform
the same arithmetic and agree to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._ode import lstsq_rk4, min_norm_lstsq
from .datamatrix import DataMatrixView, ShiftSpec, hankel_eval, stacked_eval, stacked_eval_many
from .errors import InconsistentInitialConditionsError
from .informativity import InformativityReport
from .representation import AlphaTrajectory
from .signals import (
    JetTrajectory,
    TimeGrid,
    Trajectory,
    build_jet,
    read_jet_csv,
    read_layer_stack_csv,
    read_trajectory_csv,
    truncate_jet,
)

__all__ = [
    "SimulationProblem",
    "SimulationResult",
    "solve_initial_alpha",
    "integrate_explicit",
    "integrate_implicit_lsq",
    "simulate",
    "load_problem",
    "write_result_csv",
]

MODES = ("explicit", "implicit_lsq")


@dataclass
class SimulationProblem:
    """Inputs of one simulation run.

    The data jet must carry input derivative layers up to order L+1 (the
    forcing term needs them); ``ubar_layers`` holds the target input and its
    derivatives, orders 0..L+1 at least, on their own grid. ``y_init`` rows
    are the output derivative values at the simulation start, orders 0..L.
    """

    jet: JetTrajectory
    spec: ShiftSpec
    L: int
    ubar_layers: tuple[Trajectory, ...]
    y_init: np.ndarray
    horizon: float
    step: float
    mode: str = "explicit"
    u_init: np.ndarray | None = None
    t_start: float | None = None
    rel_tol: float = 1e-8
    init_tol: float = 1e-6
    stage_tol: float = 1e-6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be an integer >= 1, got {self.L}")
        self.L = int(self.L)
        if self.jet.L < self.L + 1:
            raise ValueError(
                f"data jet carries derivatives to order {self.jet.L}; "
                f"order {self.L + 1} input layers are required"
            )
        self.ubar_layers = tuple(self.ubar_layers)
        if len(self.ubar_layers) < self.L + 2:
            raise ValueError(
                f"target input needs derivative layers 0..{self.L + 1}, "
                f"got {len(self.ubar_layers)}"
            )
        m = self.jet.m
        for k, lay in enumerate(self.ubar_layers):
            if lay.channels != m:
                raise ValueError(f"target layer {k} has {lay.channels} channels, expected {m}")
            if lay.grid != self.ubar_layers[0].grid:
                raise ValueError("target input layers must share one grid")

        y_init = np.atleast_2d(np.asarray(self.y_init, dtype=float))
        if y_init.shape != (self.L + 1, self.jet.p):
            raise ValueError(
                f"y_init must be ({self.L + 1} x {self.jet.p}) derivative rows, got {y_init.shape}"
            )
        self.y_init = y_init

        if not np.isfinite(self.horizon) or self.horizon < 0.0:
            raise ValueError(f"horizon must be non-negative, got {self.horizon}")
        if not np.isfinite(self.step) or self.step <= 0.0:
            raise ValueError(f"step must be positive, got {self.step}")
        dt = self.jet.grid.dt
        ratio = self.step / dt
        if ratio >= 1.0:
            ok = abs(ratio - round(ratio)) <= 1e-9 * ratio
        else:
            inv = 1.0 / ratio
            ok = abs(inv - round(inv)) <= 1e-9 * inv
        if not ok:
            raise ValueError(
                f"step {self.step!r} and data dt {dt!r} must be related by an integer ratio"
            )

        data_jet = truncate_jet(self.jet, self.L)
        self.data_view = DataMatrixView.full(data_jet, self.spec)
        self.reduced_view = DataMatrixView.reduced(data_jet, self.spec)
        self.forcing_layer = self.jet.u_layer(self.L + 1)

        lo, hi = self.data_view.window(exclude_boundary=True)
        if self.t_start is None:
            self.t_start = lo
        tol = 1e-9 * dt
        # the last node may overshoot a horizon that is not a step multiple
        span_end = self.t_start + self.n_steps * self.step
        if self.t_start < lo - tol or span_end > hi + tol:
            raise ValueError(
                f"simulation span [{self.t_start:.12g}, {span_end:.12g}] "
                f"exceeds the usable data window [{lo:.12g}, {hi:.12g}]"
            )
        ug = self.ubar_layers[0].grid
        if self.t_start < ug.t0 - tol or span_end > ug.t_end + tol:
            raise ValueError("target input layers do not cover the simulation span")

        if self.u_init is None:
            self.u_init = np.vstack(
                [self.ubar_layers[i].eval_at(self.t_start) for i in range(self.L + 1)]
            )
        else:
            u_init = np.atleast_2d(np.asarray(self.u_init, dtype=float))
            if u_init.shape != (self.L + 1, m):
                raise ValueError(
                    f"u_init must be ({self.L + 1} x {m}) derivative rows, got {u_init.shape}"
                )
            self.u_init = u_init

    @property
    def n_steps(self) -> int:
        # A horizon shorter than one step still performs a single step so the
        # result carries a valid (two-node) output grid.
        return max(1, int(round(self.horizon / self.step)))


@dataclass
class SimulationResult:
    """Weighting trajectory plus reconstructed signals and diagnostics."""

    alpha: AlphaTrajectory
    ybar: Trajectory
    ubar_reconstructed: Trajectory
    init_residual: float
    ode_residual_sup: float
    rank_ok: np.ndarray
    stage_residual_sup: float
    input_residual_sup: float
    mode: str

    @property
    def times(self) -> np.ndarray:
        return self.ybar.grid.times()


def solve_initial_alpha(problem: SimulationProblem) -> tuple[np.ndarray, float]:
    """Minimum-norm weighting matching the requested initial derivative values.

    Raises when the requested values are not attainable from the data, i.e.
    the least-squares residual exceeds ``init_tol``: the initial jet is then
    inconsistent with every trajectory the data can represent.
    """
    mat = stacked_eval(problem.data_view, problem.t_start)
    rhs = np.concatenate([problem.u_init.ravel(), problem.y_init.ravel()])
    alpha0, residual, _ = min_norm_lstsq(mat, rhs, problem.rel_tol)
    if residual > problem.init_tol:
        raise InconsistentInitialConditionsError(
            f"initial-condition residual {residual:.3e} exceeds {problem.init_tol:.1e}; "
            "the requested initial values are not admissible for the identified behavior",
            residual=residual,
        )
    return alpha0, residual


def _run(problem: SimulationProblem, mode: str) -> SimulationResult:
    alpha0, init_res = solve_initial_alpha(problem)
    spec = problem.spec
    reduced = problem.reduced_view
    forcing = problem.forcing_layer
    target_top = problem.ubar_layers[problem.L + 1]
    m, L = problem.jet.m, problem.L
    rows = reduced.row_count
    blk = slice(m * L, m * (L + 1))

    def matrix_at(t: float) -> np.ndarray:
        return stacked_eval(reduced, t)

    def rhs_at(t: float, a: np.ndarray) -> np.ndarray:
        r = np.zeros(rows)
        r[blk] = target_top.eval_at(t) - hankel_eval(forcing, spec, t) @ a
        return r

    integ = lstsq_rk4(
        matrix_at,
        rhs_at,
        alpha0,
        problem.t_start,
        problem.step,
        problem.n_steps,
        problem.rel_tol,
        require_full_rank=(mode == "explicit"),
        stage_tol=problem.stage_tol,
    )

    out_grid = TimeGrid(problem.t_start, problem.step, problem.n_steps + 1)
    ts = out_grid.times()
    u0_stack = stacked_eval_many(
        DataMatrixView.from_layers([problem.jet.u_layer(0)], spec), ts
    )
    y0_stack = stacked_eval_many(
        DataMatrixView.from_layers([problem.jet.y_layer(0)], spec), ts
    )
    ubar_rec = np.einsum("rjk,jk->rk", u0_stack, integ.alphas)
    ybar = np.einsum("rjk,jk->rk", y0_stack, integ.alphas)

    target = problem.ubar_layers[0].values_at(ts)
    input_residual = float(np.max(np.abs(ubar_rec - target)))

    alpha = AlphaTrajectory(
        Trajectory(out_grid, integ.alphas),
        Trajectory(out_grid, integ.alpha_dots),
    )
    return SimulationResult(
        alpha=alpha,
        ybar=Trajectory(out_grid, ybar),
        ubar_reconstructed=Trajectory(out_grid, ubar_rec),
        init_residual=init_res,
        ode_residual_sup=integ.node_residual_sup,
        rank_ok=integ.rank_ok,
        stage_residual_sup=integ.stage_residual_sup,
        input_residual_sup=input_residual,
        mode=mode,
    )


def integrate_explicit(problem: SimulationProblem) -> SimulationResult:
    """Simulate insisting on a full-row-rank reduced stack at every stage."""
    return _run(problem, "explicit")


def integrate_implicit_lsq(problem: SimulationProblem) -> SimulationResult:
    """Simulate via per-stage least squares; works without full row rank."""
    return _run(problem, "implicit_lsq")


def simulate(problem: SimulationProblem,
             report: InformativityReport | None = None) -> SimulationResult:
    """Dispatch on the problem mode after an optional informativity gate."""
    if report is not None and not report.informative:
        raise ValueError(
            f"dataset is not informative (verdict={report.verdict}); "
            "pass report=None to skip the gate"
        )
    if problem.mode == "explicit":
        return integrate_explicit(problem)
    return integrate_implicit_lsq(problem)


# ---------------------------------------------------------------------------
# Problem files and result CSV
# ---------------------------------------------------------------------------

def _parse_kv_file(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def _parse_init_rows(text: str) -> np.ndarray:
    rows = [row for row in text.split(";") if row.strip()]
    return np.array([[float(v) for v in row.split(",")] for row in rows])


def load_problem(path, overrides: dict | None = None) -> SimulationProblem:
    """Build a problem from a key-value description file.

    Recognized keys: jet_csv (or data_csv + m + deriv_method), ubar_csv,
    M, T, L, horizon, step, mode, y_init (rows 'a,b;c,d' or y_init_csv),
    u_init (optional, same layout), t_start, rel_tol, init_tol, stage_tol.
    Relative paths resolve against the file's directory.
    """
    import os

    cfg = _parse_kv_file(path)
    if overrides:
        cfg.update({k: str(v) for k, v in overrides.items() if v is not None})
    base = os.path.dirname(os.path.abspath(path))

    def respath(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    L = int(cfg["L"])
    if "jet_csv" in cfg:
        jet = read_jet_csv(respath(cfg["jet_csv"]))
    elif "data_csv" in cfg:
        m = int(cfg["m"])
        data = read_trajectory_csv(respath(cfg["data_csv"]))
        if data.channels <= m:
            raise ValueError("data_csv must hold the input channels followed by the outputs")
        u = Trajectory(data.grid, data.values[:m])
        y = Trajectory(data.grid, data.values[m:])
        jet = build_jet(u, y, L + 1, method=cfg.get("deriv_method", "central4"))
    else:
        raise ValueError(f"{path}: needs jet_csv or data_csv")

    ubar_layers = read_layer_stack_csv(respath(cfg["ubar_csv"]), name="u")

    if "y_init" in cfg:
        y_init = _parse_init_rows(cfg["y_init"])
    elif "y_init_csv" in cfg:
        y_init = np.loadtxt(respath(cfg["y_init_csv"]), delimiter=",", ndmin=2)
    else:
        raise ValueError(f"{path}: needs y_init or y_init_csv")

    u_init = None
    if "u_init" in cfg:
        u_init = _parse_init_rows(cfg["u_init"])
    elif "u_init_csv" in cfg:
        u_init = np.loadtxt(respath(cfg["u_init_csv"]), delimiter=",", ndmin=2)

    kwargs = {}
    for key in ("rel_tol", "init_tol", "stage_tol"):
        if key in cfg:
            kwargs[key] = float(cfg[key])
    if "t_start" in cfg:
        kwargs["t_start"] = float(cfg["t_start"])

    return SimulationProblem(
        jet=jet,
        spec=ShiftSpec(int(cfg["M"]), float(cfg["T"])),
        L=L,
        ubar_layers=ubar_layers,
        y_init=y_init,
        horizon=float(cfg["horizon"]),
        step=float(cfg["step"]),
        mode=cfg.get("mode", "explicit"),
        u_init=u_init,
        **kwargs,
    )


def write_result_csv(result: SimulationResult, path) -> None:
    """Columns: t, alpha_0..alpha_M, ubar_rec_*, ybar_*."""
    alphas = result.alpha.inner.values
    urec = result.ubar_reconstructed.values
    ybar = result.ybar.values
    names = ["t"]
    names += [f"alpha_{j}" for j in range(alphas.shape[0])]
    names += [f"ubar_rec_{c + 1}" for c in range(urec.shape[0])]
    names += [f"ybar_{c + 1}" for c in range(ybar.shape[0])]
    ts = result.times
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for k in range(ts.size):
            vals = [ts[k], *alphas[:, k], *urec[:, k], *ybar[:, k]]
            fh.write(",".join("%.17g" % v for v in vals) + "\n")
