"""Lazy evaluation of time-shifted data matrices over jets and layer stacks.

The central object maps a time t to the matrix whose column j holds the
selected signal layers evaluated at t + j*T. Matrices are assembled on demand
and never materialized over the whole record.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import OutOfDomainError
from .signals import JetTrajectory, TimeGrid, Trajectory, SNAP_REL

__all__ = [
    "ShiftSpec",
    "DataMatrixView",
    "hankel_eval",
    "stacked_eval",
    "stacked_eval_many",
    "apply_alpha",
    "suggest_num_shifts",
    "dump_matrix_csv",
]


@dataclass(frozen=True)
class ShiftSpec:
    """Shift pattern: matrix columns sample a signal at t + j*T for j = 0..M."""

    M: int
    T: float

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 0:
            raise ValueError(f"M must be a non-negative integer, got {self.M}")
        object.__setattr__(self, "M", int(self.M))
        if not (np.isfinite(self.T) and self.T > 0.0):
            raise ValueError(f"T must be positive and finite, got {self.T}")

    @property
    def columns(self) -> int:
        return self.M + 1

    def offsets(self) -> np.ndarray:
        return self.T * np.arange(self.M + 1)


@dataclass(frozen=True, eq=False)
class DataMatrixView:
    """Ordered stack of shifted signal layers, evaluated lazily in time.

    ``layers`` lists the row blocks top to bottom. Views built from a jet keep
    the jet and the selected layer indices so callers can recover channel
    structure (m, p, L) and the estimated-derivative boundary band.
    """

    layers: tuple[Trajectory, ...]
    spec: ShiftSpec
    jet: JetTrajectory | None = None
    row_selector: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("at least one layer is required")
        g = self.layers[0].grid
        for lay in self.layers:
            if lay.grid != g:
                raise ValueError("all layers must share one time grid")
        steps = self.spec.T / g.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, abs(steps)):
            raise ValueError(
                f"shift T={self.spec.T!r} must be an integer multiple of the grid dt={g.dt!r}"
            )
        if g.t_end - self.spec.M * self.spec.T < g.t0 - SNAP_REL * g.dt:
            raise ValueError(
                f"window [{g.t0}, {g.t_end} - {self.spec.M}*{self.spec.T}] is empty; "
                "reduce M*T or record more data"
            )
        if self.row_selector is not None:
            object.__setattr__(self, "row_selector", tuple(self.row_selector))

    @classmethod
    def full(cls, jet: JetTrajectory, spec: ShiftSpec) -> "DataMatrixView":
        """All jet layers in order (u, .., u^(L), y, .., y^(L))."""
        sel = tuple(range(2 * (jet.L + 1)))
        return cls(jet.layers, spec, jet=jet, row_selector=sel)

    @classmethod
    def reduced(cls, jet: JetTrajectory, spec: ShiftSpec) -> "DataMatrixView":
        """Input layers to order L and output layers to order L-1."""
        if jet.L < 1:
            raise ValueError("reduced stack needs jet order >= 1")
        sel = tuple(range(jet.L + 1)) + tuple(jet.L + 1 + i for i in range(jet.L))
        return cls(tuple(jet.layers[i] for i in sel), spec, jet=jet, row_selector=sel)

    @classmethod
    def from_layers(cls, layers: Sequence[Trajectory], spec: ShiftSpec) -> "DataMatrixView":
        """Stack arbitrary layers (e.g. a latent-signal derivative stack)."""
        return cls(tuple(layers), spec)

    @property
    def grid(self) -> TimeGrid:
        return self.layers[0].grid

    @property
    def row_count(self) -> int:
        return sum(lay.channels for lay in self.layers)

    @property
    def block_channels(self) -> tuple[int, ...]:
        return tuple(lay.channels for lay in self.layers)

    @property
    def boundary_band(self) -> int:
        return self.jet.boundary_band if self.jet is not None else 0

    def is_full_selector(self) -> bool:
        return (
            self.jet is not None
            and self.row_selector == tuple(range(2 * (self.jet.L + 1)))
        )

    def window(self, exclude_boundary: bool = False) -> tuple[float, float]:
        """Usable evaluation interval [lo, hi] for the leading column time."""
        g = self.grid
        pad = self.boundary_band * g.dt if exclude_boundary else 0.0
        return (g.t0 + pad, g.t_end - self.spec.M * self.spec.T - pad)

    def shift_times(self, t: float) -> np.ndarray:
        return t + self.spec.offsets()

    def eval(self, t: float) -> np.ndarray:
        return stacked_eval(self, t)


def _check_window(grid: TimeGrid, spec: ShiftSpec, t: float) -> None:
    tol = SNAP_REL * grid.dt
    if t < grid.t0 - tol or t + spec.M * spec.T > grid.t_end + tol:
        raise OutOfDomainError(
            f"evaluation window [{t:.12g}, {t:.12g} + {spec.M}*{spec.T:.12g}] "
            f"exceeds data domain [{grid.t0:.12g}, {grid.t_end:.12g}]"
        )


def hankel_eval(traj: Trajectory, spec: ShiftSpec, t: float) -> np.ndarray:
    """Matrix with column j = traj(t + j*T); shape (channels, M+1)."""
    _check_window(traj.grid, spec, t)
    return traj.values_at(t + spec.offsets())


def stacked_eval(view: DataMatrixView, t: float) -> np.ndarray:
    """Vertical stack of hankel_eval over the view's layers; shape (rows, M+1)."""
    _check_window(view.grid, view.spec, t)
    times = t + view.spec.offsets()
    return np.vstack([lay.values_at(times) for lay in view.layers])


def stacked_eval_many(view: DataMatrixView, ts) -> np.ndarray:
    """Evaluate the stack at many times at once; shape (rows, M+1, len(ts))."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    for t in (ts.min(), ts.max()):
        _check_window(view.grid, view.spec, float(t))
    offs = view.spec.offsets()
    flat = (ts[None, :] + offs[:, None]).ravel()
    blocks = []
    for lay in view.layers:
        vals = lay.values_at(flat).reshape(lay.channels, offs.size, ts.size)
        blocks.append(vals)
    return np.concatenate(blocks, axis=0)


def apply_alpha(view: DataMatrixView, alpha: Trajectory, t: float) -> np.ndarray:
    """Product of the evaluated stack with a weighting trajectory at time t."""
    if alpha.channels != view.spec.columns:
        raise ValueError(
            f"alpha has {alpha.channels} channels but the stack has {view.spec.columns} columns"
        )
    return stacked_eval(view, t) @ alpha.eval_at(t)


def suggest_num_shifts(m: int, L: int, n: int, margin: int = 5) -> int:
    """Smallest M giving m(L+1)+n+margin columns; a practical default."""
    return m * (L + 1) + n + margin - 1


def dump_matrix_csv(matrix: np.ndarray, path) -> None:
    """Row-major CSV dump of an evaluated matrix, 17 significant digits."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        for row in matrix:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
