"""Uniformly sampled continuous-time signals and their derivative stacks.

A signal is stored channel-major on a uniform time grid and evaluated at
arbitrary times by piecewise-polynomial interpolation. Derivative layers are
either supplied in closed form or estimated with fourth-order finite
differences, and a signal pair plus its derivatives up to a requested order
is bundled into a jet.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InsufficientDataError, OutOfDomainError

__all__ = [
    "TimeGrid",
    "Trajectory",
    "JetTrajectory",
    "differentiate",
    "build_jet",
    "truncate_jet",
    "stencil_boundary_band",
    "read_trajectory_csv",
    "write_trajectory_csv",
    "read_jet_csv",
    "write_jet_csv",
    "read_layer_stack_csv",
    "write_layer_stack_csv",
]

# Times within this fraction of dt of a sample are treated as that sample, so
# grid-aligned evaluation returns stored values bit-exactly.
SNAP_REL = 1e-9

_FMT = "%.17g"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling grid with samples at t0 + k*dt, k = 0..count-1."""

    t0: float
    dt: float
    count: int

    def __post_init__(self):
        if not np.isfinite(self.t0):
            raise ValueError("grid start must be finite")
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if int(self.count) != self.count or self.count < 2:
            raise ValueError(f"count must be an integer >= 2, got {self.count}")
        object.__setattr__(self, "count", int(self.count))

    @property
    def t_end(self) -> float:
        return self.t0 + (self.count - 1) * self.dt

    @property
    def duration(self) -> float:
        return (self.count - 1) * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.count)

    def contains(self, t: float) -> bool:
        tol = SNAP_REL * self.dt
        return (t >= self.t0 - tol) and (t <= self.t_end + tol)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Multichannel signal sampled on a :class:`TimeGrid`.

    ``values`` is channel-major with shape (channels, grid.count). Evaluation
    at a grid point reproduces the stored sample exactly; off-grid times use
    piecewise-polynomial interpolation of degree ``interp_order`` (1 or 3).
    Instances are immutable and safe to share.
    """

    grid: TimeGrid
    values: np.ndarray
    interp_order: int = 3

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[None, :]
        if vals.ndim != 2:
            raise ValueError(f"values must be 2-D (channels x samples), got ndim={vals.ndim}")
        if vals.shape[1] != self.grid.count:
            raise ValueError(
                f"values has {vals.shape[1]} columns but the grid holds {self.grid.count} samples"
            )
        if vals.shape[0] < 1:
            raise ValueError("at least one channel is required")
        if not np.all(np.isfinite(vals)):
            raise ValueError("samples must be finite")
        if self.interp_order not in (1, 3):
            raise ValueError(f"interp_order must be 1 or 3, got {self.interp_order}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @cached_property
    def _spline(self):
        # Cubic needs at least 4 samples; shorter records fall back to linear.
        if self.interp_order == 1 or self.grid.count < 4:
            return None
        return CubicSpline(self.grid.times(), self.values, axis=1)

    def values_at(self, ts) -> np.ndarray:
        """Evaluate all channels at an array of times; returns (channels, len(ts))."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        g = self.grid
        tol = SNAP_REL * g.dt
        if ts.size:
            lo, hi = ts.min(), ts.max()
            if lo < g.t0 - tol or hi > g.t_end + tol:
                bad = lo if lo < g.t0 - tol else hi
                raise OutOfDomainError(
                    f"t={bad:.12g} outside trajectory domain [{g.t0:.12g}, {g.t_end:.12g}]"
                )
        idx = np.rint((ts - g.t0) / g.dt).astype(int)
        np.clip(idx, 0, g.count - 1, out=idx)
        aligned = np.abs(ts - (g.t0 + idx * g.dt)) <= tol
        out = np.empty((self.channels, ts.size))
        if aligned.any():
            out[:, aligned] = self.values[:, idx[aligned]]
        rest = ~aligned
        if rest.any():
            spline = self._spline
            if spline is None:
                grid_times = g.times()
                for c in range(self.channels):
                    out[c, rest] = np.interp(ts[rest], grid_times, self.values[c])
            else:
                out[:, rest] = spline(ts[rest])
        return out

    def eval_at(self, t: float) -> np.ndarray:
        """Evaluate all channels at a single time; returns shape (channels,)."""
        return self.values_at([float(t)])[:, 0]


# Fourth-order first-derivative stencils. Offsets for the interior stencil are
# (-2, -1, 0, 1, 2); the one-sided stencils cover the first/last five samples.
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def _ddt_central4(vals: np.ndarray, dt: float) -> np.ndarray:
    if vals.shape[1] < 5:
        raise InsufficientDataError(
            f"central4 needs at least 5 samples, got {vals.shape[1]}"
        )
    out = np.empty_like(vals)
    out[:, 2:-2] = (
        vals[:, :-4] - 8.0 * vals[:, 1:-3] + 8.0 * vals[:, 3:-1] - vals[:, 4:]
    ) / (12.0 * dt)
    head = vals[:, :5]
    tail = vals[:, -5:]
    out[:, 0] = head @ _EDGE0 / dt
    out[:, 1] = head @ _EDGE1 / dt
    out[:, -2] = -(tail @ _EDGE1[::-1]) / dt
    out[:, -1] = -(tail @ _EDGE0[::-1]) / dt
    return out


def stencil_boundary_band(order: int) -> int:
    """Samples at each end of the grid touched by one-sided stencils after
    ``order`` differentiation passes."""
    return 2 * max(int(order), 0)


def differentiate(traj: Trajectory, order: int = 1, method: str = "central4") -> Trajectory:
    """Estimate the ``order``-th time derivative of a sampled signal.

    ``central4`` applies a fourth-order five-point first-derivative stencil
    ``order`` times, with one-sided stencils of the same order at the grid
    edges. The outermost ``stencil_boundary_band(order)`` samples per side are
    degraded relative to the interior and should be excluded from rank tests.
    """
    if int(order) != order or order < 1:
        raise ValueError(f"order must be an integer >= 1, got {order}")
    if method == "spectral_free":
        raise NotImplementedError("spectral_free differentiation is a reserved extension point")
    if method != "central4":
        raise ValueError(f"unknown differentiation method {method!r}")
    vals = traj.values
    for _ in range(int(order)):
        vals = _ddt_central4(vals, traj.grid.dt)
    return Trajectory(traj.grid, vals, traj.interp_order)


@dataclass(frozen=True, eq=False)
class JetTrajectory:
    """A signal pair and its derivatives up to order L on one grid.

    ``layers`` is ordered (u, u', .., u^(L), y, y', .., y^(L)). The first L+1
    layers carry m channels, the rest p channels. ``boundary_band`` counts
    samples at each end of the grid where estimated derivative layers relied
    on one-sided stencils; exact jets carry 0.
    """

    m: int
    p: int
    L: int
    layers: tuple[Trajectory, ...]
    boundary_band: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.m < 1 or self.p < 1:
            raise ValueError("channel counts m, p must be positive")
        if self.L < 0:
            raise ValueError("jet order must be non-negative")
        expected = 2 * (self.L + 1)
        if len(self.layers) != expected:
            raise ValueError(f"expected {expected} layers for order {self.L}, got {len(self.layers)}")
        g = self.layers[0].grid
        for k, lay in enumerate(self.layers):
            want = self.m if k <= self.L else self.p
            if lay.channels != want:
                raise ValueError(f"layer {k} has {lay.channels} channels, expected {want}")
            if lay.grid != g:
                raise ValueError("all jet layers must share one time grid")
        if self.boundary_band < 0 or 2 * self.boundary_band >= g.count:
            raise ValueError("boundary band exceeds the grid")

    @property
    def grid(self) -> TimeGrid:
        return self.layers[0].grid

    def u_layer(self, i: int) -> Trajectory:
        if not 0 <= i <= self.L:
            raise IndexError(f"input derivative order {i} outside 0..{self.L}")
        return self.layers[i]

    def y_layer(self, i: int) -> Trajectory:
        if not 0 <= i <= self.L:
            raise IndexError(f"output derivative order {i} outside 0..{self.L}")
        return self.layers[self.L + 1 + i]

    def stacked_values(self) -> np.ndarray:
        """Raw samples of all layers stacked row-wise, shape ((m+p)(L+1), count)."""
        return np.vstack([lay.values for lay in self.layers])


def build_jet(
    u: Trajectory,
    y: Trajectory,
    L: int,
    method: str = "central4",
    derivatives: Sequence[Trajectory] | None = None,
) -> JetTrajectory:
    """Assemble the order-L jet of the pair (u, y).

    When ``derivatives`` is given it must hold the 2L layers
    (u', .., u^(L), y', .., y^(L)) on the shared grid and is used verbatim;
    otherwise the layers are estimated with ``method``.
    """
    if u.grid != y.grid:
        raise ValueError("u and y must share one time grid")
    if int(L) != L or L < 0:
        raise ValueError(f"jet order must be a non-negative integer, got {L}")
    L = int(L)
    if derivatives is not None:
        derivatives = tuple(derivatives)
        if len(derivatives) != 2 * L:
            raise ValueError(f"expected {2 * L} derivative layers, got {len(derivatives)}")
        for k, lay in enumerate(derivatives):
            want = u.channels if k < L else y.channels
            if lay.channels != want:
                raise ValueError(f"derivative layer {k} has {lay.channels} channels, expected {want}")
            if lay.grid != u.grid:
                raise ValueError("derivative layers must share the data grid")
        layers = (u, *derivatives[:L], y, *derivatives[L:])
        band = 0
    else:
        u_layers = [u]
        y_layers = [y]
        for _ in range(L):
            u_layers.append(differentiate(u_layers[-1], 1, method))
            y_layers.append(differentiate(y_layers[-1], 1, method))
        layers = (*u_layers, *y_layers)
        band = stencil_boundary_band(L)
    return JetTrajectory(u.channels, y.channels, L, layers, band)


def truncate_jet(jet: JetTrajectory, L: int) -> JetTrajectory:
    """Restrict a jet to a lower order, sharing the underlying layers."""
    if not 0 <= L <= jet.L:
        raise ValueError(f"cannot truncate order-{jet.L} jet to order {L}")
    layers = tuple(jet.layers[: L + 1]) + tuple(jet.layers[jet.L + 1 : jet.L + 2 + L])
    return JetTrajectory(jet.m, jet.p, L, layers, jet.boundary_band)


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------

def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write ``t,ch1,...,chq`` rows with 17 significant digits."""
    header = "t," + ",".join(f"ch{c + 1}" for c in range(traj.channels))
    _write_rows(path, header, traj.grid.times(), traj.values)


def read_trajectory_csv(path, interp_order: int = 3) -> Trajectory:
    """Read a trajectory CSV, validating the uniform time column."""
    times, values, _ = _read_rows(path)
    grid = _grid_from_times(times, path)
    return Trajectory(grid, values, interp_order)


def write_layer_stack_csv(layers: Sequence[Trajectory], path, name: str = "u") -> None:
    """Write derivative layers (orders 0..K) of one signal as a single CSV.

    Columns are ``{name}{order}_{channel}`` so the stack can be rebuilt
    without side information.
    """
    layers = tuple(layers)
    cols = []
    names = []
    for i, lay in enumerate(layers):
        if lay.grid != layers[0].grid:
            raise ValueError("stacked layers must share one grid")
        cols.append(lay.values)
        names.extend(f"{name}{i}_{c + 1}" for c in range(lay.channels))
    header = "t," + ",".join(names)
    _write_rows(path, header, layers[0].grid.times(), np.vstack(cols))


def read_layer_stack_csv(path, name: str = "u", interp_order: int = 3) -> tuple[Trajectory, ...]:
    times, values, names = _read_rows(path)
    grid = _grid_from_times(times, path)
    blocks = _parse_block_names(names, (name,), path)[name]
    return tuple(
        Trajectory(grid, values[lo:hi], interp_order) for (lo, hi) in blocks
    )


def write_jet_csv(jet: JetTrajectory, path) -> None:
    """Write a jet as ``t,u0_1..uL_m,y0_1..yL_p`` rows."""
    names = []
    for i in range(jet.L + 1):
        names.extend(f"u{i}_{c + 1}" for c in range(jet.m))
    for i in range(jet.L + 1):
        names.extend(f"y{i}_{c + 1}" for c in range(jet.p))
    header = "t," + ",".join(names)
    _write_rows(path, header, jet.grid.times(), jet.stacked_values())


def read_jet_csv(path, interp_order: int = 3) -> JetTrajectory:
    times, values, names = _read_rows(path)
    grid = _grid_from_times(times, path)
    blocks = _parse_block_names(names, ("u", "y"), path)
    u_blocks, y_blocks = blocks["u"], blocks["y"]
    if len(u_blocks) != len(y_blocks):
        raise ValueError(f"{path}: u and y blocks carry different derivative orders")
    L = len(u_blocks) - 1
    layers = [Trajectory(grid, values[lo:hi], interp_order) for (lo, hi) in u_blocks]
    layers += [Trajectory(grid, values[lo:hi], interp_order) for (lo, hi) in y_blocks]
    m = u_blocks[0][1] - u_blocks[0][0]
    p = y_blocks[0][1] - y_blocks[0][0]
    return JetTrajectory(m, p, L, tuple(layers))


def _write_rows(path, header: str, times: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for k in range(times.size):
            row = [_FMT % times[k]]
            row.extend(_FMT % v for v in values[:, k])
            fh.write(",".join(row) + "\n")


def _read_rows(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    names = [s.strip() for s in lines[0].split(",")]
    if not names or names[0] != "t":
        raise ValueError(f"{path}:1: header must start with a 't' column")
    ncol = len(names)
    times = []
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != ncol:
            raise ValueError(f"{path}:{lineno}: expected {ncol} fields, got {len(parts)}")
        try:
            nums = [float(s) for s in parts]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        times.append(nums[0])
        rows.append(nums[1:])
    if len(times) < 2:
        raise ValueError(f"{path}: need at least 2 sample rows")
    return np.asarray(times), np.asarray(rows).T, names[1:]


def _grid_from_times(times: np.ndarray, path) -> TimeGrid:
    dt = (times[-1] - times[0]) / (times.size - 1)
    if dt <= 0:
        raise ValueError(f"{path}: time column must be strictly increasing")
    gaps = np.diff(times)
    if np.max(np.abs(gaps - dt)) > 1e-9 * dt:
        k = int(np.argmax(np.abs(gaps - dt)))
        raise ValueError(
            f"{path}:{k + 3}: non-uniform sample spacing ({gaps[k]:.12g} vs dt={dt:.12g})"
        )
    return TimeGrid(times[0], dt, times.size)


_BLOCK_RE = re.compile(r"^([a-zA-Z]+)(\d+)_(\d+)$")


def _parse_block_names(names, prefixes, path):
    """Group header names like u0_1,u0_2,u1_1,.. into per-prefix column blocks."""
    out = {}
    pos = 0
    for prefix in prefixes:
        blocks = []
        order = 0
        while pos < len(names):
            match = _BLOCK_RE.match(names[pos])
            if not match or match.group(1) != prefix or int(match.group(2)) != order:
                break
            start = pos
            chan = 0
            while pos < len(names):
                match = _BLOCK_RE.match(names[pos])
                if not match or match.group(1) != prefix or int(match.group(2)) != order:
                    break
                chan += 1
                if int(match.group(3)) != chan:
                    raise ValueError(f"{path}: unexpected column name {names[pos]!r}")
                pos += 1
            blocks.append((start, pos))
            order += 1
        if not blocks:
            raise ValueError(f"{path}: no {prefix!r} columns found")
        out[prefix] = blocks
    if pos != len(names):
        raise ValueError(f"{path}: unexpected trailing column {names[pos]!r}")
    return out
