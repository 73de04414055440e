import numpy as np
import pytest

from jetsim.datamatrix import (
    DataMatrixView,
    ShiftSpec,
    apply_alpha,
    dump_matrix_csv,
    hankel_eval,
    stacked_eval,
    stacked_eval_many,
    suggest_num_shifts,
)
from jetsim.errors import OutOfDomainError
from jetsim.signals import JetTrajectory, TimeGrid, Trajectory, build_jet, truncate_jet

from conftest import L


def test_hankel_constant():
    grid = TimeGrid(0.0, 0.125, 33)
    traj = Trajectory(grid, np.full((2, 33), -1.5))
    mat = hankel_eval(traj, ShiftSpec(4, 0.5), 0.3)
    assert mat.shape == (2, 5)
    np.testing.assert_array_equal(mat, -1.5)


def test_hankel_linear_exact():
    # powers of two keep every float operation exact
    grid = TimeGrid(0.0, 0.125, 9)
    traj = Trajectory(grid, grid.times()[None, :])
    mat = hankel_eval(traj, ShiftSpec(2, 0.5), 0.0)
    np.testing.assert_array_equal(mat, [[0.0, 0.5, 1.0]])


def test_hankel_sine_matches_analytic():
    grid = TimeGrid(0.0, 1e-3, 2001)
    traj = Trajectory(grid, np.sin(grid.times())[None, :])
    spec = ShiftSpec(3, 0.1)
    t = 0.2
    mat = hankel_eval(traj, spec, t)
    expect = np.sin(t + 0.1 * np.arange(4))
    assert np.abs(mat[0] - expect).max() <= 1e-9


def test_hankel_window_violation():
    grid = TimeGrid(0.0, 0.125, 9)
    traj = Trajectory(grid, np.zeros((1, 9)))
    with pytest.raises(OutOfDomainError):
        hankel_eval(traj, ShiftSpec(2, 0.5), 0.25)


def test_shift_not_grid_multiple():
    grid = TimeGrid(0.0, 0.125, 65)
    lay = Trajectory(grid, np.zeros((1, 65)))
    with pytest.raises(ValueError):
        DataMatrixView.from_layers([lay], ShiftSpec(1, 0.3))


def test_window_empty():
    grid = TimeGrid(0.0, 0.125, 9)
    lay = Trajectory(grid, np.zeros((1, 9)))
    with pytest.raises(ValueError):
        DataMatrixView.from_layers([lay], ShiftSpec(10, 0.5))


def test_stacked_smallest():
    grid = TimeGrid(0.0, 0.125, 17)
    u = Trajectory(grid, np.ones((1, 17)))
    y = Trajectory(grid, np.zeros((1, 17)))
    jet = build_jet(u, y, 0)
    view = DataMatrixView.full(jet, ShiftSpec(3, 0.25))
    mat = stacked_eval(view, 0.0)
    assert mat.shape == (2, 4)
    np.testing.assert_array_equal(mat[0], 1.0)
    np.testing.assert_array_equal(mat[1], 0.0)


def test_reduced_row_count(oracle_run, shift_spec):
    jet = truncate_jet(oracle_run.jet, L)
    red = DataMatrixView.reduced(jet, shift_spec)
    assert red.row_count == jet.m * (L + 1) + jet.p * L
    assert red.block_channels == (1,) * 5


def test_stacked_matches_bruteforce(full_view):
    # assemble the same matrix entry by entry through scalar evaluations
    t = 0.123
    mat = stacked_eval(full_view, t)
    spec = full_view.spec
    rows = []
    for lay in full_view.layers:
        block = np.empty((lay.channels, spec.M + 1))
        for j in range(spec.M + 1):
            block[:, j] = lay.eval_at(t + j * spec.T)
        rows.append(block)
    expect = np.vstack(rows)
    assert np.abs(mat - expect).max() <= 1e-8
    np.testing.assert_array_equal(mat, expect)


def test_stacked_eval_many_consistent(full_view):
    ts = np.array([0.0, 0.5, 1.234])
    many = stacked_eval_many(full_view, ts)
    for k, t in enumerate(ts):
        np.testing.assert_array_equal(many[:, :, k], stacked_eval(full_view, t))


def test_apply_alpha_selector(full_view):
    grid = full_view.grid
    spec = full_view.spec
    t = 1.0
    for j in (0, 3, spec.M):
        e_j = np.zeros(spec.M + 1)
        e_j[j] = 1.0
        alpha = Trajectory(TimeGrid(0.0, 1.0, 3), np.tile(e_j[:, None], (1, 3)))
        got = apply_alpha(full_view, alpha, t)
        expect = np.concatenate([lay.eval_at(t + j * spec.T) for lay in full_view.layers])
        np.testing.assert_array_equal(got, expect)


def test_apply_alpha_zero(full_view):
    spec = full_view.spec
    alpha = Trajectory(TimeGrid(0.0, 1.0, 3), np.zeros((spec.M + 1, 3)))
    np.testing.assert_array_equal(apply_alpha(full_view, alpha, 0.7), 0.0)


def test_apply_alpha_random_matches_product(full_view):
    rng = np.random.default_rng(3)
    grid = TimeGrid(0.0, 0.5, 9)
    vals = rng.standard_normal((full_view.spec.M + 1, 9))
    alpha = Trajectory(grid, vals)
    for t in rng.uniform(0.0, 4.0, size=5):
        got = apply_alpha(full_view, alpha, t)
        expect = stacked_eval(full_view, t) @ alpha.eval_at(t)
        assert np.abs(got - expect).max() <= 1e-12


def test_apply_alpha_dimension_mismatch(full_view):
    grid = TimeGrid(0.0, 1.0, 3)
    alpha = Trajectory(grid, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        apply_alpha(full_view, alpha, 0.0)


def test_shift_derivative_commutation(oracle_run, shift_spec):
    # finite-difference time derivative of the order-0 stack equals the
    # order-1 stack from the exact layers
    u0, u1 = oracle_run.jet.u_layer(0), oracle_run.jet.u_layer(1)
    dt = u0.grid.dt
    rng = np.random.default_rng(4)
    for t in rng.uniform(0.1, 4.0, size=10):
        fd = (
            hankel_eval(u0, shift_spec, t - 2 * dt)
            - 8 * hankel_eval(u0, shift_spec, t - dt)
            + 8 * hankel_eval(u0, shift_spec, t + dt)
            - hankel_eval(u0, shift_spec, t + 2 * dt)
        ) / (12 * dt)
        exact = hankel_eval(u1, shift_spec, t)
        assert np.abs(fd - exact).max() <= 1e-6


def test_linearity_in_data(oracle_run, shift_spec):
    jet = truncate_jet(oracle_run.jet, L)
    scaled_layers = tuple(
        Trajectory(lay.grid, 2.0 * lay.values) for lay in jet.layers
    )
    scaled = JetTrajectory(jet.m, jet.p, jet.L, scaled_layers)
    v1 = DataMatrixView.full(jet, shift_spec)
    v2 = DataMatrixView.full(scaled, shift_spec)
    for t in (0.0, 1.0, 4.5):  # grid-aligned times evaluate stored samples
        np.testing.assert_array_equal(2.0 * stacked_eval(v1, t), stacked_eval(v2, t))


def test_column_shift_identity(full_view):
    spec = full_view.spec
    t = 0.75
    mat = stacked_eval(full_view, t)
    for j in range(spec.M + 1):
        if t + j * spec.T + spec.M * spec.T > full_view.grid.t_end:
            break
        np.testing.assert_array_equal(mat[:, j], stacked_eval(full_view, t + j * spec.T)[:, 0])


def test_suggest_num_shifts():
    assert suggest_num_shifts(1, 2, 2) == 9
    assert suggest_num_shifts(2, 1, 3, margin=1) == 7


def test_window_excludes_boundary_band():
    grid = TimeGrid(0.0, 0.01, 1001)
    t = grid.times()
    u = Trajectory(grid, np.sin(t)[None, :])
    y = Trajectory(grid, np.cos(t)[None, :])
    jet = build_jet(u, y, 2)  # estimated: band = 4
    view = DataMatrixView.full(jet, ShiftSpec(2, 0.5))
    lo, hi = view.window()
    lo_b, hi_b = view.window(exclude_boundary=True)
    assert lo_b == pytest.approx(lo + 4 * grid.dt)
    assert hi_b == pytest.approx(hi - 4 * grid.dt)


def test_dump_matrix_csv(tmp_path):
    path = tmp_path / "mat.csv"
    dump_matrix_csv(np.array([[1.0, 0.5], [-2.0, 1e-17]]), path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "1,0.5"
    assert lines[1] == "-2,1.0000000000000001e-17"
