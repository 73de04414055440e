"""Command-line front end: synthesize datasets, check informativity, run
data-driven simulations, and compare results against ground truth.

Exit codes: 0 ok, 2 validation/IO, 3 not informative, 4 inconsistent initial
conditions, 5 rank deficiency, 6 stage failure. Every error path prints a
machine-readable ``status=error code=<n> kind=<kind>`` line last. All file
outputs are byte-deterministic for a fixed configuration.
"""
from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .datamatrix import DataMatrixView, ShiftSpec, suggest_num_shifts
from .errors import (
    InconsistentInitialConditionsError,
    JetsimError,
    RankDeficiencyError,
    StageFailureError,
)
from .informativity import check_informativity
from .oracle import make_random_system, random_multisine, save_model, simulate_exact
from .signals import (
    TimeGrid,
    Trajectory,
    build_jet,
    read_jet_csv,
    read_trajectory_csv,
    truncate_jet,
    write_jet_csv,
    write_layer_stack_csv,
    write_trajectory_csv,
)
from .simulator import load_problem, simulate, write_result_csv

__all__ = ["main"]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NOT_INFORMATIVE = 3
EXIT_INIT_INCONSISTENT = 4
EXIT_RANK_DEFICIENT = 5
EXIT_STAGE_FAILURE = 6

_FMT = "%.17g"


def _fail(code: int, kind: str, message: str) -> int:
    print(f"error: {message}")
    print(f"status=error code={code} kind={kind}")
    return code


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    out = args.out
    if not os.path.isdir(out):
        raise OSError(f"output directory does not exist: {out}")
    if min(args.n, args.m, args.p) < 1:
        raise ValueError("system dimensions n, m, p must be positive")
    if args.duration <= 0 or args.dt <= 0:
        raise ValueError("duration and dt must be positive")

    model = make_random_system(args.n, args.m, args.p, seed=args.seed)
    lag = model.lag
    L = args.L if args.L is not None else lag
    jet_order = args.jet_order if args.jet_order is not None else L + 2
    if jet_order < L + 1:
        raise ValueError(f"jet order {jet_order} too small for L={L}; need at least {L + 1}")

    count = int(round(args.duration / args.dt)) + 1
    grid = TimeGrid(0.0, args.dt, count)
    data_input = random_multisine(args.m, args.components, seed=args.seed + 1)
    x0 = np.random.default_rng(args.seed + 2).standard_normal(args.n)
    run = simulate_exact(model, data_input, x0, grid, jet_order)

    M = args.M if args.M is not None else suggest_num_shifts(args.m, L, args.n)
    if args.T is not None:
        T = args.T
    else:
        # half the record stays usable as the evaluation window
        steps = max(1, int(round(args.duration / (2.0 * (M + 1)) / args.dt)))
        T = steps * args.dt

    save_model(model, os.path.join(out, "model.txt"))
    data = Trajectory(grid, np.vstack([run.u.values, run.y.values]))
    write_trajectory_csv(data, os.path.join(out, "data.csv"))
    write_jet_csv(run.jet, os.path.join(out, "jet.csv"))

    # independent target trajectory with admissible initial values, plus the
    # exact reference output for later comparison
    target_seed = args.target_seed if args.target_seed is not None else args.seed + 3
    target = random_multisine(args.m, args.target_components, seed=target_seed)
    x0bar = np.random.default_rng(args.seed + 4).standard_normal(args.n)
    n_steps = max(1, int(round(args.horizon / args.step)))
    out_grid = TimeGrid(0.0, args.step, n_steps + 1)
    truth = simulate_exact(model, target, x0bar, out_grid, L)
    write_trajectory_csv(truth.y, os.path.join(out, "truth.csv"))

    ubar_count = int(round((args.horizon + 2 * T) / args.dt)) + 1
    ubar_grid = TimeGrid(0.0, args.dt, ubar_count)
    write_layer_stack_csv(
        target.sample_layers(ubar_grid, jet_order), os.path.join(out, "ubar.csv")
    )

    y_init_rows = ";".join(
        ",".join(_FMT % v for v in truth.jet.y_layer(i).eval_at(0.0)) for i in range(L + 1)
    )
    cfg_path = os.path.join(out, "problem.cfg")
    with open(cfg_path, "w", encoding="utf-8") as fh:
        fh.write("# data-driven simulation problem\n")
        fh.write("jet_csv = jet.csv\n")
        fh.write("ubar_csv = ubar.csv\n")
        fh.write(f"M = {M}\n")
        fh.write(f"T = {_FMT % T}\n")
        fh.write(f"L = {L}\n")
        fh.write(f"n = {args.n}\n")
        fh.write(f"horizon = {_FMT % args.horizon}\n")
        fh.write(f"step = {_FMT % args.step}\n")
        fh.write(f"mode = {args.mode}\n")
        fh.write(f"y_init = {y_init_rows}\n")

    print(f"model: n={args.n} m={args.m} p={args.p} lag={lag}")
    print(f"suggested: L={L} M={M} T={_FMT % T}")
    print(f"wrote model.txt data.csv jet.csv ubar.csv truth.csv problem.cfg to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def _jet_from_args(args):
    if args.jet:
        return read_jet_csv(args.jet)
    if args.data:
        if args.m is None:
            raise ValueError("--m is required with --data to split input/output channels")
        data = read_trajectory_csv(args.data)
        if data.channels <= args.m:
            raise ValueError("data file must hold input channels followed by output channels")
        u = Trajectory(data.grid, data.values[: args.m])
        y = Trajectory(data.grid, data.values[args.m:])
        return build_jet(u, y, args.L, method=args.deriv_method)
    raise ValueError("either --jet or --data is required")


def cmd_check(args) -> int:
    jet = _jet_from_args(args)
    if jet.L < args.L:
        raise ValueError(f"jet carries order {jet.L} but L={args.L} was requested")
    if jet.L > args.L:
        jet = truncate_jet(jet, args.L)
    view = DataMatrixView.full(jet, ShiftSpec(args.M, args.T))
    times = None
    if args.times:
        times = np.array([float(v) for v in args.times.split(",")])
    report = check_informativity(view, args.n, sample_times=times,
                                 rel_tol=args.rel_tol, num_times=args.num_times)
    report_path = args.report
    if report_path is None:
        source = args.jet or args.data
        report_path = os.path.join(os.path.dirname(os.path.abspath(source)),
                                   "informativity.csv")
    report.write_csv(report_path)
    print(report.summary())
    if not report.informative:
        print(f"status=error code={EXIT_NOT_INFORMATIVE} kind=not-informative")
        return EXIT_NOT_INFORMATIVE
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _plot_result(result, truth_path, plot_path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "jetsim"
    ts = result.times
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    for c in range(result.ybar.channels):
        ax.plot(ts, result.ybar.values[c], label=f"ybar_{c + 1}")
    if truth_path:
        truth = read_trajectory_csv(truth_path)
        tt = truth.grid.times()
        for c in range(truth.channels):
            ax.plot(tt, truth.values[c], "--", label=f"truth_{c + 1}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("output")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(plot_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_simulate(args) -> int:
    overrides = {}
    for key in ("horizon", "step", "mode", "t_start", "rel_tol", "init_tol", "stage_tol",
                "M", "T", "L"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    problem = load_problem(args.config, overrides)

    report = None
    if not args.force:
        cfg_n = _read_cfg_value(args.config, "n")
        if cfg_n is None and args.n is None:
            raise ValueError("informativity gate needs n (config key or --n); or pass --force")
        n = args.n if args.n is not None else int(cfg_n)
        report = check_informativity(problem.data_view, n, rel_tol=problem.rel_tol)
        print(report.summary())
        if not report.informative:
            print(f"status=error code={EXIT_NOT_INFORMATIVE} kind=not-informative")
            return EXIT_NOT_INFORMATIVE

    started = time.perf_counter()
    result = simulate(problem, report)
    wall = time.perf_counter() - started

    out_path = args.out or os.path.join(os.path.dirname(os.path.abspath(args.config)), "result.csv")
    write_result_csv(result, out_path)
    if args.plot:
        _plot_result(result, args.truth, args.plot)

    print(f"mode={result.mode} steps={result.times.size - 1}")
    print(f"init_residual={result.init_residual:.6e}")
    print(f"ode_residual_sup={result.ode_residual_sup:.6e}")
    print(f"input_residual_sup={result.input_residual_sup:.6e}")
    print(f"wall_time_s={wall:.3f}")
    print(f"result_csv={out_path}")
    return EXIT_OK


def _read_cfg_value(path, key):
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#") or "=" not in line:
                continue
            k, v = line.split("=", 1)
            if k.strip() == key:
                return v.strip()
    return None


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def _load_outputs(path):
    """Channels to compare: the ybar block of a result file, else everything."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if any(name.startswith("ybar_") for name in header):
        cols = [k for k, name in enumerate(header) if name.startswith("ybar_")]
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        times = raw[:, 0]
        values = raw[:, cols].T
        dt = (times[-1] - times[0]) / (times.size - 1)
        return Trajectory(TimeGrid(times[0], dt, times.size), values)
    return read_trajectory_csv(path)


def cmd_compare(args) -> int:
    result = _load_outputs(args.result)
    truth = _load_outputs(args.truth)
    if result.channels != truth.channels:
        raise ValueError(
            f"channel mismatch: {result.channels} result vs {truth.channels} truth channels"
        )
    ratio = result.grid.dt / truth.grid.dt
    if ratio >= 1.0:
        ok = abs(ratio - round(ratio)) <= 1e-9 * ratio
    else:
        ok = abs(1.0 / ratio - round(1.0 / ratio)) <= 1e-9 / ratio
    if not ok:
        raise ValueError("sample steps must be related by an integer ratio")
    lo = max(result.grid.t0, truth.grid.t0)
    hi = min(result.grid.t_end, truth.grid.t_end)
    if hi <= lo:
        raise ValueError("the files do not overlap in time")
    step = max(result.grid.dt, truth.grid.dt)
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    ts = lo + step * np.arange(count)
    a = result.values_at(ts)
    b = truth.values_at(ts)
    worst = 0.0
    for c in range(result.channels):
        scale = np.max(np.abs(b[c]))
        scale = scale if scale > 0 else 1.0
        sup = float(np.max(np.abs(a[c] - b[c]))) / scale
        rms_scale = float(np.sqrt(np.mean(b[c] ** 2)))
        rms_scale = rms_scale if rms_scale > 0 else 1.0
        rms = float(np.sqrt(np.mean((a[c] - b[c]) ** 2))) / rms_scale
        worst = max(worst, sup)
        print(f"channel {c + 1}: rel_sup_err={sup:.6e} rel_rms_err={rms:.6e}")
    print(f"overall rel_sup_err={worst:.6e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jetsim",
        description="data-driven simulation of continuous-time systems from sampled trajectories",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a reference dataset and problem files")
    g.add_argument("--out", required=True, help="existing output directory")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--n", type=int, default=2)
    g.add_argument("--m", type=int, default=1)
    g.add_argument("--p", type=int, default=1)
    g.add_argument("--dt", type=float, default=1e-3)
    g.add_argument("--duration", type=float, default=10.0)
    g.add_argument("--components", type=int, default=6, help="multisine components of the data input")
    g.add_argument("--jet-order", dest="jet_order", type=int, default=None)
    g.add_argument("--L", type=int, default=None, help="jet order of the identification stack (default: lag)")
    g.add_argument("--M", type=int, default=None)
    g.add_argument("--T", type=float, default=None)
    g.add_argument("--target-seed", dest="target_seed", type=int, default=None)
    g.add_argument("--target-components", dest="target_components", type=int, default=4)
    g.add_argument("--horizon", type=float, default=2.0)
    g.add_argument("--step", type=float, default=1e-3)
    g.add_argument("--mode", choices=("explicit", "implicit_lsq"), default="explicit")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("check", help="informativity rank test of a dataset")
    c.add_argument("--jet", help="jet CSV path")
    c.add_argument("--data", help="raw trajectory CSV (inputs then outputs)")
    c.add_argument("--m", type=int, default=None, help="input channel count for --data")
    c.add_argument("--deriv-method", dest="deriv_method", default="central4")
    c.add_argument("--M", type=int, required=True)
    c.add_argument("--T", type=float, required=True)
    c.add_argument("--L", type=int, required=True)
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--rel-tol", dest="rel_tol", type=float, default=1e-8)
    c.add_argument("--num-times", dest="num_times", type=int, default=20)
    c.add_argument("--times", default=None, help="comma-separated probe times")
    c.add_argument("--report", default=None,
                   help="report CSV path (default: informativity.csv next to the input)")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", help="run a data-driven simulation from a problem file")
    s.add_argument("--config", required=True, help="problem description file")
    s.add_argument("--out", default=None, help="result CSV path (default: result.csv next to config)")
    s.add_argument("--mode", choices=("explicit", "implicit_lsq"), default=None)
    s.add_argument("--horizon", type=float, default=None)
    s.add_argument("--step", type=float, default=None)
    s.add_argument("--t-start", dest="t_start", type=float, default=None)
    s.add_argument("--M", type=int, default=None)
    s.add_argument("--T", type=float, default=None)
    s.add_argument("--L", type=int, default=None)
    s.add_argument("--n", type=int, default=None, help="state dimension for the informativity gate")
    s.add_argument("--rel-tol", dest="rel_tol", type=float, default=None)
    s.add_argument("--init-tol", dest="init_tol", type=float, default=None)
    s.add_argument("--stage-tol", dest="stage_tol", type=float, default=None)
    s.add_argument("--force", action="store_true", help="skip the informativity gate")
    s.add_argument("--plot", default=None, help="write an SVG overlay plot here")
    s.add_argument("--truth", default=None, help="reference output CSV for the plot overlay")
    s.set_defaults(func=cmd_simulate)

    k = sub.add_parser("compare", help="error metrics between a result and a reference CSV")
    k.add_argument("result")
    k.add_argument("truth")
    k.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InconsistentInitialConditionsError as exc:
        return _fail(EXIT_INIT_INCONSISTENT, "init-inconsistent", str(exc))
    except RankDeficiencyError as exc:
        return _fail(
            EXIT_RANK_DEFICIENT,
            "rank-deficient",
            f"{exc} (hint: retry with mode=implicit_lsq)",
        )
    except StageFailureError as exc:
        return _fail(EXIT_STAGE_FAILURE, "stage-failure", str(exc))
    except (ValueError, OSError, KeyError, JetsimError) as exc:
        return _fail(EXIT_VALIDATION, "validation", str(exc))


if __name__ == "__main__":
    sys.exit(main())
