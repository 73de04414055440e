"""Ground-truth generators: seeded LTI systems, exact trajectories and jets,
image-form (latent-variable) data, and kernel residuals.

Everything here is deterministic given a seed and at least an order of
magnitude more accurate than the tolerances it is used to judge. State
propagation is exact up to quadrature: the homogeneous part uses the matrix
exponential over one grid step and the forced part a Gauss-Legendre rule
refined until successive node doublings agree to 1e-12.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .signals import JetTrajectory, TimeGrid, Trajectory

__all__ = [
    "StateSpaceModel",
    "ImageFormModel",
    "AnalyticInput",
    "OracleRun",
    "LatentRun",
    "make_random_system",
    "random_multisine",
    "simulate_exact",
    "make_image_form",
    "generate_latent",
    "kernel_residual",
    "kernel_basis",
    "jet_value_map",
    "save_model",
    "load_model",
]

_QUAD_TOL = 1e-12
_PANEL_WIDTH = 0.05  # widest step handled by a single Gauss panel


def _observability_matrix(A: np.ndarray, C: np.ndarray, blocks: int) -> np.ndarray:
    rows = [C]
    for _ in range(blocks - 1):
        rows.append(rows[-1] @ A)
    return np.vstack(rows)


def _rank(mat: np.ndarray, rel_tol: float = 1e-10) -> int:
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Minimal continuous-time model dx/dt = A x + B u, y = C x + D u.

    Construction verifies observability and controllability and computes the
    observability index (the smallest block count reaching full rank).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        if B.shape[0] != n or C.shape[1] != n:
            raise ValueError("B/C dimensions do not match A")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError("D must be p x m")
        for name, mat in (("A", A), ("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} must be finite")
            mat.setflags(write=False)
        if _rank(_observability_matrix(A, C, n)) < n:
            raise ValueError("(A, C) must be observable")
        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        if _rank(ctrb) < n:
            raise ValueError("(A, B) must be controllable")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def lag(self) -> int:
        for nu in range(1, self.n + 1):
            if _rank(_observability_matrix(self.A, self.C, nu)) == self.n:
                return nu
        raise AssertionError("unreachable: model is observable")


def make_random_system(n: int, m: int, p: int, seed: int,
                       eig_real_range: tuple[float, float] = (-3.0, -0.2),
                       max_tries: int = 50) -> StateSpaceModel:
    """Seeded random stable model with eigenvalue real parts mapped into
    ``eig_real_range``; redraws until observable and controllable."""
    if min(n, m, p) < 1:
        raise ValueError("n, m, p must be positive")
    lo, hi = eig_real_range
    if not lo < hi < 0:
        raise ValueError("eig_real_range must satisfy lo < hi < 0")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        A = rng.standard_normal((n, n))
        re = np.linalg.eigvals(A).real
        span = re.max() - re.min()
        if span < 1e-9:
            A = A + (0.5 * (lo + hi) - re.max()) * np.eye(n)
        else:
            scale = (hi - lo) / span
            A = scale * A + (lo - scale * re.min()) * np.eye(n)
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        D = np.zeros((p, m))
        try:
            return StateSpaceModel(A, B, C, D)
        except ValueError:
            continue
    raise RuntimeError(f"no observable+controllable draw after {max_tries} tries")


# ---------------------------------------------------------------------------
# Analytic inputs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AnalyticInput:
    """Smooth test input with closed-form derivatives of every order.

    kind "multisine": channel c is sum_k amp[c,k] * sin(freq[c,k] t + phase[c,k]).
    kind "poly_exp": channel c is sum_k coeff[c,k] * t^k * exp(rate[c,k] t).
    """

    kind: str
    params: tuple[np.ndarray, ...]

    @classmethod
    def multisine(cls, amplitudes, frequencies, phases) -> "AnalyticInput":
        amp = np.atleast_2d(np.asarray(amplitudes, dtype=float))
        freq = np.atleast_2d(np.asarray(frequencies, dtype=float))
        ph = np.atleast_2d(np.asarray(phases, dtype=float))
        if not (amp.shape == freq.shape == ph.shape):
            raise ValueError("amplitudes, frequencies, phases must share a shape")
        return cls("multisine", (amp, freq, ph))

    @classmethod
    def poly_exp(cls, coefficients, rates) -> "AnalyticInput":
        coeff = np.atleast_2d(np.asarray(coefficients, dtype=float))
        rate = np.atleast_2d(np.asarray(rates, dtype=float))
        if coeff.shape != rate.shape:
            raise ValueError("coefficients and rates must share a shape")
        return cls("poly_exp", (coeff, rate))

    @classmethod
    def polynomial(cls, coefficients) -> "AnalyticInput":
        coeff = np.atleast_2d(np.asarray(coefficients, dtype=float))
        return cls.poly_exp(coeff, np.zeros_like(coeff))

    @property
    def m(self) -> int:
        return self.params[0].shape[0]

    def values(self, ts, order: int = 0) -> np.ndarray:
        """Order-th derivative sampled at ``ts``; shape (m, len(ts))."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if order < 0:
            raise ValueError("derivative order must be >= 0")
        if self.kind == "multisine":
            amp, freq, ph = self.params
            arg = freq[..., None] * ts + ph[..., None] + order * (np.pi / 2.0)
            terms = amp[..., None] * freq[..., None] ** order * np.sin(arg)
            return terms.sum(axis=1)
        amp, rate = self.params
        out = np.zeros((self.m, ts.size))
        for c in range(self.m):
            for k in range(amp.shape[1]):
                coeff = amp[c, k]
                if coeff == 0.0:
                    continue
                r = rate[c, k]
                # d^order/dt^order of t^k e^{rt} by Leibniz
                for j in range(min(order, k) + 1):
                    out[c] += (
                        coeff
                        * math.comb(order, j)
                        * math.perm(k, j)
                        * r ** (order - j)
                        * ts ** (k - j)
                        * np.exp(r * ts)
                    )
        return out

    def value(self, t: float, order: int = 0) -> np.ndarray:
        return self.values([float(t)], order)[:, 0]

    def sample(self, grid: TimeGrid, order: int = 0, interp_order: int = 3) -> Trajectory:
        return Trajectory(grid, self.values(grid.times(), order), interp_order)

    def sample_layers(self, grid: TimeGrid, max_order: int) -> tuple[Trajectory, ...]:
        return tuple(self.sample(grid, k) for k in range(max_order + 1))


def random_multisine(m: int, components: int, seed: int,
                     freq_range: tuple[float, float] = (0.25, 3.0),
                     amp_range: tuple[float, float] = (0.3, 1.0)) -> AnalyticInput:
    """Seeded multisine; continuous frequency draws make the components
    incommensurate with probability one."""
    rng = np.random.default_rng(seed)
    freq = rng.uniform(*freq_range, size=(m, components))
    amp = rng.uniform(*amp_range, size=(m, components))
    ph = rng.uniform(0.0, 2.0 * np.pi, size=(m, components))
    return AnalyticInput.multisine(amp, freq, ph)


# ---------------------------------------------------------------------------
# Exact simulation
# ---------------------------------------------------------------------------

def _gauss_nodes(step: float, nodes_per_panel: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights on [0, step]."""
    panels = max(1, int(np.ceil(step / _PANEL_WIDTH)))
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    width = step / panels
    starts = width * np.arange(panels)
    nodes = (starts[:, None] + 0.5 * width * (x[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * width * w, panels)
    return nodes, weights


def _forced_terms(A, B, input_: AnalyticInput, step: float, step_starts: np.ndarray,
                  nodes_per_panel: int) -> np.ndarray:
    """integral_0^step exp(A(step-s)) B u(t_k+s) ds for every step start t_k."""
    nodes, weights = _gauss_nodes(step, nodes_per_panel)
    propagators = np.stack([expm(A * (step - s)) @ B for s in nodes])  # (q, n, m)
    eval_times = (step_starts[:, None] + nodes[None, :]).ravel()
    u_nodes = input_.values(eval_times, 0).reshape(input_.m, step_starts.size, nodes.size)
    # F[k] = sum_i w_i * propagators[i] @ u[:, k, i]
    return np.einsum("i,inm,mki->kn", weights, propagators, u_nodes)


def _propagate(A, B, input_, x0, grid: TimeGrid) -> np.ndarray:
    """Exact grid-to-grid state propagation; returns X with shape (n, count)."""
    step_starts = grid.t0 + grid.dt * np.arange(grid.count - 1)
    nodes = 12
    forced = _forced_terms(A, B, input_, grid.dt, step_starts, nodes)
    while nodes < 96:
        refined = _forced_terms(A, B, input_, grid.dt, step_starts, 2 * nodes)
        err = float(np.max(np.abs(refined - forced))) if forced.size else 0.0
        forced = refined
        if err <= _QUAD_TOL * max(1.0, float(np.max(np.abs(refined))) if refined.size else 0.0):
            break
        nodes *= 2
    Ad = expm(A * grid.dt)
    X = np.empty((A.shape[0], grid.count))
    X[:, 0] = x0
    for k in range(grid.count - 1):
        X[:, k + 1] = Ad @ X[:, k] + forced[k]
    return X


@dataclass(frozen=True, eq=False)
class OracleRun:
    """Exact trajectories of a state-space model under an analytic input."""

    u: Trajectory
    y: Trajectory
    x: Trajectory
    jet: JetTrajectory
    x_jet: tuple[Trajectory, ...]
    model: StateSpaceModel
    input: AnalyticInput


def simulate_exact(model: StateSpaceModel, input_: AnalyticInput, x0,
                   grid: TimeGrid, jet_order: int) -> OracleRun:
    """Simulate the model on ``grid`` and return exact derivative layers.

    Output derivatives follow from repeated differentiation of the dynamics:
    y^(i) = C A^i x + sum_{j<i} C A^(i-1-j) B u^(j) + D u^(i), and likewise
    x^(i) = A^i x + sum_{j<i} A^(i-1-j) B u^(j).
    """
    if jet_order < 1:
        raise ValueError("jet_order must be >= 1")
    if input_.m != model.m:
        raise ValueError(f"input has {input_.m} channels, model expects {model.m}")
    x0 = np.asarray(x0, dtype=float).reshape(model.n)
    A, B, C, D = model.A, model.B, model.C, model.D

    X = _propagate(A, B, input_, x0, grid)
    times = grid.times()
    U = [input_.values(times, k) for k in range(jet_order + 1)]

    Apow = [np.eye(model.n)]
    for _ in range(jet_order):
        Apow.append(A @ Apow[-1])

    u_layers = [Trajectory(grid, U[k]) for k in range(jet_order + 1)]
    y_layers = []
    x_layers = []
    for i in range(jet_order + 1):
        Yi = C @ Apow[i] @ X + D @ U[i]
        Xi = Apow[i] @ X
        for j in range(i):
            Yi = Yi + C @ Apow[i - 1 - j] @ B @ U[j]
            Xi = Xi + Apow[i - 1 - j] @ B @ U[j]
        y_layers.append(Trajectory(grid, Yi))
        x_layers.append(Trajectory(grid, Xi))

    jet = JetTrajectory(model.m, model.p, jet_order, tuple(u_layers + y_layers))
    return OracleRun(u_layers[0], y_layers[0], x_layers[0], jet, tuple(x_layers),
                     model, input_)


# ---------------------------------------------------------------------------
# Jet geometry: value map and kernel
# ---------------------------------------------------------------------------

def jet_value_map(model: StateSpaceModel, L: int) -> np.ndarray:
    """Linear map from (u-jet value, state) to the full jet value.

    Returns Phi with shape ((m+p)(L+1), m(L+1)+n): the u-block rows are the
    identity on the u-jet coordinates and the y-block rows encode the output
    derivatives in terms of the state and lower input derivatives.
    """
    n, m, p = model.n, model.m, model.p
    A, B, C, D = model.A, model.B, model.C, model.D
    Apow = [np.eye(n)]
    for _ in range(L + 1):
        Apow.append(A @ Apow[-1])
    rows_u = np.hstack([np.eye(m * (L + 1)), np.zeros((m * (L + 1), n))])
    rows_y = np.zeros((p * (L + 1), m * (L + 1) + n))
    for i in range(L + 1):
        blk = slice(p * i, p * (i + 1))
        rows_y[blk, m * (L + 1):] = C @ Apow[i]
        rows_y[blk, m * i: m * (i + 1)] += D
        for j in range(i):
            rows_y[blk, m * j: m * (j + 1)] += C @ Apow[i - 1 - j] @ B
    return np.vstack([rows_u, rows_y])


def kernel_basis(model: StateSpaceModel, L: int) -> np.ndarray:
    """Orthonormal rows spanning the left annihilators of every admissible
    order-L jet value; empty when p(L+1) = n."""
    if L < model.lag:
        raise ValueError(f"jet order {L} is below the observability index {model.lag}")
    phi = jet_value_map(model, L)
    expected = model.m * (L + 1) + model.n
    u_svd, s, _ = np.linalg.svd(phi)
    rank = int(np.count_nonzero(s > 1e-10 * s[0]))
    if rank != expected:
        raise AssertionError(f"jet value map rank {rank} != {expected}")
    return u_svd[:, rank:].T


def kernel_residual(model: StateSpaceModel, jet: JetTrajectory) -> float:
    """Sup-norm violation of the model's input-output differential equations
    by a candidate jet, skipping the jet's boundary band."""
    if jet.L < model.lag:
        raise ValueError(f"jet order {jet.L} is below the observability index {model.lag}")
    if jet.m != model.m or jet.p != model.p:
        raise ValueError("jet channel counts do not match the model")
    kern = kernel_basis(model, jet.L)
    vals = jet.stacked_values()
    band = jet.boundary_band
    if band:
        vals = vals[:, band:-band]
    if kern.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(kern @ vals)))


# ---------------------------------------------------------------------------
# Image form
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ImageFormModel:
    """Scalar-latent image representation of a SISO behavior.

    d_coeffs and n_coeffs are ascending-order lists of (m x d) / (p x d)
    matrices: u = sum_i D_i l^(i), y = sum_i N_i l^(i).
    """

    d: int
    order: int
    d_coeffs: tuple[np.ndarray, ...]
    n_coeffs: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.d_coeffs) != self.order + 1 or len(self.n_coeffs) != self.order + 1:
            raise ValueError("coefficient lists must have order+1 entries")
        object.__setattr__(self, "d_coeffs", tuple(np.atleast_2d(np.asarray(c, float)) for c in self.d_coeffs))
        object.__setattr__(self, "n_coeffs", tuple(np.atleast_2d(np.asarray(c, float)) for c in self.n_coeffs))
        _check_latent_observable(self)

    @property
    def den(self) -> np.ndarray:
        """Ascending coefficients of the input polynomial (SISO convenience)."""
        return np.array([c[0, 0] for c in self.d_coeffs])

    @property
    def num(self) -> np.ndarray:
        return np.array([c[0, 0] for c in self.n_coeffs])


def _check_latent_observable(img: ImageFormModel) -> None:
    """The stacked polynomial col(D(s), N(s)) must keep full column rank d for
    all s; for d = 1 that means the two scalar polynomials share no root."""
    den, num = img.den, img.num
    scale = max(np.max(np.abs(den)), np.max(np.abs(num)), 1.0)
    roots = np.concatenate([np.roots(den[::-1]), np.roots(num[::-1])]) if den.size else []
    probes = list(np.asarray(roots, dtype=complex))
    rng = np.random.default_rng(0)
    probes.extend(rng.standard_normal(8) + 1j * rng.standard_normal(8))
    for s in probes:
        pd = np.polyval(den[::-1], s)
        pn = np.polyval(num[::-1], s)
        if max(abs(pd), abs(pn)) < 1e-8 * scale:
            raise ValueError(f"latent variable unobservable: common root near s={s:.6g}")


def _faddeev(A: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Characteristic polynomial (ascending) and adjugate matrix coefficients.

    Returns (char, Ms) with char[k] the coefficient of s^k (char[n] = 1) and
    adj(sI - A) = sum_k Ms[k] s^(n-1-k).
    """
    n = A.shape[0]
    char = np.zeros(n + 1)
    char[n] = 1.0
    Ms = [np.eye(n)]
    Mk = np.eye(n)
    for k in range(1, n + 1):
        AM = A @ Mk
        ck = -np.trace(AM) / k
        char[n - k] = ck
        if k < n:
            Mk = AM + ck * np.eye(n)
            Ms.append(Mk)
    return char, Ms


def make_image_form(model: StateSpaceModel) -> ImageFormModel:
    """Image representation of a SISO model from its transfer function.

    With g(s) = num(s)/den(s), the pair u = den(d/dt) l, y = num(d/dt) l
    generates exactly the model's input-output behavior; observability of the
    latent signal is the coprimeness of the two polynomials.
    """
    if model.m != 1 or model.p != 1:
        raise ValueError("image-form construction is implemented for SISO models only")
    den, Ms = _faddeev(model.A)
    num = np.zeros(model.n + 1)
    for k, Mk in enumerate(Ms):
        # Mk multiplies s^(n-1-k)
        num[model.n - 1 - k] = float((model.C @ Mk @ model.B)[0, 0])
    num += float(model.D[0, 0]) * den
    d_coeffs = tuple(np.array([[c]]) for c in den)
    n_coeffs = tuple(np.array([[c]]) for c in num)
    return ImageFormModel(1, model.n, d_coeffs, n_coeffs)


@dataclass(frozen=True, eq=False)
class LatentRun:
    """Exact latent-variable data: (u, y) with jets plus the latent stack."""

    u: Trajectory
    y: Trajectory
    jet: JetTrajectory
    ell_layers: tuple[Trajectory, ...]
    image: ImageFormModel


def generate_latent(img: ImageFormModel, drive: AnalyticInput, grid: TimeGrid,
                    jet_order: int, ell0=None) -> LatentRun:
    """Exact (u, y, latent) data for a scalar image form.

    The latent signal solves den(d/dt) l = v for an analytic drive v, realized
    as a companion-form system and propagated exactly; so u = v and y follows
    from the latent derivative stack. Derivatives of l beyond the state are
    obtained by differentiating the defining equation.
    """
    if img.d != 1:
        raise ValueError("only scalar latent signals are supported")
    if img.order < 1:
        raise ValueError("latent generation needs an image form of order >= 1")
    if drive.m != 1:
        raise ValueError("drive must be single-channel")
    den = img.den
    num = img.num
    nord = img.order
    lead = den[-1]
    if abs(lead) < 1e-12:
        raise ValueError("leading input-polynomial coefficient must be nonzero")
    den_monic = den / lead
    # den(d/dt) l = v is realized as the monic equation driven by v / lead
    drive_scaled = AnalyticInput(drive.kind, (drive.params[0] / lead, *drive.params[1:]))
    Ac = np.zeros((nord, nord))
    Ac[:-1, 1:] = np.eye(nord - 1)
    Ac[-1, :] = -den_monic[:-1]
    Bc = np.zeros((nord, 1))
    Bc[-1, 0] = 1.0
    if ell0 is None:
        ell0 = np.zeros(nord)
    Z = _propagate(Ac, Bc, drive_scaled, np.asarray(ell0, float).reshape(nord), grid)
    times = grid.times()

    # latent derivatives: orders 0..nord-1 from the state, higher orders by
    # l^(nord+k) = v^(k)/lead - sum_i den_monic_i l^(i+k)
    max_ell_order = nord + jet_order
    ell = np.zeros((max_ell_order + 1, grid.count))
    ell[:nord] = Z
    v = [drive.values(times, k)[0] for k in range(jet_order + 1)]
    for k in range(jet_order + 1):
        acc = v[k] / lead
        for i in range(nord):
            acc -= den_monic[i] * ell[i + k]
        ell[nord + k] = acc

    u_rows = [v[k] for k in range(jet_order + 1)]
    y_rows = []
    for k in range(jet_order + 1):
        acc = np.zeros(grid.count)
        for i in range(nord + 1):
            acc += num[i] * ell[i + k]
        y_rows.append(acc)

    u_layers = [Trajectory(grid, row) for row in u_rows]
    y_layers = [Trajectory(grid, row) for row in y_rows]
    ell_layers = tuple(Trajectory(grid, ell[k]) for k in range(max_ell_order + 1))
    jet = JetTrajectory(1, 1, jet_order, tuple(u_layers + y_layers))
    return LatentRun(u_layers[0], y_layers[0], jet, ell_layers, img)


# ---------------------------------------------------------------------------
# Model file format
# ---------------------------------------------------------------------------

def save_model(model: StateSpaceModel, path) -> None:
    """Plain-text matrix file with labeled A/B/C/D sections, row-major."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n {model.n}\nm {model.m}\np {model.p}\n")
        for name in "ABCD":
            mat = getattr(model, name)
            fh.write(name + "\n")
            for row in mat:
                fh.write(" ".join("%.17g" % v for v in row) + "\n")


def load_model(path) -> StateSpaceModel:
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split("\n")
    dims = {}
    idx = 0
    for _ in range(3):
        key, val = tokens[idx].split()
        dims[key] = int(val)
        idx += 1
    n, m, p = dims["n"], dims["m"], dims["p"]
    shapes = {"A": (n, n), "B": (n, m), "C": (p, n), "D": (p, m)}
    mats = {}
    for name in "ABCD":
        if tokens[idx].strip() != name:
            raise ValueError(f"{path}: expected section {name!r}, got {tokens[idx]!r}")
        idx += 1
        rows = []
        for _ in range(shapes[name][0]):
            rows.append([float(v) for v in tokens[idx].split()])
            idx += 1
        mats[name] = np.asarray(rows).reshape(shapes[name])
    return StateSpaceModel(mats["A"], mats["B"], mats["C"], mats["D"])
