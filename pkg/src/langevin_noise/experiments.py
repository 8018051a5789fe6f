"""Reproducible experiments shared by the command line and the acceptance tests.

Each function returns an :class:`Outcome`: a list of named checks, each with
a measured value, the bound it is held to and a pass flag, plus numeric
tables for CSV output.  Every random quantity is keyed on ``seed`` through
:mod:`langevin_noise.rng`, so ``threads`` never changes a result.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import fokker1d, linalg, metrics, problems, sgdnoise, simulate
from .lyapunov import LyapunovFn, derive_constants, theorem1_budget
from .problems import RegularityParams
from .rng import TAG_INIT, normals


@dataclass(frozen=True)
class Check:
    group: str
    name: str
    value: float
    bound: float
    passed: bool


@dataclass
class Outcome:
    name: str
    checks: list[Check] = field(default_factory=list)
    tables: dict[str, tuple[list[str], np.ndarray]] = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, group: str, name: str, value: float, bound: float, passed: bool | None = None) -> None:
        ok = bool(value <= bound) if passed is None else bool(passed)
        self.checks.append(Check(group, name, float(value), float(bound), ok))

    def table(self, name: str, columns: list[str], rows) -> None:
        self.tables[name] = (list(columns), np.atleast_2d(np.asarray(rows, dtype=float)))


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        out = fn(*args, **kwargs)
        out.seconds = time.perf_counter() - start
        return out

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _fd(fn, x, step):
    return (np.asarray(fn(x + step)) - np.asarray(fn(x - step))) / (2.0 * step)


def _rel_err(approx, exact, floor):
    """Relative error, with values below floor * max|exact| judged against that floor."""
    exact = np.asarray(exact)
    scale = floor * max(float(np.max(np.abs(exact))), 1e-300)
    return float(np.max(np.abs(approx - exact) / np.maximum(np.abs(exact), scale)))


def _excess(lhs, rhs) -> float:
    """Worst violation of lhs <= rhs (zero when it holds everywhere)."""
    return float(max(np.max(np.asarray(lhs) - np.asarray(rhs)), 0.0)) + 0.0


# ---------------------------------------------------------------------------
# Lyapunov property grid


DEFAULT_LEMMA_PARAMS = RegularityParams(m=2.0, L=3.0, L_R=1.0, R=1.0, beta=1.0, L_xi=0.0, c_m=1.0)


@_timed
def lemma_grid(
    params: RegularityParams = DEFAULT_LEMMA_PARAMS,
    epsilon: float = 0.1,
    points: int = 500,
    samples: int = 10_000,
    seed: int = 0,
    closed_tol: float = 1e-8,
    quad_tol: float = 1e-6,
    fd_tol: float = 1e-5,
) -> Outcome:
    """Every sandwich, range and derivative identity of the f = q(g) stack on a grid."""
    c = derive_constants(params)
    lyap = LyapunovFn(epsilon, c)
    out = Outcome("lemma_grid", info={"epsilon": epsilon, "R_q": c.R_q, "alpha_q": c.alpha_q, "lambda": c.lam})
    e, Rq, a, decay = epsilon, c.R_q, c.alpha_q, c.decay
    r = np.linspace(0.0, 5.0 * Rq, points)

    def closed(group, name, worst):
        out.add(group, name, worst, closed_tol)

    def quad(group, name, worst):
        out.add(group, name, worst, quad_tol)

    # h on its own scale
    rh = np.linspace(0.0, 3.0 * e, points)
    closed("h", "h1_in_0_1", max(_excess(lyap.h1(rh), 1.0), _excess(0.0, lyap.h1(rh))))
    closed("h", "h2_in_0_inv_eps", max(_excess(lyap.h2(rh), 1.0 / e), _excess(0.0, lyap.h2(rh))))
    closed("h", "h3_abs_le_inv_eps2", _excess(np.abs(lyap.h3(rh)), 1.0 / e**2))
    closed("h", "h_at_2eps_branch", abs(lyap.h(2 * e) - 2 * e))

    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(samples, 2))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    z = dirs * rng.uniform(0.0, 3.0 * Rq, size=(samples, 1))
    zn = np.linalg.norm(z, axis=1)
    gz = lyap.g(z)
    closed("g", "g_sandwich", max(_excess(zn - 2 * e, gz), _excess(gz, zn)))
    closed("g", "grad_g_norm_le_1", _excess(np.linalg.norm(lyap.grad_g(z), axis=1), 1.0))

    closed("tau", "tau1_in_range", max(_excess(lyap.tau1(r), 1.25 * Rq), _excess(0.0, lyap.tau1(r))))
    closed("tau", "tau1_max_at_1.5R", abs(lyap.tau1(1.5 * Rq) - 1.25 * Rq))
    closed("tau", "tau2_in_range", _excess(np.abs(lyap.tau2(r)), 1.0))
    closed("mu", "mu_in_0_1", max(_excess(lyap.mu(r), 1.0), _excess(0.0, lyap.mu(r))))
    closed("mu", "mu1_in_range", max(_excess(lyap.mu1(r), 0.0), _excess(-math.pi / (6 * Rq), lyap.mu1(r))))

    quad("Psi", "Psi_nondecreasing", _excess(0.0, np.diff(lyap.Psi(r))))
    nu = np.asarray(lyap.nu(r))
    quad("nu", "nu_nonincreasing", _excess(np.diff(nu), 0.0))
    quad("nu", "nu_in_half_1", max(_excess(nu, 1.0), _excess(0.5, nu)))

    q, q1, q2 = (np.asarray(fn(r)) for fn in (lyap.q, lyap.q1, lyap.q2))
    quad("q", "q_sandwich", max(_excess(0.5 * decay * r, q), _excess(q, r)))
    quad("q", "q1_in_range", max(_excess(q1, 1.0), _excess(0.5 * decay, q1)))
    quad("q", "q2_nonpositive", _excess(q2, 0.0))
    quad("q", "q2_magnitude", _excess(np.abs(q2), 1.25 * a * Rq + 4.0 / Rq))
    inner = r <= Rq
    quad(
        "q",
        "differential_inequality",
        _excess(q2[inner] + a * q1[inner] * r[inner], -decay / (32 * Rq**2) * q[inner]),
    )

    fz = np.asarray(lyap.f(z))
    quad("f", "f_sandwich", max(_excess(0.5 * decay * (zn - 2 * e), fz), _excess(fz, zn)))
    quad("f", "grad_f_norm_le_1", _excess(np.linalg.norm(lyap.grad_f(z), axis=1), 1.0))
    hf = lyap.hess_f(z)
    quad("f", "hess_f_norm_le_2_over_eps", _excess(np.max(np.abs(np.linalg.eigvalsh(hf)), axis=1), 2.0 / e))
    v = rng.normal(size=z.shape)
    far = zn >= 2 * e
    vHv = np.einsum("ni,nij,nj->n", v, hf, v)
    cap = np.asarray(lyap.q1(gz)) / np.where(zn > 0, zn, 1.0) * np.sum(v * v, axis=1)
    quad("f", "hessian_radial_bound", _excess(vHv[far], cap[far]))

    # derivatives against central differences, away from the joints
    def away(x, joints, gap):
        keep = np.ones_like(x, dtype=bool)
        for j in joints:
            keep &= np.abs(x - j) > gap
        return x[keep]

    rh_in = away(rh[1:], [e, 2 * e], 1e-3 * e)
    hs = 1e-6 * e
    fd_floor = 1e-3
    out.add("fd", "h1_vs_h", _rel_err(_fd(lyap.h, rh_in, hs), lyap.h1(rh_in), fd_floor), fd_tol)
    out.add("fd", "h2_vs_h1", _rel_err(_fd(lyap.h1, rh_in, hs), lyap.h2(rh_in), fd_floor), fd_tol)
    out.add("fd", "h3_vs_h2", _rel_err(_fd(lyap.h2, rh_in, hs), lyap.h3(rh_in), fd_floor), fd_tol)
    r_in = away(r[1:], [Rq, 2 * Rq, 4 * Rq], 1e-3 * Rq)
    rs = 1e-5 * Rq
    out.add("fd", "tau1_vs_tau", _rel_err(_fd(lyap.tau, r_in, rs), lyap.tau1(r_in), fd_floor), fd_tol)
    out.add("fd", "tau2_vs_tau1", _rel_err(_fd(lyap.tau1, r_in, rs), lyap.tau2(r_in), fd_floor), fd_tol)
    out.add("fd", "mu1_vs_mu", _rel_err(_fd(lyap.mu, r_in, rs), lyap.mu1(r_in), fd_floor), fd_tol)
    out.add("fd", "psi1_vs_psi", _rel_err(_fd(lyap.psi, r_in, rs), lyap.psi1(r_in), fd_floor), fd_tol)
    out.add("fd", "nu1_vs_nu", _rel_err(_fd(lyap.nu, r_in, rs), lyap.nu1(r_in), fd_floor), fd_tol)
    out.add("fd", "q1_vs_q", _rel_err(_fd(lyap.q, r_in, rs), lyap.q1(r_in), fd_floor), fd_tol)
    out.add("fd", "q2_vs_q1", _rel_err(_fd(lyap.q1, r_in, rs), lyap.q2(r_in), fd_floor), fd_tol)

    zf = z[(zn > 3 * e) & (zn < 2 * Rq) & (np.abs(zn - Rq) > 1e-3 * Rq)][:100]
    step = 1e-6
    num_grad = np.empty_like(zf)
    num_hess = np.empty((zf.shape[0], 2, 2))
    for i in range(2):
        shift = np.zeros(2)
        shift[i] = step
        num_grad[:, i] = (np.asarray(lyap.f(zf + shift)) - np.asarray(lyap.f(zf - shift))) / (2 * step)
        num_hess[:, :, i] = (lyap.grad_f(zf + shift) - lyap.grad_f(zf - shift)) / (2 * step)
    gscale = np.linalg.norm(lyap.grad_f(zf), axis=1, keepdims=True)
    out.add("fd", "grad_f_vs_f", float(np.max(np.abs(num_grad - lyap.grad_f(zf)) / gscale)), fd_tol)
    hscale = np.max(np.abs(lyap.hess_f(zf)), axis=(1, 2))[:, None, None]
    out.add("fd", "hess_f_vs_grad_f", float(np.max(np.abs(num_hess - lyap.hess_f(zf)) / hscale)), fd_tol)

    out.table("profile", ["r", "h", "tau", "mu", "psi", "Psi", "nu", "q", "q1", "q2"],
              np.column_stack([r, lyap.h(r), lyap.tau(r), lyap.mu(r), lyap.psi(r), lyap.Psi(r), nu, q, q1, q2]))
    return out


# ---------------------------------------------------------------------------
# one-dimensional invariant law


def fig1_initial(n_traj: int, seed: int, center: float = -2.0, spread: float = 1.0) -> np.ndarray:
    return center + spread * normals(seed, TAG_INIT, 0, 0, n_traj, 1)


@_timed
def invariant_1d(
    n_traj: int = 1000,
    n_steps: int = 1000,
    delta: float = 0.01,
    seed: int = 0,
    threads: int = 1,
    init_center: float = -2.0,
    init_spread: float = 1.0,
    m_floor: float = 0.05,
    convention: str = "paper",
    mode_tol: float = 0.5,
    w1_tol: float = 0.6,
) -> Outcome:
    """Euler-Maruyama ensemble on the two-well example against the stationary-density oracle."""
    spec = problems.builtin_1d_example(m_floor)
    x0 = fig1_initial(n_traj, seed, init_center, init_spread)
    final = simulate.run_chain(simulate.ProcessKind.EM_GAUSSIAN, spec, x0, delta, n_steps, seed, threads).final[:, 0]
    grid = fokker1d.default_grid()
    dens = fokker1d.invariant_density(spec, grid, convention=convention)
    grid = dens.grid
    V = -dens.logdens
    w1, gap = fokker1d.compare_to_samples(dens, final)
    interior = (V[1:-1] < V[:-2]) & (V[1:-1] < V[2:])
    minima = grid[1:-1][interior]
    inside = minima[(minima >= -3.0) & (minima <= -1.0)]
    out = Outcome(
        "invariant_1d",
        info={"local_minima_of_V": [float(x) for x in minima], "density_argmax": dens.argmax, "convention": convention},
    )
    out.add("fig1", "mode_gap", gap, mode_tol)
    out.add("fig1", "w1_to_oracle", w1, w1_tol)
    out.add("fig1", "V_local_minima_count", float(minima.size), 1.0, passed=minima.size == 1 and inside.size == 1)
    out.table("endpoints", ["traj_id", "x_0"], np.column_stack([np.arange(n_traj), final]))
    out.table("oracle", ["x", "V", "density"], np.column_stack([grid, V - V.min(), dens.pdf]))
    return out


# ---------------------------------------------------------------------------
# discretization rate


def loglog_slope(deltas, errors) -> float:
    return float(np.polyfit(np.log(deltas), np.log(errors), 1)[0])


@_timed
def rate_sweep(
    spec=None,
    deltas=tuple(2.0**-k for k in range(4, 10)),
    n_pairs: int = 2000,
    T: float = 1.0,
    refine: int = 64,
    x0=(0.5, 0.5),
    seed: int = 0,
    threads: int = 1,
    min_slope: float = 0.4,
) -> Outcome:
    """Coarse Euler-Maruyama against a refine-times finer path driven by the same normals.

    The reported distance is the mean endpoint gap under this synchronous
    coupling, an upper bound on W1 with a per-pair standard error.
    """
    spec = problems.state_dependent_2d() if spec is None else spec
    deltas = np.asarray(sorted(deltas, reverse=True), dtype=float)
    if deltas.size < 4:
        raise ValueError("rate sweep needs at least four step sizes")
    start = np.tile(np.asarray(x0, dtype=float), (n_pairs, 1))
    rows = []
    for delta in deltas:
        n_steps = int(round(T / delta))
        coarse = simulate.run_chain(simulate.ProcessKind.EM_GAUSSIAN, spec, start, delta, n_steps, seed, threads, refine).final
        fine = simulate.run_chain(simulate.ProcessKind.FINE_REFERENCE, spec, start, delta, n_steps, seed, threads, refine).final
        mean, se = metrics.mean_and_se(np.linalg.norm(coarse - fine, axis=1))
        rows.append((delta, mean, se))
    rows = np.array(rows)
    slope = loglog_slope(rows[:, 0], np.maximum(rows[:, 1], 1e-300))
    out = Outcome("rate_sweep", info={"slope": slope, "problem": spec.name})
    out.add("rate", "loglog_slope", slope, min_slope, passed=slope >= min_slope)
    # sorted from coarse to fine, the gap must shrink up to two standard errors
    rise = rows[1:, 1] - rows[:-1, 1] - 2.0 * np.hypot(rows[1:, 2], rows[:-1, 2])
    out.add("rate", "monotone_in_delta", float(np.max(rise)), 0.0)
    out.table("sweep", ["delta", "w1", "se"], rows)
    return out


# ---------------------------------------------------------------------------
# contraction under reflection coupling


@_timed
def contraction(
    eps_hat: float = 1.0,
    n_pairs: int = 1000,
    n_steps: int = 1000,
    inner: int = 32,
    x0: float = -0.6,
    y0: float = 0.6,
    checkpoints=(10, 100, 1000),
    seed: int = 0,
    threads: int = 1,
    epsilon: float | None = None,
    delta: float | None = None,
) -> Outcome:
    """Reflection-coupled pairs on the 1D double well.

    ``epsilon`` and ``delta`` default to the values the step-size budget
    derives from ``eps_hat``.
    """
    spec = problems.double_well_1d()
    c = derive_constants(spec.params)
    budget = theorem1_budget(eps_hat, c, spec.params)
    epsilon = budget.epsilon if epsilon is None else epsilon
    delta = budget.delta_max if delta is None else delta
    lyap = LyapunovFn(epsilon, c)
    xs = np.full((n_pairs, 1), x0)
    ys = np.full((n_pairs, 1), y0)
    record = (0,) + tuple(k for k in checkpoints if k <= n_steps)
    _, _, rec = simulate.run_reflection(
        spec, lyap, xs, ys, delta, n_steps, seed, inner, threads,
        observe=lambda x, y: np.asarray(lyap.f(x - y)), record_at=record,
    )
    f0 = float(np.mean(rec[0]))
    offset = 6.0 / c.lam * (spec.params.L + c.L_N**2) * epsilon
    out = Outcome("contraction", info={"delta": delta, "epsilon": epsilon, "lambda": c.lam, "budget_delta": budget.delta_max})
    rows = []
    for k in record:
        mean, se = metrics.mean_and_se(rec[k])
        bound = math.exp(-c.lam * k * delta) * f0 + offset
        rows.append((k, mean, se, bound))
        if k > 0:
            out.add("contraction", f"Ef_at_k{k}", mean, bound + 3.0 * se)
    out.table("contraction", ["k", "mean_f", "se", "bound"], rows)
    return out


# ---------------------------------------------------------------------------
# second-moment bounds


def toy_problem(step: float, sigma: float = 0.0, b1: int = 1, b2: int = 1):
    return problems.finite_sum_problem(problems.logistic_objective(), step=step, b1=b1, sigma=sigma, b2=b2)


@_timed
def energy(
    delta: float = 0.01,
    n_traj: int = 1000,
    n_steps: int = 1000,
    x_refine: int = 16,
    every: int = 10,
    seed: int = 0,
    threads: int = 1,
) -> Outcome:
    """Second moments of the diffusion surrogate x, the Gaussian chain y and the SGD chain w."""
    spec = toy_problem(delta)
    p = spec.params
    if delta > p.m / (16.0 * p.L**2):
        raise ValueError(f"delta={delta} exceeds m/(16 L^2)={p.m / (16 * p.L**2):.4g}")
    scale = p.R**2 + p.beta**2 / p.m
    start = np.zeros((n_traj, spec.dim))

    def sq(x):
        return np.sum(x * x, axis=1)

    K = simulate.ProcessKind
    runs = {
        "x": (simulate.run_chain(K.FINE_REFERENCE, spec, start, delta, n_steps, seed, threads, x_refine, sq, every), 6.0),
        "y": (simulate.run_chain(K.EM_GAUSSIAN, spec, start, delta, n_steps, seed, threads, 1, sq, every), 8.0),
        "w": (simulate.run_chain(K.DISCRETE_XI, spec, start, delta, n_steps, seed, threads, 1, sq, every), 8.0),
    }
    out = Outcome("energy", info={"bound_scale": scale, "delta": delta, "L": p.L, "m": p.m})
    steps = np.arange(0, n_steps + 1, every)
    cols, data = ["step"], [steps]
    for name, (res, factor) in runs.items():
        mean = res.trace.mean(axis=1)
        se = res.trace.std(axis=1, ddof=1) / math.sqrt(n_traj)
        out.info[f"{name}_peak_second_moment"] = float(mean.max())
        out.add("energy", f"{name}_second_moment", float(np.max(mean - 3.0 * se - factor * scale)), 0.0)
        cols += [f"{name}_mean", f"{name}_se"]
        data += [mean, se]
    out.table("moments", cols, np.column_stack(data))
    return out


# ---------------------------------------------------------------------------
# frozen-coefficient pair


@_timed
def frozen_pair(delta: float = 1e-4, n_pairs: int = 10_000, seed: int = 0, threads: int = 1) -> Outcome:
    """v frozen at the epoch start versus w, sharing minibatches, over one epoch.

    The epoch is T = 1/(16 L) rounded down to whole steps, the longest epoch
    the bound allows that does not depend on the target accuracy.
    """
    spec = toy_problem(delta)
    p = spec.params
    n_steps = max(1, int(math.floor(1.0 / (16.0 * p.L) / delta)))
    T = n_steps * delta
    w0 = normals(seed, TAG_INIT, 0, 0, n_pairs, spec.dim)
    v, w = simulate.run_frozen_pair(spec, w0, delta, n_steps, seed, threads)
    gap = np.sum((v - w) ** 2, axis=1)
    mean, se = metrics.mean_and_se(gap)
    bound = 32.0 * (T**2 * p.L**2 + T * p.L_xi**2) * T * p.beta**2
    out = Outcome("frozen_pair", info={"T": T, "n_steps": n_steps, "mean": mean, "se": se, "bound": bound})
    out.add("frozen", "mean_sq_gap", mean, bound + 3.0 * se)
    out.table("frozen", ["T", "n_steps", "mean_sq_gap", "se", "bound"], [(T, n_steps, mean, se, bound)])
    return out


# ---------------------------------------------------------------------------
# quantitative central limit


@_timed
def clt(sizes=(64, 256, 1024), n_aggregates: int = 10_000, seed: int = 0, threads: int = 1) -> Outcome:
    """Normalized sums of bounded Rademacher noise against the matching Gaussian in W2."""
    spec = problems.quadratic(1)
    beta, d = spec.params.beta, spec.dim
    out = Outcome("clt")
    rows = []
    for n in sizes:
        agg = simulate.clt_aggregate_noise(np.zeros(d), spec, n, seed, n_aggregates, threads)[:, 0]
        w2 = metrics.w2_to_gaussian(agg, 0.0, 1.0)
        bound = 6.0 * math.sqrt(d) * beta * math.sqrt(math.log(n)) / math.sqrt(n)
        rows.append((n, w2, bound))
        out.add("clt", f"w2_n{n}", w2, bound)
    out.table("clt", ["n", "w2", "bound"], rows)
    return out


# ---------------------------------------------------------------------------
# matrix square-root inequality


def random_spd(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.normal(size=(dim, dim))
    return a @ a.T + 1e-3 * np.eye(dim)


@_timed
def eldan(n_pairs: int = 1000, max_dim: int = 6, seed: int = 0, rel_tol: float = 1e-8) -> Outcome:
    """tr((sqrt A - sqrt B)^2) <= tr((A - B)^2 A^{-1}) on random positive definite pairs."""
    rng = np.random.default_rng(seed)
    dims = 1 + np.arange(n_pairs) % max_dim
    rows = np.empty((n_pairs, 4))
    rows[:, 0] = np.arange(n_pairs)
    rows[:, 1] = dims
    for dim in range(1, max_dim + 1):
        sel = np.flatnonzero(dims == dim)
        a = np.stack([random_spd(rng, dim) for _ in sel])
        b = np.stack([random_spd(rng, dim) for _ in sel])
        rows[sel, 2], rows[sel, 3] = linalg.eldan_sides(a, b)
    excess = (rows[:, 2] - rows[:, 3]) / np.abs(rows[:, 3])
    failures = int(np.sum(rows[:, 2] > rows[:, 3] * (1.0 + rel_tol)))
    out = Outcome("eldan", info={"worst_relative_excess": float(np.max(excess))})
    out.add("eldan", "failures", float(failures), 0.0)
    out.table("pairs", ["pair", "dim", "lhs", "rhs"], rows)
    return out


# ---------------------------------------------------------------------------
# covariance matching


def construction_identity(s: float = 0.01, b: int = 16) -> tuple[float, float]:
    """Covariance scalar of the large-noise run matched to (8 s, b)-SGD, and 8 s / b."""
    sigma = sgdnoise.match_noise(sgdnoise.SGDConfig(8.0 * s, b), s, b, b)
    return sgdnoise.LargeNoiseConfig(s, sigma, b, b).covariance_scalar, 8.0 * s / b


@_timed
def matching(
    delta: float = 0.05,
    b: int = 16,
    s: float = 0.01,
    b1: int = 16,
    b2: int = 16,
    mismatch_b: int = 4,
    steps: int = 2000,
    n_chains: int = 400,
    groups: int = 20,
    tail_every: int = 20,
    n_proj: int = 32,
    seed: int = 0,
    threads: int = 1,
) -> Outcome:
    """Tail ensembles of SGD, matched large-noise SGD and a covariance-mismatched SGD run.

    Chains are split into ``groups``; per group, the distance between the
    matched pair is compared with each run's distance to the mismatched one.
    """
    obj = problems.logistic_objective()
    target = sgdnoise.SGDConfig(delta, b)
    sigma = sgdnoise.match_noise(target, s, b1, b2)
    matched = sgdnoise.LargeNoiseConfig(s, sigma, b1, b2)
    wrong = sgdnoise.SGDConfig(delta, mismatch_b)
    # independent chains: each run gets its own seed offset
    runs = [sgdnoise.run_training(obj, cfg, steps, seed + 7919 * i, n_chains, threads=threads, tail_every=tail_every)
            for i, cfg in enumerate((target, matched, wrong))]
    tails = [r.tail_by_chain for r in runs]
    per = n_chains // groups
    dist = np.empty((groups, 3))
    for g in range(groups):
        part = [t[g * per:(g + 1) * per].reshape(-1, obj.dim) for t in tails]
        dist[g] = (
            metrics.w1_sliced(part[0], part[1], n_proj, seed + g),
            metrics.w1_sliced(part[0], part[2], n_proj, seed + g),
            metrics.w1_sliced(part[1], part[2], n_proj, seed + g),
        )
    out = Outcome("matching", info={"sigma": sigma, "covariance_scalar": target.covariance_scalar})
    for col, name in ((1, "sgd_vs_mismatch"), (2, "large_noise_vs_mismatch")):
        diff = dist[:, col] - dist[:, 0]
        mean, se = metrics.mean_and_se(diff)
        out.add("matching", f"{name}_minus_matched", mean, 2.0 * se, passed=mean >= 2.0 * se and mean > 0)
    got, want = construction_identity(s, b)
    out.add("matching", "eight_times_identity", abs(got - want), 4.0 * math.ulp(want))
    out.add("matching", "scalars_equal", abs(matched.covariance_scalar - target.covariance_scalar),
            4.0 * math.ulp(target.covariance_scalar))
    out.table("distances", ["group", "matched", "sgd_vs_mismatch", "large_noise_vs_mismatch"],
              np.column_stack([np.arange(groups), dist]))
    names = ("sgd", "large_noise", "mismatch")
    for name, run in zip(names, runs):
        out.table(f"tail_{name}", ["x_0", "x_1"], run.tail.points)
    out.table("loss", ["step"] + [f"{n}_loss" for n in names],
              np.column_stack([np.arange(steps + 1)] + [r.loss_trace for r in runs]))
    return out


# ---------------------------------------------------------------------------
# plain runs used by the command line


@_timed
def simulate_endpoints(spec, kind: simulate.ProcessKind, x0, delta: float, n_steps: int, seed: int,
                       threads: int = 1, refine: int = 1) -> Outcome:
    x0 = np.asarray(x0, dtype=float)
    res = simulate.run_chain(kind, spec, x0, delta, n_steps, seed, threads, refine)
    n, d = res.final.shape
    out = Outcome("simulate", info={"problem": spec.name, "kind": kind.name})
    out.table("endpoints", ["traj_id", "step"] + [f"x_{i}" for i in range(d)],
              np.column_stack([np.arange(n), np.full(n, n_steps), res.final]))
    return out


ALL = {
    "lemma_grid": lemma_grid,
    "invariant_1d": invariant_1d,
    "rate_sweep": rate_sweep,
    "contraction": contraction,
    "energy": energy,
    "frozen_pair": frozen_pair,
    "clt": clt,
    "eldan": eldan,
    "matching": matching,
}
