"""Trajectory kernels.

Processes:

* ``EM_GAUSSIAN``: y <- y - delta grad U(y) + sqrt(delta) M(y) theta
* ``DISCRETE_XI``: w <- w - delta grad U(w) + sqrt(delta) xi(w, eta)
* ``FINE_REFERENCE``: Euler-Maruyama on a grid ``refine`` times finer, used as
  a surrogate for the continuous diffusion (not its exact law)
* ``FROZEN_V``: the chain whose drift and noise are frozen at the epoch start

Randomness for trajectory i at step k comes from :mod:`langevin_noise.rng`
keyed on (seed, i, k), so work can be split across threads by rows without
changing a single bit of the output.  Fine sub-steps use the sub-counter, and
a coarse step aggregates exactly the normals of its fine sub-steps, which is
what couples coarse and fine paths synchronously.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import linalg
from .lyapunov import LyapunovFn
from .problems import ProblemSpec
from .rng import TAG_THETA, TAG_V, TAG_W, TAG_XI, Stream, chunks, normals


class NoiseBoundViolated(RuntimeError):
    pass


class NonFinite(RuntimeError):
    pass


class ProcessKind(enum.Enum):
    EM_GAUSSIAN = "em_gaussian"
    DISCRETE_XI = "discrete_xi"
    FINE_REFERENCE = "fine_reference"
    FROZEN_V = "frozen_v"


class PairingKind(enum.Enum):
    SYNCHRONOUS = "synchronous"
    REFLECTION = "reflection"
    FROZEN_SHARED_ETA = "frozen_shared_eta"


@dataclass(frozen=True)
class Ensemble:
    kind: ProcessKind
    states: np.ndarray
    step_index: int
    delta: float
    seed: int
    first_traj: int = 0


@dataclass(frozen=True)
class PairedEnsemble:
    kind: PairingKind
    x: np.ndarray
    y: np.ndarray
    step_index: int
    delta: float
    seed: int
    anchor: np.ndarray | None = None
    first_traj: int = 0


def fan_out(fn: Callable[[int, int], object], n: int, threads: int = 1) -> list:
    """Run fn(lo, hi) over contiguous row blocks; results in row order."""
    blocks = chunks(n, threads)
    if len(blocks) == 1:
        return [fn(*blocks[0])]
    with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
        return list(pool.map(lambda b: fn(*b), blocks))


def _theta(seed, k, lo, hi, d, parts=1, sub=0):
    total = normals(seed, TAG_THETA, k, lo, hi, d, sub)
    for r in range(1, parts):
        total = total + normals(seed, TAG_THETA, k, lo, hi, d, sub + r)
    return total / np.sqrt(parts) if parts > 1 else total


def em_increment(spec: ProblemSpec, x, delta, seed, k, lo, hi, parts=1, sub=0):
    theta = _theta(seed, k, lo, hi, spec.dim, parts, sub)
    noise = np.einsum("nij,nj->ni", spec.diffusion_M(x), theta)
    return x - delta * spec.grad_U(x) + np.sqrt(delta) * noise


def draw_xi(spec: ProblemSpec, x, seed, k, lo, hi, sub=0):
    xi = spec.noise_xi(x, Stream(seed, k, lo, hi, TAG_XI, sub))
    norms = np.linalg.norm(xi, axis=1)
    if np.any(norms > spec.params.beta * (1 + 1e-12)):
        raise NoiseBoundViolated(f"|xi| = {float(norms.max()):.4g} exceeds beta = {spec.params.beta:.4g}")
    return xi


def xi_increment(spec: ProblemSpec, x, delta, seed, k, lo, hi):
    xi = draw_xi(spec, x, seed, k, lo, hi)
    return x - delta * spec.grad_U(x) + np.sqrt(delta) * xi


# ---------------------------------------------------------------------------
# single-step API


def make_ensemble(kind: ProcessKind, x0, delta: float, seed: int, n_traj: int | None = None) -> Ensemble:
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = np.tile(x0, (n_traj or 1, 1))
    return Ensemble(kind, x0.copy(), 0, float(delta), int(seed))


def step_em(ens: Ensemble, spec: ProblemSpec) -> Ensemble:
    if ens.kind is not ProcessKind.EM_GAUSSIAN:
        raise ValueError("step_em needs an EM_GAUSSIAN ensemble")
    lo = ens.first_traj
    new = em_increment(spec, ens.states, ens.delta, ens.seed, ens.step_index, lo, lo + ens.states.shape[0])
    return replace(ens, states=new, step_index=ens.step_index + 1)


def step_discrete_xi(ens: Ensemble, spec: ProblemSpec) -> Ensemble:
    if ens.kind is not ProcessKind.DISCRETE_XI:
        raise ValueError("step_discrete_xi needs a DISCRETE_XI ensemble")
    lo = ens.first_traj
    new = xi_increment(spec, ens.states, ens.delta, ens.seed, ens.step_index, lo, lo + ens.states.shape[0])
    return replace(ens, states=new, step_index=ens.step_index + 1)


# ---------------------------------------------------------------------------
# multi-step runners


@dataclass
class RunResult:
    final: np.ndarray
    trace: np.ndarray | None  # (n_recorded, n_traj) per-trajectory observable


def _gather(parts: list, n_steps_obs: bool) -> RunResult:
    final = np.concatenate([p[0] for p in parts], axis=0)
    trace = np.concatenate([p[1] for p in parts], axis=1) if n_steps_obs else None
    return RunResult(final, trace)


def run_chain(
    kind: ProcessKind,
    spec: ProblemSpec,
    x0: np.ndarray,
    delta: float,
    n_steps: int,
    seed: int,
    threads: int = 1,
    refine: int = 1,
    observe: Callable[[np.ndarray], np.ndarray] | None = None,
    every: int = 1,
) -> RunResult:
    """Advance every row of x0 by n_steps coarse steps of size delta.

    ``refine`` > 1 with EM_GAUSSIAN aggregates that many fine normals into
    each coarse step (the coupled coarse chain); with FINE_REFERENCE it runs
    the fine grid itself.  ``observe`` maps states to one value per row and
    is recorded at step 0 and every ``every`` steps.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.shape[0]

    def block(lo, hi):
        x = x0[lo:hi].copy()
        rec = [observe(x)] if observe else []
        for k in range(n_steps):
            if kind is ProcessKind.EM_GAUSSIAN:
                x = em_increment(spec, x, delta, seed, k, lo, hi, parts=refine)
            elif kind is ProcessKind.FINE_REFERENCE:
                for r in range(refine):
                    x = em_increment(spec, x, delta / refine, seed, k, lo, hi, parts=1, sub=r)
            elif kind is ProcessKind.DISCRETE_XI:
                x = xi_increment(spec, x, delta, seed, k, lo, hi)
            else:
                raise ValueError(f"run_chain does not handle {kind}")
            if not np.all(np.isfinite(x)):
                raise NonFinite(f"non-finite state at step {k + 1}")
            if observe and (k + 1) % every == 0:
                rec.append(observe(x))
        return x, (np.array(rec) if observe else None)

    return _gather(fan_out(block, n, threads), observe is not None)


def simulate_reference(x0, spec: ProblemSpec, T: float, delta: float, refine: int = 64, seed: int = 0, threads: int = 1) -> np.ndarray:
    """Endpoints of the fine-grid surrogate of the continuous diffusion at time T."""
    if refine < 16 and refine != 1:
        raise ValueError("refine must be >= 16 (or 1, which is plain EM)")
    n_steps = int(round(T / delta))
    kind = ProcessKind.EM_GAUSSIAN if refine == 1 else ProcessKind.FINE_REFERENCE
    return run_chain(kind, spec, np.atleast_2d(x0), delta, n_steps, seed, threads, refine).final


# ---------------------------------------------------------------------------
# reflection coupling


def reflection_direction(x, y, lyap: LyapunovFn) -> np.ndarray:
    z = x - y
    r = np.linalg.norm(z, axis=1, keepdims=True)
    on = (r >= 2.0 * lyap.epsilon) & (r < lyap.constants.R_q)
    return np.where(on, z / np.where(r > 0, r, 1.0), 0.0)


def _coupled_block(spec, lyap, x, y, delta, seed, k, lo, hi, inner):
    c_m = spec.params.c_m
    dt = delta / inner
    y0 = y
    g_y0 = spec.grad_U(y0)
    n_y0 = linalg.diffusion_remainder(spec.diffusion_M(y0), c_m)
    d = spec.dim
    for j in range(inner):
        dv = np.sqrt(dt) * normals(seed, TAG_V, k, lo, hi, d, j)
        dw = np.sqrt(dt) * normals(seed, TAG_W, k, lo, hi, d, j)
        gamma = reflection_direction(x, y, lyap)
        n_x = linalg.diffusion_remainder(spec.diffusion_M(x), c_m)
        x_new = x - spec.grad_U(x) * dt + c_m * dv + np.einsum("nij,nj->ni", n_x, dw)
        dv_ref = dv - 2.0 * gamma * np.sum(gamma * dv, axis=1, keepdims=True)
        y = y - g_y0 * dt + c_m * dv_ref + np.einsum("nij,nj->ni", n_y0, dw)
        x = x_new
    return x, y


def step_reflection_coupled(pair: PairedEnsemble, spec: ProblemSpec, lyap: LyapunovFn, inner: int = 32) -> PairedEnsemble:
    """One outer step of length delta; x is refreshed every sub-step, y's coefficients are frozen."""
    if pair.kind is not PairingKind.REFLECTION:
        raise ValueError("step_reflection_coupled needs a REFLECTION pair")
    lo = pair.first_traj
    x, y = _coupled_block(spec, lyap, pair.x, pair.y, pair.delta, pair.seed, pair.step_index, lo, lo + pair.x.shape[0], inner)
    return replace(pair, x=x, y=y, step_index=pair.step_index + 1)


def run_reflection(
    spec: ProblemSpec,
    lyap: LyapunovFn,
    x0: np.ndarray,
    y0: np.ndarray,
    delta: float,
    n_steps: int,
    seed: int,
    inner: int = 32,
    threads: int = 1,
    observe: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    record_at: tuple[int, ...] = (),
):
    """Run coupled pairs; returns (x, y, {k: observe(x_k, y_k)})."""
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    wanted = set(record_at)

    def block(lo, hi):
        x, y = x0[lo:hi].copy(), y0[lo:hi].copy()
        rec = {0: observe(x, y)} if observe and 0 in wanted else {}
        for k in range(n_steps):
            x, y = _coupled_block(spec, lyap, x, y, delta, seed, k, lo, hi, inner)
            if observe and (k + 1) in wanted:
                rec[k + 1] = observe(x, y)
        return x, y, rec

    parts = fan_out(block, x0.shape[0], threads)
    x = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    rec = {k: np.concatenate([p[2][k] for p in parts]) for k in (parts[0][2] if parts else {})}
    return x, y, rec


# ---------------------------------------------------------------------------
# frozen-coefficient pair


def step_frozen_pair(pair: PairedEnsemble, spec: ProblemSpec) -> PairedEnsemble:
    """Advance v (in ``x``) with coefficients frozen at ``anchor`` and w (in ``y``) with current ones.

    Both members see the same minibatch draw eta_k.
    """
    if pair.kind is not PairingKind.FROZEN_SHARED_ETA:
        raise ValueError("step_frozen_pair needs a FROZEN_SHARED_ETA pair")
    lo = pair.first_traj
    hi = lo + pair.x.shape[0]
    v, w = _frozen_step(spec, pair.x, pair.y, pair.anchor, pair.delta, pair.seed, pair.step_index, lo, hi)
    return replace(pair, x=v, y=w, step_index=pair.step_index + 1)


def _frozen_step(spec, v, w, anchor, delta, seed, k, lo, hi):
    sq = np.sqrt(delta)
    xi_anchor = draw_xi(spec, anchor, seed, k, lo, hi)
    xi_w = draw_xi(spec, w, seed, k, lo, hi)
    v = v - delta * spec.grad_U(anchor) + sq * xi_anchor
    w = w - delta * spec.grad_U(w) + sq * xi_w
    return v, w


def run_frozen_pair(spec: ProblemSpec, w0: np.ndarray, delta: float, n_steps: int, seed: int, threads: int = 1):
    w0 = np.asarray(w0, dtype=float)

    def block(lo, hi):
        anchor = w0[lo:hi].copy()
        v, w = anchor.copy(), anchor.copy()
        for k in range(n_steps):
            v, w = _frozen_step(spec, v, w, anchor, delta, seed, k, lo, hi)
        return v, w

    parts = fan_out(block, w0.shape[0], threads)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


# ---------------------------------------------------------------------------
# noise aggregation


def clt_aggregate_noise(x, spec: ProblemSpec, n_samples: int, seed: int = 0, n_aggregates: int | None = None, threads: int = 1) -> np.ndarray:
    """S_n = n^{-1/2} sum_i xi(x, eta_i), one row per aggregate.

    ``x`` is a single point (repeated ``n_aggregates`` times) or a batch.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = np.tile(x, (n_aggregates or 1, 1))

    def block(lo, hi):
        total = np.zeros((hi - lo, spec.dim))
        for i in range(n_samples):
            total += draw_xi(spec, x[lo:hi], seed, i, lo, hi)
        return total / np.sqrt(n_samples)

    out = np.concatenate(fan_out(block, x.shape[0], threads))
    return out
