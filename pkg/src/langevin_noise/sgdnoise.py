"""Minibatch SGD, large-noise SGD, and matching their noise covariances.

Minibatches are drawn with replacement.  For a step size delta and batch
size b, SGD's increment noise has covariance (delta / b) H(w) per unit of
delta, where H(w) is the covariance of the single-sample gradient error.
Large-noise SGD with (s, sigma, b1, b2) has scalar s/b1 + 2 sigma^2/b2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import EmpiricalMeasure, measure
from .problems import FiniteSumObjective
from .rng import TAG_BATCH, Stream
from .simulate import NonFinite, fan_out


class Unmatchable(ValueError):
    pass


@dataclass(frozen=True)
class SGDConfig:
    delta: float
    b: int

    def __post_init__(self):
        if self.b < 1 or not self.delta > 0:
            raise ValueError("need b >= 1 and delta > 0")

    @property
    def covariance_scalar(self) -> float:
        return self.delta / self.b


@dataclass(frozen=True)
class LargeNoiseConfig:
    s: float
    sigma: float
    b1: int
    b2: int

    def __post_init__(self):
        if self.b1 < 1 or self.b2 < 1 or not self.s > 0 or self.sigma < 0:
            raise ValueError("need b1, b2 >= 1, s > 0, sigma >= 0")

    @property
    def covariance_scalar(self) -> float:
        return self.s / self.b1 + 2.0 * self.sigma**2 / self.b2


def _picked_sum(obj: FiniteSumObjective, w, idx):
    return obj.batch_grad(w, idx) * idx.shape[1]


def sgd_step(w, obj: FiniteSumObjective, cfg: SGDConfig, rng: Stream) -> np.ndarray:
    """w - (delta/b) sum over a with-replacement minibatch of grad U_i(w)."""
    idx = rng.integers(obj.n, cfg.b)
    return w - cfg.delta / cfg.b * _picked_sum(obj, w, idx)


def large_noise_sgd_step(w, obj: FiniteSumObjective, cfg: LargeNoiseConfig, rng: Stream, form: int = 1) -> np.ndarray:
    """One large-noise SGD update.

    form 1: w - (s/b1) sum_eta grad U_i + (sigma sqrt(s)/b2)(sum_eta' grad U_i - sum_eta'' grad U_i)
    form 2: w - s grad U + s zeta(eta) + sigma sqrt(s)(zeta(eta'') - zeta(eta'))
    The batches eta, eta', eta'' are drawn in that order from ``rng``.
    """
    eta = rng.integers(obj.n, cfg.b1)
    eta1 = rng.integers(obj.n, cfg.b2)
    eta2 = rng.integers(obj.n, cfg.b2)
    s, sig = cfg.s, cfg.sigma
    if form == 1:
        return w - s / cfg.b1 * _picked_sum(obj, w, eta) + sig * math.sqrt(s) / cfg.b2 * (_picked_sum(obj, w, eta1) - _picked_sum(obj, w, eta2))
    if form == 2:
        return w - s * obj.full_grad(w) + s * obj.zeta(w, eta) + sig * math.sqrt(s) * (obj.zeta(w, eta2) - obj.zeta(w, eta1))
    raise ValueError("form must be 1 or 2")


def estimate_H(w, obj: FiniteSumObjective, n_draws: int, seed: int = 0) -> np.ndarray:
    """Second moment of zeta(w, eta) over n_draws single-sample minibatches (zeta has mean zero)."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if n_draws < obj.dim + 1:
        raise ValueError("n_draws must be >= dim + 1")
    idx = Stream(seed, 0, 0, n_draws, TAG_BATCH).integers(obj.n, 1)
    z = obj.zeta(np.repeat(w, n_draws, axis=0), idx)
    H = z.T @ z / n_draws
    return 0.5 * (H + H.T)


def exact_H(w, obj: FiniteSumObjective) -> np.ndarray:
    """Exact H(w) by enumerating every single-sample minibatch."""
    return obj.exact_H(np.atleast_2d(np.asarray(w, dtype=float)))[0]


def match_noise(target: SGDConfig, s: float, b1: int, b2: int) -> float:
    """sigma giving large-noise SGD the same covariance scalar as the target SGD run."""
    gap = target.delta / target.b - s / b1
    if gap < 0:
        raise Unmatchable(f"delta/b = {target.delta / target.b:.4g} < s/b1 = {s / b1:.4g}")
    return math.sqrt(b2 / 2.0 * gap)


@dataclass
class TrainingResult:
    loss_trace: np.ndarray
    tail: EmpiricalMeasure
    final: np.ndarray
    tail_by_chain: np.ndarray


def run_training(
    obj: FiniteSumObjective,
    cfg: SGDConfig | LargeNoiseConfig,
    steps: int,
    seed: int,
    n_chains: int = 1,
    w0=None,
    threads: int = 1,
    tail_every: int = 1,
) -> TrainingResult:
    """Run independent chains; keep the mean loss per step and the last 10% of iterates."""
    if w0 is None:
        w0 = np.zeros(obj.dim)
    w0 = np.asarray(w0, dtype=float)
    start = np.tile(w0, (n_chains, 1)) if w0.ndim == 1 else w0
    tail_from = steps - max(1, steps // 10)

    def block(lo, hi):
        w = start[lo:hi].copy()
        losses = np.empty((steps + 1, hi - lo))
        losses[0] = obj.loss(w) if obj.component_values is not None else np.nan
        tail = []
        for k in range(steps):
            rng = Stream(seed, k, lo, hi, TAG_BATCH)
            if isinstance(cfg, SGDConfig):
                w = sgd_step(w, obj, cfg, rng)
            else:
                w = large_noise_sgd_step(w, obj, cfg, rng)
            if not np.all(np.isfinite(w)):
                raise NonFinite(f"iterate left the float range at step {k + 1}")
            losses[k + 1] = obj.loss(w) if obj.component_values is not None else np.nan
            if k + 1 > tail_from and (k + 1 - tail_from) % tail_every == 0:
                tail.append(w.copy())
        return losses, np.stack(tail, axis=1), w

    parts = fan_out(block, start.shape[0], threads)
    losses = np.concatenate([p[0] for p in parts], axis=1)
    tails = np.concatenate([p[1] for p in parts], axis=0)
    final = np.concatenate([p[2] for p in parts], axis=0)
    return TrainingResult(losses.mean(axis=1), measure(tails.reshape(-1, obj.dim)), final, tails)
