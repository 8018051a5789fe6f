"""Wasserstein distances and moments of empirical measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import norm


class DimMismatch(ValueError):
    pass


class SizeMismatch(ValueError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.points.shape[0] < 1:
            raise ValueError("empirical measure needs at least one point")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


def measure(points, weights=None) -> EmpiricalMeasure:
    if isinstance(points, EmpiricalMeasure):
        return points
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts[:, None]
    if weights is None:
        w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    else:
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
    return EmpiricalMeasure(pts, w)


def _quantile_gaps(a: EmpiricalMeasure, b: EmpiricalMeasure):
    """Differences of the two quantile functions on the merged breakpoints."""
    ia = np.argsort(a.points[:, 0], kind="stable")
    ib = np.argsort(b.points[:, 0], kind="stable")
    xa, wa = a.points[ia, 0], a.weights[ia]
    xb, wb = b.points[ib, 0], b.weights[ib]
    ca = np.cumsum(wa)
    cb = np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    levels = np.union1d(ca, cb)
    widths = np.diff(np.concatenate([[0.0], levels]))
    mids = levels - 0.5 * widths
    qa = xa[np.minimum(np.searchsorted(ca, mids), xa.size - 1)]
    qb = xb[np.minimum(np.searchsorted(cb, mids), xb.size - 1)]
    return qa - qb, widths


def _one_dim(a, b):
    a, b = measure(a), measure(b)
    if a.dim != 1 or b.dim != 1:
        raise DimMismatch("exact 1D distances need one-dimensional samples")
    return a, b


def w1_exact_1d(a, b) -> float:
    a, b = _one_dim(a, b)
    if a.points.shape[0] == b.points.shape[0] and a.uniform and b.uniform:
        return float(np.mean(np.abs(np.sort(a.points[:, 0]) - np.sort(b.points[:, 0]))))
    gap, width = _quantile_gaps(a, b)
    return float(np.sum(np.abs(gap) * width))


def w2_exact_1d(a, b) -> float:
    a, b = _one_dim(a, b)
    if a.points.shape[0] == b.points.shape[0] and a.uniform and b.uniform:
        return float(np.sqrt(np.mean((np.sort(a.points[:, 0]) - np.sort(b.points[:, 0])) ** 2)))
    gap, width = _quantile_gaps(a, b)
    return float(np.sqrt(np.sum(gap * gap * width)))


def w1_assignment(a, b) -> float:
    """Exact W1 between equal-size uniform samples by optimal matching."""
    a, b = measure(a), measure(b)
    if a.dim != b.dim:
        raise DimMismatch("dimensions differ")
    n = a.points.shape[0]
    if b.points.shape[0] != n:
        raise SizeMismatch("assignment needs equal sample sizes")
    if n > 4096:
        raise TooLarge("assignment limited to n <= 4096")
    if not (a.uniform and b.uniform):
        raise ValueError("assignment needs uniform weights")
    diff = a.points[:, None, :] - b.points[None, :, :]
    cost = np.sqrt(np.sum(diff * diff, axis=-1))
    rows, cols = linear_sum_assignment(cost)
    return float(np.mean(cost[rows, cols]))


def w1_sliced(a, b, n_proj: int = 64, seed: int = 0) -> float:
    """Mean exact 1D W1 over random unit directions."""
    if n_proj < 1:
        raise ValueError("n_proj must be >= 1")
    a, b = measure(a), measure(b)
    if a.dim != b.dim:
        raise DimMismatch("dimensions differ")
    dirs = np.random.default_rng(seed).normal(size=(n_proj, a.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = [w1_exact_1d(measure(a.points @ u, a.weights), measure(b.points @ u, b.weights)) for u in dirs]
    return float(np.mean(vals))


def second_moment(a) -> float:
    a = measure(a)
    return float(np.sum(a.weights * np.sum(a.points**2, axis=1)))


def mean_norm(a) -> float:
    a = measure(a)
    return float(np.sum(a.weights * np.linalg.norm(a.points, axis=1)))


def mean_and_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0


def w2_to_gaussian(samples, mean: float = 0.0, sd: float = 1.0) -> float:
    """Exact W2 between a uniform 1D sample and N(mean, sd^2).

    Each sorted sample owns a quantile slab [a, b]; the Gaussian quantile
    z(u) integrates in closed form over it: int z = phi(z_a) - phi(z_b) and
    int z^2 = (b - a) - (z_b phi(z_b) - z_a phi(z_a)).
    """
    s = (np.sort(np.asarray(samples, dtype=float).ravel()) - mean) / sd
    n = s.size
    edges = np.arange(n + 1) / n
    z = norm.ppf(edges)
    phi = norm.pdf(z)
    zphi = np.where(np.isfinite(z), np.where(np.isfinite(z), z, 0.0) * phi, 0.0)
    first = phi[:-1] - phi[1:]
    second = (edges[1:] - edges[:-1]) - (zphi[1:] - zphi[:-1])
    total = np.sum(s * s / n - 2.0 * s * first + second)
    return float(sd * np.sqrt(max(total, 0.0)))
