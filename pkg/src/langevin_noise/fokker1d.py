"""Stationary density of a one-dimensional diffusion from its drift and diffusion.

With D = M^2, the stationary density solves the zero-flux condition
p U' + (D p)' = 0, giving p ∝ exp(-V) with

    V(x) = ∫_0^x U'(s)/D(s) ds + log D(x) - log D(0).

That zero-flux condition belongs to the generator with second-order term
D f''.  The Euler-Maruyama chain y - delta U'(y) + sqrt(delta) M(y) theta has
generator (D/2) f'' instead, whose stationary law uses twice the integral;
``convention="ito"`` selects that version.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import measure, w1_exact_1d
from .problems import ProblemSpec
from .quadrature import adaptive_simpson, cumulative


class DegenerateDiffusion(ValueError):
    pass


@dataclass(frozen=True)
class Density1D:
    grid: np.ndarray
    logdens: np.ndarray
    norm: float

    @property
    def pdf(self) -> np.ndarray:
        return np.exp(self.logdens)

    @property
    def argmax(self) -> float:
        return float(self.grid[np.argmax(self.logdens)])

    def cdf(self) -> np.ndarray:
        p = self.pdf
        c = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(self.grid))])
        return c / c[-1]

    def quantiles(self, count: int = 2048) -> np.ndarray:
        levels = (np.arange(count) + 0.5) / count
        c = self.cdf()
        keep = np.concatenate([[True], np.diff(c) > 0])
        return np.interp(levels, c[keep], self.grid[keep])


def default_grid(nodes: int = 4096, lo: float = -10.0, hi: float = 14.0) -> np.ndarray:
    return np.linspace(lo, hi, nodes)


def _coefficients(spec: ProblemSpec, m_floor: float | None):
    if spec.dim != 1:
        raise ValueError("fokker1d handles one-dimensional problems only")
    if m_floor is None:
        m_floor = spec.extras.get("m_floor", 0.0)

    def drift(x):
        return spec.grad_U(np.asarray(x, dtype=float).reshape(-1, 1))[:, 0]

    def diff(x):
        return spec.diffusion_M(np.asarray(x, dtype=float).reshape(-1, 1))[:, 0, 0] ** 2

    return drift, diff, m_floor


def potential_V(spec: ProblemSpec, grid=None, m_floor: float | None = None, rtol: float = 1e-8, convention: str = "paper") -> np.ndarray:
    """V on the grid, with the drift integral accumulated panel by panel from x = 0."""
    if convention not in ("paper", "ito"):
        raise ValueError("convention must be 'paper' or 'ito'")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    drift, diff, m_floor = _coefficients(spec, m_floor)
    D = diff(grid)
    floor = max(m_floor**2 * (1 - 1e-12), 0.0)
    if np.any(D <= 0) or np.any(D < floor):
        raise DegenerateDiffusion(f"D drops to {float(D.min()):.3g} below the floor {floor:.3g}")

    def integrand(s):
        return drift(s) / diff(s)

    acc = cumulative(integrand, grid, rtol=rtol, atol=1e-14)
    at_zero = float(adaptive_simpson(integrand, grid[0], 0.0, rtol=rtol, atol=1e-14)) if grid[0] != 0 else 0.0
    scale = 2.0 if convention == "ito" else 1.0
    return scale * (acc - at_zero) + np.log(D) - np.log(diff(np.zeros(1))[0])


def _with_jumps(spec: ProblemSpec, grid: np.ndarray) -> np.ndarray:
    """Add both one-sided neighbours of each known diffusion jump, so that
    no trapezoid panel straddles a discontinuity of the density."""
    extra = []
    for b in spec.extras.get("jumps", ()):
        if grid[0] < b < grid[-1]:
            extra += [np.nextafter(b, -np.inf), b, np.nextafter(b, np.inf)]
    return np.union1d(grid, extra) if extra else grid


def invariant_density(spec: ProblemSpec, grid=None, m_floor: float | None = None, convention: str = "paper") -> Density1D:
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    grid = _with_jumps(spec, grid)
    V = potential_V(spec, grid, m_floor, convention=convention)
    shifted = -(V - V.min())
    p = np.exp(shifted)
    Z = float(np.sum(0.5 * (p[1:] + p[:-1]) * np.diff(grid)))
    logdens = shifted - np.log(Z)
    return Density1D(grid, logdens, Z * float(np.exp(-V.min())))


def histogram_mode(samples, bin_width: float = 0.1) -> float:
    s = np.asarray(samples, dtype=float).ravel()
    lo, hi = float(s.min()), float(s.max())
    if hi - lo < 1e-12:
        return lo
    nbins = max(1, int(np.ceil((hi - lo) / bin_width)))
    counts, edges = np.histogram(s, bins=nbins, range=(lo, lo + nbins * bin_width))
    k = int(np.argmax(counts))
    return 0.5 * (edges[k] + edges[k + 1])


def compare_to_samples(density: Density1D, samples, n_quantiles: int = 2048, bin_width: float = 0.1) -> tuple[float, float]:
    """(W1 to the density's quantile discretization, |histogram mode - density argmax|)."""
    s = np.asarray(samples, dtype=float).ravel()
    w1 = w1_exact_1d(measure(s), measure(density.quantiles(n_quantiles)))
    return w1, abs(histogram_mode(s, bin_width) - density.argmax)


def stationarity_residual(spec: ProblemSpec, density: Density1D) -> tuple[float, float]:
    """max |d/dx[p U' + d/dx(D p)]| by central differences, and max |p U'| for scale."""
    drift, diff, _ = _coefficients(spec, 0.0)
    x = density.grid
    p = density.pdf
    flux = p * drift(x) + np.gradient(diff(x) * p, x)
    res = np.gradient(flux, x)
    return float(np.max(np.abs(res[2:-2]))), float(np.max(np.abs(p * drift(x))))
