"""Potentials, diffusion fields and noise oracles.

All oracles work on batches: a point set ``x`` of shape (n, dim) maps to
gradients (n, dim), diffusion matrices (n, dim, dim) and noise draws
(n, dim).  Noise samplers receive an explicit :class:`~langevin_noise.rng.Stream`
so a problem holds no mutable random state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import linalg
from .rng import Stream

GradFn = Callable[[np.ndarray], np.ndarray]
MatFn = Callable[[np.ndarray], np.ndarray]
NoiseFn = Callable[[np.ndarray, Stream], np.ndarray]


class ConstraintViolation(ValueError):
    pass


@dataclass(frozen=True)
class RegularityParams:
    m: float
    L: float
    L_R: float
    R: float
    beta: float
    L_xi: float
    c_m: float

    def __post_init__(self):
        for name in ("m", "L", "L_R", "R", "beta", "c_m"):
            if not getattr(self, name) > 0:
                raise ConstraintViolation(f"{name} must be positive, got {getattr(self, name)}")
        if not self.L_xi >= 0:
            raise ConstraintViolation(f"L_xi must be nonnegative, got {self.L_xi}")


@dataclass(frozen=True)
class ProblemSpec:
    dim: int
    grad_U: GradFn
    diffusion_M: MatFn
    noise_xi: NoiseFn
    params: RegularityParams
    potential: GradFn | None = None
    name: str = "custom"
    extras: dict = field(default_factory=dict, compare=False)

    def with_params(self, **changes) -> "ProblemSpec":
        return replace(self, params=replace(self.params, **changes))


def as_batch(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, dim) if dim > 1 or x.size == 1 else x.reshape(-1, 1)
    return x


def rademacher_noise(diffusion_M: MatFn) -> NoiseFn:
    """xi = M(x) s with independent random signs s: mean zero, covariance M(x)^2."""

    def noise(x: np.ndarray, stream: Stream) -> np.ndarray:
        s = stream.signs(x.shape[1])
        return np.einsum("nij,nj->ni", diffusion_M(x), s)

    return noise


def constant_diffusion(matrix) -> MatFn:
    matrix = linalg.symmetrize(np.atleast_2d(np.asarray(matrix, dtype=float)))

    def diffusion(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(matrix, (x.shape[0],) + matrix.shape)

    return diffusion


# ---------------------------------------------------------------------------
# simple test problems


def quadratic(dim: int = 1, scale: float = 1.0, noise_scale: float = 1.0) -> ProblemSpec:
    """U = scale/2 |x|^2 with constant diffusion noise_scale * I (an OU process)."""
    diffusion = constant_diffusion(noise_scale * np.eye(dim))
    c_m = max(noise_scale / 2.0, 1e-12)
    params = RegularityParams(
        m=scale, L=scale, L_R=scale, R=1.0, beta=max(noise_scale * np.sqrt(dim), 1e-12), L_xi=0.0, c_m=c_m
    )
    return ProblemSpec(
        dim=dim,
        grad_U=lambda x: scale * x,
        diffusion_M=diffusion,
        noise_xi=rademacher_noise(diffusion),
        params=params,
        potential=lambda x: 0.5 * scale * np.sum(x * x, axis=1),
        name="quadratic",
    )


def double_well_1d(noise_scale: float = 2.0, width: float = 0.25, depth: float = 1.5) -> ProblemSpec:
    """U(x) = x^2/2 + depth * width^2 * exp(-x^2 / (2 width^2)) with constant M.

    ``depth`` > 1 makes the origin a local maximum between two wells.  The
    claimed constants are checked by the audit tests.
    """
    amp = depth * width**2

    def grad(x):
        return x - depth * x * np.exp(-(x * x) / (2 * width**2))

    def pot(x):
        return np.sum(0.5 * x * x + amp * np.exp(-(x * x) / (2 * width**2)), axis=1)

    diffusion = constant_diffusion([[noise_scale]])
    # sup |U''| = max(depth - 1, 1 + 2 depth e^{-3/2}); the bump gradient peaks at width * depth * e^{-1/2}
    lip = max(depth - 1.0, 1.0 + 2.0 * depth * np.exp(-1.5))
    R = 1.0
    m = 1.0 - 2.0 * width * depth * np.exp(-0.5) / R
    params = RegularityParams(m=0.95 * m, L=lip, L_R=lip, R=R, beta=noise_scale, L_xi=0.0, c_m=noise_scale / 2.0)
    return ProblemSpec(
        dim=1,
        grad_U=grad,
        diffusion_M=diffusion,
        noise_xi=rademacher_noise(diffusion),
        params=params,
        potential=pot,
        name="double_well_1d",
    )


def state_dependent_2d() -> ProblemSpec:
    """Mildly nonconvex 2D potential with a smooth, non-diagonal diffusion field."""

    def grad(x):
        g = x.copy()
        g[:, 0] -= 0.5 * np.sin(x[:, 0])
        return g

    def pot(x):
        return 0.5 * np.sum(x * x, axis=1) + 0.5 * np.cos(x[:, 0]) - 0.5

    def diffusion(x):
        out = np.empty((x.shape[0], 2, 2))
        cross = 0.2 * np.sin(x[:, 0] + x[:, 1])
        out[:, 0, 0] = 1.2 + 0.4 * np.sin(x[:, 0])
        out[:, 1, 1] = 1.2 + 0.4 * np.cos(x[:, 1])
        out[:, 0, 1] = cross
        out[:, 1, 0] = cross
        return out

    params = RegularityParams(m=0.5, L=1.5, L_R=1.5, R=1.0, beta=np.sqrt(2.0) * 1.8, L_xi=1.0, c_m=0.3)
    return ProblemSpec(
        dim=2,
        grad_U=grad,
        diffusion_M=diffusion,
        noise_xi=rademacher_noise(diffusion),
        params=params,
        potential=pot,
        name="state_dependent_2d",
    )


def constant_drift(dim: int = 1, drift: float = 1.0, noise_scale: float = 0.0) -> ProblemSpec:
    """grad U = drift (every coordinate) with constant diffusion.

    Not dissipative, so the regularity constants are placeholders; it exists
    for exactness checks of the integrators.
    """
    diffusion = constant_diffusion(noise_scale * np.eye(dim))
    params = RegularityParams(m=1.0, L=1.0, L_R=1.0, R=1.0, beta=max(noise_scale * np.sqrt(dim), 1e-12), L_xi=0.0, c_m=max(noise_scale / 2.0, 1e-12))
    return ProblemSpec(
        dim=dim,
        grad_U=lambda x: np.full_like(x, drift),
        diffusion_M=diffusion,
        noise_xi=rademacher_noise(diffusion),
        params=params,
        potential=lambda x: drift * np.sum(x, axis=1),
        name="constant_drift",
    )


# ---------------------------------------------------------------------------
# one-dimensional worked example with two wells


def builtin_1d_example(m_floor: float = 0.05) -> ProblemSpec:
    """Piecewise-quadratic double well with position-dependent diffusion.

    U has a shallow well at x = -2 and a deeper one at x = 8; M grows from 1
    on the left to 6 on the right.  On [-2, 8] M follows (x + 2)/2, floored at
    ``m_floor``; the outer branches x <= -2 and x >= 8 take priority.
    """

    def pot(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        out = np.where(flat <= -1.0, 0.5 * (flat + 2.0) ** 2 - 1.0, np.where(flat >= 4.0, 0.5 * (flat - 8.0) ** 2 - 16.0, -0.5 * flat**2))
        return out

    def grad(x):
        return np.where(x <= -1.0, x + 2.0, np.where(x >= 4.0, x - 8.0, -x))

    def m_scalar(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= -2.0, 1.0, np.where(x >= 8.0, 6.0, np.maximum(0.5 * (x + 2.0), m_floor)))

    def diffusion(x):
        return m_scalar(x[:, 0]).reshape(-1, 1, 1)

    # |U''| = 1 on every branch; dissipativity holds with m = 1/2 once |x - y| >= 20
    params = RegularityParams(m=0.5, L=1.0, L_R=1.0, R=20.0, beta=6.0, L_xi=0.5, c_m=m_floor / 2.0)
    return ProblemSpec(
        dim=1,
        grad_U=grad,
        diffusion_M=diffusion,
        noise_xi=rademacher_noise(diffusion),
        params=params,
        potential=pot,
        name="builtin_1d",
        extras={"m_floor": m_floor, "M_scalar": m_scalar, "jumps": (-2.0, 8.0)},
    )


# ---------------------------------------------------------------------------
# finite-sum objectives


def barrier_grad(w: np.ndarray, m: float, R: float) -> np.ndarray:
    r = np.linalg.norm(w, axis=-1, keepdims=True)
    excess = np.maximum(r - R / 2.0, 0.0)
    return 2.0 * m * excess * w / np.where(r > 0, r, 1.0)


def barrier_value(w: np.ndarray, m: float, R: float) -> np.ndarray:
    r = np.linalg.norm(w, axis=-1)
    return m * np.maximum(r - R / 2.0, 0.0) ** 2


@dataclass(frozen=True)
class FiniteSumObjective:
    """U(w) = (1/n) sum_i U_i'(w) + V(w) with the barrier V active outside radius R/2.

    ``component_grads(w)`` maps (k, dim) points to (k, n, dim) per-datum
    gradients of the U_i'.  ``grad_bound`` bounds every |grad U_i'(w) - mean|
    for all w, and ``L_R`` bounds each component's gradient Lipschitz constant.
    """

    component_grads: Callable[[np.ndarray], np.ndarray]
    n: int
    dim: int
    m: float
    R: float
    L_R: float
    grad_bound: float
    component_values: Callable[[np.ndarray], np.ndarray] | None = None
    family: str = "custom"
    picked_grads: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    h_oracle: Callable[[np.ndarray], np.ndarray] | None = None
    mean_grad: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def components(self) -> list[GradFn]:
        return [lambda w, i=i: self.component_grads(np.atleast_2d(w))[:, i, :] for i in range(self.n)]

    def _mean(self, w: np.ndarray) -> np.ndarray:
        if self.mean_grad is not None:
            return self.mean_grad(w)
        return self.component_grads(w).mean(axis=1)

    def full_grad(self, w: np.ndarray) -> np.ndarray:
        return self._mean(w) + barrier_grad(w, self.m, self.R)

    def loss(self, w: np.ndarray) -> np.ndarray:
        if self.component_values is None:
            raise NotImplementedError("objective has no value oracle")
        return self.component_values(w).mean(axis=1) + barrier_value(w, self.m, self.R)

    def _picked(self, w: np.ndarray, idx: np.ndarray) -> np.ndarray:
        if self.picked_grads is not None:
            return self.picked_grads(w, idx)
        return np.take_along_axis(self.component_grads(w), idx[:, :, None], axis=1)

    def batch_grad(self, w: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Mean of U_i gradients (barrier included) over indices idx of shape (k, b)."""
        return self._picked(w, idx).mean(axis=1) + barrier_grad(w, self.m, self.R)

    def zeta(self, w: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Minibatch gradient error: full gradient minus minibatch mean."""
        return self._mean(w) - self._picked(w, idx).mean(axis=1)

    def exact_H(self, w: np.ndarray) -> np.ndarray:
        if self.h_oracle is not None:
            return self.h_oracle(w)
        grads = self.component_grads(w)
        dev = grads - grads.mean(axis=1, keepdims=True)
        return np.einsum("kni,knj->kij", dev, dev) / self.n


# A plain matrix product may round differently depending on the batch size,
# which would make results depend on how trajectories are split across
# threads.  These two helpers keep every output row a function of its own
# input row only.


def _rowdot(w: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """w @ rows.T as one vector-matrix product per row of w."""
    return np.matmul(w[:, None, :], rows.T)[:, 0, :]


def _rowsum(weights: np.ndarray, table: np.ndarray) -> np.ndarray:
    """weights @ table as one vector-matrix product per row of weights."""
    return np.matmul(weights[:, None, :], table)[:, 0, :]


def _centered(grads_fn, dim):
    """Tilt every component by the same linear term so the mean gradient vanishes at 0."""
    g0 = grads_fn(np.zeros((1, dim))).mean(axis=1)[0]
    return lambda w: grads_fn(w) - g0, g0


def logistic_objective(n: int = 200, dim: int = 2, seed: int = 0, reg: float = 0.01, m: float = 4.0, R: float = 4.0, feature_scale: float = 0.5) -> FiniteSumObjective:
    """L2-regularized logistic regression on synthetic data, centered at the origin."""
    rng = np.random.default_rng(seed)
    feats = feature_scale * rng.normal(size=(n, dim))
    truth = np.linspace(1.0, -1.0, dim)
    labels = (rng.random(n) < 1.0 / (1.0 + np.exp(-feats @ truth))).astype(float)

    def raw(w):
        p = 1.0 / (1.0 + np.exp(-_rowdot(w, feats)))
        return (p - labels)[:, :, None] * feats[None, :, :] + reg * w[:, None, :]

    grads, g0 = _centered(raw, dim)

    def values(w):
        z = _rowdot(w, feats)
        return np.logaddexp(0.0, z) - labels * z + 0.5 * reg * np.sum(w * w, axis=1, keepdims=True) - _rowdot(w, g0[None])

    def picked(w, idx):
        f = feats[idx]
        p = 1.0 / (1.0 + np.exp(-np.einsum("kd,kbd->kb", w, f)))
        return (p - labels[idx])[:, :, None] * f + (reg * w - g0)[:, None, :]

    def residual(w):
        # sigmoid(w . x_i) - y_i, in place: fresh temporaries of this size dominate the cost
        z = _rowdot(w, feats)
        np.negative(z, out=z)
        np.exp(z, out=z)
        z += 1.0
        np.reciprocal(z, out=z)
        z -= labels
        return z

    def mean_grad(w):
        resid = residual(w)
        return _rowsum(resid, feats) / n + reg * w - g0

    outer = (feats[:, :, None] * feats[:, None, :]).reshape(n, dim * dim)

    def h_oracle(w):
        # only the data term varies across components
        resid = residual(w)
        mean = _rowsum(resid, feats) / n
        np.square(resid, out=resid)
        second = (_rowsum(resid, outer) / n).reshape(-1, dim, dim)
        return second - mean[:, :, None] * mean[:, None, :]

    norms = np.linalg.norm(feats, axis=1)
    L_R = 0.25 * float(np.max(norms)) ** 2 + reg
    if m < 4.0 * L_R:
        raise ConstraintViolation(f"barrier m={m} < 4 L_R={4 * L_R:.4g}")
    return FiniteSumObjective(grads, n, dim, m, R, L_R, 2.0 * float(np.max(norms)), values, "logistic", picked, h_oracle, mean_grad)


def linear_objective(slopes, m: float = 4.0, R: float = 2.0) -> FiniteSumObjective:
    """U_i'(w) = a_i . w with the slopes centered to mean zero."""
    a = np.atleast_2d(np.asarray(slopes, dtype=float))
    a = a - a.mean(axis=0)
    n, dim = a.shape

    def grads(w):
        return np.broadcast_to(a, (w.shape[0], n, dim)).copy()

    def values(w):
        return _rowdot(w, a)

    bound = float(np.max(np.linalg.norm(a, axis=1))) if n else 0.0
    return FiniteSumObjective(grads, n, dim, m, R, 0.0, bound, values, "linear")


def quartic_objective(n: int = 50, dim: int = 2, seed: int = 0, m: float | None = None, R: float = 2.0) -> FiniteSumObjective:
    """U_i'(w) = (a_i . w - y_i)^4 / 4.  Constants are valid on the ball of radius R."""
    rng = np.random.default_rng(seed)
    a = 0.3 * rng.normal(size=(n, dim))
    y = 0.3 * rng.normal(size=n)

    def raw(w):
        r = _rowdot(w, a) - y
        return (r**3)[:, :, None] * a[None, :, :]

    grads, g0 = _centered(raw, dim)

    def values(w):
        return 0.25 * (_rowdot(w, a) - y) ** 4 - _rowdot(w, g0[None])

    an = np.linalg.norm(a, axis=1)
    reach = an * R + np.abs(y)
    L_R = float(np.max(3.0 * reach**2 * an**2))
    bound = 2.0 * float(np.max(reach**3 * an)) + float(np.linalg.norm(g0))
    if m is None:
        m = 4.0 * L_R
    if m < 4.0 * L_R:
        raise ConstraintViolation(f"barrier m={m} < 4 L_R={4 * L_R:.4g}")
    return FiniteSumObjective(grads, n, dim, m, R, L_R, bound, values, "quartic")


def finite_sum_problem(objective: FiniteSumObjective, step: float = 0.01, b1: int = 1, sigma: float = 0.0, b2: int = 1, c_m: float | None = None) -> ProblemSpec:
    """Cast (large-noise) SGD on a finite sum as the discrete process.

    The noise is xi = sqrt(step) zeta(w, eta) + sigma (zeta(w, eta'') - zeta(w, eta'))
    with |eta| = b1 and |eta'| = |eta''| = b2; plain SGD is sigma = 0.  The
    diffusion M(w) is the square root of the exact noise covariance
    (step/b1 + 2 sigma^2/b2) H(w).
    """
    if objective.m < 4.0 * objective.L_R:
        raise ConstraintViolation(f"barrier m={objective.m} < 4 L_R={4 * objective.L_R:.4g}")
    obj = objective
    scalar = step / b1 + 2.0 * sigma**2 / b2

    def noise(w, stream: Stream):
        out = np.sqrt(step) * obj.zeta(w, stream.integers(obj.n, b1))
        if sigma != 0.0:
            z1 = obj.zeta(w, stream.integers(obj.n, b2))
            z2 = obj.zeta(w, stream.integers(obj.n, b2))
            out = out + sigma * (z2 - z1)
        return out

    def diffusion(w):
        return linalg.psd_sqrt(scalar * obj.exact_H(w), tol=1e-12)

    L = obj.m + obj.L_R
    beta = (np.sqrt(step) + 2.0 * sigma) * obj.grad_bound
    if c_m is None:
        # empirical floor over the region the audit probes, with a safety margin
        probe = np.random.default_rng(12345).uniform(-2 * obj.R, 2 * obj.R, size=(4096, obj.dim))
        w_eig, _ = linalg.jacobi_eigh(diffusion(probe))
        c_m = max(0.45 * float(np.min(w_eig[:, 0])), 1e-12)
    params = RegularityParams(
        m=obj.m, L=L, L_R=obj.L_R, R=obj.R, beta=max(beta, 1e-12), L_xi=(np.sqrt(step) + 2.0 * sigma) * L, c_m=c_m
    )
    pot = (lambda w: obj.loss(w)) if obj.component_values is not None else None
    return ProblemSpec(
        dim=obj.dim,
        grad_U=obj.full_grad,
        diffusion_M=diffusion,
        noise_xi=noise,
        params=params,
        potential=pot,
        name=f"finite_sum_{obj.family}",
        extras={"objective": obj, "step": step, "b1": b1, "sigma": sigma, "b2": b2},
    )


# ---------------------------------------------------------------------------
# empirical audit


@dataclass
class AuditEntry:
    check: str
    worst: float
    claimed: float
    status: str


@dataclass
class AuditReport:
    entries: list[AuditEntry]
    grad_at_origin: float
    warnings: list[str]

    @property
    def passed(self) -> bool:
        return all(e.status == "PASS" for e in self.entries)

    def status(self, check: str) -> str:
        return next(e.status for e in self.entries if e.check == check)


def audit_assumptions(spec: ProblemSpec, probes: int = 1000, radius: float | None = None, rng_seed: int = 0) -> AuditReport:
    """Sample point pairs and compare observed regularity against the claimed constants."""
    if probes < 2:
        raise ValueError("probes must be >= 2")
    p = spec.params
    d = spec.dim
    if radius is None:
        radius = 2.0 * p.R
    rng = np.random.default_rng(rng_seed)
    x = rng.uniform(-radius, radius, size=(probes, d))
    y = rng.uniform(-radius, radius, size=(probes, d))
    gx = spec.grad_U(x)
    gy = spec.grad_U(y)
    dist = np.linalg.norm(x - y, axis=1)
    ok = dist > 0
    lip = float(np.max(np.linalg.norm(gx - gy, axis=1)[ok] / dist[ok]))

    # pairs far enough apart for the dissipativity condition
    u = rng.normal(size=(probes, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    far = x + p.R * rng.uniform(1.0, 3.0, size=(probes, 1)) * u
    gf = spec.grad_U(far)
    dd = x - far
    conv = float(np.min(np.sum((gx - gf) * dd, axis=1) / np.sum(dd * dd, axis=1)))

    eig, _ = linalg.jacobi_eigh(spec.diffusion_M(x))
    min_eig = float(np.min(eig[:, 0]))

    xi = spec.noise_xi(x, Stream(rng_seed, 0, 0, probes))
    max_xi = float(np.max(np.linalg.norm(xi, axis=1)))

    rtol = 1e-9
    entries = [
        AuditEntry("lipschitz", lip, p.L, "PASS" if lip <= p.L * (1 + rtol) else "FAIL"),
        AuditEntry("convexity_outside_ball", conv, p.m, "PASS" if conv >= p.m * (1 - rtol) else "FAIL"),
        AuditEntry("diffusion_floor", min_eig, 2.0 * p.c_m, "PASS" if min_eig >= 2.0 * p.c_m * (1 - rtol) else "FAIL"),
        AuditEntry("noise_bound", max_xi, p.beta, "PASS" if max_xi <= p.beta * (1 + rtol) else "FAIL"),
    ]
    g0 = float(np.linalg.norm(spec.grad_U(np.zeros((1, d)))))
    warnings = [f"|grad U(0)| = {g0:.3e} > 1e-8; shift coordinates"] if g0 > 1e-8 else []
    return AuditReport(entries, g0, warnings)
