"""Concave distance surrogate f = q(g(z)), its auxiliary radial profiles,
the contraction constants and the step-size / iteration budgets.

Radial functions accept scalars or arrays of r >= 0.  At branch joints the
left branch is used, except for the smoothing function h (and its
derivatives) whose last branch is closed at r = 2 eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problems import RegularityParams
from .quadrature import cumulative, hermite

# beyond this the integrand mu*Psi/psi overflows double precision
_MAX_EXPONENT = 700.0


class TargetTooLoose(ValueError):
    pass


@dataclass(frozen=True)
class DerivedConstants:
    L_N: float
    alpha_q: float
    R_q: float
    lam: float
    m: float
    L_R: float
    R: float
    beta: float
    L_xi: float
    c_m: float

    @property
    def decay(self) -> float:
        """exp(-7 alpha_q R_q^2 / 3), the floor of q' and of psi."""
        return math.exp(-7.0 * self.alpha_q * self.R_q**2 / 3.0)


def derive_constants(params: RegularityParams) -> DerivedConstants:
    p = params
    L_N = 4.0 * p.beta * p.L_xi / p.c_m
    alpha_q = (p.L_R + L_N**2) / (2.0 * p.c_m**2)
    R_q = max(p.R, 16.0 * p.beta**2 * L_N / (p.m * p.c_m))
    lam = min(p.m / 2.0, 2.0 * p.c_m**2 / (32.0 * R_q**2)) * math.exp(-7.0 * alpha_q * R_q**2 / 3.0)
    return DerivedConstants(L_N, alpha_q, R_q, lam, p.m, p.L_R, p.R, p.beta, p.L_xi, p.c_m)


def _radius(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radial argument must be nonnegative")
    return r


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


class LyapunovFn:
    """The composite f = q o g for smoothing parameter ``epsilon``.

    Psi, the nu-integral and q are tabulated eagerly on ``nodes`` equispaced
    points of [0, 4 R_q] by adaptive Simpson; values between nodes come from
    cubic Hermite interpolation using the exact integrands as slopes.
    """

    def __init__(self, epsilon: float, constants: DerivedConstants, nodes: int = 4097, rtol: float = 1e-8):
        c = constants
        bound = c.R_q / (c.alpha_q * c.R_q**2 + 1.0)
        if not 0 < epsilon <= bound:
            raise ValueError(f"epsilon={epsilon} must lie in (0, {bound:.6g}]")
        if 7.0 * c.alpha_q * c.R_q**2 / 3.0 > _MAX_EXPONENT:
            raise ValueError("alpha_q R_q^2 too large for double precision")
        self.epsilon = float(epsilon)
        self.constants = c
        self.R = c.R_q
        self.alpha = c.alpha_q
        self.rtol = rtol
        self.grid = np.linspace(0.0, 4.0 * self.R, nodes)
        g = self.grid
        self._Psi = cumulative(self.psi, g, rtol=rtol)
        self._psi_g = self.psi(g)
        self._J = cumulative(self._nu_integrand, g, rtol=rtol)
        self.J_total = float(self._J[-1])
        self._j_g = self._nu_integrand(g)
        self._q = cumulative(self.q1, g, rtol=rtol)
        self._q1_g = self.q1(g)

    # -- h and its derivatives ------------------------------------------------

    def _h_pieces(self, r):
        e = self.epsilon
        return r <= e, (r > e) & (r < 2 * e)

    def h(self, r):
        r = _radius(r)
        e = self.epsilon
        a, b = self._h_pieces(r)
        s = r - e
        return _out(np.where(a, r**3 / (6 * e**2), np.where(b, e / 6 + s / 2 + s**2 / (2 * e) - s**3 / (6 * e**2), r)))

    def h1(self, r):
        r = _radius(r)
        e = self.epsilon
        a, b = self._h_pieces(r)
        s = r - e
        return _out(np.where(a, r**2 / (2 * e**2), np.where(b, 0.5 + s / e - s**2 / (2 * e**2), 1.0)))

    def h2(self, r):
        r = _radius(r)
        e = self.epsilon
        a, b = self._h_pieces(r)
        return _out(np.where(a, r / e**2, np.where(b, 1 / e - (r - e) / e**2, 0.0)))

    def h3(self, r):
        r = _radius(r)
        e = self.epsilon
        a, b = self._h_pieces(r)
        return _out(np.where(a, 1 / e**2, np.where(b, -1 / e**2, 0.0)))

    # -- g(z) = h(|z|) -----------------------------------------------------------

    def g(self, z):
        z = np.asarray(z, dtype=float)
        return self.h(np.linalg.norm(z, axis=-1))

    def grad_g(self, z):
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(z, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        coef = np.where(r > 0, np.asarray(self.h1(r)) / safe, 0.0)
        return coef[..., None] * z

    def hess_g(self, z):
        z = np.asarray(z, dtype=float)
        d = z.shape[-1]
        r = np.linalg.norm(z, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        u = z / safe[..., None]
        uu = u[..., :, None] * u[..., None, :]
        eye = np.eye(d)
        h1 = np.asarray(self.h1(r))
        h2 = np.asarray(self.h2(r))
        out = h2[..., None, None] * uu + (h1 / safe)[..., None, None] * (eye - uu)
        return np.where((r > 0)[..., None, None], out, 0.0)

    # -- tau, mu ---------------------------------------------------------------

    def tau(self, r):
        r = _radius(r)
        R = self.R
        s1, s2 = r - R, r - 2 * R
        return _out(
            np.select(
                [r <= R, r <= 2 * R, r <= 4 * R],
                [r**2 / 2, R**2 / 2 + R * s1 + s1**2 / 2 - s1**3 / (3 * R), 5 * R**2 / 3 + R * s2 - s2**2 / 2 + s2**3 / (12 * R)],
                7 * R**2 / 3,
            )
        )

    def tau1(self, r):
        r = _radius(r)
        R = self.R
        s1, s2 = r - R, r - 2 * R
        return _out(np.select([r <= R, r <= 2 * R, r <= 4 * R], [r, R + s1 - s1**2 / R, R - s2 + s2**2 / (4 * R)], 0.0))

    def tau2(self, r):
        r = _radius(r)
        R = self.R
        return _out(np.select([r <= R, r <= 2 * R, r <= 4 * R], [np.ones_like(r), 1 - 2 * (r - R) / R, -1 + (r - 2 * R) / (2 * R)], 0.0))

    def mu(self, r):
        r = _radius(r)
        R = self.R
        return _out(np.select([r <= R, r <= 4 * R], [np.ones_like(r), 0.5 + 0.5 * np.cos(np.pi * (r - R) / (3 * R))], 0.0))

    def mu1(self, r):
        r = _radius(r)
        R = self.R
        inner = (r > R) & (r <= 4 * R)
        return _out(np.where(inner, -np.pi / (6 * R) * np.sin(np.pi * (r - R) / (3 * R)), 0.0))

    # -- psi, Psi, nu, q ---------------------------------------------------------

    def psi(self, r):
        return _out(np.exp(-self.alpha * np.asarray(self.tau(r))))

    def psi1(self, r):
        return _out(-self.alpha * np.asarray(self.tau1(r)) * np.asarray(self.psi(r)))

    def _tail(self, r):
        return np.maximum(r - 4 * self.R, 0.0)

    def Psi(self, r):
        r = _radius(r)
        inside = hermite(self.grid, self._Psi, self._psi_g, r)
        return _out(inside + self._psi_g[-1] * self._tail(r))

    def _nu_integrand(self, r):
        r = np.asarray(r, dtype=float)
        return np.asarray(self.mu(r)) * np.asarray(self.Psi(r)) * np.exp(self.alpha * np.asarray(self.tau(r)))

    def nu(self, r):
        r = _radius(r)
        J = hermite(self.grid, self._J, self._j_g, r)
        return _out(1.0 - 0.5 * J / self.J_total)

    def nu1(self, r):
        r = _radius(r)
        return _out(-0.5 * self._nu_integrand(r) / self.J_total)

    def q(self, r):
        r = _radius(r)
        inside = hermite(self.grid, self._q, self._q1_g, r)
        return _out(inside + self._q1_g[-1] * self._tail(r))

    def q1(self, r):
        r = _radius(r)
        return _out(np.asarray(self.psi(r)) * np.asarray(self.nu(r)))

    def q2(self, r):
        r = _radius(r)
        return _out(np.asarray(self.psi1(r)) * np.asarray(self.nu(r)) + np.asarray(self.psi(r)) * np.asarray(self.nu1(r)))

    # -- f(z) = q(g(z)) ----------------------------------------------------------

    def f(self, z):
        return self.q(self.g(z))

    def grad_f(self, z):
        z = np.asarray(z, dtype=float)
        return np.asarray(self.q1(self.g(z)))[..., None] * self.grad_g(z)

    def hess_f(self, z):
        z = np.asarray(z, dtype=float)
        gz = self.g(z)
        dg = self.grad_g(z)
        q1 = np.asarray(self.q1(gz))[..., None, None]
        q2 = np.asarray(self.q2(gz))[..., None, None]
        return q2 * dg[..., :, None] * dg[..., None, :] + q1 * self.hess_g(z)


# ---------------------------------------------------------------------------
# budgets


@dataclass(frozen=True)
class Budget:
    epsilon_hat: float
    epsilon: float
    delta_max: float
    n_min: float
    T_epoch: float | None
    delta_branches: tuple[float, ...]


def admissible_target(constants: DerivedConstants, params: RegularityParams) -> float:
    """Largest target accuracy the theorems accept (exponent as printed: 7 alpha_q R_q / 3)."""
    c = constants
    return (16.0 * (params.L + c.L_N**2) / c.lam) * math.exp(7.0 * c.alpha_q * c.R_q / 3.0) * c.R_q / (c.alpha_q * c.R_q**2 + 1.0)


def internal_epsilon(eps_hat: float, constants: DerivedConstants, params: RegularityParams) -> float:
    c = constants
    return c.lam / (16.0 * (params.L + c.L_N**2)) * c.decay * eps_hat


def _check_target(eps_hat, constants, params):
    if not eps_hat > 0:
        raise ValueError("target accuracy must be positive")
    bound = admissible_target(constants, params)
    if eps_hat > bound:
        raise TargetTooLoose(f"target {eps_hat} exceeds admissible bound {bound:.6g}")


def _iterations(eps_hat, delta, constants, params) -> float:
    c = constants
    if delta <= 0:
        return math.inf
    need = 3.0 * c.alpha_q * c.R_q**2 / delta * math.log((params.R**2 + params.beta**2 / params.m) / eps_hat)
    return float(math.ceil(max(need, 0.0)))


def theorem1_budget(eps_hat: float, constants: DerivedConstants, params: RegularityParams) -> Budget:
    """Step size and iteration count for the Gaussian Euler-Maruyama chain."""
    _check_target(eps_hat, constants, params)
    c, p = constants, params
    lip = p.L**2 + c.L_N**4
    grow = 7.0 * c.alpha_q * c.R_q**2 / 3.0
    first = c.lam**2 * eps_hat**2 / (512.0 * p.beta**2 * lip * math.exp(2.0 * grow))
    second = 2.0 * c.lam * eps_hat / (lip * math.exp(grow) * math.sqrt(p.R**2 + p.beta**2 / p.m))
    delta = min(first, second)
    return Budget(eps_hat, internal_epsilon(eps_hat, c, p), delta, _iterations(eps_hat, delta, c, p), None, (first, second))


def theorem2_epoch(eps: float, constants: DerivedConstants, params: RegularityParams) -> float:
    c, p = constants, params
    return min(
        1.0 / (16.0 * p.L),
        p.beta**2 / (8.0 * p.L**2 * (p.R**2 + p.beta**2 / p.m)),
        eps / (32.0 * math.sqrt(p.L) * p.beta),
        eps**2 / (128.0 * p.beta**2),
        eps**4 * c.L_N**2 / (2.0**14 * p.beta**2 * c.c_m**2),
    )


def theorem2_budget(eps_hat: float, constants: DerivedConstants, params: RegularityParams, dim: int) -> Budget:
    """Epoch length, step size and iteration count for the non-Gaussian chain.

    With L_xi = 0 the last epoch term vanishes, so the printed budget
    degenerates to delta_max = 0 and n_min = inf.
    """
    _check_target(eps_hat, constants, params)
    c, p = constants, params
    eps = internal_epsilon(eps_hat, c, p)
    T = theorem2_epoch(eps, c, p)
    a = 36.0 * dim * p.beta**2 / (eps**2 * p.L)
    b = 2.0**14 * dim * p.beta**4 / (eps**4 * p.L**2)
    first = T / (a * math.log(a))
    second = T / (b * math.log(b))
    delta = min(first, second)
    return Budget(eps_hat, eps, delta, _iterations(eps_hat, delta, c, p), T, (first, second))


def xlogx_bound_holds(c: float, x: float) -> bool:
    """Whether (1/c) log x <= x."""
    if c <= 0:
        raise ValueError("c must be positive")
    return math.log(x) / c <= x


def xlogx_threshold(c: float) -> float:
    return 3.0 * max(math.log(1.0 / c) / c, 0.0)
