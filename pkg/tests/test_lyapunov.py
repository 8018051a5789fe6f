import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from langevin_noise import lyapunov as L
from langevin_noise.problems import RegularityParams

TOY = RegularityParams(m=2.0, L=3.0, L_R=1.0, R=1.0, beta=1.0, L_xi=0.0, c_m=1.0)
NOISY = RegularityParams(m=1.0, L=2.0, L_R=1.0, R=2.0, beta=2.0, L_xi=0.5, c_m=1.0)


@pytest.fixture(scope="module")
def toy():
    return L.derive_constants(TOY)


@pytest.fixture(scope="module")
def fn(toy):
    return L.LyapunovFn(0.1, toy)


def test_constants_constant_noise(toy):
    assert toy.L_N == 0.0
    assert toy.alpha_q == 0.5
    assert toy.R_q == 1.0
    # frozen from a 30-digit decimal evaluation of 0.0625 * exp(-7/6)
    assert toy.lam == pytest.approx(0.01946270149466235524, rel=1e-14)
    assert toy.lam == pytest.approx(0.0625 * math.exp(-7 / 6), rel=1e-15)


def test_constants_state_dependent():
    c = L.derive_constants(NOISY)
    assert c.L_N == 4.0 and c.alpha_q == 8.5
    # 16 beta^2 L_N / (m c_m) = 16 * 4 * 4
    assert c.R_q == 256.0


@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.1, 3), st.floats(0.1, 3))
def test_constant_noise_keeps_radius(m, L_R, R, beta, c_m):
    c = L.derive_constants(RegularityParams(m=m, L=m + L_R, L_R=L_R, R=R, beta=beta, L_xi=0.0, c_m=c_m))
    assert c.L_N == 0.0 and c.R_q == R
    assert c.lam == pytest.approx(min(m / 2, c_m**2 / (16 * R**2)) * math.exp(-7 * L_R * R**2 / (6 * c_m**2)), rel=1e-12)


def test_epsilon_precondition(toy):
    with pytest.raises(ValueError):
        L.LyapunovFn(0.7, toy)
    with pytest.raises(ValueError):
        L.LyapunovFn(0.0, toy)


def test_h_values(toy):
    assert L.LyapunovFn(0.1, toy).h(0.2) == pytest.approx(0.2, abs=1e-15)
    assert L.LyapunovFn(0.3, toy).h(0.3) == pytest.approx(0.05, abs=1e-15)
    for eps in (0.01, 0.1, 0.5):
        f = L.LyapunovFn(eps, toy, nodes=65)
        assert f.h1(0.0) == 0.0 and f.h1(2 * eps) == 1.0


def test_negative_radius_rejected(fn):
    for name in ("h", "tau", "mu", "q", "Psi"):
        with pytest.raises(ValueError):
            getattr(fn, name)(-0.1)


def test_g_values(fn):
    assert fn.g(np.zeros(3)) == 0.0
    assert np.all(fn.grad_g(np.zeros(3)) == 0)
    assert np.all(fn.hess_g(np.zeros(3)) == 0)
    z = np.array([1.0, 2.0, 2.0])
    assert fn.g(z) == pytest.approx(3.0)
    assert np.allclose(fn.grad_g(z), z / 3)


def test_tau_mu_values():
    c = L.derive_constants(TOY)
    fn = L.LyapunovFn(0.1, c, nodes=65)
    assert fn.tau(4.0) == pytest.approx(7 / 3, abs=1e-15)
    assert fn.tau(9.0) == pytest.approx(7 / 3, abs=1e-15)
    assert fn.tau1(1.5) == pytest.approx(1.25, abs=1e-15)
    r = np.linspace(0, 6, 601)
    assert np.max(fn.tau1(r)) == pytest.approx(1.25, abs=1e-12)
    assert np.all(fn.mu(r[r <= 1]) == 1.0) and np.all(fn.mu(r[r >= 4]) == 0.0)
    mu1 = fn.mu1(r)
    assert np.all(mu1 <= 0) and np.min(mu1) >= -np.pi / 6 - 1e-15
    assert np.all(np.abs(fn.tau2(r)) <= 1)


def test_origin_values(fn):
    assert fn.q(0.0) == 0.0 and fn.psi(0.0) == 1.0 and fn.nu(0.0) == 1.0
    assert fn.f(np.zeros(2)) == 0.0


def test_tau_continuous_at_joints(fn):
    for j in (1.0, 2.0, 4.0):
        for name in ("tau", "tau1", "mu"):
            g = getattr(fn, name)
            assert abs(g(j) - g(j + 1e-12)) <= 1e-10


def test_q_sandwich_and_concavity(fn, toy):
    r = np.linspace(0, 6, 200)
    q = fn.q(r)
    assert np.all(0.5 * toy.decay * r <= q + 1e-12) and np.all(q <= r + 1e-12)
    assert np.all(fn.q2(r) <= 1e-12)
    q1 = fn.q1(r)
    assert np.all(q1 >= 0.5 * toy.decay - 1e-12) and np.all(q1 <= 1 + 1e-12)


def test_quadrature_matches_scipy(fn):
    from scipy.integrate import quad

    for r in (0.3, 1.7, 3.9):
        assert fn.Psi(r) == pytest.approx(quad(fn.psi, 0, r, epsabs=1e-13)[0], rel=1e-9)
        assert fn.q(r) == pytest.approx(quad(fn.q1, 0, r, epsabs=1e-13, limit=200)[0], rel=1e-8)


def test_q_derivatives_match_differences(fn):
    r = np.array([0.2, 0.7, 1.3, 2.5, 3.3])
    h = 1e-5
    assert np.allclose((fn.q(r + h) - fn.q(r - h)) / (2 * h), fn.q1(r), rtol=1e-6)
    assert np.allclose((fn.q1(r + h) - fn.q1(r - h)) / (2 * h), fn.q2(r), rtol=1e-5)


def test_grad_f_matches_differences(fn, toy):
    rng = np.random.default_rng(0)
    u = rng.normal(size=(100, 2))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    z = u * rng.uniform(3 * fn.epsilon, 2 * toy.R_q, size=(100, 1))
    h = 1e-6
    fd = np.stack([(fn.f(z + h * e) - fn.f(z - h * e)) / (2 * h) for e in np.eye(2)], axis=1)
    g = fn.grad_f(z)
    assert np.max(np.linalg.norm(fd - g, axis=1) / np.linalg.norm(g, axis=1)) <= 1e-5
    assert np.all(np.linalg.norm(g, axis=1) <= 1 + 1e-12)
    assert np.all(np.linalg.norm(fn.hess_f(z), ord=2, axis=(1, 2)) <= 2 / fn.epsilon)


def test_differential_inequality(fn, toy):
    r = np.linspace(0, toy.R_q, 500)
    lhs = fn.q2(r) + toy.alpha_q * fn.q1(r) * r
    rhs = -(toy.decay / (32 * toy.R_q**2)) * fn.q(r)
    assert np.all(lhs <= rhs + 1e-8)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(0.01, 0.6))
def test_sandwiches(z, eps):
    c = L.derive_constants(TOY)
    fn = _cached(eps)
    z = np.array(z)
    r = np.linalg.norm(z)
    assert r - 2 * eps - 1e-12 <= fn.g(z) <= r + 1e-12
    assert 0.5 * c.decay * (r - 2 * eps) - 1e-12 <= fn.f(z) <= r + 1e-12


_CACHE = {}


def _cached(eps):
    key = round(eps, 2)
    if key not in _CACHE:
        _CACHE[key] = L.LyapunovFn(max(key, 0.01), L.derive_constants(TOY), nodes=513)
    return _CACHE[key]


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_hessian_direction_bound(z, v):
    fn = _cached(0.1)
    z, v = np.array(z), np.array(v)
    r = np.linalg.norm(z)
    if r < 2 * fn.epsilon:
        return
    assert v @ fn.hess_f(z) @ v <= fn.q1(fn.g(z)) / r * (v @ v) + 1e-12


def test_nu_range(fn):
    r = np.linspace(0, 6, 300)
    nu = fn.nu(r)
    assert np.all(np.diff(nu) <= 1e-15) and nu.min() >= 0.5 - 1e-12 and nu.max() <= 1
    assert np.all(np.diff(fn.Psi(r)) >= 0)


# budgets


def test_target_too_loose(toy):
    bound = L.admissible_target(toy, TOY)
    assert bound == pytest.approx(16 * 3 / toy.lam * math.exp(7 * 0.5 / 3) / 1.5, rel=1e-14)
    with pytest.raises(L.TargetTooLoose):
        L.theorem1_budget(bound * 1.01, toy, TOY)
    with pytest.raises(L.TargetTooLoose):
        L.theorem2_budget(bound * 1.01, toy, TOY, 1)
    with pytest.raises(ValueError):
        L.theorem1_budget(0.0, toy, TOY)


def test_theorem1_budget_constant_noise(toy):
    b = L.theorem1_budget(0.01, toy, TOY)
    assert 0 < b.delta_max < math.inf
    assert b.n_min >= 3 * toy.alpha_q * toy.R_q**2 / b.delta_max * math.log((1 + 0.5) / 0.01)
    assert b.epsilon == pytest.approx(toy.lam / 48 * toy.decay * 0.01, rel=1e-14)
    # independent evaluation of the two printed branches
    first = toy.lam**2 * 1e-4 / (512 * 9 * math.exp(7 / 3))
    second = 2 * toy.lam * 0.01 / (9 * math.exp(7 / 6) * math.sqrt(1.5))
    assert b.delta_branches == pytest.approx((first, second), rel=1e-14)


def test_doubling_target_scales_first_branch(toy):
    a = L.theorem1_budget(0.01, toy, TOY).delta_branches
    b = L.theorem1_budget(0.02, toy, TOY).delta_branches
    assert b[0] == pytest.approx(4 * a[0], rel=1e-14)
    assert b[1] == pytest.approx(2 * a[1], rel=1e-14)


@given(st.floats(1e-4, 1.0), st.floats(1.0, 3.0))
def test_budget_monotone(eps_hat, factor):
    c = L.derive_constants(TOY)
    assert L.theorem1_budget(eps_hat, c, TOY).delta_max <= L.theorem1_budget(eps_hat * factor, c, TOY).delta_max


def test_theorem2_degenerate_without_state_dependence(toy):
    b = L.theorem2_budget(0.01, toy, TOY, 1)
    assert b.T_epoch == 0.0 and b.delta_max == 0.0 and b.n_min == math.inf


def test_theorem2_budget_state_dependent():
    p = RegularityParams(m=2.0, L=3.0, L_R=1.0, R=1.0, beta=1.0, L_xi=0.01, c_m=1.0)
    c = L.derive_constants(p)
    b = L.theorem2_budget(0.5, c, p, 2)
    eps = b.epsilon
    assert b.T_epoch == pytest.approx(eps**4 * c.L_N**2 / 2**14, rel=1e-12)
    a = 36 * 2 / (eps**2 * 3)
    assert b.delta_branches[0] == pytest.approx(b.T_epoch / (a * math.log(a)), rel=1e-12)
    assert 0 < b.delta_max <= min(b.delta_branches)


def test_xlogx_examples():
    assert L.xlogx_bound_holds(1.0, 1.0)
    x = L.xlogx_threshold(0.1)
    assert x == pytest.approx(30 * math.log(10), rel=1e-14)
    assert x == pytest.approx(69.0776, abs=1e-4)
    assert L.xlogx_bound_holds(0.1, x)
    with pytest.raises(ValueError):
        L.xlogx_bound_holds(0.0, 2.0)


def test_xlogx_randomized():
    rng = np.random.default_rng(7)
    c = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), 100_000))
    thr = np.array([L.xlogx_threshold(v) for v in c])
    x = np.maximum(thr, 1e-12) * (1 + rng.exponential(5.0, c.size)) + (thr == 0) * rng.exponential(5.0, c.size)
    assert all(L.xlogx_bound_holds(a, b) for a, b in zip(c, x))
