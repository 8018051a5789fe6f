import numpy as np
import pytest
from scipy.stats import norm

from langevin_noise import fokker1d as F
from langevin_noise import problems as P


def one_dim(grad, m_fn, pot=None):
    diffusion = lambda x: m_fn(x[:, 0])[:, None, None]
    params = P.RegularityParams(m=1, L=1, L_R=1, R=1, beta=2, L_xi=1, c_m=0.4)
    return P.ProblemSpec(1, grad, diffusion, P.rademacher_noise(diffusion), params, potential=pot)


WAVY = one_dim(lambda x: x, lambda x: 1.2 + 0.3 * np.cos(x))


def local_minima(grid, v):
    inner = (v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])
    return grid[1:-1][inner]


def test_unit_diffusion_recovers_potential():
    spec = P.double_well_1d(noise_scale=1.0)
    grid = np.linspace(-4, 4, 801)
    V = F.potential_V(spec, grid)
    U = spec.potential(grid[:, None])
    assert np.allclose(V, U - spec.potential(np.zeros((1, 1)))[0], atol=1e-7)


def test_constant_potential_gives_log_diffusion():
    spec = one_dim(lambda x: np.zeros_like(x), lambda x: 1.2 + 0.3 * np.cos(x))
    grid = np.linspace(-3, 3, 301)
    D = (1.2 + 0.3 * np.cos(grid)) ** 2
    assert np.allclose(F.potential_V(spec, grid), np.log(D) - np.log(1.5**2), atol=1e-14)


def test_ito_convention_doubles_the_integral():
    grid = np.linspace(-3, 3, 301)
    D = (1.2 + 0.3 * np.cos(grid)) ** 2
    a = F.potential_V(WAVY, grid) - np.log(D / 2.25)
    b = F.potential_V(WAVY, grid, convention="ito") - np.log(D / 2.25)
    assert np.allclose(b, 2 * a, atol=1e-12)
    with pytest.raises(ValueError):
        F.potential_V(WAVY, grid, convention="other")


def test_gaussian_density():
    grid = np.linspace(-8, 8, 4096)
    dens = F.invariant_density(P.quadratic(1), grid)
    assert np.max(np.abs(dens.pdf - norm.pdf(grid))) <= 1e-4
    p = dens.pdf
    assert np.sum(0.5 * (p[1:] + p[:-1]) * np.diff(grid)) == pytest.approx(1.0, abs=1e-6)


def test_symmetric_problem_gives_even_density():
    grid = np.linspace(-6, 6, 1201)
    for spec in (P.double_well_1d(), WAVY):
        p = F.invariant_density(spec, grid).pdf
        assert np.max(np.abs(p - p[::-1])) <= 1e-8


def test_builtin_potential_has_two_wells():
    # with D = (x+2)^2/4, V' = (4 - 2x)/(x+2)^2 on (-1, 4) and (6x - 28)/(x+2)^2
    # on (4, 8): besides the well at -2 there is a second local minimum at 14/3
    spec = P.builtin_1d_example()
    grid = F.default_grid()
    V = F.potential_V(spec, grid)
    mins = local_minima(grid, V)
    assert mins.size == 2
    assert mins[0] == pytest.approx(-2.0, abs=0.01)
    assert mins[1] == pytest.approx(14 / 3, abs=0.01)
    assert V[np.argmin(np.abs(grid + 2))] < V[np.argmin(np.abs(grid - 14 / 3))]
    dens = F.invariant_density(spec, grid)
    assert -3 <= dens.argmax <= -1


def test_builtin_second_well_under_ito_convention():
    spec = P.builtin_1d_example()
    grid = F.default_grid()
    mins = local_minima(grid, F.potential_V(spec, grid, convention="ito"))
    assert mins.size == 2 and mins[1] == pytest.approx(6.0, abs=0.01)


def test_degenerate_diffusion():
    spec = one_dim(lambda x: x, lambda x: np.abs(x))
    with pytest.raises(F.DegenerateDiffusion):
        F.potential_V(spec, np.linspace(-1, 1, 11))
    with pytest.raises(F.DegenerateDiffusion):
        F.potential_V(P.builtin_1d_example(), m_floor=0.5)
    with pytest.raises(ValueError):
        F.potential_V(P.quadratic(2))


def test_self_consistency():
    grid = np.linspace(-8, 8, 4096)
    dens = F.invariant_density(WAVY, grid)
    u = np.random.default_rng(0).uniform(size=100_000)
    samples = np.interp(u, dens.cdf(), grid)
    w1, _ = F.compare_to_samples(dens, samples)
    assert w1 <= 0.02 * 16


def test_point_mass_mode_gap():
    dens = F.invariant_density(P.double_well_1d(), np.linspace(-4, 4, 801))
    _, gap = F.compare_to_samples(dens, np.full(50, dens.argmax))
    assert gap == 0.0


def test_histogram_mode():
    s = np.concatenate([np.full(10, 1.03), np.linspace(-2, 2, 20)])
    assert F.histogram_mode(s) == pytest.approx(1.05, abs=0.051)


@pytest.mark.parametrize("spec", [P.quadratic(1), P.double_well_1d(), WAVY], ids=["ou", "double_well", "wavy"])
def test_stationarity_residual(spec):
    dens = F.invariant_density(spec, np.linspace(-6, 6, 4096))
    res, scale = F.stationarity_residual(spec, dens)
    assert res <= 1e-3 * scale


@pytest.mark.parametrize("spec", [P.double_well_1d(), WAVY], ids=["double_well", "wavy"])
def test_normalizer_stable_under_refinement(spec):
    a = F.invariant_density(spec, F.default_grid(4096)).norm
    b = F.invariant_density(spec, F.default_grid(8191)).norm
    assert abs(a - b) <= 1e-6 * abs(b)


def test_builtin_normalizer_refinement():
    # right of x = -2 the density is a half Gaussian of width m_floor, so the
    # trapezoid normalizer only settles to about 1e-4 on the default grid
    spec = P.builtin_1d_example()
    a = F.invariant_density(spec, F.default_grid(4096))
    b = F.invariant_density(spec, F.default_grid(8191))
    assert abs(a.norm - b.norm) <= 1e-4 * b.norm
    assert -2.0 in a.grid and np.nextafter(-2.0, 0) in a.grid
    p = a.pdf
    assert np.sum(0.5 * (p[1:] + p[:-1]) * np.diff(a.grid)) == pytest.approx(1.0, abs=1e-12)
