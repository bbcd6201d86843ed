import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ndtr

from gausstorsion.domain import Domain, Loop, gaussian_measure, make_family
from gausstorsion.fem import DiscreteField, generate_mesh, solve_torsion, torsion_value
from gausstorsion.gauss import half_space_measure
from gausstorsion.halfspace import ClosedFormSolution, HalfSpaceProblem, inverse_v, v_min
from gausstorsion.levelset import (boundary_robin_integral, check_distribution_comparison,
                                   check_fubini_identity, check_level_inequality, coarea_derivative,
                                   compute_profile, distribution_function, eps_disc, eps_lem,
                                   halfspace_level_check, layer_cake_integral, layer_cake_residual,
                                   level_grid, level_perimeter, symmetrized_problem)


def _phi1(x):
    return np.exp(-x * x / 2) / np.sqrt(2 * np.pi)


@pytest.fixture(scope="module")
def linear_field():
    # u = x1 + 0.5 on [0, 1] x [-0.5, 1.2] is reproduced exactly by P1 elements
    v = np.array([[0, -0.5], [1, -0.5], [1, 1.2], [0, 1.2]], float)
    m = generate_mesh(Domain((Loop(v, np.ones(4, bool)),)), 0.1)
    return DiscreteField(m, m.vertices[:, 0] + 0.5, 1.0)


@pytest.fixture(scope="module")
def square():
    d = make_family("square", 0.5)
    u = solve_torsion(d, 1.0, 0.08)
    return d, u, compute_profile(u)


@pytest.fixture(scope="module")
def half_plane():
    d = make_family("half_plane", 0.5)
    u = solve_torsion(d, 1.0, 0.08)
    return d, u


Y = ndtr(1.2) - ndtr(-0.5)


@pytest.mark.parametrize("t", [0.63, 0.9, 1.27])
def test_linear_field_distribution(linear_field, t):
    c = t - 0.5  # the level set is the vertical line x1 = c
    assert distribution_function(linear_field, t) == pytest.approx((ndtr(1) - ndtr(c)) * Y,
                                                                   rel=1e-11)
    assert coarea_derivative(linear_field, t) == pytest.approx(-_phi1(c) * Y, rel=1e-11)
    # interface + right side + the pieces of top and bottom with x1 > c
    ref = _phi1(c) * Y + _phi1(1.0) * Y + (_phi1(-0.5) + _phi1(1.2)) * (ndtr(1) - ndtr(c))
    assert level_perimeter(linear_field, t) == pytest.approx(ref, rel=1e-11)
    # int phi / u over the physical boundary inside {u > t}
    hor = quad(lambda x: _phi1(x) / (x + 0.5), c, 1.0, epsabs=1e-14, epsrel=1e-13)[0]
    ref = _phi1(1.0) * Y / 1.5 + (_phi1(-0.5) + _phi1(1.2)) * hor
    assert boundary_robin_integral(linear_field, t) == pytest.approx(ref, rel=1e-10)


def test_linear_field_layer_cake(linear_field):
    prof = compute_profile(linear_field, 100)
    assert layer_cake_residual(linear_field, prof) <= 1e-9


def test_distribution_endpoints(square):
    d, u, _ = square
    assert distribution_function(u, 0.0) == pytest.approx(gaussian_measure(d), rel=1e-9)
    assert distribution_function(u, 1.01 * u.u_max) == 0.0
    assert level_perimeter(u, 1.01 * u.u_max) == 0.0


def test_half_plane_distribution_matches_closed_form(half_plane):
    d, u = half_plane
    hs = HalfSpaceProblem(d.params["shift"], 1.0)
    sol = ClosedFormSolution(hs)
    for t in np.linspace(1.05 * v_min(hs), 2.0, 6):
        ref = half_space_measure(inverse_v(sol, t))
        assert abs(distribution_function(u, t) - ref) <= eps_disc(0.08)


def test_profile_monotone_and_isoperimetric(square):
    d, u, prof = square
    assert np.all(np.diff(prof.t) > 0)
    assert np.all(np.diff(prof.mu) <= 1e-15)
    assert np.all(prof.ext_integral >= 0)
    assert np.all(np.diff(prof.ext_integral) <= 1e-12)
    gap = halfspace_level_check(u, prof)
    assert np.nanmin(gap) >= -1e-10


def test_exact_coarea_against_difference(square):
    _, u, prof = square
    mid = slice(len(prof.t) // 4, 3 * len(prof.t) // 4)
    fd = prof.mu_prime_fd[mid]
    assert np.median(np.abs(fd / prof.mu_prime[mid] - 1)) <= 1e-2


def test_layer_cake(square):
    _, u, prof = square
    assert layer_cake_residual(u, prof) <= 1e-5
    assert layer_cake_integral(prof) == pytest.approx(torsion_value(u), rel=1e-5)


def test_fubini_identity(square):
    d, u, prof = square
    rep = check_fubini_identity(u, 1.0, prof, gaussian_measure(d))
    assert rep.direct_residual <= 1e-8
    assert rep.integrated_residual <= 1e-3


def test_distribution_comparison(square):
    d, u, _ = square
    rep = check_distribution_comparison(u, symmetrized_problem(gaussian_measure(d), 1.0))
    assert rep.passed
    assert rep.min_margin >= -eps_disc(0.08)


def test_level_inequality(square):
    _, u, prof = square
    rep = check_level_inequality(u, 1.0, prof)
    assert rep.reliable.sum() > 10
    assert rep.passed
    assert rep.tolerance == eps_lem(0.08)


def test_boundary_minimum_below_v_m(square):
    d, u, _ = square
    hs = symmetrized_problem(gaussian_measure(d), 1.0)
    assert u.coefficients[u.mesh.boundary_nodes()].min() <= v_min(hs) + eps_disc(0.08)


def test_level_collision_perturbed(square):
    _, u, _ = square
    t = float(u.coefficients[np.argsort(u.coefficients)[len(u.coefficients) // 2]])
    prof = compute_profile(u, t_grid=[t])
    assert prof.perturbed[0]
    assert prof.t[0] > t
    assert level_perimeter(u, t) > 0


def test_level_grid_covers_range(square):
    _, u, _ = square
    g = level_grid(u, 50, v_m=0.5 * u.u_max)
    assert g[0] == 0.0 and g[-1] < u.u_max
    assert np.all(np.diff(g) > 0)
    assert len(g) > 50
