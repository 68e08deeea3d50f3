"""Level-set backend on the unit circle and the 2:1 ellipse."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from manisweep import (
    ImplicitBackend,
    Region,
    distance,
    exp_map,
    geometry_budget,
    grad_sq_distance,
    log_map,
    parallel_transport,
)
from manisweep.errors import StructuralError


@pytest.fixture(scope="module")
def circle():
    return ImplicitBackend(2, ["x1^2 + x2^2 - 1"])


@pytest.fixture(scope="module")
def ellipse():
    return ImplicitBackend(2, ["x1^2/4 + x2^2 - 1"])


def test_circle_quarter_distance(circle):
    # geodesic distance on the circle is arc length
    assert distance(circle.point([1, 0]), circle.point([0, 1])) == pytest.approx(
        math.pi / 2, abs=1e-8
    )


def test_circle_exp_quarter_turn(circle):
    x = circle.point([1, 0])
    v = circle.tangent(x, [0, math.pi / 4])
    y = exp_map(x, v)
    assert np.allclose(y.coords, [math.cos(math.pi / 4), math.sin(math.pi / 4)], atol=1e-9)


def test_exp_against_independent_integrator(ellipse):
    # independent oracle: scipy DOP853 on the same projected second-order system
    x = np.array([2.0, 0.0])
    v0 = np.array([0.0, 0.9])

    def rhs(t, s):
        p, vel = s[:2], s[2:]
        jac = ellipse.constraint_jacobian(p)[0]
        flat = [ellipse._g_trees[0].diff(f"x{i}").diff(f"x{j}") for i in range(2) for j in range(2)]
        H = np.array([f.evaluate({"x0": p[0], "x1": p[1]}) for f in flat]).reshape(2, 2)
        lam = -(vel @ H @ vel) / (jac @ jac)
        return np.concatenate([vel, lam * jac])

    sol = solve_ivp(rhs, (0, 1), np.concatenate([x, v0]), method="DOP853", rtol=1e-12, atol=1e-13)
    reference = sol.y[:2, -1]
    y = exp_map(ellipse.point(x), ellipse.tangent(ellipse.point(x), v0))
    assert np.max(np.abs(y.coords - reference)) < 1e-7


def test_exp_log_inverse_implicit(circle, ellipse):
    for backend in (circle, ellipse):
        rng = np.random.default_rng(31)
        bud = backend.budget()
        for _ in range(40):
            x = backend.point(backend._project_point(rng.standard_normal(2) * 2))
            v = backend.random_tangent(rng, x, 0.9 * bud.rho)
            y = exp_map(x, v)
            back = log_map(x, y)
            assert np.max(np.abs(back.components - v.components)) < 1e-5
            assert abs(back.norm() - distance(x, y)) < 1e-5


def test_transport_isometry_and_symmetry_implicit(circle):
    rng = np.random.default_rng(37)
    bud = circle.budget()
    for _ in range(40):
        x = circle.point(circle._project_point(rng.standard_normal(2)))
        v = circle.random_tangent(rng, x, 0.9 * bud.rho)
        y = exp_map(x, v)
        w = circle.random_tangent(rng, x, 1.0)
        carried = parallel_transport(x, y, w)
        assert abs(carried.norm() - w.norm()) <= 1e-10 * max(w.norm(), 1e-30)
        gam = log_map(x, y)
        sym = parallel_transport(x, y, gam) + log_map(y, x)
        assert sym.norm() < 1e-8


def test_grad_sq_distance_finite_differences_implicit(circle):
    rng = np.random.default_rng(41)
    eps = 1e-5
    for _ in range(10):
        x = circle.point(circle._project_point(rng.standard_normal(2)))
        v = circle.random_tangent(rng, x, 1.0)
        if v.norm() < 0.2:
            continue
        y = exp_map(x, v)
        g = grad_sq_distance(x, y)
        basis = circle.tangent_basis(x)
        e = circle.tangent(x, basis[0])
        fp = distance(exp_map(x, e.scaled(eps)), y) ** 2
        fm = distance(exp_map(x, e.scaled(-eps)), y) ** 2
        fd = (fp - fm) / (2 * eps)
        assert abs(g.inner(e) - fd) <= 2e-5 * max(1.0, abs(fd))


def test_feasibility_of_exp_results(circle):
    rng = np.random.default_rng(43)
    bud = circle.budget()
    for _ in range(20):
        x = circle.point(circle._project_point(rng.standard_normal(2)))
        v = circle.random_tangent(rng, x, 0.9 * bud.rho)
        y = exp_map(x, v)
        assert circle.feasibility_residual(y.coords) < 1e-8


def test_circle_budget_is_flagged_estimate(circle):
    bud = geometry_budget(circle)
    assert bud.is_estimate
    assert bud.curvature_bound == pytest.approx(1.0, rel=1e-6)
    assert bud.rho == pytest.approx(math.pi / 2, rel=1e-6)


def test_ellipse_curvature_estimate_matches_analytic(ellipse):
    # curve curvature of x^2/4 + y^2 = 1 at parameter t:
    # kappa(t) = 2 / (4 sin^2 t + cos^2 t)^(3/2); max 2 at (2, 0)
    region = Region(ellipse.point([2.0, 0.0]), 0.4)
    bud = geometry_budget(ellipse, region)
    assert bud.is_estimate
    thetas = np.linspace(-0.25, 0.25, 101)
    analytic_max = max(2.0 / (4 * np.sin(t) ** 2 + np.cos(t) ** 2) ** 1.5 for t in thetas)
    assert bud.curvature_bound <= 2.0 + 1e-6
    assert bud.curvature_bound == pytest.approx(analytic_max, rel=0.05)


def test_infeasible_point_rejected(circle):
    with pytest.raises(StructuralError):
        circle.point([1.5, 0.0])


def test_two_constraint_manifold_in_r3():
    # intersection of the unit sphere with the plane x3 = 0: a circle
    M = ImplicitBackend(3, ["x1^2 + x2^2 + x3^2 - 1", "x3"])
    assert M.dim == 1
    x = M.point([1, 0, 0])
    v = M.tangent(x, [0, 0.5, 0])
    y = exp_map(x, v)
    assert np.allclose(y.coords, [math.cos(0.5), math.sin(0.5), 0.0], atol=1e-8)
    back = log_map(x, y)
    assert np.max(np.abs(back.components - v.components)) < 1e-6
