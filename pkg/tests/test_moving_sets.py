import math

import numpy as np
import pytest

from manisweep import EuclideanBackend, SphereBackend, distance
from manisweep.errors import NumericsError, StructuralError
from manisweep.moving_sets import (
    ball,
    ball_complement,
    halfline,
    half_space,
    inequalities,
    make_moving_set,
    sphere_cap,
)


@pytest.fixture(scope="module")
def disk():
    return ball(EuclideanBackend(2), center=[0.0, 0.0], radius=1.0)


@pytest.fixture(scope="module")
def cap():
    return sphere_cap(SphereBackend(2), axis=[0.0, 0.0, 1.0], height=0.0)


def test_membership_examples(disk, cap):
    E = disk.backend
    assert disk.member(0.0, E.point([0.5, 0.0]))
    assert not disk.member(0.0, E.point([2.0, 0.0]))
    S = cap.backend
    assert cap.member(0.0, S.point([0.0, 1.0, 0.0]))  # boundary within tolerance


def test_dist_to_set_examples(disk):
    E = disk.backend
    assert disk.dist_to_set(0.0, E.point([0.5, 0.5])) == 0.0
    assert disk.dist_to_set(0.0, E.point([2.0, 0.0])) == pytest.approx(1.0)


def test_disk_projection(disk):
    E = disk.backend
    res = disk.project(0.0, E.point([2.0, 0.0]))
    assert np.allclose(res.point.coords, [1.0, 0.0])
    assert res.dist == pytest.approx(1.0)
    member = E.point([0.3, -0.2])
    res2 = disk.project(0.0, member)
    assert res2.point is member and res2.dist == 0.0


def test_cap_dist_against_boundary_sampling(cap):
    S = cap.backend
    rng = np.random.default_rng(5)
    phis = np.linspace(0, 2 * math.pi, 80001)
    boundary = np.stack([np.cos(phis), np.sin(phis), np.zeros_like(phis)], axis=1)
    for _ in range(10):
        theta = rng.uniform(0.05, 0.8)
        lam = rng.uniform(0, 2 * math.pi)
        y = S.point(
            [
                math.cos(lam) * math.cos(theta),
                math.sin(lam) * math.cos(theta),
                -math.sin(theta),
            ]
        )
        oracle = float(np.min(np.arccos(np.clip(boundary @ y.coords, -1, 1))))
        assert cap.dist_to_set(0.0, y) == pytest.approx(oracle, abs=1e-6)
        res = cap.project(0.0, y)
        # nearest boundary point lies on the same meridian
        assert np.allclose(
            res.point.coords, [math.cos(lam), math.sin(lam), 0.0], atol=1e-9
        )
        assert res.dist == pytest.approx(theta, abs=1e-9)


def test_generators_interior_empty(disk):
    assert disk.proximal_normal_generators(0.0, disk.backend.point([0.2, 0.1])) == []


def test_disk_boundary_generator_is_outward_radial(disk):
    gens = disk.proximal_normal_generators(0.0, disk.backend.point([1.0, 0.0]))
    assert len(gens) == 1
    g = gens[0].components
    assert g[0] > 0 and abs(g[1]) < 1e-12


def test_inequality_disk_generator_matches_spec_form():
    E = EuclideanBackend(2)
    s = inequalities(E, ["1 - x1^2 - x2^2"])
    gens = s.proximal_normal_generators(0.0, E.point([1.0, 0.0]))
    assert np.allclose(gens[0].components, [2.0, 0.0])


def test_cap_equator_generator(cap):
    S = cap.backend
    gens = cap.proximal_normal_generators(0.0, S.point([1.0, 0.0, 0.0]))
    assert len(gens) == 1
    assert np.allclose(gens[0].components, [0.0, 0.0, -1.0])


def test_generators_require_membership(disk):
    with pytest.raises(StructuralError):
        disk.proximal_normal_generators(0.0, disk.backend.point([2.0, 0.0]))


def test_iterative_agrees_with_closed_forms(disk, cap):
    rng = np.random.default_rng(23)
    E = disk.backend
    for _ in range(10):
        y = E.point(rng.uniform(-1, 1, size=2) * 2.5)
        if disk.member(0.0, y):
            continue
        closed = disk.project(0.0, y)
        iterative = disk.project(0.0, y, method="iterative")
        assert iterative.converged
        assert distance(closed.point, iterative.point) < 1e-6
    S = cap.backend
    for _ in range(10):
        raw = rng.standard_normal(3)
        raw[2] = -abs(raw[2]) - 0.1
        y = S.point(raw / np.linalg.norm(raw))
        closed = cap.project(0.0, y)
        iterative = cap.project(0.0, y, method="iterative")
        assert iterative.converged
        assert distance(closed.point, iterative.point) < 1e-6


def test_halfline_projection_and_motion():
    E = EuclideanBackend(1)
    s = halfline(E, offset=0.0, speed=1.0)
    assert s.lipschitz_const == 1.0
    res = s.project(0.5, E.point([0.0]))
    assert np.allclose(res.point.coords, [0.5])
    assert s.member(0.2, E.point([0.3]))
    assert not s.member(0.5, E.point([0.3]))


def test_half_space_projection():
    E = EuclideanBackend(2)
    s = half_space(E, normal=[0.0, 1.0], offset=0.25)
    res = s.project(0.0, E.point([0.4, -1.0]))
    assert np.allclose(res.point.coords, [0.4, 0.25])


def test_ball_complement_projection_and_center_warning():
    E = EuclideanBackend(2)
    s = ball_complement(E, center=[0.0, 0.0], radius=1.0)
    res = s.project(0.0, E.point([0.5, 0.0]))
    assert np.allclose(res.point.coords, [1.0, 0.0])
    center = s.project(0.0, E.point([0.0, 0.0]))
    assert center.warning is not None
    assert np.linalg.norm(center.point.coords) == pytest.approx(1.0)


def test_rotating_cap_axis_path():
    S = SphereBackend(2)
    s = sphere_cap(S, axis=[0, 0, 1], height=0.0, omega=0.3)
    x = S.point([0.0, 1.0, 0.0])
    # axis at time t is (sin 0.3t, 0, cos 0.3t)
    t = 2.0
    a = np.array([math.sin(0.3 * t), 0.0, math.cos(0.3 * t)])
    vals = s.constraint_values(t, S.point(a))
    assert vals[0] == pytest.approx(1.0)
    assert s.constraint_values(t, x)[0] == pytest.approx(0.0)


def test_hausdorff_lipschitz_self_check():
    E = EuclideanBackend(2)
    moving = ball(E, center=[0.0, 0.0], radius=1.0, velocity=[0.7, 0.0])
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(60):
        t, s = rng.uniform(0, 1, size=2)
        if abs(t - s) < 1e-3:
            continue
        x = moving.find_member(s, E.point([s * 0.7, 0.0]), rng, radius=0.9)
        worst = max(worst, moving.dist_to_set(t, x) / abs(t - s))
    assert worst <= moving.lipschitz_const + 1e-6

    S = SphereBackend(2)
    cap = sphere_cap(S, axis=[0, 0, 1], height=0.0, omega=0.3)
    worst = 0.0
    for _ in range(60):
        t, s = rng.uniform(0, 3, size=2)
        if abs(t - s) < 1e-3:
            continue
        seed = S.point([0.0, 1.0, 0.0])
        x = cap.find_member(s, seed, rng, radius=1.0)
        worst = max(worst, cap.dist_to_set(t, x) / abs(t - s))
    assert worst <= cap.lipschitz_const + 1e-6


def test_projection_fixes_members_property(cap):
    rng = np.random.default_rng(9)
    S = cap.backend
    for _ in range(25):
        raw = rng.standard_normal(3)
        raw[2] = abs(raw[2])
        x = S.point(raw / np.linalg.norm(raw))
        res = cap.project(0.0, x)
        assert distance(res.point, x) < 1e-12


def test_empty_set_evidence():
    E = EuclideanBackend(2)
    s = inequalities(E, ["-1 - x1^2 - x2^2"])
    rng = np.random.default_rng(1)
    with pytest.raises((StructuralError, NumericsError)):
        s.find_member(0.0, E.point([0.3, 0.2]), rng, radius=1.0, tries=8)


def test_make_moving_set_dispatch():
    E = EuclideanBackend(1)
    s = make_moving_set(E, {"kind": "halfline", "offset": 0.0, "speed": 1.0})
    assert s.descriptor["kind"] == "halfline"
    with pytest.raises(StructuralError):
        make_moving_set(E, {"kind": "nonsense"})


def test_projection_warning_beyond_working_radius(disk):
    far = disk.backend.point([9.0, 0.0])
    res = disk.project(0.0, far)
    assert res.warning is not None
