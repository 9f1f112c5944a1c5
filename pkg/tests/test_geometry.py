"""Core geometry: refraction, intersections, closest points, rigid transforms."""
import numpy as np
import pytest

from refmvg.errors import NoIntersection, ParallelLines, TotalInternalReflection
from refmvg.geometry import (
    Plane,
    Ray,
    SE3Pose,
    Sphere,
    closest_point_on_line_to_line,
    intersect_ray_plane,
    intersect_ray_sphere,
    normalized,
    rotation_geodesic,
    snell_refract,
    so3_exp,
    so3_log,
)

N_WATER = 1.334


def _random_rotation(rng):
    return so3_exp(rng.normal(size=3))


def _random_unit(rng, n=None):
    v = rng.normal(size=3 if n is None else (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# snell_refract
# ---------------------------------------------------------------------------

def test_refract_normal_incidence_is_unchanged():
    n = np.array([0.0, 0.0, 1.0])
    for r in (0.5, 1.0, 1.52):
        out = snell_refract(n, n, r)
        np.testing.assert_allclose(out, n, atol=1e-15)


def test_refract_identical_media_is_identity():
    rng = np.random.default_rng(7)
    for _ in range(50):
        v = _random_unit(rng)
        n = _random_unit(rng)
        np.testing.assert_allclose(snell_refract(v, n, 1.0), v, atol=1e-12)


def test_refract_45_degrees_air_to_water():
    # scalar Snell oracle: sin(theta2) = sin(45 deg) / 1.334
    theta1 = np.pi / 4
    v = np.array([np.sin(theta1), 0.0, np.cos(theta1)])
    n = np.array([0.0, 0.0, 1.0])
    out = snell_refract(v, n, 1.0 / N_WATER)
    theta2 = np.arccos(np.clip(out @ n, -1, 1))
    expected = np.arcsin(np.sin(theta1) / N_WATER)
    assert abs(theta2 - expected) < 1e-12
    assert abs(np.degrees(expected) - 32.0099) < 0.001


def test_refract_result_unit_norm_and_in_plane_of_incidence():
    rng = np.random.default_rng(11)
    count = 0
    while count < 200:
        v = _random_unit(rng)
        n = _random_unit(rng)
        if n @ v < 0.05:
            continue
        for r in (1.0 / N_WATER, 1.0 / 1.52, 1.52 / N_WATER):
            try:
                out = snell_refract(v, n, r)
            except TotalInternalReflection:
                assert r > 1.0  # only denser-to-rarer transitions may TIR
                continue
            assert abs(np.linalg.norm(out) - 1.0) < 1e-12
            assert abs(np.cross(v, n) @ out) < 1e-12
            # Snell equality n1 sin(t1) = n2 sin(t2)
            assert abs(r * np.linalg.norm(np.cross(n, v))
                       - np.linalg.norm(np.cross(n, out))) < 1e-12
        count += 1


def test_refract_reversibility():
    rng = np.random.default_rng(13)
    count = 0
    while count < 500:
        v = _random_unit(rng)
        n = _random_unit(rng)
        if n @ v < 0.05:
            continue
        r = rng.uniform(0.6, 1.6)
        try:
            mid = snell_refract(v, n, r)
        except TotalInternalReflection:
            continue
        back = snell_refract(mid, -n, 1.0 / r)
        np.testing.assert_allclose(back, v, atol=1e-10)
        count += 1


def test_refract_total_internal_reflection():
    # water -> air beyond the critical angle arcsin(1/1.334) ~ 48.6 deg
    theta = np.radians(60.0)
    v = np.array([np.sin(theta), 0.0, np.cos(theta)])
    n = np.array([0.0, 0.0, 1.0])
    with pytest.raises(TotalInternalReflection):
        snell_refract(v, n, N_WATER / 1.0)


# ---------------------------------------------------------------------------
# intersections
# ---------------------------------------------------------------------------

def test_ray_plane_axial():
    p = intersect_ray_plane(Ray([0, 0, 0], [0, 0, 1]), Plane([0, 0, 1], 0.05))
    np.testing.assert_allclose(p, [0, 0, 0.05], atol=1e-15)


def test_ray_plane_parallel_raises():
    with pytest.raises(NoIntersection):
        intersect_ray_plane(Ray([0, 0, 0], [1, 0, 0]), Plane([0, 0, 1], 0.05))


def test_ray_plane_behind_origin_raises():
    with pytest.raises(NoIntersection):
        intersect_ray_plane(Ray([0, 0, 1], [0, 0, 1]), Plane([0, 0, 1], 0.05))


def test_ray_plane_random_satisfies_plane_equation():
    rng = np.random.default_rng(3)
    hits = 0
    while hits < 200:
        ray = Ray(rng.normal(size=3), _random_unit(rng))
        plane = Plane(_random_unit(rng), rng.normal())
        try:
            p = intersect_ray_plane(ray, plane)
        except NoIntersection:
            continue
        assert abs(plane.normal @ p - plane.offset) < 1e-12
        # hit lies on the forward ray
        assert (p - ray.origin) @ ray.direction > 0
        hits += 1


def test_ray_sphere_from_center():
    s = Sphere([0.2, -0.1, 0.4], 0.07)
    p = intersect_ray_sphere(Ray(s.center, [0, 1, 0]), s)
    assert abs(np.linalg.norm(p - s.center) - s.radius) < 1e-14


def test_ray_sphere_from_inside_offset_center():
    # camera at origin inside a dome of radius 0.05 centered 3 mm away:
    # oc = (0,0,-0.003), b = -0.003, c = 9e-6 - 2.5e-3, t = 0.003 + 0.05
    s = Sphere([0, 0, 0.003], 0.05)
    p = intersect_ray_sphere(Ray([0, 0, 0], [0, 0, 1]), s)
    np.testing.assert_allclose(p, [0, 0, 0.053], atol=1e-15)
    assert abs(np.linalg.norm(p - s.center) - 0.05) < 1e-12


def test_ray_sphere_miss_raises():
    with pytest.raises(NoIntersection):
        intersect_ray_sphere(Ray([1, 0, 0], [1, 0, 0]), Sphere([0, 0, 0], 0.5))


def test_sphere_radius_must_be_positive():
    with pytest.raises(ValueError):
        Sphere([0, 0, 0], 0.0)


# ---------------------------------------------------------------------------
# closest points between lines
# ---------------------------------------------------------------------------

def test_closest_points_crossing_lines():
    a = Ray([-1, 0, 0], [1, 0, 0])
    b = Ray([0, -2, 0], [0, 1, 0])
    pa, pb, d = closest_point_on_line_to_line(a, b)
    np.testing.assert_allclose(pa, [0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(pb, [0, 0, 0], atol=1e-12)
    assert d < 1e-12


def test_closest_points_parallel_raises():
    with pytest.raises(ParallelLines):
        closest_point_on_line_to_line(Ray([0, 0, 0], [1, 0, 0]),
                                      Ray([0, 1, 0], [-1, 0, 0]))


def test_closest_points_known_skew_pair():
    # x-axis vs the vertical line through (0, 1, 1): feet (0,0,0) and (0,1,0)
    pa, pb, d = closest_point_on_line_to_line(Ray([5, 0, 0], [-1, 0, 0]),
                                              Ray([0, 1, 1], [0, 0, 1]))
    np.testing.assert_allclose(pa, [0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(pb, [0, 1, 0], atol=1e-12)
    assert abs(d - 1.0) < 1e-12


def test_closest_points_satisfy_orthogonality():
    """The segment between the feet must be orthogonal to both lines."""
    rng = np.random.default_rng(17)
    for _ in range(200):
        a = Ray(rng.normal(size=3), _random_unit(rng))
        b = Ray(rng.normal(size=3), _random_unit(rng))
        if np.linalg.norm(np.cross(a.direction, b.direction)) < 1e-6:
            continue
        pa, pb, d = closest_point_on_line_to_line(a, b)
        w = pa - pb
        assert abs(w @ a.direction) < 1e-9
        assert abs(w @ b.direction) < 1e-9
        assert abs(np.linalg.norm(w) - d) < 1e-12


# ---------------------------------------------------------------------------
# SE3
# ---------------------------------------------------------------------------

def test_se3_identity_and_apply():
    p = SE3Pose.identity()
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(p.apply(x), x)


def test_se3_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        SE3Pose(np.eye(3) * 1.001, np.zeros(3))


def test_se3_inverse_composition_is_identity():
    rng = np.random.default_rng(23)
    for _ in range(100):
        p = SE3Pose(_random_rotation(rng), rng.normal(size=3))
        q = p.compose(p.inverse())
        assert np.abs(q.rotation - np.eye(3)).max() < 1e-10
        assert np.abs(q.translation).max() < 1e-10


def test_se3_associativity_and_apply_consistency():
    rng = np.random.default_rng(29)
    for _ in range(100):
        a, b, c = (SE3Pose(_random_rotation(rng), rng.normal(size=3)) for _ in range(3))
        lhs = a.compose(b).compose(c)
        rhs = a.compose(b.compose(c))
        assert np.abs(lhs.matrix() - rhs.matrix()).max() < 1e-10
        x = rng.normal(size=(5, 3))
        np.testing.assert_allclose(a.compose(b).apply(x), a.apply(b.apply(x)), atol=1e-10)


def test_se3_center():
    rng = np.random.default_rng(31)
    p = SE3Pose(_random_rotation(rng), rng.normal(size=3))
    # the center maps to the origin of the target frame
    np.testing.assert_allclose(p.apply(p.center), np.zeros(3), atol=1e-12)


def test_so3_exp_log_round_trip():
    rng = np.random.default_rng(37)
    for _ in range(200):
        w = rng.normal(size=3)
        w = w / np.linalg.norm(w) * rng.uniform(1e-8, np.pi - 1e-3)
        np.testing.assert_allclose(so3_log(so3_exp(w)), w, atol=1e-8)


def test_rotation_geodesic_of_known_angle():
    rng = np.random.default_rng(41)
    for _ in range(50):
        angle = rng.uniform(0, np.pi - 1e-6)
        axis = _random_unit(rng)
        Ra = _random_rotation(rng)
        Rb = Ra @ so3_exp(axis * angle)
        assert abs(rotation_geodesic(Ra, Rb) - angle) < 1e-9


def test_normalized_rejects_zero():
    with pytest.raises(ValueError):
        normalized(np.zeros(3))
