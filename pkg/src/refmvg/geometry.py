"""Elementary 3D primitives.

Vectors, rigid transforms, rays, ray/surface intersection and Snell
refraction. Everything downstream (camera models, solvers, optimization)
builds on this module. All types are immutable value types and all
operations are pure functions.

Conventions: float64 throughout, meters for lengths, radians for angles.
An SE3Pose maps points from its source frame into its target frame,
``x_target = R @ x_source + t``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import NoIntersection, ParallelLines, TotalInternalReflection

__all__ = [
    "SE3Pose",
    "Ray",
    "Plane",
    "Sphere",
    "normalized",
    "skew",
    "so3_exp",
    "so3_log",
    "rotation_geodesic",
    "snell_refract",
    "intersect_ray_plane",
    "intersect_ray_sphere",
    "closest_point_on_line_to_line",
]


# ---------------------------------------------------------------------------
# vectors and rotations
# ---------------------------------------------------------------------------

def normalized(v: np.ndarray) -> np.ndarray:
    """Return ``v / |v|``, raising on a near-zero input."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n < 1e-300):
        raise ValueError("cannot normalize a zero-length vector")
    return v / n


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: ``skew(a) @ b == cross(a, b)``."""
    x, y, z = np.asarray(v, dtype=np.float64)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues' formula: rotation matrix for a rotation vector (radians)."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = np.linalg.norm(omega)
    K = skew(omega)
    if theta < 1e-12:
        # second-order series, exact enough at this scale
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector (radians) of a rotation matrix; inverse of so3_exp."""
    R = np.asarray(R, dtype=np.float64)
    cos_theta = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta < 1e-10:
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if np.pi - theta < 1e-6:
        # near pi the off-diagonal form degrades; R ~ 2 a a^T - I, so any
        # column of (R + I)/2 is proportional to the axis
        A = (R + np.eye(3)) * 0.5
        k = int(np.argmax(np.diag(A)))
        return normalized(A[:, k]) * theta
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return v * (theta / (2.0 * np.sin(theta)))


def rotation_geodesic(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle between two rotations, in radians."""
    cos_theta = np.clip((np.trace(Ra.T @ Rb) - 1.0) * 0.5, -1.0, 1.0)
    return float(np.arccos(cos_theta))


# ---------------------------------------------------------------------------
# rigid transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SE3Pose:
    """Rigid transform mapping source-frame points into the target frame.

    Attributes:
        rotation: 3x3 orthonormal matrix with determinant +1.
        translation: 3-vector, meters.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.abs(R @ R.T - np.eye(3)).max() > numerics.SE3_ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > numerics.SE3_ORTHO_TOL:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "SE3Pose":
        return SE3Pose(np.eye(3), np.zeros(3))

    def compose(self, other: "SE3Pose") -> "SE3Pose":
        """self ∘ other: apply ``other`` first, then ``self``."""
        return SE3Pose(self.rotation @ other.rotation,
                       self.rotation @ other.translation + self.translation)

    def inverse(self) -> "SE3Pose":
        Rt = self.rotation.T
        return SE3Pose(Rt, -Rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a stack of points (..., 3)."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    @property
    def center(self) -> np.ndarray:
        """Origin of the source frame expressed in the target frame (-R^T t)."""
        return -self.rotation.T @ self.translation

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form."""
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M


# ---------------------------------------------------------------------------
# rays and surfaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Ray:
    """Origin (meters) plus unit direction; normalized on construction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self) -> None:
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = normalized(np.asarray(self.direction, dtype=np.float64).reshape(3))
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, t: float | np.ndarray) -> np.ndarray:
        return self.origin + np.multiply.outer(t, self.direction)


@dataclass(frozen=True, eq=False)
class Plane:
    """Plane ``normal . x = offset`` with unit normal; offset in meters."""

    normal: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        n = normalized(np.asarray(self.normal, dtype=np.float64).reshape(3))
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        r = float(self.radius)
        if r <= 0.0:
            raise ValueError("sphere radius must be strictly positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)


# ---------------------------------------------------------------------------
# Snell refraction
# ---------------------------------------------------------------------------

def snell_refract(incident: np.ndarray, normal: np.ndarray, ratio: float) -> np.ndarray:
    """Refract a unit ray direction at an interface.

    The surface normal must point from the surface towards the side where the
    ray is refracted (i.e. along the transmitted ray).

    Args:
        incident: unit direction of the incoming ray.
        normal: unit interface normal, oriented towards the refracted side.
        ratio: n1 / n2, the ratio of the refraction indices left/entered.

    Returns:
        Unit direction of the refracted ray, lying in the plane of incidence.

    Raises:
        TotalInternalReflection: if the incident angle exceeds the critical
            angle, ``1 - ratio^2 (1 - c^2) < 0``.
    """
    d, ok = _refract_many(np.asarray(incident, dtype=np.float64),
                          np.asarray(normal, dtype=np.float64), ratio)
    if not bool(np.all(ok)):
        raise TotalInternalReflection(f"ratio={ratio}")
    return d


def _refract_many(incident: np.ndarray, normal: np.ndarray,
                  ratio: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized refraction over (..., 3) stacks.

    Returns (directions, valid_mask); invalid entries are total internal
    reflection and hold unspecified values.
    """
    r = float(ratio)
    c = np.sum(normal * incident, axis=-1, keepdims=True)
    disc = 1.0 - r * r * (1.0 - c * c)
    ok = disc[..., 0] >= 0.0
    # the root carries the sign of c so that an opposing normal yields the
    # transmitted (not mirrored) ray; for c >= 0 this is the textbook form
    root = np.where(c >= 0.0, 1.0, -1.0) * np.sqrt(np.maximum(disc, 0.0))
    out = r * incident - (r * c - root) * normal
    # renormalize to keep unit norm exactly within tolerance
    n = np.linalg.norm(out, axis=-1, keepdims=True)
    out = out / np.where(n > 1e-300, n, 1.0)
    return out, ok


# ---------------------------------------------------------------------------
# intersections
# ---------------------------------------------------------------------------

def intersect_ray_plane(ray: Ray, plane: Plane) -> np.ndarray:
    """First intersection of a ray with a plane (smallest t > 0).

    Raises:
        NoIntersection: ray parallel to the plane or intersection behind it.
    """
    p, _, ok = _intersect_plane_many(ray.origin[None, :], ray.direction[None, :],
                                     plane.normal, plane.offset)
    if not ok[0]:
        raise NoIntersection("ray does not hit the plane in front of its origin")
    return p[0]


def _intersect_plane_many(origins: np.ndarray, dirs: np.ndarray, normal: np.ndarray,
                          offset: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched ray/plane intersection. Returns (points, t, valid)."""
    denom = dirs @ normal
    safe = np.abs(denom) >= numerics.PARALLEL_EPS
    t = (offset - origins @ normal) / np.where(safe, denom, 1.0)
    valid = safe & (t > 0.0)
    return origins + t[..., None] * dirs, t, valid


def intersect_ray_sphere(ray: Ray, sphere: Sphere) -> np.ndarray:
    """First intersection of a ray with a sphere (smallest t > 0).

    Raises:
        NoIntersection: discriminant negative, or both roots non-positive.
    """
    p, _, ok = _intersect_sphere_many(ray.origin[None, :], ray.direction[None, :],
                                      sphere.center, sphere.radius)
    if not ok[0]:
        raise NoIntersection("ray does not hit the sphere in front of its origin")
    return p[0]


def _intersect_sphere_many(origins: np.ndarray, dirs: np.ndarray, center: np.ndarray,
                           radius: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched ray/sphere intersection, smallest positive root.

    Returns (points, t, valid).
    """
    oc = origins - center
    b = np.sum(oc * dirs, axis=-1)
    c = np.sum(oc * oc, axis=-1) - radius * radius
    disc = b * b - c
    ok = disc >= 0.0
    root = np.sqrt(np.maximum(disc, 0.0))
    t0 = -b - root
    t1 = -b + root
    t = np.where(t0 > 0.0, t0, t1)
    valid = ok & (t > 0.0)
    return origins + t[..., None] * dirs, t, valid


def closest_point_on_line_to_line(line_a: Ray, line_b: Ray) -> tuple[np.ndarray, np.ndarray, float]:
    """Mutual closest points of two unbounded lines.

    Args:
        line_a: first line (point + unit direction, extent ignored).
        line_b: second line.

    Returns:
        (point on a, point on b, distance). For truly intersecting lines the
        distance is ~0 and both points coincide.

    Raises:
        ParallelLines: when the direction cross product is below tolerance.
    """
    pa, pb, dist, ok = _closest_points_line_to_lines(
        line_a.origin, line_a.direction,
        line_b.origin[None, :], line_b.direction[None, :])
    if not ok[0]:
        raise ParallelLines("lines are parallel within tolerance")
    return pa[0], pb[0], float(dist[0])


def _closest_points_line_to_lines(
        origin_a: np.ndarray, dir_a: np.ndarray,
        origins_b: np.ndarray, dirs_b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Closest points between one line (a) and a stack of lines (b).

    All directions must be unit-norm. Returns (points_on_a, points_on_b,
    distances, valid) where invalid marks near-parallel pairs.
    """
    w0 = origin_a - origins_b                      # (N, 3)
    b = dirs_b @ dir_a                             # (N,)
    d = w0 @ dir_a                                 # (N,)
    e = np.sum(w0 * dirs_b, axis=-1)               # (N,)
    denom = 1.0 - b * b
    ok = np.abs(denom) >= numerics.LINE_PARALLEL_EPS ** 2
    denom_safe = np.where(ok, denom, 1.0)
    ta = (b * e - d) / denom_safe
    tb = (e - b * d) / denom_safe
    pa = origin_a + ta[:, None] * dir_a
    pb = origins_b + tb[:, None] * dirs_b
    dist = np.linalg.norm(pa - pb, axis=-1)
    return pa, pb, dist, ok
