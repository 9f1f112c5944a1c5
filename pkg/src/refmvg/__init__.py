"""Refractive multi-view geometry.

Camera models for flat- and dome-port underwater housings, minimal solvers
and robust estimators for refractive absolute/relative pose, refractive
triangulation and bundle adjustment, and a synthetic benchmark harness.
"""
from __future__ import annotations

from .geometry import (
    SE3Pose,
    Ray,
    Plane,
    Sphere,
    snell_refract,
    intersect_ray_plane,
    intersect_ray_sphere,
    closest_point_on_line_to_line,
)

__version__ = "0.1.0"
