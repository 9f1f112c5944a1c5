"""Exception types shared across the package.

Geometric degeneracies are signaled with dedicated exception classes so that
callers (RANSAC loops, the pipeline driver) can distinguish recoverable
conditions from programming errors.
"""
from __future__ import annotations


class RefmvgError(Exception):
    """Base class for all package-specific errors."""


# --- ray tracing ----------------------------------------------------------

class TotalInternalReflection(RefmvgError):
    """The incident ray exceeds the critical angle; no refracted ray exists."""


class NoIntersection(RefmvgError):
    """Ray misses the surface, or hits it only behind the origin."""


class ParallelLines(RefmvgError):
    """Two lines are parallel within tolerance; no unique closest-point pair."""


# --- camera models --------------------------------------------------------

class CentralCamera(RefmvgError):
    """The model has no refraction axis (e.g. perfectly centered dome)."""


class DegenerateAxialRay(RefmvgError):
    """Water ray is parallel to the refraction axis within tolerance."""


class Diverged(RefmvgError):
    """Iterative forward projection failed to converge."""


# --- solvers --------------------------------------------------------------

class Degenerate(RefmvgError):
    """Solver input is degenerate (e.g. collinear world points)."""


class NoSolution(RefmvgError):
    """No real admissible root of the solver polynomial."""


class NumericalFailure(RefmvgError):
    """Root-finding or linear algebra did not converge."""


class NoParallax(RefmvgError):
    """Essential-matrix decomposition found no cheirality-consistent motion."""


class InsufficientAngle(RefmvgError):
    """Triangulation rays are too close to parallel."""


class CheiralityViolation(RefmvgError):
    """A triangulated point falls behind one of its observing cameras."""


# --- estimation and optimization -------------------------------------------

class RansacFailed(RefmvgError):
    """No hypothesis reached the minimal inlier count."""


class OptimizationFailed(RefmvgError):
    """Nonlinear fit did not improve on its initial guess."""


class GaugeUnderconstrained(RefmvgError):
    """Bundle adjustment would have an unconstrained scale direction."""


# --- pipeline and harness --------------------------------------------------

class InitializationFailed(RefmvgError):
    """Two-view initialization failed (no parallax or too few tracks)."""


class RegistrationFailed(RefmvgError):
    """Absolute-pose registration of a view failed."""


class InsufficientOverlap(RefmvgError):
    """Too few registered views with ground truth to align and score."""


class GenerationFailed(RefmvgError):
    """Scene synthesis could not place enough visible points."""


class ConfigError(RefmvgError):
    """Invalid or missing configuration key (reported with key context)."""
