"""Flat-port and dome-port refractive camera models.

A refractive camera is a standard pinhole camera looking through a glass
interface: a pair of parallel planes (flat port) or a pair of concentric
spheres (dome port). Back-projection traces a pixel through both interfaces
into the water; the resulting water rays all intersect one line through the
camera center (the refraction axis), making the system an axial camera.

Per-observation *virtual cameras* turn each water ray back into a pinhole
observation: identity rotation, the real camera's mean focal length, a
shifted principal point, and a center on the refraction axis. They carry the
refractive geometry into otherwise-central machinery (solvers, triangulation,
bundle adjustment).

All operations are pure; models are immutable after construction. The
functions ending in ``_many`` are the vectorized cores; the scalar forms wrap
them and raise on failure.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import (
    CentralCamera,
    ConfigError,
    Diverged,
    NoIntersection,
    OptimizationFailed,
    TotalInternalReflection,
)
from .geometry import (
    Ray,
    _closest_points_line_to_lines,
    _intersect_plane_many,
    _intersect_sphere_many,
    _refract_many,
    normalized,
)

__all__ = [
    "PinholeIntrinsics",
    "FlatPortParams",
    "DomePortParams",
    "RefractiveCameraModel",
    "VirtualCamera",
    "back_project",
    "back_project_many",
    "refraction_axis",
    "virtual_camera",
    "virtual_cameras_many",
    "forward_project",
    "forward_project_many",
    "fit_best_approx_pinhole",
    "model_to_config",
    "model_from_config",
]

DEFAULT_INDICES = (numerics.N_AIR, numerics.N_GLASS, numerics.N_WATER)


# ---------------------------------------------------------------------------
# model types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PinholeIntrinsics:
    """Pinhole intrinsics with optional two-term radial distortion.

    Attributes:
        fx, fy: focal lengths in pixels.
        cx, cy: principal point in pixels.
        width, height: image size in pixels.
        k1, k2: radial distortion coefficients (applied on normalized coords).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def f_mean(self) -> float:
        return 0.5 * (self.fx + self.fy)

    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def project(self, points: np.ndarray) -> np.ndarray:
        """Project camera-frame points (..., 3) to pixels (..., 2).

        No cheirality check; the caller guards z > 0 where it matters.
        """
        points = np.asarray(points, dtype=np.float64)
        xn = points[..., 0] / points[..., 2]
        yn = points[..., 1] / points[..., 2]
        if self.k1 != 0.0 or self.k2 != 0.0:
            r2 = xn * xn + yn * yn
            d = 1.0 + r2 * (self.k1 + self.k2 * r2)
            xn, yn = xn * d, yn * d
        return np.stack([self.fx * xn + self.cx, self.fy * yn + self.cy], axis=-1)

    def unproject(self, pixels: np.ndarray) -> np.ndarray:
        """Unit ray directions (..., 3) for pixels, inverting distortion."""
        pixels = np.asarray(pixels, dtype=np.float64)
        xd = (pixels[..., 0] - self.cx) / self.fx
        yd = (pixels[..., 1] - self.cy) / self.fy
        xn, yn = xd, yd
        if self.k1 != 0.0 or self.k2 != 0.0:
            for _ in range(numerics.DISTORTION_INV_ITERS):
                r2 = xn * xn + yn * yn
                d = 1.0 + r2 * (self.k1 + self.k2 * r2)
                xn, yn = xd / d, yd / d
        dirs = np.stack([xn, yn, np.ones_like(xn)], axis=-1)
        return dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)

    def contains(self, pixels: np.ndarray) -> np.ndarray:
        """Boolean mask of pixels inside the image rectangle."""
        pixels = np.asarray(pixels, dtype=np.float64)
        return ((pixels[..., 0] >= 0.0) & (pixels[..., 0] <= self.width)
                & (pixels[..., 1] >= 0.0) & (pixels[..., 1] <= self.height))


@dataclass(frozen=True, eq=False)
class FlatPortParams:
    """Flat glass window: two parallel planes normal to ``normal``.

    Attributes:
        normal: unit interface normal in the camera frame, n_z > 0 (faces the
            scene).
        distance: camera-to-interface distance along the normal, meters.
        thickness: glass thickness, meters (0 collapses both interfaces).
        indices: (n_air, n_glass, n_water) refraction indices.
    """

    normal: np.ndarray
    distance: float
    thickness: float = 0.0
    indices: tuple[float, float, float] = DEFAULT_INDICES

    def __post_init__(self) -> None:
        n = normalized(np.asarray(self.normal, dtype=np.float64).reshape(3))
        if n[2] <= 0:
            raise ValueError("interface normal must face away from the camera (n_z > 0)")
        if self.distance <= 0:
            raise ValueError("camera-to-interface distance must be positive")
        if self.thickness < 0:
            raise ValueError("thickness must be non-negative")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "distance", float(self.distance))
        object.__setattr__(self, "thickness", float(self.thickness))


@dataclass(frozen=True, eq=False)
class DomePortParams:
    """Spherical glass window: two concentric spheres around ``center``.

    Attributes:
        center: dome (decentering) center in the camera frame, meters.
        radius: inner sphere radius, meters.
        thickness: glass thickness, meters.
        indices: (n_air, n_glass, n_water) refraction indices.
    """

    center: np.ndarray
    radius: float
    thickness: float = 0.0
    indices: tuple[float, float, float] = DEFAULT_INDICES

    def __post_init__(self) -> None:
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        if self.radius <= self.thickness or self.thickness < 0:
            raise ValueError("need radius > thickness >= 0")
        if np.linalg.norm(c) >= self.radius:
            raise ValueError("camera center must lie strictly inside the inner sphere")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "thickness", float(self.thickness))


@dataclass(frozen=True, eq=False)
class RefractiveCameraModel:
    """Pinhole intrinsics plus an optional refractive port.

    ``port = None`` is a plain in-air pinhole camera, used for baselines.
    """

    intrinsics: PinholeIntrinsics
    port: FlatPortParams | DomePortParams | None = None


@dataclass(frozen=True, eq=False)
class VirtualCamera:
    """Per-observation pinhole surrogate for one water ray.

    Rotation is identity by construction; the center lies on the refraction
    axis (real-camera frame). Projecting any point of the observation's water
    ray through this camera returns the originally observed pixel.
    """

    center: np.ndarray
    focal: float
    principal: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "principal",
                           np.asarray(self.principal, dtype=np.float64).reshape(2))

    def project(self, points: np.ndarray) -> np.ndarray:
        """Project real-camera-frame points (..., 3) to pixels (..., 2)."""
        q = np.asarray(points, dtype=np.float64) - self.center
        return self.focal * q[..., :2] / q[..., 2:3] + self.principal

    def K(self) -> np.ndarray:
        return np.array([[self.focal, 0.0, self.principal[0]],
                         [0.0, self.focal, self.principal[1]],
                         [0.0, 0.0, 1.0]])


# ---------------------------------------------------------------------------
# back-projection (pixel -> water ray)
# ---------------------------------------------------------------------------

def back_project_many(model: RefractiveCameraModel,
                      pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trace pixels (N, 2) through the port into the water.

    Returns:
        (origins, directions, valid): ray origins on the outer interface
        surface (N, 3), unit in-water directions (N, 3), and a validity mask.
        For ``port = None`` the origins are the camera center.

    Invalid entries mark total internal reflection or a missed interface.
    """
    pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    dirs0 = model.intrinsics.unproject(pixels)
    n = dirs0.shape[0]
    port = model.port

    if port is None:
        return np.zeros((n, 3)), dirs0, np.ones(n, dtype=bool)

    n_air, n_glass, n_water = port.indices
    origins0 = np.zeros((n, 3))

    if isinstance(port, FlatPortParams):
        nrm = port.normal
        if port.thickness > 0.0:
            p1, _, ok1 = _intersect_plane_many(origins0, dirs0, nrm, port.distance)
            d1, ok_r1 = _refract_many(dirs0, nrm[None, :], n_air / n_glass)
            p2, _, ok2 = _intersect_plane_many(p1, d1, nrm, port.distance + port.thickness)
            d2, ok_r2 = _refract_many(d1, nrm[None, :], n_glass / n_water)
            valid = ok1 & ok_r1 & ok2 & ok_r2
            return p2, d2, valid
        p1, _, ok1 = _intersect_plane_many(origins0, dirs0, nrm, port.distance)
        d1, ok_r1 = _refract_many(dirs0, nrm[None, :], n_air / n_water)
        return p1, d1, ok1 & ok_r1

    # dome port: refract at the inner then the outer sphere; interface
    # normals point radially outward (towards the refracted side)
    c = port.center
    p1, _, ok1 = _intersect_sphere_many(origins0, dirs0, c, port.radius)
    n1 = (p1 - c) / port.radius
    if port.thickness > 0.0:
        d1, ok_r1 = _refract_many(dirs0, n1, n_air / n_glass)
        p2, _, ok2 = _intersect_sphere_many(p1, d1, c, port.radius + port.thickness)
        n2 = (p2 - c) / (port.radius + port.thickness)
        d2, ok_r2 = _refract_many(d1, n2, n_glass / n_water)
        return p2, d2, ok1 & ok_r1 & ok2 & ok_r2
    d1, ok_r1 = _refract_many(dirs0, n1, n_air / n_water)
    return p1, d1, ok1 & ok_r1


def back_project(model: RefractiveCameraModel, pixel: np.ndarray) -> Ray:
    """Back-project one pixel to its in-water ray (real-camera frame).

    Raises:
        TotalInternalReflection: ray cannot pass the interface stack.
        NoIntersection: ray misses an interface surface.
    """
    origins, dirs, valid = back_project_many(model, np.asarray(pixel)[None, :])
    if not valid[0]:
        # distinguish the two failure modes for the caller
        d0 = model.intrinsics.unproject(np.asarray(pixel, dtype=np.float64))
        if isinstance(model.port, FlatPortParams) and d0 @ model.port.normal <= 0:
            raise NoIntersection("pixel ray does not reach the interface plane")
        raise TotalInternalReflection("pixel ray exceeds the critical angle at the port")
    return Ray(origins[0], dirs[0])


# ---------------------------------------------------------------------------
# refraction axis and virtual cameras
# ---------------------------------------------------------------------------

def refraction_axis(model: RefractiveCameraModel) -> Ray:
    """Line through the camera center that crosses the port perpendicularly.

    Raises:
        CentralCamera: no axis exists (no port, or dome decentering below
            the centrality threshold); the model projects centrally.
    """
    port = model.port
    if port is None:
        raise CentralCamera("model has no refractive port")
    if isinstance(port, FlatPortParams):
        return Ray(np.zeros(3), port.normal)
    norm = np.linalg.norm(port.center)
    if norm < numerics.EPS_CENTRAL:
        raise CentralCamera("dome decentering below the centrality threshold")
    return Ray(np.zeros(3), port.center / norm)


def virtual_cameras_many(
        model: RefractiveCameraModel, pixels: np.ndarray,
) -> tuple[np.ndarray, float, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Build one virtual camera per pixel (N, 2), vectorized.

    Returns:
        (centers, focal, principals, ray_origins, ray_dirs, valid).
        ``focal`` is the shared mean focal length. Ray origins/directions are
        the underlying water rays; centers lie on the refraction axis (or at
        the camera center for a central model / axis-parallel ray).
    """
    pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    origins, dirs, valid = back_project_many(model, pixels)
    f_v = model.intrinsics.f_mean

    # homogeneous-normalized water direction in the real-camera frame
    dz = dirs[:, 2]
    safe = np.abs(dz) > 1e-12
    valid = valid & safe
    hn = dirs[:, :2] / np.where(safe, dz, 1.0)[:, None]
    principals = pixels - f_v * hn

    try:
        axis = refraction_axis(model)
    except CentralCamera:
        centers = np.zeros_like(origins)
        return centers, f_v, principals, origins, dirs, valid

    centers, _, _, ok = _closest_points_line_to_lines(axis.origin, axis.direction,
                                                      origins, dirs)
    # rays parallel to the axis have no unique closest point; their limit is
    # the real camera center
    axial = np.linalg.norm(np.cross(dirs, axis.direction), axis=-1) < numerics.AXIAL_RAY_EPS
    centers = np.where((ok & ~axial)[:, None], centers, 0.0)
    return centers, f_v, principals, origins, dirs, valid


def virtual_camera(model: RefractiveCameraModel, pixel: np.ndarray) -> VirtualCamera:
    """Per-observation virtual pinhole camera for one pixel.

    The virtual camera keeps identity rotation and the real camera's mean
    focal length; its principal point is shifted so the observed pixel stays
    fixed, and its center is the point of the refraction axis met by the
    water ray.

    Raises:
        TotalInternalReflection / NoIntersection: from back-projection.
    """
    centers, f_v, principals, _, _, valid = virtual_cameras_many(
        model, np.asarray(pixel)[None, :])
    if not valid[0]:
        raise TotalInternalReflection("pixel has no valid water ray")
    return VirtualCamera(centers[0], f_v, principals[0])


# ---------------------------------------------------------------------------
# forward projection (point -> pixel)
# ---------------------------------------------------------------------------

def forward_project_many(model: RefractiveCameraModel,
                         points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Refractive forward projection of camera-frame points (N, 3).

    Fixed-point iteration: start from the pinhole projection, rebuild the
    virtual camera at the current pixel and re-project the point through it.
    Entries that fail to converge (after a damped retry) are flagged invalid.

    Returns:
        (pixels, valid).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = points.shape[0]
    port = model.port

    in_front = points[:, 2] > 0.0
    safe_z = np.where(in_front, points[:, 2], 1.0)
    pinhole = model.intrinsics.project(
        np.column_stack([points[:, :2], safe_z]))

    central = port is None
    if not central and isinstance(port, DomePortParams):
        central = np.linalg.norm(port.center) < numerics.EPS_CENTRAL
    if central:
        return pinhole, in_front

    pix = pinhole.copy()
    ok = in_front.copy()

    def _sweep(pix, active, damping):
        last_step = np.full(n, np.inf)
        grow = np.zeros(n, dtype=int)
        for _ in range(numerics.FWD_PROJECT_MAX_ITERS):
            if not np.any(active):
                break
            idx = np.nonzero(active)[0]
            centers, f_v, principals, _, _, v = virtual_cameras_many(model, pix[idx])
            q = points[idx] - centers
            qz = q[:, 2]
            v &= qz > 0.0
            target = f_v * q[:, :2] / np.where(v, qz, 1.0)[:, None] + principals
            step = np.linalg.norm(target - pix[idx], axis=-1)
            pix[idx] = np.where(v[:, None], pix[idx] + damping * (target - pix[idx]),
                                pix[idx])
            ok[idx] &= v
            done = (step < numerics.FWD_PROJECT_TOL_PX) | ~v
            grew = step > last_step[idx]
            grow[idx] = np.where(grew, grow[idx] + 1, 0)
            oscillating = grow[idx] >= 5
            last_step[idx] = step
            active[idx] = ~done & ~oscillating
        return active | (grow >= 5)

    active = ok.copy()
    unfinished = _sweep(pix, active, 1.0)
    if np.any(unfinished & ok):
        # damped retry from the pinhole start for the stragglers
        pix[unfinished] = pinhole[unfinished]
        still = _sweep(pix, unfinished & ok, 0.5)
        ok &= ~still
    return pix, ok


def forward_project(model: RefractiveCameraModel, point: np.ndarray) -> np.ndarray:
    """Project one camera-frame point to a pixel, refractively.

    Raises:
        Diverged: iteration failed to converge (also for points behind the
            camera or rays lost at the port).
    """
    pix, ok = forward_project_many(model, np.asarray(point)[None, :])
    if not ok[0]:
        raise Diverged("refractive forward projection did not converge")
    return pix[0]


# ---------------------------------------------------------------------------
# best-approximated pinhole
# ---------------------------------------------------------------------------

def fit_best_approx_pinhole(model: RefractiveCameraModel,
                            sample_count: int = 1000,
                            depth: float = 5.0,
                            seed: int = 0,
                            fit_distortion: bool = True) -> PinholeIntrinsics:
    """Best single pinhole approximation of the refractive camera.

    Samples pixels uniformly over the image, back-projects them into the
    water and places 3D anchors ``depth`` meters along each ray, then fits
    (fx, fy, cx, cy, k1, k2) of a distorted pinhole at the real camera center
    (identity rotation) by least squares.

    Args:
        model: refractive camera.
        sample_count: number of sampled pixels (>= 20).
        depth: anchor distance along the water ray, meters.
        seed: RNG seed; the fit is deterministic given it.
        fit_distortion: when False, k1 = k2 = 0 stay frozen.

    Returns:
        The fitted intrinsics (same image size as the input model).

    Raises:
        OptimizationFailed: the fit did not improve on the initial guess.
    """
    from .optim import LMOptions, lm_solve, ParameterBlock

    if sample_count < 20:
        raise ValueError("sample_count must be at least 20")
    intr = model.intrinsics
    rng = np.random.default_rng([seed, sample_count])
    pixels = np.column_stack([rng.uniform(0.0, intr.width, size=sample_count),
                              rng.uniform(0.0, intr.height, size=sample_count)])
    origins, dirs, valid = back_project_many(model, pixels)
    pixels, origins, dirs = pixels[valid], origins[valid], dirs[valid]
    anchors = origins + depth * dirs

    xn = anchors[:, 0] / anchors[:, 2]
    yn = anchors[:, 1] / anchors[:, 2]

    def residual(params):
        fx, fy, cx, cy, k1, k2 = params[0]
        r2 = xn * xn + yn * yn
        d = 1.0 + r2 * (k1 + k2 * r2)
        u = fx * xn * d + cx
        v = fy * yn * d + cy
        return np.concatenate([u - pixels[:, 0], v - pixels[:, 1]])

    x0 = np.array([intr.fx, intr.fy, intr.cx, intr.cy, 0.0, 0.0])
    mask = np.ones(6, dtype=bool)
    if not fit_distortion:
        mask[4:] = False

    block = ParameterBlock(x0, "euclidean", tangent_mask=mask)
    report = lm_solve(residual, [block], LMOptions())
    if not np.isfinite(report.final_cost) or report.final_cost > report.initial_cost + 1e-12:
        raise OptimizationFailed("pinhole fit did not reduce the residual")
    fx, fy, cx, cy, k1, k2 = block.values
    return PinholeIntrinsics(fx, fy, cx, cy, intr.width, intr.height, k1, k2)


# ---------------------------------------------------------------------------
# config serialization
# ---------------------------------------------------------------------------

def model_to_config(model: RefractiveCameraModel) -> dict:
    """Serialize a camera model to the harness config mapping."""
    intr = model.intrinsics
    out: dict = {
        "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
        "width": intr.width, "height": intr.height,
        "k1": intr.k1, "k2": intr.k2,
    }
    port = model.port
    if port is None:
        out["type"] = "pinhole"
        return out
    out["n_air"], out["n_glass"], out["n_water"] = port.indices
    if isinstance(port, FlatPortParams):
        out["type"] = "flat"
        out["normal"] = [float(x) for x in port.normal]
        out["dist"] = port.distance
        out["thickness"] = port.thickness
    else:
        out["type"] = "dome"
        out["center"] = [float(x) for x in port.center]
        out["radius"] = port.radius
        out["thickness"] = port.thickness
    return out


def _require(cfg: dict, key: str, context: str):
    if key not in cfg:
        raise ConfigError(f"missing camera key '{key}' ({context})")
    return cfg[key]


def model_from_config(cfg: dict) -> RefractiveCameraModel:
    """Deserialize a camera model; raises ConfigError naming missing keys."""
    kind = _require(cfg, "type", "one of pinhole|flat|dome")
    intr = PinholeIntrinsics(
        fx=float(_require(cfg, "fx", "focal length, px")),
        fy=float(_require(cfg, "fy", "focal length, px")),
        cx=float(_require(cfg, "cx", "principal point, px")),
        cy=float(_require(cfg, "cy", "principal point, px")),
        width=int(_require(cfg, "width", "image width, px")),
        height=int(_require(cfg, "height", "image height, px")),
        k1=float(cfg.get("k1", 0.0)),
        k2=float(cfg.get("k2", 0.0)),
    )
    if kind == "pinhole":
        return RefractiveCameraModel(intr, None)
    indices = (float(cfg.get("n_air", numerics.N_AIR)),
               float(cfg.get("n_glass", numerics.N_GLASS)),
               float(cfg.get("n_water", numerics.N_WATER)))
    if kind == "flat":
        port: FlatPortParams | DomePortParams = FlatPortParams(
            normal=np.asarray(_require(cfg, "normal", "3 reals"), dtype=np.float64),
            distance=float(_require(cfg, "dist", "camera-to-interface distance, m")),
            thickness=float(cfg.get("thickness", 0.0)),
            indices=indices,
        )
    elif kind == "dome":
        port = DomePortParams(
            center=np.asarray(_require(cfg, "center", "3 reals, m"), dtype=np.float64),
            radius=float(_require(cfg, "radius", "inner radius, m")),
            thickness=float(cfg.get("thickness", 0.0)),
            indices=indices,
        )
    else:
        raise ConfigError(f"unknown camera type '{kind}' (expected pinhole|flat|dome)")
    return RefractiveCameraModel(intr, port)
