"""Central numerics configuration.

Every fixed tolerance used by the library lives here so that production code
and tests agree on the same constants. Values are chosen once and treated as
part of the numerical contract; do not tune them per call site.
"""
from __future__ import annotations

# --- construction / validation tolerances ---------------------------------

UNIT_NORM_TOL = 1e-12          # unit vectors after construction or normalization
SE3_ORTHO_TOL = 1e-10          # R R^T = I and det R = 1 for rigid transforms

# --- ray tracing -----------------------------------------------------------

PARALLEL_EPS = 1e-12           # |n . d| below this: ray parallel to plane
LINE_PARALLEL_EPS = 1e-12      # |d_a x d_b| below this: lines parallel
SPHERE_SURFACE_TOL = 1e-10     # relative on-surface check for sphere hits

# --- refractive camera models ----------------------------------------------

EPS_CENTRAL = 1e-9             # dome decentering below this is treated as central (m)
AXIAL_RAY_EPS = 1e-12          # water ray parallel to the refraction axis
FWD_PROJECT_TOL_PX = 1e-8      # fixed-point stop for iterative forward projection
FWD_PROJECT_MAX_ITERS = 100
DISTORTION_INV_ITERS = 10      # fixed-point steps for radial-distortion inversion
VCAM_REPROJECT_TOL_PX = 1e-9   # virtual camera must reproduce its pixel this well
ROUND_TRIP_TOL_PX = 1e-6       # back-project -> forward-project round trip
AXIALITY_TOL_M = 1e-9          # water-ray line distance to the refraction axis

# --- minimal solvers ---------------------------------------------------------

REAL_ROOT_IMAG_TOL = 1e-8      # eigenvalue cleanup: |imag| below this is real
SOLVER_ANGULAR_TOL = 1e-8      # noise-free solver residual (radians)
SAMPSON_EPS = 1e-15            # guard for the Sampson denominator
MIN_TRIANGULATION_ANGLE_DEG = 1.0

# --- nonlinear optimization --------------------------------------------------

FD_REL_STEP = 1e-7             # central finite-difference relative step
LM_MAX_ITERATIONS = 100
LM_FTOL = 1e-10
LM_GTOL = 1e-12
LM_INIT_LAMBDA = 1e-4

# --- robust estimation -------------------------------------------------------

RANSAC_CONFIDENCE = 0.9999
RANSAC_MAX_ITERATIONS = 10000
RANSAC_MIN_ITERATIONS = 100
ABS_POSE_THRESHOLD_PX = 2.0    # virtual reprojection inlier threshold
REL_POSE_THRESHOLD = 1e-3      # Sampson inlier threshold, normalized coords

# --- media refraction indices (standard optics values) -----------------------

N_AIR = 1.0
N_GLASS = 1.52
N_WATER = 1.334
