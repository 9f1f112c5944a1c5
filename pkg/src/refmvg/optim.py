"""Dense Levenberg-Marquardt with manifold parameter blocks and robust losses.

The engine is deliberately small: dense normal equations, damped by the
Marquardt diagonal, with parameter blocks living on euclidean space, the unit
sphere (2-DoF tangent), the rotation group (3-DoF tangent) or SE(3) (6-DoF).
Residual Jacobians are supplied analytically or computed by central finite
differences on the manifold tangent.

Also hosts the virtual-epipolar refinement of a relative pose: the algebraic
epipolar cost of the per-observation virtual cameras, minimized over the full
6-DoF relative pose.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import NumericalFailure
from .geometry import SE3Pose, normalized, skew, so3_exp

__all__ = [
    "RobustLoss",
    "ParameterBlock",
    "LMOptions",
    "SolveReport",
    "lm_solve",
    "refine_relative_pose_virtual_epipolar",
]


# ---------------------------------------------------------------------------
# robust losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RobustLoss:
    """Loss rho applied to squared residual-group norms.

    kind: "trivial", "huber" or "cauchy"; scale is in residual units.
    """

    kind: str = "trivial"
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("trivial", "huber", "cauchy"):
            raise ValueError(f"unknown loss kind '{self.kind}'")
        if self.kind != "trivial" and self.scale <= 0:
            raise ValueError("loss scale must be positive")

    def rho(self, s: np.ndarray) -> np.ndarray:
        """rho(s) for squared norms s."""
        if self.kind == "trivial":
            return s
        c2 = self.scale * self.scale
        if self.kind == "huber":
            big = s > c2
            out = s.copy()
            out[big] = 2.0 * self.scale * np.sqrt(s[big]) - c2
            return out
        return c2 * np.log1p(s / c2)

    def weight(self, s: np.ndarray) -> np.ndarray:
        """IRLS weight sqrt(rho'(s)) for residual and Jacobian rows."""
        if self.kind == "trivial":
            return np.ones_like(s)
        c2 = self.scale * self.scale
        if self.kind == "huber":
            w = np.ones_like(s)
            big = s > c2
            w[big] = np.sqrt(self.scale / np.sqrt(s[big]))
            return w
        return 1.0 / np.sqrt(1.0 + s / c2)


# ---------------------------------------------------------------------------
# parameter blocks
# ---------------------------------------------------------------------------

_MANIFOLDS = ("euclidean", "unit_sphere", "rotation", "se3")


def _sphere_basis(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis (3, 2) of the tangent plane at unit vector v."""
    a = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    b1 = normalized(np.cross(v, a))
    b2 = np.cross(v, b1)
    return np.column_stack([b1, b2])


def _orthonormalize(R: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(R)
    out = U @ Vt
    if np.linalg.det(out) < 0:
        out = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return out


class ParameterBlock:
    """Optimizable values on a declared manifold.

    Attributes:
        values: the parameters; shape depends on the manifold
            (euclidean: (n,), unit_sphere: (3,), rotation: (3, 3),
            se3: (3, 4) as [R | t]).
        manifold: one of euclidean | unit_sphere | rotation | se3.
        constant: frozen blocks contribute no tangent dimensions.
        tangent_mask: euclidean only — boolean mask freezing single entries.
    """

    def __init__(self, values: np.ndarray, manifold: str = "euclidean",
                 constant: bool = False, tangent_mask: np.ndarray | None = None):
        if manifold not in _MANIFOLDS:
            raise ValueError(f"unknown manifold '{manifold}'")
        self.values = np.array(values, dtype=np.float64)
        self.manifold = manifold
        self.constant = constant
        self.tangent_mask = None if tangent_mask is None else np.asarray(tangent_mask, bool)
        if manifold == "unit_sphere":
            self.values = normalized(self.values.reshape(3))
        elif manifold == "rotation":
            self.values = self.values.reshape(3, 3)
        elif manifold == "se3":
            self.values = self.values.reshape(3, 4)

    @property
    def tangent_dim(self) -> int:
        if self.constant:
            return 0
        if self.manifold == "euclidean":
            if self.tangent_mask is not None:
                return int(self.tangent_mask.sum())
            return int(self.values.size)
        return {"unit_sphere": 2, "rotation": 3, "se3": 6}[self.manifold]

    def retracted(self, delta: np.ndarray) -> np.ndarray:
        """Values after a tangent step, without modifying the block."""
        v = self.values
        if self.manifold == "euclidean":
            out = v.copy()
            if self.tangent_mask is not None:
                out[self.tangent_mask] += delta
            else:
                out += delta.reshape(v.shape)
            return out
        if self.manifold == "unit_sphere":
            return normalized(v + _sphere_basis(v) @ delta)
        if self.manifold == "rotation":
            return _orthonormalize(v @ so3_exp(delta))
        R = _orthonormalize(v[:, :3] @ so3_exp(delta[:3]))
        return np.column_stack([R, v[:, 3] + delta[3:]])

    def retract(self, delta: np.ndarray) -> None:
        self.values = self.retracted(delta)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LMOptions:
    max_iterations: int = numerics.LM_MAX_ITERATIONS
    ftol: float = numerics.LM_FTOL
    gtol: float = numerics.LM_GTOL
    init_lambda: float = numerics.LM_INIT_LAMBDA

    def __post_init__(self) -> None:
        if min(self.max_iterations, self.ftol, self.gtol, self.init_lambda) <= 0:
            raise ValueError("all solver options must be positive")


@dataclass
class SolveReport:
    initial_cost: float
    final_cost: float
    iterations: int
    reason: str            # "ftol" | "gtol" | "max_iterations" | "stalled"
    success: bool


def _fd_jacobian(residual_fn, blocks, base_residual, group_size) -> np.ndarray:
    """Central finite differences on the manifold tangents."""
    m = base_residual.size
    cols = []
    values = [b.values for b in blocks]
    for bi, block in enumerate(blocks):
        for k in range(block.tangent_dim):
            if block.manifold == "euclidean":
                idx = (np.nonzero(block.tangent_mask)[0][k]
                       if block.tangent_mask is not None else k)
                h = numerics.FD_REL_STEP * max(1.0, abs(block.values.flat[idx]))
            else:
                h = numerics.FD_REL_STEP
            delta = np.zeros(block.tangent_dim)
            delta[k] = h
            vp = list(values)
            vp[bi] = block.retracted(delta)
            rp = residual_fn(vp)
            vm = list(values)
            vm[bi] = block.retracted(-delta)
            rm = residual_fn(vm)
            cols.append((rp - rm) / (2.0 * h))
    if not cols:
        return np.zeros((m, 0))
    return np.column_stack(cols)


def _cost_and_weights(residual, loss, group_size):
    r2 = residual.reshape(-1, group_size)
    s = np.sum(r2 * r2, axis=1)
    cost = 0.5 * float(np.sum(loss.rho(s)))
    w = np.repeat(loss.weight(s), group_size)
    return cost, w


def lm_solve(residual_fn, blocks: list[ParameterBlock], options: LMOptions | None = None,
             jac_fn=None, loss: RobustLoss | None = None,
             group_size: int = 1) -> SolveReport:
    """Minimize 0.5 * sum rho(|r_g|^2) over the blocks' manifolds.

    Args:
        residual_fn: callable(list of block values) -> residual vector.
        blocks: parameter blocks, updated in place.
        options: solver options (defaults from the numerics config).
        jac_fn: optional callable(list of values) -> (m, tangent) Jacobian;
            finite differences on the tangent when omitted.
        loss: robust loss applied per residual group (default trivial).
        group_size: residuals per loss group (2 for pixel residuals).

    Returns:
        SolveReport; ``reason`` records why iteration stopped. The accepted
        cost sequence is monotone non-increasing.

    Raises:
        NumericalFailure: residuals non-finite at the initial point.
    """
    options = options or LMOptions()
    loss = loss or RobustLoss()

    free = [b for b in blocks if b.tangent_dim > 0]
    dims = [b.tangent_dim for b in free]
    values = [b.values for b in blocks]

    r = np.asarray(residual_fn(values), dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise NumericalFailure("residuals are not finite at the initial point")
    cost, w = _cost_and_weights(r, loss, group_size)
    initial_cost = cost

    if not free:
        return SolveReport(initial_cost, cost, 0, "ftol", True)

    lam = options.init_lambda
    iterations = 0
    reason = "max_iterations"

    for iterations in range(1, options.max_iterations + 1):
        if jac_fn is not None:
            J = np.asarray(jac_fn(values), dtype=np.float64)
        else:
            J = _fd_jacobian(residual_fn, [b for b in blocks], r, group_size)
            # keep only free-block columns (constant blocks contribute none)
        Jw = J * w[:, None]
        rw = r * w
        g = Jw.T @ rw
        if np.abs(g).max() < options.gtol:
            reason = "gtol"
            break
        H = Jw.T @ Jw
        diag = np.maximum(np.diag(H), 1e-12)

        accepted = False
        for _ in range(50):
            try:
                delta = np.linalg.solve(H + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = []
            off = 0
            for b, d in zip(free, dims):
                trial.append(b.retracted(delta[off:off + d]))
                off += d
            vtrial = []
            it = iter(trial)
            for b in blocks:
                vtrial.append(next(it) if b.tangent_dim > 0 else b.values)
            rt = np.asarray(residual_fn(vtrial), dtype=np.float64)
            if np.all(np.isfinite(rt)):
                cost_t, w_t = _cost_and_weights(rt, loss, group_size)
                if cost_t <= cost:
                    for b, v in zip(free, trial):
                        b.values = v
                    values = vtrial
                    improvement = cost - cost_t
                    r, cost, w = rt, cost_t, w_t
                    lam = max(lam / 3.0, 1e-14)
                    accepted = True
                    if improvement < options.ftol * max(cost, 1e-300):
                        reason = "ftol"
                    break
            lam *= 10.0
            if lam > 1e16:
                break
        if not accepted:
            reason = "stalled"
            break
        if reason == "ftol":
            break

    success = reason in ("ftol", "gtol") or (reason == "max_iterations"
                                             and cost <= initial_cost)
    if reason == "stalled":
        success = cost <= initial_cost
    return SolveReport(initial_cost, cost, iterations, reason, success)


# ---------------------------------------------------------------------------
# virtual-epipolar relative pose refinement
# ---------------------------------------------------------------------------

def refine_relative_pose_virtual_epipolar(
        model_a, model_b,
        pixels_a: np.ndarray, pixels_b: np.ndarray,
        initial_pose: SE3Pose,
        options: LMOptions | None = None,
        use_sampson: bool = False,
        raw_scale: bool = False) -> SE3Pose:
    """Refine a relative pose on the virtual epipolar constraint.

    For each inlier pair, virtual cameras are built in both views and the
    virtual essential matrix E_v = [t + R t_v - t_v']_x R is rebuilt at every
    evaluation; the algebraic cost sum |x'^T E_v x|^2 is minimized over the
    full 6-DoF pose (the Sampson-normalized variant behind ``use_sampson``).

    Args:
        model_a, model_b: refractive camera models of the two views.
        pixels_a, pixels_b: matched inlier pixels, (N, 2) each, N >= 5.
        initial_pose: b-from-a relative pose to refine.
        options: LM options.
        use_sampson: normalize the residual by the Sampson denominator.
        raw_scale: keep the optimized translation length instead of
            renormalizing to |t| = 1 for reporting.

    Returns:
        The refined pose; its cost never exceeds the initial cost.
    """
    from .cameras import virtual_cameras_many

    pixels_a = np.asarray(pixels_a, dtype=np.float64)
    pixels_b = np.asarray(pixels_b, dtype=np.float64)
    if pixels_a.shape[0] < 5:
        raise ValueError("need at least 5 inlier pairs")

    ca, _, _, _, da, va = virtual_cameras_many(model_a, pixels_a)
    cb, _, _, _, db, vb = virtual_cameras_many(model_b, pixels_b)
    keep = va & vb
    ca, da, cb, db = ca[keep], da[keep], cb[keep], db[keep]

    xa = da / da[:, 2:3]          # normalized virtual coordinates, z = 1
    xb = db / db[:, 2:3]

    rot = ParameterBlock(initial_pose.rotation, "rotation")
    tr = ParameterBlock(initial_pose.translation.copy(), "euclidean")

    def _core(R, t):
        Rx = xa @ R.T
        m = t[None, :] + ca @ R.T - cb
        cr = np.cross(m, Rx)
        r = np.sum(xb * cr, axis=1)
        return r, Rx, m

    def residual(vals):
        R, t = vals[0], vals[1]
        r, Rx, m = _core(R, t)
        if not use_sampson:
            return r
        E = np.einsum('nij,jk->nik', _skew_many(m), R)
        e1 = np.einsum('nij,nj->ni', E, xa)
        e2 = np.einsum('nji,nj->ni', E, xb)
        denom = np.sqrt(e1[:, 0] ** 2 + e1[:, 1] ** 2 + e2[:, 0] ** 2 + e2[:, 1] ** 2)
        return r / np.maximum(denom, numerics.SAMPSON_EPS)

    jac = None
    if not use_sampson:
        def jac(vals):
            R, t = vals[0], vals[1]
            _, Rx, m = _core(R, t)
            rxb = np.cross(Rx, xb)               # d r / d t
            xbm = np.cross(xb, m)
            # d r / d omega = -(Rx x xb)^T R [ca]_x - (xb x m)^T R [xa]_x
            Jw = -np.cross(rxb @ R, ca) - np.cross(xbm @ R, xa)
            return np.column_stack([Jw, rxb])

    lm_solve(residual, [rot, tr], options, jac_fn=jac)
    t = tr.values
    if not raw_scale:
        n = np.linalg.norm(t)
        if n > 1e-12:
            t = t / n
    return SE3Pose(rot.values, t)


def _skew_many(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out
