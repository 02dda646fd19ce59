"""Serial-chain kinematics and a rest-pose-biased numeric IK solver.

Three chain kinds share one interface:

* :class:`IdentityChain` -- joint space *is* task space (position followed by
  the active orientation angles),
* :class:`PlanarChain` -- revolute joints in a plane; orientation is the
  pitch angle ``sum(q)`` measured counter-clockwise from the x axis,
* :class:`SpatialChain` -- revolute joints described by (offset, axis)
  pairs; orientation as roll/pitch/yaw with ``R = Rz(yaw) Ry(pitch) Rx(roll)``.

:func:`solve_ik` runs damped least squares seeded at the rest pose with a
null-space pull toward it. Every pose is seeded independently, so results do
not depend on the order in which poses are solved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .waypoints import CartesianPose

DAMPING = 1e-3
NULL_GAIN = 0.1
POS_TOL = 1e-6
ORI_TOL = 1e-6
MAX_ITERS = 200
POLISH_ITERS = 20


class IKError(ValueError):
    """Inverse kinematics did not converge."""

    def __init__(self, message, residual: float = math.nan, index: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.index = index


# --------------------------------------------------------------------------
# rotation helpers (batched over a leading axis)

def rpy_to_matrix(rpy) -> np.ndarray:
    rpy = np.atleast_2d(np.asarray(rpy, dtype=float))
    r, p, y = rpy[:, 0], rpy[:, 1], rpy[:, 2]
    cr, sr, cp, sp, cy, sy = np.cos(r), np.sin(r), np.cos(p), np.sin(p), np.cos(y), np.sin(y)
    R = np.empty((rpy.shape[0], 3, 3))
    R[:, 0, 0] = cy * cp
    R[:, 0, 1] = cy * sp * sr - sy * cr
    R[:, 0, 2] = cy * sp * cr + sy * sr
    R[:, 1, 0] = sy * cp
    R[:, 1, 1] = sy * sp * sr + cy * cr
    R[:, 1, 2] = sy * sp * cr - cy * sr
    R[:, 2, 0] = -sp
    R[:, 2, 1] = cp * sr
    R[:, 2, 2] = cp * cr
    return R


def matrix_to_rpy(R) -> np.ndarray:
    R = np.asarray(R, dtype=float).reshape(-1, 3, 3)
    pitch = np.arctan2(-R[:, 2, 0], np.hypot(R[:, 0, 0], R[:, 1, 0]))
    roll = np.arctan2(R[:, 2, 1], R[:, 2, 2])
    yaw = np.arctan2(R[:, 1, 0], R[:, 0, 0])
    return np.stack([roll, pitch, yaw], axis=1)


def axis_angle_matrix(axis, angle) -> np.ndarray:
    """Rodrigues rotation for a fixed unit ``axis`` and a batch of angles."""
    angle = np.atleast_1d(np.asarray(angle, dtype=float))
    k = np.asarray(axis, dtype=float)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    s, c = np.sin(angle)[:, None, None], np.cos(angle)[:, None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def rotation_error(R_target, R_current) -> np.ndarray:
    """World-frame rotation vector taking ``R_current`` to ``R_target``."""
    E = R_target @ np.swapaxes(R_current, -1, -2)
    v = np.stack([E[:, 2, 1] - E[:, 1, 2], E[:, 0, 2] - E[:, 2, 0], E[:, 1, 0] - E[:, 0, 1]], axis=1)
    cos_t = np.clip((np.trace(E, axis1=1, axis2=2) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_t)
    sin_t = np.sin(theta)
    scale = np.where(theta < 1e-6, 0.5 + theta**2 / 12.0, theta / (2.0 * np.where(theta < 1e-6, 1.0, sin_t)))
    return v * scale[:, None]


# --------------------------------------------------------------------------
# chains

class KinematicChain:
    """Common interface. Subclasses implement ``fk_arrays`` and ``_task``."""

    kind = "abstract"
    n_joints: int
    dim: int
    lower: np.ndarray
    upper: np.ndarray

    def fk_arrays(self, Q) -> tuple[np.ndarray, np.ndarray]:
        """Batch forward kinematics: ``(m, n)`` joints -> ``(m, d)``
        positions and ``(m, 3)`` roll/pitch/yaw."""
        raise NotImplementedError

    def _task(self, Q, target_pos, target_ori, orientation):
        """Return residual ``(m, k)`` and Jacobian ``(m, k, n)``."""
        raise NotImplementedError

    def _split_error(self, e, orientation):
        d = self.dim
        pos = np.linalg.norm(e[:, :d], axis=1)
        ori = np.linalg.norm(e[:, d:], axis=1) if orientation and e.shape[1] > d else np.zeros(e.shape[0])
        return pos, ori

    def within_limits(self, q, tol: float = 1e-9) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))


class IdentityChain(KinematicChain):
    """Joint vector = ``(position..., active angles...)``.

    Inactive orientation axes take their value from ``fixed_orientation``.
    """

    kind = "identity"

    def __init__(self, dim: int = 2, active_axes: Sequence[int] = (1,), fixed_orientation=(0.0, 0.0, 0.0)):
        self.dim = int(dim)
        self.active_axes = tuple(int(a) for a in active_axes)
        self.fixed_orientation = np.asarray(fixed_orientation, dtype=float)
        self.n_joints = self.dim + len(self.active_axes)
        self.lower = np.full(self.n_joints, -np.inf)
        self.upper = np.full(self.n_joints, np.inf)

    def fk_arrays(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        ori = np.tile(self.fixed_orientation, (Q.shape[0], 1))
        ori[:, list(self.active_axes)] = Q[:, self.dim:]
        return Q[:, :self.dim].copy(), ori

    def pose_to_q(self, positions, orientations) -> np.ndarray:
        positions = np.atleast_2d(positions)
        orientations = np.atleast_2d(orientations)
        return np.hstack([positions, orientations[:, list(self.active_axes)]])


class PlanarChain(KinematicChain):
    """Revolute chain in the plane with base at ``base``.

    Args:
        lengths: link lengths in meters.
        base: base position.
        base_angle: absolute angle of the first link at ``q_0 = 0``.
        lower, upper: joint limits (default +-pi).
        rest: rest pose used to seed and bias IK.
    """

    kind = "planar"
    dim = 2

    def __init__(self, lengths, base=(0.0, 0.0), lower=None, upper=None, rest=None, base_angle: float = 0.0):
        self.lengths = np.asarray(lengths, dtype=float)
        if self.lengths.ndim != 1 or self.lengths.size < 1 or np.any(self.lengths <= 0):
            raise ValueError("planar chain needs at least one positive link length")
        self.n_joints = self.lengths.size
        self.base = np.asarray(base, dtype=float)
        self.base_angle = float(base_angle)
        self.lower = np.full(self.n_joints, -math.pi) if lower is None else np.asarray(lower, dtype=float)
        self.upper = np.full(self.n_joints, math.pi) if upper is None else np.asarray(upper, dtype=float)
        self.rest = np.zeros(self.n_joints) if rest is None else np.asarray(rest, dtype=float)

    def fk_arrays(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        phi = self.base_angle + np.cumsum(Q, axis=1)
        x = self.base[0] + np.sum(self.lengths * np.cos(phi), axis=1)
        y = self.base[1] + np.sum(self.lengths * np.sin(phi), axis=1)
        ori = np.zeros((Q.shape[0], 3))
        ori[:, 1] = phi[:, -1]
        return np.stack([x, y], axis=1), ori

    def _task(self, Q, target_pos, target_ori, orientation):
        phi = self.base_angle + np.cumsum(Q, axis=1)
        lc = self.lengths * np.cos(phi)
        ls = self.lengths * np.sin(phi)
        x = self.base[0] + lc.sum(axis=1)
        y = self.base[1] + ls.sum(axis=1)
        # tail sums: d(x)/d(q_j) = -sum_{k>=j} l_k sin(phi_k)
        tail_c = np.cumsum(lc[:, ::-1], axis=1)[:, ::-1]
        tail_s = np.cumsum(ls[:, ::-1], axis=1)[:, ::-1]
        rows = [np.stack([target_pos[:, 0] - x, target_pos[:, 1] - y], axis=1)]
        jac = [-tail_s[:, None, :], tail_c[:, None, :]]
        if orientation:
            rows.append((target_ori[:, 1] - phi[:, -1])[:, None])
            jac.append(np.ones((Q.shape[0], 1, self.n_joints)))
        return np.hstack(rows), np.concatenate(jac, axis=1)


@dataclass(frozen=True)
class JointSpec:
    """Revolute joint: translate by ``offset`` (parent frame), then rotate
    about ``axis`` (unit, joint frame)."""

    offset: tuple[float, float, float]
    axis: tuple[float, float, float]
    lower: float = -math.pi
    upper: float = math.pi


class SpatialChain(KinematicChain):
    """Spatial revolute chain ending in a fixed tool offset."""

    kind = "spatial"
    dim = 3

    def __init__(self, joints: Sequence[JointSpec], tool=(0.0, 0.0, 0.0), base=(0.0, 0.0, 0.0), rest=None):
        if len(joints) < 1:
            raise ValueError("spatial chain needs at least one joint")
        self.joints = tuple(joints)
        self.n_joints = len(self.joints)
        self.offsets = np.array([j.offset for j in self.joints], dtype=float)
        axes = np.array([j.axis for j in self.joints], dtype=float)
        self.axes = axes / np.linalg.norm(axes, axis=1, keepdims=True)
        self.tool = np.asarray(tool, dtype=float)
        self.base = np.asarray(base, dtype=float)
        self.lower = np.array([j.lower for j in self.joints])
        self.upper = np.array([j.upper for j in self.joints])
        self.rest = np.zeros(self.n_joints) if rest is None else np.asarray(rest, dtype=float)

    def _frames(self, Q):
        m = Q.shape[0]
        R = np.broadcast_to(np.eye(3), (m, 3, 3)).copy()
        p = np.broadcast_to(self.base, (m, 3)).copy()
        origins = np.empty((m, self.n_joints, 3))
        world_axes = np.empty((m, self.n_joints, 3))
        for j in range(self.n_joints):
            p = p + R @ self.offsets[j]
            origins[:, j] = p
            world_axes[:, j] = R @ self.axes[j]
            R = R @ axis_angle_matrix(self.axes[j], Q[:, j])
        p = p + R @ self.tool
        return p, R, origins, world_axes

    def fk_arrays(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        p, R, _, _ = self._frames(Q)
        return p, matrix_to_rpy(R)

    def fk_matrix(self, Q):
        p, R, _, _ = self._frames(np.atleast_2d(np.asarray(Q, dtype=float)))
        return p, R

    def _task(self, Q, target_pos, target_ori, orientation):
        p, R, origins, z = self._frames(Q)
        e_pos = target_pos - p
        Jv = np.cross(z, p[:, None, :] - origins)  # (m, n, 3)
        if not orientation:
            return e_pos, np.swapaxes(Jv, 1, 2)
        e_ori = rotation_error(rpy_to_matrix(target_ori), R)
        J = np.concatenate([np.swapaxes(Jv, 1, 2), np.swapaxes(z, 1, 2)], axis=1)
        return np.hstack([e_pos, e_ori]), J


# --------------------------------------------------------------------------
# public operations

def forward_kinematics(chain: KinematicChain, q) -> CartesianPose:
    pos, ori = chain.fk_arrays(np.asarray(q, dtype=float)[None, :])
    return CartesianPose(pos[0], ori[0])


def _solve_batch(chain, target_pos, target_ori, rest, orientation, pos_tol, ori_tol, max_iters,
                 damping=DAMPING, null_gain=NULL_GAIN, start=None):
    m = target_pos.shape[0]
    n = chain.n_joints
    Q = np.tile(np.asarray(rest, dtype=float), (m, 1)) if start is None else np.array(start, dtype=float)
    rest = np.asarray(rest, dtype=float)
    active = np.arange(m)
    residual = np.full(m, np.inf)
    lam2 = damping**2
    eye_n = np.eye(n)
    for _ in range(max_iters + 1):
        e, J = chain._task(Q[active], target_pos[active], target_ori[active], orientation)
        pe, oe = chain._split_error(e, orientation)
        residual[active] = np.maximum(pe, oe)
        done = (pe <= pos_tol) & (oe <= ori_tol)
        active = active[~done]
        if active.size == 0:
            break
        e, J = e[~done], J[~done]
        k = J.shape[1]
        Jt = np.swapaxes(J, 1, 2)
        A = J @ Jt + lam2 * np.eye(k)
        step = Jt @ np.linalg.solve(A, e[:, :, None])
        # undamped projector so the rest-pose pull cannot leak into the task error
        null = eye_n - Jt @ np.linalg.solve(J @ Jt, J)
        step = step[:, :, 0] + (null @ (null_gain * (rest - Q[active]))[:, :, None])[:, :, 0]
        Q[active] = Q[active] + step
    if active.size and null_gain:
        # the rest-pose pull can stall just above tolerance; finish with plain task steps
        sub, res, left = _solve_batch(chain, target_pos[active], target_ori[active], rest, orientation,
                                      pos_tol, ori_tol, POLISH_ITERS, damping, 0.0, Q[active])
        Q[active], residual[active] = sub, res
        active = active[left]
    return Q, residual, active


def _target_arrays(chain, positions, orientations):
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    orientations = np.atleast_2d(np.asarray(orientations, dtype=float))
    if positions.shape[1] != chain.dim:
        raise ValueError(f"target dimension {positions.shape[1]} does not match chain dimension {chain.dim}")
    return positions, orientations


def solve_ik_arrays(chain: KinematicChain, positions, orientations, rest=None, *, orientation: bool = True,
                    pos_tol: float = POS_TOL, ori_tol: float = ORI_TOL, max_iters: int = MAX_ITERS) -> np.ndarray:
    """Solve a batch of poses, each independently seeded at ``rest``.

    Raises:
        IKError: if any pose fails to converge; ``index`` names the first one.
    """
    positions, orientations = _target_arrays(chain, positions, orientations)
    if isinstance(chain, IdentityChain):
        return chain.pose_to_q(positions, orientations)
    rest = chain.rest if rest is None else np.asarray(rest, dtype=float)
    Q, residual, failed = _solve_batch(chain, positions, orientations, rest, orientation,
                                       pos_tol, ori_tol, max_iters)
    if failed.size:
        i = int(failed[0])
        raise IKError(f"IK did not converge for pose {i} (residual {residual[i]:.3e})",
                      residual=float(residual[i]), index=i)
    return Q


def solve_ik(chain: KinematicChain, target: CartesianPose, rest=None, tol: float = POS_TOL,
             max_iters: int = MAX_ITERS, *, orientation: bool = True) -> np.ndarray:
    """Joint vector reaching ``target``, seeded at and biased toward ``rest``."""
    return solve_ik_arrays(chain, target.position[None, :], target.orientation[None, :], rest,
                           orientation=orientation, pos_tol=tol, ori_tol=tol, max_iters=max_iters)[0]


def ik_along_path(chain: KinematicChain, poses: Sequence[CartesianPose], rest=None, **kwargs) -> np.ndarray:
    """Element-wise :func:`solve_ik`; returns ``(len(poses), n_joints)``."""
    pos = np.array([p.position for p in poses])
    ori = np.array([p.orientation for p in poses])
    return solve_ik_arrays(chain, pos, ori, rest, **kwargs)
