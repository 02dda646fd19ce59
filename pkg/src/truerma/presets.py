"""Shipped chains, joint limits and task geometry.

All numbers here are repository configuration. Link lengths follow a
KUKA iiwa-like layout; joint rate limits follow the public Franka Panda
interface specification.
"""

from __future__ import annotations

import math

import numpy as np

from .kinematics import IdentityChain, JointSpec, KinematicChain, PlanarChain, SpatialChain

# Franka Panda joint limits (rad/s, rad/s^2)
PANDA_V_MAX = (2.175, 2.175, 2.175, 2.175, 2.61, 2.61, 2.61)
PANDA_A_MAX = (15.0, 7.5, 10.0, 12.5, 15.0, 20.0, 20.0)
# planar3 stands in for the pitching joints 2, 4 and 6
PLANAR3_PANDA_JOINTS = (1, 3, 5)

PLANAR3_LENGTHS = (0.4, 0.4, 0.2)
PLANAR3_BASE_ANGLE = math.pi / 2
PLANAR3_REST = (math.pi / 3, -2 * math.pi / 3, -math.pi / 6)

SPATIAL7_JOINTS = (
    JointSpec((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    JointSpec((0.0, 0.0, 0.34), (0.0, 1.0, 0.0)),
    JointSpec((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    JointSpec((0.0, 0.0, 0.4), (0.0, -1.0, 0.0)),
    JointSpec((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    JointSpec((0.0, 0.0, 0.4), (0.0, 1.0, 0.0)),
    JointSpec((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
)
SPATIAL7_TOOL = (0.0, 0.0, 0.126)
SPATIAL7_REST = (math.pi / 2, 0.5640, 0.0, -2.0935, 0.0, -2.6575, -math.pi / 2)

# task geometry: 0.85 m x 0.3 m plane / 0.85 x 0.3 x 0.2 m cuboid
TASK2D_LOWER = (-0.225, 0.25)
TASK2D_UPPER = (0.625, 0.55)
TASK3D_LOWER = (-0.425, 0.25, 0.35)
TASK3D_UPPER = (0.425, 0.55, 0.55)
ANGLE_RANGE = 0.5


def identity_chain(dim: int) -> IdentityChain:
    axes = (1,) if dim == 2 else (0, 1)
    return IdentityChain(dim=dim, active_axes=axes)


def planar3(rest=None) -> PlanarChain:
    return PlanarChain(PLANAR3_LENGTHS, base=(0.0, 0.0), base_angle=PLANAR3_BASE_ANGLE,
                       rest=PLANAR3_REST if rest is None else rest)


def spatial7(rest=None) -> SpatialChain:
    return SpatialChain(SPATIAL7_JOINTS, tool=SPATIAL7_TOOL, rest=SPATIAL7_REST if rest is None else rest)


CHAINS = {"planar3": planar3, "spatial7": spatial7}


def panda_like(n_joints: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Velocity and acceleration limits for a shipped chain size."""
    if n_joints == 7:
        return PANDA_V_MAX, PANDA_A_MAX
    if n_joints == 3:
        idx = PLANAR3_PANDA_JOINTS
    else:
        idx = tuple(range(min(n_joints, 7)))
        if n_joints > 7:
            raise ValueError("panda_like limits cover at most 7 joints")
    return tuple(PANDA_V_MAX[i] for i in idx), tuple(PANDA_A_MAX[i] for i in idx)


def workspace_grid(lower, upper, angle_lower, angle_upper, n: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Grid of poses over the active position and angle axes, ``n`` per axis
    for positions and the angle corners/center for orientations."""
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(lower, upper)]
    pos = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lower.size)
    alo, ahi = np.asarray(angle_lower, float), np.asarray(angle_upper, float)
    active = np.flatnonzero(alo < ahi)
    ang_axes = [np.array([alo[k], 0.5 * (alo[k] + ahi[k]), ahi[k]]) for k in active]
    if ang_axes:
        combos = np.stack(np.meshgrid(*ang_axes, indexing="ij"), axis=-1).reshape(-1, active.size)
    else:
        combos = np.zeros((1, 0))
    base = np.where(alo < ahi, 0.0, alo)
    ori = np.tile(base, (combos.shape[0], 1))
    ori[:, active] = combos
    P = np.repeat(pos, ori.shape[0], axis=0)
    O = np.tile(ori, (pos.shape[0], 1))
    return P, O


def chain_dim(chain: KinematicChain) -> int:
    return chain.dim
