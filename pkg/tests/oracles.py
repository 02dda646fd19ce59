"""Independent checks shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np

V_SLACK = 1e-6
A_SLACK = 1e-3
V_ACTIVE = 0.999
A_ACTIVE = 0.99


def limit_violations(traj, limits) -> tuple[float, float]:
    """Worst ratio of |velocity| to v_max and of finite-difference |acceleration| to a_max."""
    v = np.abs(traj.velocities) / limits.v_max
    a = np.abs(traj.finite_difference_acceleration()) / limits.a_max
    return float(v.max()), float(a.max())


def unsaturated_steps(traj, limits) -> np.ndarray:
    """Indices of samples where no joint sits at a velocity or acceleration bound."""
    v = np.abs(traj.velocities) / limits.v_max
    a = np.abs(traj.accelerations) / limits.a_max
    active = (v >= V_ACTIVE) | (a >= A_ACTIVE)
    return np.flatnonzero(~active.any(axis=1))


def bang_bang_duration(length: float, v_max: float, a_max: float) -> float:
    """Minimum time to travel ``length`` from rest to rest on one joint."""
    if length * a_max <= v_max**2:
        return 2.0 * np.sqrt(length / a_max)
    return length / v_max + v_max / a_max
