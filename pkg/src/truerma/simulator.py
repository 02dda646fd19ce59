"""Ball-on-plate execution of a timed joint trajectory.

The plate is the end-effector frame: in 2D its surface runs along
``(cos(pitch), sin(pitch))`` in the vertical plane with gravity along ``-y``;
in 3D it is the local x/y plane of ``R = Rz(yaw) Ry(pitch) Rx(roll)`` with
gravity along ``-z``. A ball rolling without slipping accelerates relative to
the plate at::

    rolling_factor * ((R^T g)_tangential - (R^T plate_accel)_tangential)

Plate angular-velocity terms are neglected and the joint controller tracks
the commanded setpoints exactly. The acceleration is held constant over each
controller tick, which the update integrates exactly.

Cost is the mean ball distance from the plate center over all ticks times
the trajectory duration. Once the ball touches the rim the per-tick distance
saturates at the largest on-board distance for the rest of the episode.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .kinematics import KinematicChain, rpy_to_matrix
from .timeparam import TimedTrajectory, _second_difference

GRAVITY = 9.81
SOLID_SPHERE = 5.0 / 7.0


@dataclass(frozen=True, eq=False)
class BoardSpec:
    """Square (3D) or 1D (2D) board with a rolling ball."""

    half_extents: np.ndarray = field(default_factory=lambda: np.array([0.1]))
    ball_radius: float = 0.01
    rolling_factor: float = SOLID_SPHERE
    gravity: float = GRAVITY

    def __post_init__(self):
        he = np.atleast_1d(np.asarray(self.half_extents, dtype=float)).copy()
        if he.ndim != 1 or he.size not in (1, 2):
            raise ValueError("half_extents must have 1 (2D task) or 2 (3D task) entries")
        if not self.ball_radius > 0 or np.any(he <= self.ball_radius):
            raise ValueError("need half_extents > ball_radius > 0")
        if not 0 < self.rolling_factor <= 1:
            raise ValueError("rolling_factor must lie in (0, 1]")
        object.__setattr__(self, "half_extents", he)

    @property
    def dim(self) -> int:
        return self.half_extents.size

    @property
    def free_extent(self) -> np.ndarray:
        """Largest center offset per axis before the ball touches the rim."""
        return self.half_extents - self.ball_radius

    @property
    def max_distance(self) -> float:
        return float(np.linalg.norm(self.free_extent))


@dataclass(frozen=True, eq=False)
class BallState:
    position: np.ndarray
    velocity: np.ndarray

    @classmethod
    def at_rest(cls, dim: int) -> "BallState":
        return cls(np.zeros(dim), np.zeros(dim))


@dataclass(frozen=True)
class EpisodeResult:
    """Outcome of one trajectory execution."""

    cost: float
    boundary_hit: bool
    duration: float
    path_length: float = 0.0
    max_jerk: tuple[float, ...] = ()
    hit_time: float = math.nan
    reward: float = 0.0
    failed: bool = False

    def with_reward(self, reward: float) -> "EpisodeResult":
        return replace(self, reward=float(reward))


def plate_frame_acceleration(orientation, plate_accel, spec: BoardSpec) -> np.ndarray:
    """In-plane ball acceleration relative to the plate, batched.

    Args:
        orientation: ``(m, 3)`` roll/pitch/yaw (only pitch is used in 2D).
        plate_accel: ``(m, 2)`` or ``(m, 3)`` plate linear acceleration.
    """
    ori = np.atleast_2d(np.asarray(orientation, dtype=float))
    acc = np.atleast_2d(np.asarray(plate_accel, dtype=float))
    if spec.dim == 1:
        pitch = ori[:, 1]
        tx, ty = np.cos(pitch), np.sin(pitch)
        g_t = -spec.gravity * ty
        a_t = acc[:, 0] * tx + acc[:, 1] * ty
        return (spec.rolling_factor * (g_t - a_t))[:, None]
    R = rpy_to_matrix(ori)
    rel = np.array([0.0, 0.0, -spec.gravity]) - acc
    local = np.einsum("mji,mj->mi", R, rel)
    return spec.rolling_factor * local[:, :2]


def step_ball(state: BallState, plate_orientation, plate_accel, spec: BoardSpec, dt: float) -> BallState:
    """Advance the ball one tick with the plate state held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    ori = np.asarray(plate_orientation, dtype=float)
    if ori.ndim == 0:
        ori = np.array([0.0, float(ori), 0.0])
    a = plate_frame_acceleration(ori[None, :], np.asarray(plate_accel, dtype=float)[None, :], spec)[0]
    pos = state.position + state.velocity * dt + 0.5 * a * dt * dt
    return BallState(pos, state.velocity + a * dt)


@dataclass(frozen=True, eq=False)
class EpisodeTrace:
    times: np.ndarray
    plate_positions: np.ndarray
    plate_orientations: np.ndarray
    ball_positions: np.ndarray
    distances: np.ndarray


def _roll_ball(times, ball_acc, spec: BoardSpec, init: BallState):
    """Exact integration of piecewise-constant acceleration; returns ball
    positions at every tick (frozen after the first rim contact), distances,
    and the hit tick (or -1)."""
    h = np.diff(times)[:, None]
    a = ball_acc[:-1]
    dv = a * h
    vel = np.vstack([init.velocity, init.velocity + np.cumsum(dv, axis=0)])
    dp = vel[:-1] * h + 0.5 * a * h * h
    pos = np.vstack([init.position, init.position + np.cumsum(dp, axis=0)])
    outside = np.any(np.abs(pos) > spec.free_extent, axis=1)
    hit = int(np.argmax(outside)) if np.any(outside) else -1
    dist = np.linalg.norm(pos, axis=1)
    if hit >= 0:
        pos[hit + 1:] = pos[hit]
        dist[hit:] = spec.max_distance
    return pos, dist, hit


def simulate_episode(traj: TimedTrajectory, chain: KinematicChain, spec: BoardSpec,
                     ball_init: BallState | None = None, path_length: float = 0.0,
                     return_trace: bool = False):
    """Execute ``traj`` with perfect tracking and roll the ball on the plate.

    Returns an :class:`EpisodeResult`, plus an :class:`EpisodeTrace` when
    ``return_trace`` is set.
    """
    if traj.n_joints != chain.n_joints:
        raise ValueError(f"trajectory has {traj.n_joints} joints, chain has {chain.n_joints}")
    if (chain.dim == 2) != (spec.dim == 1):
        raise ValueError("board dimension does not match chain workspace dimension")
    init = ball_init or BallState.at_rest(spec.dim)
    plate_pos, plate_ori = chain.fk_arrays(traj.positions)
    times = traj.times
    if times.size < 2:
        dist = np.array([float(np.linalg.norm(init.position))])
        result = EpisodeResult(cost=0.0, boundary_hit=False, duration=0.0, path_length=path_length,
                               max_jerk=tuple(np.zeros(traj.n_joints)))
        if return_trace:
            return result, EpisodeTrace(times, plate_pos, plate_ori, init.position[None, :], dist)
        return result
    plate_acc = _second_difference(times, plate_pos)
    ball_acc = plate_frame_acceleration(plate_ori, plate_acc, spec)
    ball_pos, dist, hit = _roll_ball(times, ball_acc, spec, init)
    duration = float(times[-1])
    result = EpisodeResult(
        cost=float(np.mean(dist) * duration),
        boundary_hit=hit >= 0,
        duration=duration,
        path_length=float(path_length),
        max_jerk=tuple(float(v) for v in traj.max_jerk()),
        hit_time=float(times[hit]) if hit >= 0 else math.nan,
    )
    if return_trace:
        return result, EpisodeTrace(times, plate_pos, plate_ori, ball_pos, dist)
    return result


def compute_reward(adapted: EpisodeResult, reference_cost: float) -> float:
    """Cost saved relative to the straight-line reference."""
    return float(reference_cost) - float(adapted.cost)


class ReferenceCache:
    """Straight-line reference costs keyed by quantized (start, end).

    Values are deterministic, so concurrent duplicate inserts are harmless;
    the lock only guards the dict against torn updates.
    """

    def __init__(self, quantum: float = 1e-6):
        self.quantum = quantum
        self._store: dict[tuple, float] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def key(self, start, end) -> tuple:
        q = self.quantum
        parts = np.concatenate([start.position, start.orientation, end.position, end.orientation])
        return tuple(int(v) for v in np.round(parts / q))

    def get(self, key):
        with self._lock:
            value = self._store.get(key)
            if value is None:
                self.misses += 1
            else:
                self.hits += 1
            return value

    def put(self, key, value: float):
        with self._lock:
            self._store[key] = value

    def __len__(self):
        return len(self._store)


def straight_line_reference(start, end, pipeline, cache: ReferenceCache | None = None) -> float:
    """Cost of the all-zero TrueRMA action (the straight line) between
    ``start`` and ``end`` under ``pipeline``'s settings."""
    cache = cache if cache is not None else pipeline.reference_cache
    key = cache.key(start, end)
    value = cache.get(key)
    if value is None:
        value = pipeline.straight_line_cost(start, end)
        cache.put(key, value)
    return value
