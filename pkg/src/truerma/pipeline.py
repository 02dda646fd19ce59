"""Action -> waypoints -> smooth path -> IK -> timing -> simulated episode."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .blending import SmoothPath, equidistant_s
from .config import ExperimentConfig
from .kinematics import solve_ik_arrays
from .simulator import (EpisodeResult, EpisodeTrace, ReferenceCache, compute_reward, simulate_episode,
                        straight_line_reference)
from .timeparam import BlendedPath, PhaseProfile, TimedTrajectory, build_joint_path, parameterize, sample_trajectory
from .waypoints import CartesianPose, GeneratorConfig, Workspace, action_size, generate

STAGES = ("waypoints", "smoothing", "ik", "parameterization", "simulation", "reward")


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineOutput:
    result: EpisodeResult
    waypoints: list[CartesianPose]
    path: SmoothPath
    joint_waypoints: np.ndarray
    joint_path: BlendedPath
    profile: PhaseProfile
    trajectory: TimedTrajectory
    trace: EpisodeTrace | None = None
    timings: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Regions:
    """Start/end sampling boxes at both ends of the workspace x-range."""

    left_lower: np.ndarray
    left_upper: np.ndarray
    right_lower: np.ndarray
    right_upper: np.ndarray

    @classmethod
    def from_workspace(cls, ws: Workspace, fraction: float) -> "Regions":
        w = fraction * ws.extent[0]
        ll, lu = ws.lower.copy(), ws.upper.copy()
        rl, ru = ws.lower.copy(), ws.upper.copy()
        lu[0] = ws.lower[0] + w
        rl[0] = ws.upper[0] - w
        return cls(ll, lu, rl, ru)

    @property
    def lower(self) -> np.ndarray:
        return np.minimum(self.left_lower, self.right_lower)

    @property
    def upper(self) -> np.ndarray:
        return np.maximum(self.left_upper, self.right_upper)

    def contains(self, point, tol: float = 1e-12) -> bool:
        p = np.asarray(point, dtype=float)
        left = np.all(p >= self.left_lower - tol) and np.all(p <= self.left_upper + tol)
        right = np.all(p >= self.right_lower - tol) and np.all(p <= self.right_upper + tol)
        return bool(left or right)


def _dedupe(positions: np.ndarray, orientations: np.ndarray, tol: float = 1e-12):
    keep = np.ones(len(positions), dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(positions, axis=0), axis=1) > tol
    # the final pose always survives so the path ends exactly at ``end``
    if not keep[-1]:
        last = np.flatnonzero(keep)[-1]
        keep[last] = last == 0
        keep[-1] = True
    return positions[keep], orientations[keep]


class Pipeline:
    """Full trajectory pipeline built once from an :class:`ExperimentConfig`."""

    def __init__(self, config: ExperimentConfig):
        self.config = config.validate()
        self.workspace = config.make_workspace()
        self.generator = config.make_generator()
        self.chain = config.make_chain()
        self.limits = config.make_limits()
        self.board = config.make_board()
        self.regions = Regions.from_workspace(self.workspace, config.workspace.region_fraction)
        self.nominal_orientation = 0.5 * (self.workspace.angle_lower + self.workspace.angle_upper)
        self.reference_cache = ReferenceCache()
        self._reference_gen = GeneratorConfig("truerma", self.generator.recursion_depth, self.generator.k_angle,
                                              self.generator.fixed_reference_point)
        self.action_size = action_size(self.generator, self.workspace)

    # ------------------------------------------------------------------

    def pose(self, position) -> CartesianPose:
        return CartesianPose(np.asarray(position, dtype=float), self.nominal_orientation)

    def sample_endpoints(self, rng: np.random.Generator) -> tuple[CartesianPose, CartesianPose]:
        """Start in one region, end in the other; direction is a fair coin."""
        r = self.regions
        a = rng.uniform(r.left_lower, r.left_upper)
        b = rng.uniform(r.right_lower, r.right_upper)
        if rng.random() < 0.5:
            a, b = b, a
        return self.pose(a), self.pose(b)

    def run(self, start: CartesianPose, end: CartesianPose, action, *, generator: GeneratorConfig | None = None,
            trace: bool = False) -> PipelineOutput:
        """Run every stage; raises :class:`PipelineError` naming the failing stage."""
        gen = generator or self.generator
        cfg = self.config.path
        timings: dict[str, float] = {}
        clock = time.perf_counter

        def stage(name, fn):
            t0 = clock()
            try:
                return fn()
            except PipelineError:
                raise
            except Exception as exc:
                raise PipelineError(name, exc) from exc
            finally:
                timings[name] = clock() - t0

        waypoints = stage("waypoints", lambda: generate(start, end, action, gen, self.workspace))

        def smooth():
            pos, ori = _dedupe(np.array([w.position for w in waypoints]),
                               np.array([w.orientation for w in waypoints]))
            if len(pos) < 2:
                raise ValueError("start and end coincide")
            poses = [CartesianPose(p, o) for p, o in zip(pos, ori)]
            return SmoothPath(poses, cfg.max_deviation)

        path = stage("smoothing", smooth)

        def ik():
            sp, so = path.sample_arrays(equidistant_s(path.length, cfg.spacing))
            return solve_ik_arrays(self.chain, sp, so)

        q = stage("ik", ik)

        def timing():
            jp = build_joint_path(q, cfg.joint_deviation)
            prof = parameterize(jp, self.limits, jp.length / cfg.resolution)
            return jp, prof, sample_trajectory(prof, jp, cfg.dt, self.limits)

        joint_path, profile, traj = stage("parameterization", timing)
        sim = stage("simulation", lambda: simulate_episode(traj, self.chain, self.board, path_length=path.length,
                                                           return_trace=trace))
        result, tr = sim if trace else (sim, None)
        return PipelineOutput(result, waypoints, path, q, joint_path, profile, traj, tr, timings)

    def straight_line_cost(self, start: CartesianPose, end: CartesianPose) -> float:
        zero = np.zeros(action_size(self._reference_gen, self.workspace))
        return self.run(start, end, zero, generator=self._reference_gen).result.cost

    def reference_cost(self, start: CartesianPose, end: CartesianPose) -> float:
        return straight_line_reference(start, end, self)

    def episode(self, start: CartesianPose, end: CartesianPose, action, *, trace: bool = False) -> PipelineOutput:
        """Run the pipeline and attach the reward against the straight line."""
        out = self.run(start, end, action, trace=trace)
        t0 = time.perf_counter()
        ref = self.reference_cost(start, end)
        out.result = out.result.with_reward(compute_reward(out.result, ref))
        out.timings["reward"] = time.perf_counter() - t0
        return out

    def failed_result(self) -> EpisodeResult:
        return EpisodeResult(cost=float("nan"), boundary_hit=True, duration=float("nan"),
                             reward=self.config.failure_reward, failed=True)
