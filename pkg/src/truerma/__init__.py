"""Trajectory learning with recursive midpoint adaptation of Cartesian paths."""

__version__ = "0.1.0"

from .blending import SmoothPath, eval_pose, sample_equidistant, smooth_path
from .config import ExperimentConfig, default_config
from .kinematics import forward_kinematics, ik_along_path, solve_ik
from .pipeline import Pipeline, PipelineError
from .simulator import BoardSpec, EpisodeResult, compute_reward, simulate_episode, step_ball
from .timeparam import Limits, build_joint_path, parameterize, sample_trajectory
from .waypoints import CartesianPose, GeneratorConfig, Workspace, generate

__all__ = [
    "BoardSpec", "CartesianPose", "EpisodeResult", "ExperimentConfig", "GeneratorConfig", "Limits",
    "Pipeline", "PipelineError", "SmoothPath", "Workspace", "build_joint_path", "compute_reward",
    "default_config", "eval_pose", "forward_kinematics", "generate", "ik_along_path", "parameterize",
    "sample_equidistant", "sample_trajectory", "simulate_episode", "smooth_path", "solve_ik", "step_ball",
]
