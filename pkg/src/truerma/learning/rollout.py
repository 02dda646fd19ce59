"""Episodes, observation scaling and evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..pipeline import Pipeline, PipelineError, Regions
from ..simulator import EpisodeResult
from ..waypoints import CartesianPose
from .policy import PolicyParams, policy_forward, sample_action


def normalize_state(start: CartesianPose, end: CartesianPose, regions: Regions) -> np.ndarray:
    """Positions of ``start`` and ``end`` mapped from the bounding box of
    the sampling regions onto ``[-1, 1]``.

    Raises:
        ValueError: if either point lies outside both regions.
    """
    for name, pose in (("start", start), ("end", end)):
        if not regions.contains(pose.position, tol=1e-9):
            raise ValueError(f"{name} {pose.position} lies outside the sampling regions")
    lo, hi = regions.lower, regions.upper
    scale = 2.0 / (hi - lo)
    return np.concatenate([(start.position - lo) * scale - 1.0, (end.position - lo) * scale - 1.0])


def denormalize_state(obs, regions: Regions) -> tuple[np.ndarray, np.ndarray]:
    obs = np.asarray(obs, dtype=float)
    lo, hi = regions.lower, regions.upper
    d = lo.size
    half = 0.5 * (hi - lo)
    return lo + (obs[:d] + 1.0) * half, lo + (obs[d:] + 1.0) * half


def episode_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for episode ``index``; the same for any worker layout."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


@dataclass
class Episode:
    obs: np.ndarray
    action: np.ndarray
    raw_action: np.ndarray
    log_prob: float
    result: EpisodeResult
    failed_stage: str | None = None


def run_episode(params: PolicyParams, pipeline: Pipeline, rng: np.random.Generator,
                deterministic: bool = False) -> Episode:
    """Sample endpoints, act, run the pipeline and score against the straight line.

    Pipeline failures become a failed episode carrying the configured
    penalty reward.
    """
    start, end = pipeline.sample_endpoints(rng)
    obs = normalize_state(start, end, pipeline.regions)
    mean, _ = policy_forward(params, obs)
    mean = mean[0]
    if deterministic:
        action, raw, logp = np.clip(mean, -1.0, 1.0), mean.copy(), math.nan
    else:
        action, raw, logp = sample_action(mean, params.log_std, rng)
    try:
        result = pipeline.episode(start, end, action).result
        stage = None
    except PipelineError as exc:
        result = pipeline.failed_result()
        stage = exc.stage
    return Episode(obs, action, raw, logp, result, stage)


@dataclass(frozen=True)
class Metrics:
    samples: int
    hit_rate: float
    mean_reward: float
    mean_length: float
    mean_time: float
    failures: int = 0

    CSV_FIELDS = ("samples", "hit_rate", "mean_reward", "mean_length", "mean_time")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


def aggregate(results: list[EpisodeResult], samples: int = 0) -> Metrics:
    """Failed episodes count as hits and contribute their penalty reward;
    lengths and times average over executed episodes only."""
    if not results:
        raise ValueError("no episodes to aggregate")
    ok = [r for r in results if not r.failed]
    nan = float("nan")
    return Metrics(
        samples=int(samples),
        hit_rate=float(np.mean([r.boundary_hit for r in results])),
        mean_reward=float(np.mean([r.reward for r in results])),
        mean_length=float(np.mean([r.path_length for r in ok])) if ok else nan,
        mean_time=float(np.mean([r.duration for r in ok])) if ok else nan,
        failures=len(results) - len(ok),
    )


def evaluate(params: PolicyParams, pipeline: Pipeline, n_episodes: int, seed: int | None = None,
             samples: int = 0, return_results: bool = False):
    """Deterministic (mean-action) evaluation on a fixed endpoint set."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    seed = pipeline.config.evaluation.seed if seed is None else seed
    results = [run_episode(params, pipeline, episode_rng(seed, i), deterministic=True).result
               for i in range(n_episodes)]
    metrics = aggregate(results, samples)
    return (metrics, results) if return_results else metrics
