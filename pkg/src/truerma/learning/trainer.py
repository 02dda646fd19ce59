"""Training loop with periodic evaluation, checkpoints and a metrics CSV."""

from __future__ import annotations

import csv
import json
import logging
import os
import platform
import subprocess
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable

import numpy as np

from ..config import ExperimentConfig
from ..pipeline import Pipeline
from .policy import PolicyParams
from .ppo import Adam, Batch, PPOConfig, UpdateAborted, ppo_update
from .rollout import Episode, Metrics, episode_rng, evaluate, run_episode

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
CHECKPOINT_NAME = "checkpoint.npz"
METRICS_NAME = "metrics.csv"
MANIFEST_NAME = "manifest.json"

# spawn keys that keep init/update streams apart from episode streams
_INIT_KEY = 1 << 40
_UPDATE_KEY = 1 << 41


class CheckpointMismatch(ValueError):
    pass


def ppo_config(cfg: ExperimentConfig) -> PPOConfig:
    t = cfg.trainer
    return PPOConfig(minibatch_size=t.minibatch_size, epochs=t.epochs, clip=t.clip,
                     learning_rate=t.learning_rate, entropy_coef=t.entropy_coef,
                     value_coef=t.value_coef, max_grad_norm=t.max_grad_norm)


def initial_params(cfg: ExperimentConfig, pipeline: Pipeline) -> PolicyParams:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(_INIT_KEY,)))
    return PolicyParams.init(2 * pipeline.workspace.dim, pipeline.action_size, cfg.trainer.hidden, rng,
                             cfg.trainer.init_log_std)


def code_version() -> str:
    from .. import __version__

    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ----------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, params: PolicyParams, cfg: ExperimentConfig, episodes: int = 0, updates: int = 0,
                    optimizer: Adam | None = None) -> None:
    path = Path(path)
    meta = {
        "version": CHECKPOINT_VERSION,
        "config_hash": cfg.hash(),
        "task": cfg.task,
        "mode": cfg.generator.mode,
        "episodes": int(episodes),
        "updates": int(updates),
        "n_layers": len(params.policy.weights),
        "obs_dim": params.obs_dim,
        "act_dim": params.act_dim,
        "adam_step": optimizer.step if optimizer else 0,
    }
    arrays = params.to_flat()
    if optimizer is not None and optimizer.m:
        for i, (m, v) in enumerate(zip(optimizer.m, optimizer.v)):
            arrays[f"adam_m{i}"] = m
            arrays[f"adam_v{i}"] = v
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, meta=np.array(json.dumps(meta)), **arrays)
    os.replace(tmp, path)


def load_checkpoint(path, cfg: ExperimentConfig | None = None, lr: float | None = None):
    """Returns ``(params, meta, optimizer)``.

    Raises:
        CheckpointMismatch: when ``cfg`` is given and its hash differs from
            the one stored with the checkpoint.
    """
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointMismatch(f"unsupported checkpoint version {meta.get('version')}")
        if cfg is not None and meta["config_hash"] != cfg.hash():
            raise CheckpointMismatch(
                f"checkpoint was written for config {meta['config_hash']} "
                f"(task {meta.get('task')}, mode {meta.get('mode')}), "
                f"but this config hashes to {cfg.hash()} (task {cfg.task}, mode {cfg.generator.mode})")
        params = PolicyParams.from_flat(data, meta["n_layers"])
        opt = Adam(lr if lr is not None else (cfg.trainer.learning_rate if cfg else 5e-5))
        opt.step = int(meta.get("adam_step", 0))
        k = 0
        while f"adam_m{k}" in data:
            opt.m.append(np.array(data[f"adam_m{k}"]))
            opt.v.append(np.array(data[f"adam_v{k}"]))
            k += 1
    return params, meta, opt


# ----------------------------------------------------------------------
# parallel rollouts

_WORKER_PIPELINE: Pipeline | None = None


def _worker_init(cfg_dict: dict):
    global _WORKER_PIPELINE
    _WORKER_PIPELINE = Pipeline(ExperimentConfig.from_dict(cfg_dict))


def _worker_run(args) -> list[Episode]:
    params, seed, indices = args
    return [run_episode(params, _WORKER_PIPELINE, episode_rng(seed, i)) for i in indices]


class Trainer:
    """Collect batches, update, evaluate on schedule, checkpoint, resume.

    Artifacts in ``output_dir``: ``metrics.csv``, ``checkpoint.npz`` and
    ``manifest.json``. With ``resume`` set, an existing checkpoint for the
    same config hash is continued; one for a different hash is an error.
    """

    def __init__(self, config: ExperimentConfig, output_dir=None, resume: bool = True,
                 progress: Callable[[Metrics], None] | None = None):
        self.config = config.validate()
        self.output_dir = Path(output_dir if output_dir is not None else config.output_dir)
        self.pipeline = Pipeline(config)
        self.ppo = ppo_config(config)
        self.progress = progress
        self.params = initial_params(config, self.pipeline)
        self.optimizer = Adam(self.ppo.learning_rate)
        self.episodes = 0
        self.updates = 0
        self.history: list[Metrics] = []
        self.output_dir.mkdir(parents=True, exist_ok=True)
        ckpt = self.output_dir / CHECKPOINT_NAME
        if resume and ckpt.exists():
            self.params, meta, self.optimizer = load_checkpoint(ckpt, config)
            self.episodes = meta["episodes"]
            self.updates = meta["updates"]
            self.history = [m for m in read_metrics(self.output_dir / METRICS_NAME) if m.samples <= self.episodes]
            log.info("resumed from %s at %d episodes", ckpt, self.episodes)
        self._write_metrics()
        self._write_manifest()

    # --------------------------------------------------------------

    def _write_manifest(self):
        manifest = {
            "config_hash": self.config.hash(),
            "seed": self.config.seed,
            "code_version": code_version(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "workers": self.config.workers,
            "config": self.config.to_dict(),
        }
        (self.output_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))

    def _write_metrics(self):
        path = self.output_dir / METRICS_NAME
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=Metrics.CSV_FIELDS)
            w.writeheader()
            for m in self.history:
                w.writerow(m.row())

    def _append_metrics(self, m: Metrics):
        self.history.append(m)
        with (self.output_dir / METRICS_NAME).open("a", newline="") as fh:
            csv.DictWriter(fh, fieldnames=Metrics.CSV_FIELDS).writerow(m.row())
        if self.progress:
            self.progress(m)

    def checkpoint(self):
        save_checkpoint(self.output_dir / CHECKPOINT_NAME, self.params, self.config, self.episodes,
                        self.updates, self.optimizer)

    # --------------------------------------------------------------

    def collect(self, first: int, count: int, pool: ProcessPoolExecutor | None = None) -> list[Episode]:
        indices = list(range(first, first + count))
        seed = self.config.seed
        if pool is None:
            return [run_episode(self.params, self.pipeline, episode_rng(seed, i)) for i in indices]
        n = self.config.workers
        chunks = [indices[k::n] for k in range(n) if indices[k::n]]
        by_index = {}
        for chunk, eps in zip(chunks, pool.map(_worker_run, [(self.params, seed, c) for c in chunks])):
            by_index.update(zip(chunk, eps))
        return [by_index[i] for i in indices]

    def evaluate(self) -> Metrics:
        e = self.config.evaluation
        return evaluate(self.params, self.pipeline, e.episodes, e.seed, samples=self.episodes)

    def learning_rate(self) -> float:
        """Step size for the update that follows the episodes collected so far."""
        t = self.config.trainer
        if t.lr_schedule == "linear":
            # the batch just collected is already counted, so the last update still moves
            done = (self.episodes - t.batch_size) / t.total_episodes
            return t.learning_rate * max(1.0 - done, 0.0)
        return t.learning_rate

    def update(self, episodes: list[Episode]):
        batch = Batch(
            np.array([ep.obs for ep in episodes]),
            np.array([ep.raw_action for ep in episodes]),
            np.array([ep.log_prob for ep in episodes]),
            np.array([ep.result.reward for ep in episodes]),
        )
        rng = np.random.default_rng(np.random.SeedSequence(self.config.seed, spawn_key=(_UPDATE_KEY, self.updates)))
        self.optimizer.lr = self.learning_rate()
        try:
            self.params, self.optimizer, _ = ppo_update(self.params, batch, self.ppo, rng, self.optimizer)
        except UpdateAborted as exc:
            log.warning("update %d aborted: %s", self.updates, exc)
        self.updates += 1

    def train(self, total_episodes: int | None = None) -> list[Metrics]:
        cfg = self.config
        total = cfg.trainer.total_episodes if total_episodes is None else total_episodes
        interval = cfg.evaluation.interval
        if not self.history:
            self._append_metrics(self.evaluate())
        next_eval = (self.episodes // interval + 1) * interval
        next_ckpt = (self.episodes // cfg.trainer.checkpoint_interval + 1) * cfg.trainer.checkpoint_interval
        pool = None
        if cfg.workers > 1:
            pool = ProcessPoolExecutor(cfg.workers, initializer=_worker_init, initargs=(cfg.to_dict(),))
        try:
            while self.episodes < total:
                n = min(cfg.trainer.batch_size, total - self.episodes)
                episodes = self.collect(self.episodes, n, pool)
                self.episodes += n
                self.update(episodes)
                if self.episodes >= next_eval or self.episodes >= total:
                    self._append_metrics(self.evaluate())
                    next_eval = (self.episodes // interval + 1) * interval
                if self.episodes >= next_ckpt:
                    self.checkpoint()
                    next_ckpt = (self.episodes // cfg.trainer.checkpoint_interval + 1) * cfg.trainer.checkpoint_interval
        finally:
            if pool is not None:
                pool.shutdown()
        self.checkpoint()
        return self.history


def read_metrics(path) -> list[Metrics]:
    path = Path(path)
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        return [Metrics(int(r["samples"]), float(r["hit_rate"]), float(r["mean_reward"]),
                        float(r["mean_length"]), float(r["mean_time"])) for r in csv.DictReader(fh)]


def samples_to_threshold(history: list[Metrics], threshold: float) -> int | None:
    """First evaluated sample count whose hit rate is at or below ``threshold``."""
    for m in history:
        if m.hit_rate <= threshold:
            return m.samples
    return None
