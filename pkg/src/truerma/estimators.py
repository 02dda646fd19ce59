"""scikit-learn style wrappers around the generator and the trained policy."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import default_config
from .pipeline import Pipeline
from .waypoints import CartesianPose, generate, poses_to_arrays


class WaypointGenerator(TransformerMixin, BaseEstimator):
    """Rows ``[start position, end position, action]`` -> flattened waypoint
    positions, shape ``(n, (2**N + 1) * d)``.

    ``fit`` only records the task geometry; it learns nothing from data.
    """

    def __init__(self, task: str = "ball2d", mode: str = "truerma", recursion_depth: int = 3,
                 k_angle: float = 0.8):
        self.task = task
        self.mode = mode
        self.recursion_depth = recursion_depth
        self.k_angle = k_angle

    def _config(self):
        cfg = default_config(self.task, self.mode)
        cfg.generator.recursion_depth = self.recursion_depth
        cfg.generator.k_angle = self.k_angle
        return cfg.validate()

    def fit(self, X=None, y=None):
        cfg = self._config()
        self.workspace_ = cfg.make_workspace()
        self.generator_ = cfg.make_generator()
        self.action_size_ = cfg.action_size()
        self.n_features_in_ = 2 * self.workspace_.dim + self.action_size_
        return self

    def transform(self, X):
        check_is_fitted(self, "generator_")
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        d = self.workspace_.dim
        nominal = 0.5 * (self.workspace_.angle_lower + self.workspace_.angle_upper)
        out = []
        for row in X:
            start = CartesianPose(row[:d], nominal)
            end = CartesianPose(row[d:2 * d], nominal)
            pos, _ = poses_to_arrays(generate(start, end, row[2 * d:], self.generator_, self.workspace_))
            out.append(pos.ravel())
        return np.array(out)


class TrueRMAPolicy(BaseEstimator):
    """Train a waypoint policy with ``fit``; ``predict`` maps normalized
    observations to mean actions and ``score`` is the mean evaluation reward."""

    def __init__(self, task: str = "ball2d", mode: str = "truerma", total_episodes: int = 60000,
                 batch_size: int = 1000, learning_rate: float = 3e-4, lr_schedule: str = "linear",
                 epochs: int = 10, init_log_std: float = -1.0, max_grad_norm: float | None = 0.5,
                 seed: int = 0, eval_episodes: int = 200, output_dir=None):
        self.task = task
        self.mode = mode
        self.total_episodes = total_episodes
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_schedule = lr_schedule
        self.epochs = epochs
        self.init_log_std = init_log_std
        self.max_grad_norm = max_grad_norm
        self.seed = seed
        self.eval_episodes = eval_episodes
        self.output_dir = output_dir

    def _config(self):
        cfg = default_config(self.task, self.mode)
        t = cfg.trainer
        t.total_episodes, t.batch_size = self.total_episodes, self.batch_size
        t.learning_rate, t.lr_schedule = self.learning_rate, self.lr_schedule
        t.epochs, t.init_log_std, t.max_grad_norm = self.epochs, self.init_log_std, self.max_grad_norm
        cfg.seed = self.seed
        cfg.evaluation.episodes = self.eval_episodes
        cfg.evaluation.interval = max(self.total_episodes, 1)
        return cfg.validate()

    def fit(self, X=None, y=None):
        """Episodes are generated by the task itself; ``X`` and ``y`` are ignored."""
        import tempfile

        from .learning import Trainer

        cfg = self._config()
        out = self.output_dir or tempfile.mkdtemp(prefix="truerma-")
        trainer = Trainer(cfg, out, resume=False)
        self.history_ = trainer.train()
        self.params_ = trainer.params
        self.pipeline_ = trainer.pipeline
        self.n_features_in_ = self.params_.obs_dim
        return self

    def predict(self, X):
        from .learning import policy_forward

        check_is_fitted(self, "params_")
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return policy_forward(self.params_, X)[0]

    def score(self, X=None, y=None) -> float:
        from .learning import evaluate

        check_is_fitted(self, "params_")
        return evaluate(self.params_, self.pipeline_, self.eval_episodes).mean_reward


def make_pipeline(task: str = "ball2d", mode: str = "truerma") -> Pipeline:
    return Pipeline(default_config(task, mode))
