from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from truerma.config import ConfigError, ExperimentConfig, default_config
from truerma.estimators import TrueRMAPolicy, WaypointGenerator
from truerma.pipeline import Pipeline, PipelineError
from truerma.waypoints import MODES

TASKS = ("ball2d", "ball3d")


@st.composite
def configs(draw):
    cfg = default_config(draw(st.sampled_from(TASKS)), draw(st.sampled_from(MODES)))
    cfg.seed = draw(st.integers(0, 2**31))
    cfg.generator.recursion_depth = draw(st.integers(1, 4))
    cfg.generator.k_angle = draw(st.floats(0.01, 1.0))
    cfg.path.max_deviation = draw(st.floats(0.0, 0.1))
    cfg.board.ball_radius = draw(st.floats(0.001, 0.05))
    cfg.trainer.learning_rate = draw(st.floats(1e-6, 1e-2))
    cfg.trainer.hidden = draw(st.lists(st.integers(1, 64), min_size=1, max_size=3))
    cfg.trainer.max_grad_norm = draw(st.none() | st.floats(0.1, 10.0))
    cfg.output_dir = draw(st.text("abc/_-", min_size=1, max_size=12))
    return cfg


class TestConfig:
    @given(configs())
    def test_round_trip(self, cfg):
        once = ExperimentConfig.from_yaml(cfg.to_yaml())
        assert once == cfg
        assert ExperimentConfig.from_yaml(once.to_yaml()) == once
        assert once.hash() == cfg.hash()

    def test_hash_ignores_bookkeeping(self):
        a = default_config()
        b = default_config()
        b.output_dir, b.workers, b.trainer.checkpoint_interval = "elsewhere", 4, 5
        assert a.hash() == b.hash()
        b.seed = 1
        assert a.hash() != b.hash()

    def test_hash_tracks_total_only_when_it_shapes_training(self):
        a, b = default_config(), default_config()
        b.trainer.total_episodes += 1000
        assert a.hash() == b.hash()
        a.trainer.lr_schedule = b.trainer.lr_schedule = "linear"
        assert a.hash() != b.hash()

    @pytest.mark.parametrize("task,mode,size", [("ball2d", "truerma", 14), ("ball3d", "truerma", 28),
                                                ("ball3d", "truerel", 35)])
    def test_action_size(self, task, mode, size):
        assert default_config(task, mode).action_size() == size

    @pytest.mark.parametrize("edit,message", [
        (lambda c: setattr(c, "task", "ball4d"), "task"),
        (lambda c: setattr(c.generator, "mode", "other"), "mode"),
        (lambda c: c.limits.__init__([1.0, 1.0], [1.0, 1.0]), "limits cover"),
        (lambda c: setattr(c.board, "half_extents", [0.1, 0.1]), "board"),
        (lambda c: setattr(c.trainer, "clip", 1.5), "clip"),
        (lambda c: setattr(c.trainer, "lr_schedule", "cosine"), "lr_schedule"),
        (lambda c: setattr(c, "workers", 0), "workers"),
        (lambda c: setattr(c.workspace, "region_fraction", 0.7), "region_fraction"),
    ])
    def test_validation(self, edit, message):
        cfg = default_config()
        edit(cfg)
        with pytest.raises(ConfigError, match=message):
            cfg.validate()

    def test_unknown_keys_and_bad_yaml(self):
        with pytest.raises(ConfigError, match="trainer.speed"):
            ExperimentConfig.from_dict({"trainer": {"speed": 3}})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_yaml("a: [1, 2")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_yaml("- 1\n- 2\n")

    def test_partial_file_fills_defaults(self):
        cfg = ExperimentConfig.from_yaml("task: ball2d\nseed: 5\ntrainer:\n  epochs: 3\n")
        assert cfg.seed == 5 and cfg.trainer.epochs == 3
        assert cfg.trainer.batch_size == default_config().trainer.batch_size


class TestPipeline:
    def test_stage_error_names_stage(self, pipeline2d):
        start = pipeline2d.pose((0.0, 0.3))
        with pytest.raises(PipelineError) as err:
            pipeline2d.run(start, start, np.zeros(pipeline2d.action_size))
        assert err.value.stage == "smoothing"
        with pytest.raises(PipelineError) as err:
            pipeline2d.run(start, pipeline2d.pose((0.4, 0.4)), np.zeros(3))
        assert err.value.stage == "waypoints"

    def test_endpoints_in_regions(self, pipeline3d, rng):
        for _ in range(50):
            s, e = pipeline3d.sample_endpoints(rng)
            assert pipeline3d.regions.contains(s.position) and pipeline3d.regions.contains(e.position)
            left = pipeline3d.regions.left_upper[0]
            assert (s.position[0] <= left) != (e.position[0] <= left)

    def test_3d_episode_runs(self, pipeline3d, rng):
        s, e = pipeline3d.sample_endpoints(rng)
        out = pipeline3d.episode(s, e, np.zeros(pipeline3d.action_size))
        assert out.result.reward == 0.0
        assert set(out.timings) >= {"waypoints", "smoothing", "ik", "parameterization", "simulation", "reward"}

    def test_failed_result(self, pipeline2d):
        r = pipeline2d.failed_result()
        assert r.failed and r.boundary_hit and r.reward == pipeline2d.config.failure_reward


class TestEstimators:
    def test_waypoint_generator(self):
        gen = WaypointGenerator().fit()
        row = np.concatenate([[0.0, 0.3], [0.5, 0.5], np.zeros(14)])
        out = gen.transform(row[None, :]).reshape(-1, 2)
        assert out.shape == (9, 2)
        np.testing.assert_allclose(out, np.linspace([0.0, 0.3], [0.5, 0.5], 9), atol=1e-12)
        with pytest.raises(ValueError, match="features"):
            gen.transform(np.zeros((1, 5)))

    def test_get_params_round_trip(self):
        est = TrueRMAPolicy(total_episodes=10, seed=3)
        assert est.get_params()["seed"] == 3
        assert TrueRMAPolicy(**est.get_params()).get_params() == est.get_params()

    def test_policy_fit_predict(self, tmp_path):
        est = TrueRMAPolicy(total_episodes=8, batch_size=8, epochs=1, eval_episodes=2, output_dir=tmp_path)
        est.fit()
        pred = est.predict(np.zeros((3, 4)))
        assert pred.shape == (3, 14) and np.all(np.abs(pred) < 1)
        assert np.isfinite(est.score())
