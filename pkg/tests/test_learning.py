from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from truerma.config import default_config
from truerma.learning.policy import PolicyParams, gaussian_log_prob, policy_forward, sample_action
from truerma.learning.ppo import Batch, PPOConfig, loss_and_grads, ppo_update
from truerma.learning.rollout import (
    Metrics,
    aggregate,
    denormalize_state,
    episode_rng,
    evaluate,
    normalize_state,
    run_episode,
)
from truerma.learning.trainer import Trainer, initial_params, read_metrics, samples_to_threshold
from truerma.pipeline import Pipeline
from truerma.simulator import EpisodeResult

TOY = [8, 4]


def toy_problem(seed, n=16, obs_dim=4, act_dim=3):
    rng = np.random.default_rng(seed)
    params = PolicyParams.init(obs_dim, act_dim, TOY, rng, init_log_std=-0.5)
    # larger output weights so the squashing is exercised
    params.policy.weights[-1] *= 50.0
    obs = rng.uniform(-1, 1, (n, obs_dim))
    mean, _ = policy_forward(params, obs)
    raw = mean + np.exp(params.log_std) * rng.standard_normal(mean.shape)
    logp = gaussian_log_prob(raw, mean, params.log_std)
    # perturbed behaviour log-probs put some rows inside and some outside the clip range
    old = logp + rng.uniform(-0.6, 0.6, n)
    adv = rng.standard_normal(n)
    returns = rng.standard_normal(n)
    return params, obs, raw, old, adv, returns


def rebuild(template: PolicyParams, arrays):
    nl = len(template.policy.weights)
    from truerma.learning.network import MLP

    p = arrays[:2 * nl]
    v = arrays[2 * nl + 1:]
    return PolicyParams(MLP(p[0::2], p[1::2]), arrays[2 * nl], MLP(v[0::2], v[1::2]))


def surrogate_oracle(params, obs, raw, old, adv, returns, cfg):
    """Clipped surrogate loss written directly from its definition."""
    z = obs
    for i, (w, b) in enumerate(zip(params.policy.weights, params.policy.biases)):
        z = z @ w + b
        if i < len(params.policy.weights) - 1:
            z = np.tanh(z)
    mean = np.tanh(z)
    v = obs
    for i, (w, b) in enumerate(zip(params.value.weights, params.value.biases)):
        v = v @ w + b
        if i < len(params.value.weights) - 1:
            v = np.tanh(v)
    std = np.exp(params.log_std)
    logp = np.sum(-0.5 * ((raw - mean) / std) ** 2 - params.log_std - 0.5 * math.log(2 * math.pi), axis=1)
    r = np.exp(logp - old)
    surr = np.minimum(r * adv, np.clip(r, 1 - cfg.clip, 1 + cfg.clip) * adv)
    entropy = np.sum(params.log_std) + 0.5 * params.log_std.size * (1 + math.log(2 * math.pi))
    return -surr.mean() + cfg.value_coef * np.mean((v[:, 0] - returns) ** 2) - cfg.entropy_coef * entropy


def central_differences(fn, params, h=1e-6):
    arrays = [a.copy() for a in params.arrays()]
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + h
            up = fn(rebuild(params, arrays))
            a[idx] = orig - h
            down = fn(rebuild(params, arrays))
            a[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_error(a, b):
    a, b = np.concatenate([x.ravel() for x in a]), np.concatenate([x.ravel() for x in b])
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def far_from_kinks(params, obs, raw, old, cfg, margin=1e-3):
    mean, _ = policy_forward(params, obs)
    r = np.exp(gaussian_log_prob(raw, mean, params.log_std) - old)
    return np.all(np.abs(r - (1 - cfg.clip)) > margin) and np.all(np.abs(r - (1 + cfg.clip)) > margin)


class TestGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_central_differences(self, seed):
        cfg = PPOConfig(clip=0.2, value_coef=0.7, entropy_coef=0.01)
        params, obs, raw, old, adv, ret = toy_problem(seed)
        assert far_from_kinks(params, obs, raw, old, cfg)
        info, grads = loss_and_grads(params, obs, raw, old, adv, ret, cfg)
        assert 0 < info.clip_fraction < 1
        assert info.total == pytest.approx(surrogate_oracle(params, obs, raw, old, adv, ret, cfg), rel=1e-12)
        fd = central_differences(lambda p: surrogate_oracle(p, obs, raw, old, adv, ret, cfg), params)
        g = grads.arrays()
        nl = len(params.policy.weights)
        assert rel_error(g[:2 * nl + 1], fd[:2 * nl + 1]) <= 1e-5
        assert rel_error(g[2 * nl + 1:], fd[2 * nl + 1:]) <= 1e-5

    def test_ratio_one_is_reinforce(self):
        cfg = PPOConfig(value_coef=0.0, normalize_advantages=False)
        params, obs, raw, _, adv, ret = toy_problem(11)
        mean, _ = policy_forward(params, obs)
        old = gaussian_log_prob(raw, mean, params.log_std)

        def reinforce(p):
            m, _ = policy_forward(p, obs)
            return -np.mean(adv * gaussian_log_prob(raw, m, p.log_std))

        _, grads = loss_and_grads(params, obs, raw, old, adv, ret, cfg)
        fd = central_differences(reinforce, params)
        nl = len(params.policy.weights)
        assert rel_error(grads.arrays()[:2 * nl + 1], fd[:2 * nl + 1]) <= 1e-5

    @pytest.mark.parametrize("shift,adv", [(0.5, 1.0), (-0.5, -1.0)])
    def test_clipped_rows_carry_no_policy_gradient(self, shift, adv):
        cfg = PPOConfig(clip=0.2, value_coef=0.0)
        params, obs, raw, _, _, ret = toy_problem(3, n=1)
        mean, _ = policy_forward(params, obs)
        # ratio = exp(shift): beyond 1 + eps with A > 0, or below 1 - eps with A < 0
        old = gaussian_log_prob(raw, mean, params.log_std) - shift
        info, grads = loss_and_grads(params, obs, raw, old, np.array([adv]), ret, cfg)
        assert info.clip_fraction == 1.0
        for a in grads.arrays()[:2 * len(params.policy.weights) + 1]:
            np.testing.assert_array_equal(a, 0.0)


class TestUpdate:
    def make_batch(self, seed, n=40):
        params, obs, raw, _, _, _ = toy_problem(seed, n=n)
        mean, _ = policy_forward(params, obs)
        logp = gaussian_log_prob(raw, mean, params.log_std)
        rewards = np.random.default_rng(seed).standard_normal(n)
        return params, Batch(obs, raw, logp, rewards)

    def test_batch_permutation_invariance(self):
        params, batch = self.make_batch(0)
        cfg = PPOConfig(minibatch_size=8, epochs=3, learning_rate=1e-3)
        perm = np.random.default_rng(5).permutation(len(batch))
        a, _, _ = ppo_update(params, batch, cfg, np.random.default_rng(9))
        b, _, _ = ppo_update(params, batch.take(perm), cfg, np.random.default_rng(9))
        for x, y in zip(a.arrays(), b.arrays()):
            np.testing.assert_array_equal(x, y)

    def test_zero_advantage_leaves_policy(self):
        params, batch = self.make_batch(1)
        params = PolicyParams(params.policy, params.log_std, PolicyParams.zeros(4, 3, TOY).value)
        batch = Batch(batch.obs, batch.raw_actions, batch.log_probs, np.zeros(len(batch)))
        cfg = PPOConfig(minibatch_size=8, epochs=2, learning_rate=1e-2)
        new, _, _ = ppo_update(params, batch, cfg, np.random.default_rng(0))
        nl = len(params.policy.weights)
        for x, y in zip(new.arrays()[:2 * nl + 1], params.arrays()[:2 * nl + 1]):
            np.testing.assert_array_equal(x, y)

    def test_improves_surrogate_on_toy_bandit(self):
        # reward favours action component 0 near +0.5; the mean should move towards it
        rng = np.random.default_rng(2)
        params = PolicyParams.init(2, 1, TOY, rng)
        cfg = PPOConfig(minibatch_size=32, epochs=10, learning_rate=3e-3)
        for _ in range(30):
            obs = rng.uniform(-1, 1, (128, 2))
            mean, _ = policy_forward(params, obs)
            raw = mean + np.exp(params.log_std) * rng.standard_normal(mean.shape)
            logp = gaussian_log_prob(raw, mean, params.log_std)
            reward = -np.abs(np.clip(raw[:, 0], -1, 1) - 0.5)
            params, _, _ = ppo_update(params, Batch(obs, raw, logp, reward), cfg, rng)
        mean, _ = policy_forward(params, rng.uniform(-1, 1, (64, 2)))
        assert abs(mean.mean() - 0.5) < 0.1


def clamped_normal_mean(m, s):
    """E[clip(X, -1, 1)] for X ~ N(m, s^2)."""
    phi = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    Phi = lambda x: 0.5 * (1 + math.erf(x / math.sqrt(2)))
    a, b = (-1 - m) / s, (1 - m) / s
    inside = m * (Phi(b) - Phi(a)) + s * (phi(a) - phi(b))
    return -Phi(a) + (1 - Phi(b)) + inside


class TestSampling:
    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=8), st.floats(-3, 2), st.integers(0, 2**32 - 1))
    def test_actions_bounded(self, mean, log_std, seed):
        action, raw, logp = sample_action(mean, log_std, np.random.default_rng(seed))
        assert np.all(np.abs(action) <= 1.0)
        np.testing.assert_array_equal(action, np.clip(raw, -1, 1))
        assert logp == pytest.approx(float(gaussian_log_prob(raw, np.asarray(mean), log_std)))

    def test_deterministic_limit(self):
        action, _, _ = sample_action([0.3, 1.7, -2.0], -np.inf, np.random.default_rng(0))
        np.testing.assert_array_equal(action, [0.3, 1.0, -1.0])

    def test_seeded(self):
        a = sample_action(np.zeros(4), 0.0, np.random.default_rng(3))
        b = sample_action(np.zeros(4), 0.0, np.random.default_rng(3))
        np.testing.assert_array_equal(a[0], b[0])

    @pytest.mark.parametrize("m,log_std", [(0.0, 0.0), (0.8, -0.5), (-0.3, 0.7)])
    def test_monte_carlo_mean(self, m, log_std):
        n = 100_000
        action, _, _ = sample_action(np.full(n, m), log_std, np.random.default_rng(4))
        s = math.exp(log_std)
        assert abs(action.mean() - clamped_normal_mean(m, s)) < 3 * min(s, 1.0) / math.sqrt(n)

    def test_log_prob_matches_product_density(self):
        x, m, ls = np.array([0.2, -0.4]), np.array([0.0, 0.1]), np.array([-0.3, 0.2])
        dens = np.prod(np.exp(-0.5 * ((x - m) / np.exp(ls)) ** 2) / (np.exp(ls) * math.sqrt(2 * math.pi)))
        assert gaussian_log_prob(x, m, ls) == pytest.approx(math.log(dens), rel=1e-14)

    def test_zero_weights(self):
        p = PolicyParams.zeros(4, 14, TOY)
        mean, value = policy_forward(p, np.ones((3, 4)))
        np.testing.assert_array_equal(mean, 0.0)
        np.testing.assert_array_equal(value, 0.0)
        with pytest.raises(ValueError, match="observation"):
            policy_forward(p, np.ones(5))

    def test_flat_round_trip(self):
        p = toy_problem(0)[0]
        q = PolicyParams.from_flat(p.to_flat(), len(p.policy.weights))
        for a, b in zip(p.arrays(), q.arrays()):
            np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("task,mode,size", [
    ("ball2d", "truerma", 14), ("ball2d", "trueabs", 21),
    ("ball3d", "truerma", 28), ("ball3d", "trueabs", 35), ("ball3d", "truerel", 35),
])
def test_action_sizes(task, mode, size):
    cfg = default_config(task, mode)
    pipe = Pipeline(cfg)
    assert pipe.action_size == size
    assert initial_params(cfg, pipe).act_dim == size


class TestStateScaling:
    def test_center_and_corners(self, pipeline2d):
        reg = pipeline2d.regions
        lo, hi = reg.lower, reg.upper
        center_l = 0.5 * (reg.left_lower + reg.left_upper)
        obs = normalize_state(pipeline2d.pose(lo), pipeline2d.pose(hi), reg)
        np.testing.assert_allclose(obs, [-1, -1, 1, 1], atol=1e-15)
        mid = normalize_state(pipeline2d.pose(center_l), pipeline2d.pose(center_l), reg)
        assert np.all(np.abs(mid) < 1)

    def test_outside_rejected(self, pipeline2d):
        reg = pipeline2d.regions
        middle = 0.5 * (reg.lower + reg.upper)
        with pytest.raises(ValueError, match="outside"):
            normalize_state(pipeline2d.pose(middle), pipeline2d.pose(reg.lower), reg)

    @given(st.integers(0, 2**32 - 1))
    def test_round_trip(self, pipeline2d, seed):
        s, e = pipeline2d.sample_endpoints(np.random.default_rng(seed))
        reg = pipeline2d.regions
        obs = normalize_state(s, e, reg)
        assert np.all(np.abs(obs) <= 1 + 1e-12)
        a, b = denormalize_state(obs, reg)
        np.testing.assert_allclose(a, s.position, atol=1e-12)
        np.testing.assert_allclose(b, e.position, atol=1e-12)


class TestRollout:
    def zero_policy(self, pipe):
        return PolicyParams.zeros(4, pipe.action_size, TOY, log_std=-np.inf)

    def test_zero_policy_scores_zero(self, pipeline2d):
        p = self.zero_policy(pipeline2d)
        for i in range(5):
            ep = run_episode(p, pipeline2d, episode_rng(0, i))
            np.testing.assert_array_equal(ep.action, 0.0)
            assert ep.result.reward == 0.0

    def test_zero_policy_metrics(self, pipeline2d):
        p = self.zero_policy(pipeline2d)
        m, results = evaluate(p, pipeline2d, 6, seed=3, return_results=True)
        assert m.mean_reward == 0.0
        dists = []
        for i in range(6):
            s, e = pipeline2d.sample_endpoints(episode_rng(3, i))
            dists.append(np.linalg.norm(e.position - s.position))
        assert m.mean_length == pytest.approx(np.mean(dists), rel=1e-9)
        assert evaluate(p, pipeline2d, 6, seed=3) == m

    def test_seeded_episode_identical(self, pipeline2d):
        p = initial_params(pipeline2d.config, pipeline2d)
        a = run_episode(p, pipeline2d, episode_rng(7, 42))
        b = run_episode(p, pipeline2d, episode_rng(7, 42))
        np.testing.assert_array_equal(a.raw_action, b.raw_action)
        assert a.result == b.result and a.log_prob == b.log_prob

    def test_aggregate_counts_failures(self):
        ok = EpisodeResult(cost=0.1, boundary_hit=False, duration=1.0, path_length=0.5, reward=0.2)
        bad = EpisodeResult(cost=0.0, boundary_hit=True, duration=0.0, reward=-1.0, failed=True)
        m = aggregate([ok, ok, bad], samples=30)
        assert m.hit_rate == pytest.approx(1 / 3)
        assert m.mean_reward == pytest.approx(-0.6 / 3)
        assert m.mean_length == 0.5 and m.failures == 1
        assert aggregate([ok]).hit_rate == 0.0
        with pytest.raises(ValueError):
            aggregate([])


def test_samples_to_threshold():
    hist = [Metrics(0, 1.0, 0, 0, 0), Metrics(2000, 0.2, 0, 0, 0), Metrics(4000, 0.1, 0, 0, 0),
            Metrics(6000, 0.05, 0, 0, 0)]
    assert samples_to_threshold(hist, 0.1) == 4000
    assert samples_to_threshold(hist, 0.01) is None


class TestTrainer:
    def config(self):
        cfg = default_config("ball2d", "truerma")
        cfg.trainer.batch_size = 8
        cfg.trainer.minibatch_size = 4
        cfg.trainer.epochs = 2
        cfg.trainer.hidden = list(TOY)
        cfg.trainer.total_episodes = 16
        cfg.trainer.checkpoint_interval = 8
        cfg.evaluation.interval = 8
        cfg.evaluation.episodes = 4
        return cfg

    def test_episode_accounting(self, tmp_path, monkeypatch):
        calls = []
        original = Pipeline.episode

        def counting(self, *args, **kwargs):
            calls.append(1)
            return original(self, *args, **kwargs)

        monkeypatch.setattr(Pipeline, "episode", counting)
        cfg = self.config()
        tr = Trainer(cfg, tmp_path)
        tr.train(10)
        # 10 training episodes plus 4 evaluation episodes at 0, 8 and 10
        assert tr.episodes == 10
        assert len(calls) == 10 + 3 * 4
        assert [m.samples for m in read_metrics(tmp_path / "metrics.csv")] == [0, 8, 10]

    def test_reproducible_and_resumable(self, tmp_path):
        cfg = self.config()
        full = Trainer(cfg, tmp_path / "a")
        full.train()
        again = Trainer(cfg, tmp_path / "b")
        again.train()
        part = Trainer(cfg, tmp_path / "c")
        part.train(8)
        resumed = Trainer(cfg, tmp_path / "c")
        assert resumed.episodes == 8
        resumed.train()
        for x, y, z in zip(full.params.arrays(), again.params.arrays(), resumed.params.arrays()):
            np.testing.assert_array_equal(x, y)
            np.testing.assert_array_equal(x, z)
        assert full.history == again.history
        assert (tmp_path / "a" / "manifest.json").exists()

    def test_linear_schedule(self, tmp_path):
        cfg = self.config()
        cfg.trainer.lr_schedule = "linear"
        tr = Trainer(cfg, tmp_path)
        lr = cfg.trainer.learning_rate
        steps = []
        for n in (8, 12, 16, 24):
            tr.episodes = n
            steps.append(tr.learning_rate())
        assert steps == [lr, 0.75 * lr, 0.5 * lr, 0.0]
        cfg.trainer.lr_schedule = "constant"
        assert Trainer(cfg, tmp_path / "c").learning_rate() == lr
