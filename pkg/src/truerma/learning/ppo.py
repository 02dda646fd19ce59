"""Clipped-surrogate policy optimization for a one-step decision process.

Every episode is a single state -> action -> reward transition, so the
return is the reward itself and the advantage is ``reward - V(obs)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import MLP
from .policy import PolicyParams, gaussian_log_prob


class UpdateAborted(FloatingPointError):
    """Raised when a gradient turns non-finite; parameters are left untouched."""


@dataclass
class PPOConfig:
    minibatch_size: int = 128
    epochs: int = 30
    clip: float = 0.3
    learning_rate: float = 5e-5
    entropy_coef: float = 0.0
    value_coef: float = 1.0
    max_grad_norm: float | None = None
    normalize_advantages: bool = True


@dataclass
class Batch:
    """``raw_actions`` are the pre-clamp Gaussian draws the log-probs refer to."""

    obs: np.ndarray
    raw_actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        n = len(self.rewards)
        if n == 0:
            raise ValueError("empty batch")
        if not (len(self.obs) == len(self.raw_actions) == len(self.log_probs) == n):
            raise ValueError("batch fields differ in length")

    def __len__(self):
        return len(self.rewards)

    def canonical(self) -> "Batch":
        """Rows sorted by content, so results do not depend on arrival order."""
        keys = np.hstack([self.obs, self.raw_actions, self.log_probs[:, None], self.rewards[:, None]])
        order = np.lexsort(keys.T[::-1])
        return Batch(self.obs[order], self.raw_actions[order], self.log_probs[order], self.rewards[order])

    def take(self, idx) -> "Batch":
        return Batch(self.obs[idx], self.raw_actions[idx], self.log_probs[idx], self.rewards[idx])


@dataclass
class LossInfo:
    total: float
    policy: float
    value: float
    entropy: float
    clip_fraction: float
    approx_kl: float


def loss_and_grads(params: PolicyParams, obs, raw_actions, old_log_probs, advantages, returns,
                   cfg: PPOConfig) -> tuple[LossInfo, PolicyParams]:
    """Minibatch loss (mean over rows) and its exact gradient.

    The loss is ``-mean(min(r A, clip(r) A)) + c_v mean((V - R)^2) - c_e H``.
    Gradients come back in a :class:`PolicyParams` with the same layout.
    """
    n = obs.shape[0]
    z, pacts = params.policy.forward(obs, keep=True)
    mean = np.tanh(z)
    v, vacts = params.value.forward(obs, keep=True)
    v = v[:, 0]
    log_std = params.log_std
    logp = gaussian_log_prob(raw_actions, mean, log_std)
    ratio = np.exp(logp - old_log_probs)
    eps = cfg.clip
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
    surrogate = np.minimum(unclipped, clipped)
    # the ratio only carries gradient where the unclipped term is the minimum
    active = unclipped <= clipped
    pol_loss = -float(np.mean(surrogate))
    val_err = v - returns
    val_loss = float(np.mean(val_err * val_err))
    entropy = float(np.sum(log_std) + 0.5 * log_std.size * (1.0 + np.log(2.0 * np.pi)))
    total = pol_loss + cfg.value_coef * val_loss - cfg.entropy_coef * entropy

    # d(total)/d(logp_i) = -A_i r_i / n on active rows
    g_logp = np.where(active, -advantages * ratio, 0.0) / n
    inv_var = np.exp(-2.0 * log_std)
    diff = raw_actions - mean
    g_mean = g_logp[:, None] * diff * inv_var
    g_log_std = np.sum(g_logp[:, None] * (diff * diff * inv_var - 1.0), axis=0) - cfg.entropy_coef
    g_z = g_mean * (1.0 - mean * mean)
    g_policy = params.policy.backward(pacts, g_z)
    g_v = (2.0 * cfg.value_coef / n) * val_err
    g_value = params.value.backward(vacts, g_v[:, None])

    info = LossInfo(
        total=total, policy=pol_loss, value=val_loss, entropy=entropy,
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > eps)),
        approx_kl=float(np.mean(old_log_probs - logp)),
    )
    return info, PolicyParams(g_policy, g_log_std, g_value)


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def apply(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step += 1
        c1 = 1.0 - self.beta1 ** self.step
        c2 = 1.0 - self.beta2 ** self.step
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            out.append(p - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


def _rebuild(template: PolicyParams, arrays: list[np.ndarray]) -> PolicyParams:
    nl = len(template.policy.weights)
    pol = arrays[:2 * nl]
    val = arrays[2 * nl + 1:]
    return PolicyParams(MLP(pol[0::2], pol[1::2]), arrays[2 * nl], MLP(val[0::2], val[1::2]))


def advantages_for(params: PolicyParams, batch: Batch, normalize: bool = True) -> np.ndarray:
    from .policy import policy_forward

    _, values = policy_forward(params, batch.obs)
    adv = batch.rewards - values
    if normalize and adv.size > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv


def ppo_update(params: PolicyParams, batch: Batch, cfg: PPOConfig, rng: np.random.Generator,
               optimizer: Adam | None = None) -> tuple[PolicyParams, Adam, list[LossInfo]]:
    """Epochs of shuffled minibatch steps on one on-policy batch.

    The batch is put in canonical order first, so two permutations of the
    same episodes give identical results under the same ``rng``.

    Raises:
        UpdateAborted: on a non-finite loss or gradient; the caller keeps
            its original parameters.
    """
    batch = batch.canonical()
    opt = optimizer if optimizer is not None else Adam(cfg.learning_rate)
    snapshot = (opt.step, [m.copy() for m in opt.m], [v.copy() for v in opt.v])
    adv = advantages_for(params, batch, cfg.normalize_advantages)
    current = params.copy()
    infos = []
    n = len(batch)
    mb = min(cfg.minibatch_size, n)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, mb):
            idx = perm[start:start + mb]
            sub = batch.take(idx)
            info, grads = loss_and_grads(current, sub.obs, sub.raw_actions, sub.log_probs, adv[idx],
                                         sub.rewards, cfg)
            g = grads.arrays()
            if not np.isfinite(info.total) or not all(np.all(np.isfinite(a)) for a in g):
                opt.step, opt.m, opt.v = snapshot
                raise UpdateAborted("non-finite loss or gradient during update")
            if cfg.max_grad_norm is not None:
                norm = float(np.sqrt(sum(np.sum(a * a) for a in g)))
                if norm > cfg.max_grad_norm:
                    g = [a * (cfg.max_grad_norm / norm) for a in g]
            current = _rebuild(current, opt.apply(current.arrays(), g))
            infos.append(info)
    return current, opt, infos
