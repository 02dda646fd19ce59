"""Gaussian policy with a tanh-squashed mean and a separate value network."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network import MLP

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class PolicyParams:
    policy: MLP
    log_std: np.ndarray
    value: MLP

    @classmethod
    def init(cls, obs_dim: int, act_dim: int, hidden: Sequence[int], rng: np.random.Generator,
             init_log_std: float = 0.0) -> "PolicyParams":
        hidden = list(hidden)
        return cls(
            MLP.init([obs_dim] + hidden + [act_dim], rng, out_scale=0.01),
            np.full(act_dim, float(init_log_std)),
            MLP.init([obs_dim] + hidden + [1], rng, out_scale=1.0),
        )

    @classmethod
    def zeros(cls, obs_dim: int, act_dim: int, hidden: Sequence[int], log_std: float = 0.0) -> "PolicyParams":
        hidden = list(hidden)
        return cls(MLP.zeros([obs_dim] + hidden + [act_dim]), np.full(act_dim, float(log_std)),
                   MLP.zeros([obs_dim] + hidden + [1]))

    @property
    def obs_dim(self) -> int:
        return self.policy.sizes[0]

    @property
    def act_dim(self) -> int:
        return self.log_std.size

    @property
    def hidden(self) -> list[int]:
        return self.policy.sizes[1:-1]

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed order (shared with gradients)."""
        return self.policy.arrays() + [self.log_std] + self.value.arrays()

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.policy.copy(), self.log_std.copy(), self.value.copy())

    def to_flat(self) -> dict[str, np.ndarray]:
        return {f"p{i}": a for i, a in enumerate(self.arrays())}

    @classmethod
    def from_flat(cls, data, n_layers: int) -> "PolicyParams":
        arrs = [np.asarray(data[f"p{i}"], dtype=float) for i in range(4 * n_layers + 1)]
        pol = MLP(arrs[0:2 * n_layers:2], arrs[1:2 * n_layers:2])
        log_std = arrs[2 * n_layers]
        rest = arrs[2 * n_layers + 1:]
        val = MLP(rest[0::2], rest[1::2])
        return cls(pol, log_std, val)


def policy_forward(params: PolicyParams, obs) -> tuple[np.ndarray, np.ndarray]:
    """Mean action in (-1, 1) and state value, batched over rows of ``obs``."""
    x = np.atleast_2d(np.asarray(obs, dtype=float))
    if x.shape[1] != params.obs_dim:
        raise ValueError(f"observation has {x.shape[1]} entries, policy expects {params.obs_dim}")
    mean = np.tanh(params.policy.forward(x))
    value = params.value.forward(x)[:, 0]
    return mean, value


def gaussian_log_prob(x, mean, log_std) -> np.ndarray:
    z = (x - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z + 2.0 * log_std + LOG_2PI, axis=-1)


def sample_action(mean, log_std, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, float]:
    """Gaussian draw around ``mean``.

    Returns ``(action, raw, log_prob)``: ``action`` is ``raw`` clamped to
    ``[-1, 1]``; ``log_prob`` is the density of ``raw``. A log-std of
    ``-inf`` collapses the draw to ``clip(mean)``.
    """
    mean = np.asarray(mean, dtype=float)
    log_std = np.broadcast_to(np.asarray(log_std, dtype=float), mean.shape)
    noise = rng.standard_normal(mean.shape)
    std = np.exp(log_std)
    raw = mean + std * noise
    if np.all(np.isfinite(log_std)):
        logp = float(gaussian_log_prob(raw, mean, log_std))
    else:
        raw = np.where(np.isfinite(log_std), raw, mean)
        logp = math.nan
    return np.clip(raw, -1.0, 1.0), raw, logp
