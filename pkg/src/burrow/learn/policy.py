"""Gaussian MLP policy with a separate value network and state-independent log-stds."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mlp import init_mlp, mlp_backward, mlp_forward

LOG_STD_MIN = -4.0
LOG_STD_MAX = 1.0
ACTION_DIM = 12
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PolicySpec:
    obs_dim: int
    act_dim: int = ACTION_DIM
    hidden: tuple[int, ...] = (512, 256, 128)
    value_hidden: tuple[int, ...] = (512, 256, 128)
    init_log_std: float = -1.0

    def __post_init__(self):
        if self.obs_dim < 1 or self.act_dim < 1:
            raise ValueError("obs_dim and act_dim must be positive")
        if not LOG_STD_MIN <= self.init_log_std <= LOG_STD_MAX:
            raise ValueError(f"init_log_std must lie in [{LOG_STD_MIN}, {LOG_STD_MAX}]")

    @property
    def policy_sizes(self):
        return (self.obs_dim, *self.hidden, self.act_dim)

    @property
    def value_sizes(self):
        return (self.obs_dim, *self.value_hidden, 1)


@dataclass
class PolicyParams:
    """Parameter blocks: policy layers, value layers, then the log-std vector."""

    pi: list
    v: list
    log_std: np.ndarray

    def blocks(self) -> list:
        return [*self.pi, *self.v, self.log_std]

    def block_names(self) -> list:
        pi = [f"pi.{'w' if k % 2 == 0 else 'b'}{k // 2}" for k in range(len(self.pi))]
        v = [f"v.{'w' if k % 2 == 0 else 'b'}{k // 2}" for k in range(len(self.v))]
        return pi + v + ["log_std"]

    @classmethod
    def from_blocks(cls, blocks, n_pi: int) -> "PolicyParams":
        blocks = list(blocks)
        return cls(blocks[:n_pi], blocks[n_pi:-1], blocks[-1])

    def copy(self) -> "PolicyParams":
        return PolicyParams.from_blocks([b.copy() for b in self.blocks()], len(self.pi))

    def astype(self, dtype) -> "PolicyParams":
        return PolicyParams.from_blocks([b.astype(dtype) for b in self.blocks()], len(self.pi))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(b)) for b in self.blocks())


def init_policy(spec: PolicySpec, rng: np.random.Generator, dtype=np.float32,
                final_scale: float = 0.0) -> PolicyParams:
    pi = init_mlp(spec.policy_sizes, rng, dtype, final_scale)
    v = init_mlp(spec.value_sizes, rng, dtype, 1.0)
    return PolicyParams(pi, v, np.full(spec.act_dim, spec.init_log_std, dtype=dtype))


def _check_obs(spec: PolicySpec, obs):
    obs = np.asarray(obs)
    if obs.shape[-1] != spec.obs_dim:
        raise ValueError(f"observation has {obs.shape[-1]} entries, policy expects {spec.obs_dim}")
    return obs


def policy_forward(spec: PolicySpec, params: PolicyParams, obs):
    """Action mean, clamped log-std and value for one or a batch of observations."""
    obs = _check_obs(spec, obs)
    single = obs.ndim == 1
    x = obs.reshape(1, -1) if single else obs
    x = x.astype(params.log_std.dtype, copy=False)
    mean, _ = mlp_forward(params.pi, x)
    value, _ = mlp_forward(params.v, x)
    log_std = np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX)
    if single:
        return mean[0], log_std.copy(), float(value[0, 0])
    return mean, np.broadcast_to(log_std, mean.shape).copy(), value[:, 0]


def gaussian_log_prob(actions, mean, log_std):
    z = (actions - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std, axis=-1) - 0.5 * actions.shape[-1] * LOG_2PI


def gaussian_entropy(log_std):
    return np.sum(log_std + 0.5 * (1.0 + LOG_2PI), axis=-1)


def sample_actions(mean, log_std, rng: np.random.Generator):
    noise = rng.standard_normal(mean.shape).astype(mean.dtype, copy=False)
    return mean + np.exp(log_std) * noise


def policy_backward(spec: PolicySpec, params: PolicyParams, obs, d_mean, d_log_std, d_value) -> list:
    """Parameter gradients for upstream gradients on (mean, log_std row, value).

    ``d_log_std`` is the gradient on the shared log-std vector (already summed
    over the batch). Returned in ``params.blocks()`` order.
    """
    x = _check_obs(spec, obs).astype(params.log_std.dtype, copy=False)
    _, cache_pi = mlp_forward(params.pi, x)
    _, cache_v = mlp_forward(params.v, x)
    g_pi = mlp_backward(params.pi, cache_pi, d_mean)
    g_v = mlp_backward(params.v, cache_v, np.asarray(d_value).reshape(-1, 1))
    # log-std is projected into its bounds after every step, so the clamp is an identity here
    g_ls = np.asarray(d_log_std, dtype=params.log_std.dtype)
    return [*g_pi, *g_v, g_ls]
