"""Clipped-surrogate PPO with GAE, Adam and gradient-norm clipping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import mlp_backward, mlp_forward
from .policy import (LOG_STD_MAX, LOG_STD_MIN, PolicyParams, PolicySpec, gaussian_entropy,
                     gaussian_log_prob)

ADV_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """Raised when a loss or parameter becomes non-finite."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    learning_rate: float = 3e-4
    adaptive_kl: bool = True
    desired_kl: float = 0.01
    epochs: int = 5
    minibatches: int = 4
    horizon: int = 24
    entropy_coef: float = 0.005
    value_coef: float = 1.0
    max_grad_norm: float = 1.0

    def __post_init__(self):
        errs = self.problems()
        if errs:
            raise ValueError("; ".join(errs))

    def problems(self) -> list[str]:
        errs = []
        if not 0 < self.gamma <= 1:
            errs.append("gamma must lie in (0, 1]")
        if not 0 < self.lam <= 1:
            errs.append("lam must lie in (0, 1]")
        if not self.clip > 0:
            errs.append("clip must be > 0")
        if not self.learning_rate > 0:
            errs.append("learning_rate must be > 0")
        if self.epochs < 1 or self.minibatches < 1 or self.horizon < 1:
            errs.append("epochs, minibatches and horizon must be >= 1")
        if self.entropy_coef < 0 or self.value_coef < 0 or not self.max_grad_norm > 0:
            errs.append("loss coefficients must be >= 0 and max_grad_norm > 0")
        if not self.desired_kl > 0:
            errs.append("desired_kl must be > 0")
        return errs


def compute_gae(rewards, values, dones, bootstrap, gamma: float, lam: float):
    """Advantages and returns along axis 0 (time).

    ``values[t]`` estimates the state before step t; ``bootstrap`` is the value
    after the final step. A done at t cuts both the bootstrap and the trace.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape):
        raise ValueError("rewards, values and dones must have equal shapes")
    n = rewards.shape[0]
    adv = np.zeros_like(rewards)
    nxt_adv = np.zeros(rewards.shape[1:])
    nxt_val = np.asarray(bootstrap, dtype=np.float64)
    for t in range(n - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * nxt_val * live - values[t]
        nxt_adv = delta + gamma * lam * live * nxt_adv
        adv[t] = nxt_adv
        nxt_val = values[t]
    return adv, adv + values


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=np.float64)
    return (adv - adv.mean()) / (adv.std() + ADV_EPS)


class RunningNormalizer:
    """Per-dimension running mean/variance (parallel-merge update)."""

    def __init__(self, dim: int, clip: float = 10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4
        self.clip = clip
        self.frozen = False

    def update(self, x):
        if self.frozen:
            return
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.mean.shape[0])
        n = x.shape[0]
        if n == 0:
            return
        m = x.mean(axis=0)
        v = x.var(axis=0)
        tot = self.count + n
        delta = m - self.mean
        self.mean = self.mean + delta * n / tot
        self.var = (self.var * self.count + v * n + delta * delta * self.count * n / tot) / tot
        self.count = tot

    def normalize(self, x, dtype=np.float32):
        z = (np.asarray(x, dtype=np.float64) - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(z, -self.clip, self.clip).astype(dtype)

    def state(self) -> dict:
        return {"mean": self.mean.copy(), "var": self.var.copy(), "count": np.float64(self.count),
                "clip": np.float64(self.clip)}

    @classmethod
    def from_state(cls, st) -> "RunningNormalizer":
        out = cls(len(st["mean"]), float(st["clip"]))
        out.mean = np.array(st["mean"], dtype=np.float64)
        out.var = np.array(st["var"], dtype=np.float64)
        out.count = float(st["count"])
        return out


class Adam:
    def __init__(self, params: list, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list, grads: list):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)

    def state(self) -> dict:
        out = {"lr": np.float64(self.lr), "t": np.int64(self.t)}
        for k, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{k}"] = m
            out[f"v{k}"] = v
        return out

    def load_state(self, st):
        self.lr = float(st["lr"])
        self.t = int(st["t"])
        self.m = [np.array(st[f"m{k}"]) for k in range(len(self.m))]
        self.v = [np.array(st[f"v{k}"]) for k in range(len(self.v))]


@dataclass
class RolloutBuffer:
    """Time-major storage for one rollout of ``horizon`` steps over ``n_envs`` envs."""

    obs: np.ndarray          # (T, N, obs_dim), normalized policy inputs
    actions: np.ndarray      # (T, N, 12)
    log_probs: np.ndarray    # (T, N)
    values: np.ndarray       # (T, N)
    rewards: np.ndarray      # (T, N), time-out bootstrap already folded in
    dones: np.ndarray        # (T, N)
    bootstrap: np.ndarray    # (N,) value after the last step
    t: int = 0

    @classmethod
    def empty(cls, horizon: int, n_envs: int, obs_dim: int, act_dim: int = 12, dtype=np.float32):
        return cls(np.zeros((horizon, n_envs, obs_dim), dtype), np.zeros((horizon, n_envs, act_dim), dtype),
                   np.zeros((horizon, n_envs)), np.zeros((horizon, n_envs)), np.zeros((horizon, n_envs)),
                   np.zeros((horizon, n_envs)), np.zeros(n_envs))

    @property
    def horizon(self) -> int:
        return self.obs.shape[0]

    @property
    def full(self) -> bool:
        return self.t == self.horizon

    def add(self, obs, actions, log_probs, values, rewards, dones):
        if self.full:
            raise RuntimeError("rollout buffer is full")
        t = self.t
        self.obs[t] = obs
        self.actions[t] = actions
        self.log_probs[t] = log_probs
        self.values[t] = values
        self.rewards[t] = rewards
        self.dones[t] = dones
        self.t += 1


def ppo_loss_and_grads(spec: PolicySpec, params: PolicyParams, obs, actions, old_log_probs, advantages,
                       returns, cfg: PpoConfig):
    """Minibatch loss (surrogate + value + entropy) and its parameter gradients."""
    dtype = params.log_std.dtype
    x = np.asarray(obs, dtype=dtype)
    a = np.asarray(actions, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    ret = np.asarray(returns, dtype=np.float64)
    b = x.shape[0]
    mean, cache_pi = mlp_forward(params.pi, x)
    value, cache_v = mlp_forward(params.v, x)
    mean = mean.astype(np.float64)
    value = value[:, 0].astype(np.float64)
    log_std = np.clip(params.log_std.astype(np.float64), LOG_STD_MIN, LOG_STD_MAX)
    logp = gaussian_log_prob(a, mean, log_std)
    ratio = np.exp(logp - old_log_probs)
    lo, hi = 1.0 - cfg.clip, 1.0 + cfg.clip
    surr1 = ratio * adv
    surr2 = np.clip(ratio, lo, hi) * adv
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    verr = value - ret
    value_loss = np.mean(verr * verr)
    entropy = float(gaussian_entropy(log_std))
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # d policy_loss / d logp: the unclipped branch is active unless clipping binds
    clipped = ((adv > 0) & (ratio > hi)) | ((adv < 0) & (ratio < lo))
    d_logp = np.where(clipped, 0.0, -adv * ratio / b)
    inv_var = np.exp(-2.0 * log_std)
    diff = a - mean
    d_mean = d_logp[:, None] * diff * inv_var
    d_log_std = (d_logp[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0) - cfg.entropy_coef
    d_value = cfg.value_coef * 2.0 * verr / b

    g_pi = mlp_backward(params.pi, cache_pi, d_mean.astype(dtype))
    g_v = mlp_backward(params.v, cache_v, d_value.astype(dtype).reshape(-1, 1))
    grads = [*g_pi, *g_v, d_log_std.astype(dtype)]
    approx_kl = float(np.mean((ratio - 1.0) - (logp - old_log_probs)))
    stats = {"loss": float(loss), "policy_loss": float(policy_loss), "value_loss": float(value_loss),
             "entropy": entropy, "kl": approx_kl, "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip))}
    return loss, grads, stats


def clip_grad_norm(grads: list, max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


def ppo_update(buffer: RolloutBuffer, cfg: PpoConfig, spec: PolicySpec, params: PolicyParams, optimizer: Adam,
               rng: np.random.Generator):
    """Run the configured epochs of minibatch updates in place; returns mean stats."""
    if not buffer.full:
        raise ValueError("rollout buffer is not full")
    adv, ret = compute_gae(buffer.rewards, buffer.values, buffer.dones, buffer.bootstrap, cfg.gamma, cfg.lam)
    n = adv.size
    obs = buffer.obs.reshape(n, -1)
    act = buffer.actions.reshape(n, -1)
    old_lp = buffer.log_probs.reshape(n)
    adv = normalize_advantages(adv.reshape(n))
    ret = ret.reshape(n)
    mb = max(1, n // cfg.minibatches)
    acc = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "kl": 0.0, "clip_fraction": 0.0}
    count = 0
    blocks = params.blocks()
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for k in range(cfg.minibatches):
            idx = perm[k * mb:(k + 1) * mb] if k < cfg.minibatches - 1 else perm[k * mb:]
            if len(idx) == 0:
                continue
            loss, grads, st = ppo_loss_and_grads(spec, params, obs[idx], act[idx], old_lp[idx], adv[idx],
                                                 ret[idx], cfg)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDiverged("non-finite PPO loss or gradient", {"stats": st})
            if cfg.adaptive_kl:
                if st["kl"] > 2.0 * cfg.desired_kl:
                    optimizer.lr = max(1e-5, optimizer.lr / 1.5)
                elif 0.0 < st["kl"] < 0.5 * cfg.desired_kl:
                    optimizer.lr = min(1e-2, optimizer.lr * 1.5)
            clip_grad_norm(grads, cfg.max_grad_norm)
            optimizer.step(blocks, grads)
            np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX, out=params.log_std)
            for key in acc:
                acc[key] += st[key]
            count += 1
    out = {k: v / max(count, 1) for k, v in acc.items()}
    out["learning_rate"] = optimizer.lr
    return out
