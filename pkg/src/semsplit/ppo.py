"""Proximal policy optimisation with hand-written MLPs and reverse-mode gradients.

Actor: diagonal Gaussian with an MLP mean and a learned state-independent
log-std (clamped to ``[-5, 1]``). Critic: MLP value function. Updates follow
the usual collect-then-update cycle: fill a buffer of ``buffer_capacity``
transitions, compute GAE advantages, run ``epochs_per_update`` passes of
shuffled minibatches, clear the buffer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .rng import make_rng

LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0
LOG_2PI = math.log(2 * math.pi)
CHECKPOINT_FORMAT = "semsplit-mlp"
CHECKPOINT_VERSION = 1

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "linear": (lambda x: x, lambda y: np.ones_like(y)),
    "relu": (lambda x: np.maximum(x, 0.0), lambda y: (y > 0).astype(float)),
}


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    lr_actor: float = 1e-3
    lr_critic: float = 3e-4
    minibatch_size: int = 128
    buffer_capacity: int = 2048
    epochs_per_update: int = 10
    max_episodes: int = 2000
    max_steps: int | None = None
    grad_clip_actor: float = 0.5
    grad_clip_critic: float = 0.5
    hidden: tuple[int, ...] = (128, 128)
    init_log_std: float = -0.5
    actor_out_scale: float = 0.01
    normalize_advantages: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ValueError("lam must lie in [0, 1]")
        if not self.clip_eps > 0:
            raise ValueError("clip_eps must be positive")
        if self.lr_actor < 0 or self.lr_critic < 0:
            raise ValueError("learning rates must be non-negative")
        if self.minibatch_size < 1 or self.buffer_capacity < self.minibatch_size:
            raise ValueError("need 1 <= minibatch_size <= buffer_capacity")
        self.hidden = tuple(int(h) for h in self.hidden)


# -------------------------------------------------------------------- MLP


class Mlp:
    """Affine layers, each followed by its activation."""

    def __init__(self, weights, biases, activations):
        if not (len(weights) == len(biases) == len(activations)):
            raise ValueError("weights, biases and activations must align")
        for w, w_next in zip(weights, weights[1:]):
            if w.shape[1] != w_next.shape[0]:
                raise ValueError("layer dimensions do not chain")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.activations = list(activations)

    @classmethod
    def init(cls, sizes, rng, hidden_activation="tanh", out_activation="linear", out_scale=1.0):
        weights, biases, acts = [], [], []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            gain = out_scale if last else 1.0
            weights.append(rng.standard_normal((n_in, n_out)) * gain / math.sqrt(n_in))
            biases.append(np.zeros(n_out))
            acts.append(out_activation if last else hidden_activation)
        return cls(weights, biases, acts)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def forward(self, x):
        """Return ``(output, cache)``; ``x`` may be a vector or a batch of rows."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.weights[0].shape[0]:
            raise ValueError(f"input has {x.shape[-1]} features, expected {self.weights[0].shape[0]}")
        outs = [x]
        for w, b, act in zip(self.weights, self.biases, self.activations):
            x = _ACTIVATIONS[act][0](x @ w + b)
            outs.append(x)
        return x, outs

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out):
        """Gradients w.r.t. every weight and bias, plus the input gradient."""
        grad = np.asarray(grad_out, dtype=float)
        dws, dbs = [], []
        for i in reversed(range(len(self.weights))):
            y, x = cache[i + 1], cache[i]
            grad = grad * _ACTIVATIONS[self.activations[i]][1](y)
            if grad.ndim == 1:
                dws.append(np.outer(x, grad))
                dbs.append(grad.copy())
            else:
                dws.append(x.T @ grad)
                dbs.append(grad.sum(axis=0))
            grad = grad @ self.weights[i].T
        return dws[::-1], dbs[::-1], grad

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def grads_as_list(self, dws, dbs) -> list[np.ndarray]:
        return [g for pair in zip(dws, dbs) for g in pair]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activations)


def flatten(arrays) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.empty(0)


def unflatten_into(arrays, flat):
    pos = 0
    for a in arrays:
        a[...] = flat[pos : pos + a.size].reshape(a.shape)
        pos += a.size
    if pos != flat.size:
        raise ValueError("flat vector has the wrong length")


# ----------------------------------------------------------------- policy


def gaussian_log_prob(actions, mean, log_std):
    z = (actions - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * LOG_2PI


class GaussianPolicy:
    def __init__(self, mean_net: Mlp, log_std):
        self.mean_net = mean_net
        self.log_std = np.asarray(log_std, dtype=float).copy()

    @classmethod
    def init(cls, state_dim, action_dim, hidden, rng, init_log_std=-0.5, out_scale=0.01):
        net = Mlp.init([state_dim, *hidden, action_dim], rng, out_scale=out_scale)
        return cls(net, np.full(action_dim, init_log_std))

    @property
    def clamped_log_std(self):
        return np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)

    def mean_action(self, state):
        return self.mean_net(state)

    def sample(self, state, rng):
        mean = self.mean_net(state)
        log_std = self.clamped_log_std
        action = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        return action, float(gaussian_log_prob(action, mean, log_std))

    def log_prob(self, states, actions):
        return gaussian_log_prob(actions, self.mean_net(states), self.clamped_log_std)

    def params(self) -> list[np.ndarray]:
        return self.mean_net.params() + [self.log_std]

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.mean_net.copy(), self.log_std)


# --------------------------------------------------------------- losses


def gae(rewards, values, dones, gamma: float, lam: float) -> np.ndarray:
    """Generalised advantage estimates by backward recursion.

    ``values`` has one more entry than ``rewards``: the bootstrap value of the
    state after the last transition. A ``done`` flag zeroes the bootstrap.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    t_len = rewards.size
    if t_len == 0:
        raise ValueError("empty trajectory")
    if values.size != t_len + 1 or dones.size != t_len:
        raise ValueError("values needs T + 1 entries and dones T entries")
    adv = np.zeros(t_len)
    running = 0.0
    for t in reversed(range(t_len)):
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
    return adv


def clipped_surrogate(log_prob_new, log_prob_old, advantage, eps: float) -> np.ndarray:
    ratio = np.exp(np.asarray(log_prob_new, float) - np.asarray(log_prob_old, float))
    advantage = np.asarray(advantage, float)
    return np.minimum(ratio * advantage, np.clip(ratio, 1 - eps, 1 + eps) * advantage)


def critic_loss(values, targets) -> float:
    values = np.asarray(values, float)
    targets = np.asarray(targets, float)
    if values.shape != targets.shape:
        raise ValueError("values and targets must have equal length")
    return float(np.mean((values - targets) ** 2))


def actor_loss_and_grads(policy: GaussianPolicy, states, actions, log_prob_old, advantages, eps):
    """Negative mean clipped surrogate and its gradient for every actor parameter."""
    mean, cache = policy.mean_net.forward(states)
    log_std = policy.clamped_log_std
    logp = gaussian_log_prob(actions, mean, log_std)
    ratio = np.exp(logp - log_prob_old)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1 - eps, 1 + eps) * advantages
    objective = np.minimum(unclipped, clipped)
    n = len(advantages)
    loss = -float(np.mean(objective))
    # d(objective)/d(logp): the unclipped branch is the active one (ties included)
    active = unclipped <= clipped
    d_logp = -(active * advantages * ratio) / n
    inv_var = np.exp(-2.0 * log_std)
    diff = actions - mean
    d_mean = d_logp[:, None] * diff * inv_var
    d_log_std = np.sum(d_logp[:, None] * (diff * diff * inv_var - 1.0), axis=0)
    d_log_std *= (policy.log_std >= LOG_STD_MIN) & (policy.log_std <= LOG_STD_MAX)
    dws, dbs, _ = policy.mean_net.backward(cache, d_mean)
    return loss, policy.mean_net.grads_as_list(dws, dbs) + [d_log_std]


def critic_loss_and_grads(critic: Mlp, states, targets):
    values, cache = critic.forward(states)
    values = values[:, 0]
    loss = critic_loss(values, targets)
    d_values = 2.0 * (values - targets) / len(targets)
    dws, dbs, _ = critic.backward(cache, d_values[:, None])
    return loss, critic.grads_as_list(dws, dbs)


def clip_grad_norm(grads, max_norm: float):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0 and norm > max_norm:
        grads = [g * (max_norm / norm) for g in grads]
    return grads, norm


class Adam:
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# --------------------------------------------------------------- training


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    log_prob_old: float
    reward: float
    value_estimate: float
    done: bool


@dataclass
class TrainingResult:
    actor: GaussianPolicy
    critic: Mlp
    episode_rewards: list[float]
    log: list[dict] = field(default_factory=list)
    n_updates: int = 0


class PpoAgent:
    def __init__(self, state_dim: int, action_dim: int, cfg: PpoConfig):
        self.cfg = cfg
        init_rng = make_rng(cfg.seed, "init")
        self.actor = GaussianPolicy.init(
            state_dim, action_dim, cfg.hidden, init_rng, cfg.init_log_std, cfg.actor_out_scale
        )
        self.critic = Mlp.init([state_dim, *cfg.hidden, 1], init_rng)
        self.actor_opt = Adam(self.actor.params(), cfg.lr_actor)
        self.critic_opt = Adam(self.critic.params(), cfg.lr_critic)
        self.policy_rng = make_rng(cfg.seed, "policy")
        self.minibatch_rng = make_rng(cfg.seed, "minibatch")
        self.buffer: list[Transition] = []
        self.n_updates = 0
        self.used_in_update: list[int] = []

    def act(self, state):
        action, log_prob = self.actor.sample(state, self.policy_rng)
        value = float(self.critic(state)[0])
        return action, log_prob, value

    def store(self, tr: Transition):
        self.buffer.append(tr)

    @property
    def buffer_full(self) -> bool:
        return len(self.buffer) >= self.cfg.buffer_capacity

    def update(self, last_value: float):
        cfg = self.cfg
        batch = self.buffer
        states = np.stack([t.state for t in batch])
        actions = np.stack([t.action for t in batch])
        logp_old = np.array([t.log_prob_old for t in batch])
        rewards = np.array([t.reward for t in batch])
        values = np.array([t.value_estimate for t in batch])
        dones = np.array([t.done for t in batch])
        adv = gae(rewards, np.append(values, last_value), dones, cfg.gamma, cfg.lam)
        targets = adv + values
        if cfg.normalize_advantages and adv.size > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = len(batch)
        stats = []
        for _ in range(cfg.epochs_per_update):
            order = self.minibatch_rng.permutation(n)
            for start in range(0, n, cfg.minibatch_size):
                idx = order[start : start + cfg.minibatch_size]
                a_loss, a_grads = actor_loss_and_grads(
                    self.actor, states[idx], actions[idx], logp_old[idx], adv[idx], cfg.clip_eps
                )
                a_grads, _ = clip_grad_norm(a_grads, cfg.grad_clip_actor)
                self.actor_opt.step(a_grads)
                c_loss, c_grads = critic_loss_and_grads(self.critic, states[idx], targets[idx])
                c_grads, _ = clip_grad_norm(c_grads, cfg.grad_clip_critic)
                self.critic_opt.step(c_grads)
                stats.append((a_loss, c_loss))
        self.used_in_update.append(n)
        self.buffer = []
        self.n_updates += 1
        return stats


def train(env, cfg: PpoConfig, on_episode: Callable[[dict], None] | None = None) -> TrainingResult:
    """Run the episode/step loop, updating whenever the buffer fills.

    ``env`` needs ``reset() -> state``, ``step(action) -> (outcome, done)`` and
    ``state_dim`` / ``action_dim``; ``outcome`` exposes ``reward``,
    ``next_state``, ``per_user_ses``, ``power_slack`` and ``ses_slacks``.
    """
    agent = PpoAgent(env.state_dim, env.action_dim, cfg)
    episode_rewards: list[float] = []
    log: list[dict] = []
    total_steps = 0
    for episode in range(cfg.max_episodes):
        state = env.reset()
        rewards, ses_rows, power_viol, ses_viol = [], [], 0, 0
        done = False
        while not done:
            action, log_prob, value = agent.act(state)
            outcome, done = env.step(action)
            agent.store(Transition(state, action, log_prob, outcome.reward, value, done))
            rewards.append(outcome.reward)
            ses_rows.append([s.total for s in outcome.per_user_ses])
            power_viol += outcome.power_slack < 0
            ses_viol += int(np.sum(np.asarray(outcome.ses_slacks) < 0))
            state = outcome.next_state
            total_steps += 1
            if agent.buffer_full:
                last_value = 0.0 if done else float(agent.critic(state)[0])
                agent.update(last_value)
            if cfg.max_steps is not None and total_steps >= cfg.max_steps:
                break
        n = len(rewards)
        row = {
            "episode": episode,
            "mean_reward": float(np.mean(rewards)),
            "mean_ses_per_user": np.mean(ses_rows, axis=0).tolist(),
            "power_violation_rate": power_viol / n,
            "ses_violation_rate": ses_viol / (n * len(ses_rows[0])),
        }
        episode_rewards.append(row["mean_reward"])
        log.append(row)
        if on_episode is not None:
            on_episode(row)
        if cfg.max_steps is not None and total_steps >= cfg.max_steps:
            break
    return TrainingResult(agent.actor, agent.critic, episode_rewards, log, agent.n_updates)


# ------------------------------------------------------------- checkpoints


def save_mlp(path, net: Mlp, log_std=None):
    """Text header line (JSON with dimensions) followed by raw little-endian float64."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "sizes": net.sizes,
        "activations": net.activations,
        "log_std": log_std is not None,
    }
    arrays = net.params() + ([np.asarray(log_std, float)] if log_std is not None else [])
    payload = flatten(arrays).astype("<f8").tobytes()
    Path(path).write_bytes(json.dumps(header).encode() + b"\n" + payload)


def load_mlp(path):
    raw = Path(path).read_bytes()
    head, payload = raw.split(b"\n", 1)
    header = json.loads(head)
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint header {header}")
    sizes = header["sizes"]
    weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    net = Mlp(weights, biases, header["activations"])
    arrays = net.params()
    log_std = np.zeros(sizes[-1]) if header["log_std"] else None
    if log_std is not None:
        arrays = arrays + [log_std]
    unflatten_into(arrays, np.frombuffer(payload, dtype="<f8"))
    return net, log_std


def save_policy(path, policy: GaussianPolicy):
    save_mlp(path, policy.mean_net, policy.log_std)


def load_policy(path) -> GaussianPolicy:
    net, log_std = load_mlp(path)
    if log_std is None:
        raise ValueError("checkpoint holds no policy log-std")
    return GaussianPolicy(net, log_std)
