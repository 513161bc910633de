"""Per-UAV value learners: MLP Q-networks, replay, epsilon-greedy control.

Plain numpy networks (two hidden layers, rectified-linear) trained with Adam
on the squared TD error against a softly updated target network. Each agent
owns its networks and buffer; the training loop is Algorithm-style: linear
epsilon decay, act/store for every agent each step, then batched updates once
the replay warmup is met, with positions re-randomized by the environment.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .delay import per_uav_mean_delays
from .env import Action, FleetEnv, decode_action, encode_action
from .timing import Protocol

__all__ = [
    "QNetwork",
    "Adam",
    "ReplayBuffer",
    "EpsilonSchedule",
    "Hyperparams",
    "Agent",
    "select_action",
    "td_target",
    "train_step",
    "soft_update",
    "train",
    "TrainResult",
    "baseline_policy",
    "evaluate_policies",
]

CHECKPOINT_VERSION = 1


class TrainingDivergence(RuntimeError):
    """Loss became non-finite; training cannot proceed."""


class QNetwork:
    """Feedforward action-value network: obs -> one value per discrete action."""

    def __init__(self, n_inputs: int, n_actions: int, hidden=(256, 128),
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        sizes = [n_inputs, *hidden, n_actions]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_actions(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def forward(self, x: np.ndarray, keep_cache: bool = False):
        """Batch forward pass; optionally returns layer activations for backprop."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cache = [x]
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if k == last else np.maximum(z, 0.0)
            cache.append(h)
        return (h, cache) if keep_cache else h

    def gradients(self, cache: list[np.ndarray], dq: np.ndarray):
        """Backprop of dL/dQ through the cached forward pass."""
        grads_w, grads_b = [], []
        delta = dq
        for k in range(len(self.weights) - 1, -1, -1):
            h_prev = cache[k]
            grads_w.append(h_prev.T @ delta)
            grads_b.append(delta.sum(axis=0))
            if k > 0:
                delta = (delta @ self.weights[k].T) * (cache[k] > 0.0)
        return list(reversed(grads_w)), list(reversed(grads_b))

    def copy_from(self, other: "QNetwork"):
        for dst, src in zip(self.parameters(), other.parameters()):
            np.copyto(dst, src)

    def clone(self) -> "QNetwork":
        out = object.__new__(QNetwork)
        out.weights = [w.copy() for w in self.weights]
        out.biases = [b.copy() for b in self.biases]
        return out


class Adam:
    """Adam with the standard bias-corrected moment estimates."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class ReplayBuffer:
    """Preallocated FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, obs, action: int, reward: float, next_obs):
        k = self._next
        self.obs[k] = obs
        self.actions[k] = action
        self.rewards[k] = reward
        self.next_obs[k] = next_obs
        self._next = (k + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self._size, size=batch_size)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx]


@dataclass(frozen=True)
class EpsilonSchedule:
    e_init: float = 1.0
    e_final: float = 0.1
    decay_episodes: int = 500

    def at(self, episode: int) -> float:
        """Linear decay over the first ``decay_episodes`` episodes, then flat."""
        if episode < self.decay_episodes:
            return self.e_init - episode * (self.e_init - self.e_final) / self.decay_episodes
        return self.e_final


@dataclass(frozen=True)
class Hyperparams:
    episodes: int = 1000
    steps_per_episode: int = 100
    batch_size: int = 256
    buffer_capacity: int = 25_000
    warmup_transitions: int | None = None  # default: full buffer
    learning_rate: float = 1e-4
    gamma: float = 0.95
    target_retention: float = 0.999  # theta' <- (1-retention)*theta + retention*theta'
    hidden: tuple[int, int] = (256, 128)
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    seed: int = 0

    @property
    def tau_soft(self) -> float:
        return 1.0 - self.target_retention

    @property
    def warmup(self) -> int:
        return self.buffer_capacity if self.warmup_transitions is None else self.warmup_transitions


def select_action(q: QNetwork, obs: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the network outputs; argmax ties go to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(0, q.n_actions))
    values = q.forward(obs)[0]
    return int(np.argmax(values))


def td_target(rewards: np.ndarray, next_obs: np.ndarray, q_target: QNetwork,
              gamma: float = 0.95) -> np.ndarray:
    """One-step bootstrapped targets from the target network."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    next_values = q_target.forward(next_obs).max(axis=1)
    return np.asarray(rewards, dtype=float) + gamma * next_values


def train_step(q: QNetwork, q_target: QNetwork, batch, optimizer: Adam,
               gamma: float = 0.95) -> float:
    """One Adam step on the mean squared TD error of a sampled batch."""
    obs, actions, rewards, next_obs = batch
    y = td_target(rewards, next_obs, q_target, gamma)
    values, cache = q.forward(obs, keep_cache=True)
    picked = values[np.arange(len(actions)), actions]
    err = picked - y
    loss = float(np.mean(err**2))
    if not np.isfinite(loss):
        raise TrainingDivergence(f"non-finite TD loss: {loss}")
    dq = np.zeros_like(values)
    dq[np.arange(len(actions)), actions] = 2.0 * err / len(actions)
    grads_w, grads_b = q.gradients(cache, dq)
    optimizer.step([*grads_w, *grads_b])
    return loss


def soft_update(q: QNetwork, q_target: QNetwork, tau_soft: float):
    """Blend online parameters into the target: theta' <- tau*theta + (1-tau)*theta'."""
    if not 0.0 <= tau_soft <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau_soft}")
    for dst, src in zip(q_target.parameters(), q.parameters()):
        if dst.shape != src.shape:
            raise ValueError(f"parameter shape mismatch: {dst.shape} vs {src.shape}")
        dst *= 1.0 - tau_soft
        dst += tau_soft * src


class Agent:
    """One UAV's learner: online/target networks, buffer, optimizer."""

    def __init__(self, obs_dim: int, n_actions: int, hp: Hyperparams, rng: np.random.Generator):
        self.q = QNetwork(obs_dim, n_actions, hidden=hp.hidden, rng=rng)
        self.q_target = self.q.clone()
        self.buffer = ReplayBuffer(hp.buffer_capacity, obs_dim)
        self.optimizer = Adam(self.q.parameters(), lr=hp.learning_rate)

    def save(self, path: str):
        arrays = {}
        for k, w in enumerate(self.q.weights):
            arrays[f"w{k}"] = w.astype("<f8")
        for k, b in enumerate(self.q.biases):
            arrays[f"b{k}"] = b.astype("<f8")
        arrays["checkpoint_version"] = np.array([CHECKPOINT_VERSION], dtype="<i8")
        np.savez(path, **arrays)

    def load(self, path: str):
        data = np.load(path)
        version = int(data["checkpoint_version"][0])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        for k in range(len(self.q.weights)):
            np.copyto(self.q.weights[k], data[f"w{k}"])
            np.copyto(self.q.biases[k], data[f"b{k}"])
        self.q_target = self.q.clone()


@dataclass
class TrainResult:
    agents: list[Agent]
    episode_rewards: np.ndarray  # (episodes, n_agents)
    epsilons: np.ndarray  # (episodes,)
    mean_decision_latency_s: float

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.episode_rewards.shape[1]
        w.writerow(["episode", *[f"reward_uav{k}" for k in range(n)], "mean_reward", "epsilon"])
        for ep in range(self.episode_rewards.shape[0]):
            row = self.episode_rewards[ep]
            w.writerow(
                [ep, *[f"{x:.6f}" for x in row], f"{row.mean():.6f}", f"{self.epsilons[ep]:.6f}"]
            )
        return buf.getvalue()


def train(env: FleetEnv, hp: Hyperparams) -> TrainResult:
    """Run the multi-agent training loop; agents never share parameters."""
    n = env.config.n_uavs
    obs_dim = len(env.observe(0))
    ss = np.random.SeedSequence(hp.seed)
    seeds = ss.spawn(n + 1)
    agent_rngs = [np.random.default_rng(s) for s in seeds[:n]]
    loop_rng = np.random.default_rng(seeds[n])
    agents = [Agent(obs_dim, env.n_actions, hp, rng) for rng in agent_rngs]

    episode_rewards = np.zeros((hp.episodes, n))
    epsilons = np.zeros(hp.episodes)
    latency_total, latency_count = 0.0, 0

    for ep in range(hp.episodes):
        eps = hp.epsilon.at(ep)
        epsilons[ep] = eps
        observations = env.reset()
        ep_reward = np.zeros(n)
        for _ in range(hp.steps_per_episode):
            actions = []
            for j, agent in enumerate(agents):
                t0 = time.perf_counter()
                actions.append(select_action(agent.q, observations[j], eps, agent_rngs[j]))
                latency_total += time.perf_counter() - t0
                latency_count += 1
            rewards, next_observations, _ = env.step(actions)
            for j, agent in enumerate(agents):
                agent.buffer.push(observations[j], actions[j], rewards[j], next_observations[j])
            ep_reward += rewards
            observations = next_observations
            if len(agents[0].buffer) >= hp.warmup:
                for j, agent in enumerate(agents):
                    batch = agent.buffer.sample(hp.batch_size, agent_rngs[j])
                    train_step(agent.q, agent.q_target, batch, agent.optimizer, hp.gamma)
                    soft_update(agent.q, agent.q_target, hp.tau_soft)
        episode_rewards[ep] = ep_reward / hp.steps_per_episode

    return TrainResult(
        agents=agents,
        episode_rewards=episode_rewards,
        epsilons=epsilons,
        mean_decision_latency_s=latency_total / max(latency_count, 1),
    )


def baseline_policy(kind: str, protocol: Protocol | None = None, rate: int | None = None,
                    psi_max: int = 10):
    """Fixed-config or uniform-random policy with the learned-policy call shape."""
    if kind == "fixed":
        if protocol is None or rate is None:
            raise ValueError("fixed policy needs protocol and rate")
        index = encode_action(Action(protocol, rate), psi_max)

        def fixed(obs, rng):
            return index

        return fixed
    if kind == "random":

        def random(obs, rng):
            return int(rng.integers(0, 3 * psi_max))

        return random
    raise ValueError(f"unknown baseline kind {kind!r}")


def greedy_policy(agent: Agent):
    def act(obs, rng):
        return int(np.argmax(agent.q.forward(obs)[0]))

    return act


def evaluate_policy(env: FleetEnv, policies, episodes: int, steps: int, seed: int) -> float:
    """Mean system effective delay (ms) under per-UAV policies."""
    rng = np.random.default_rng(seed)
    totals = []
    for _ in range(episodes):
        observations = env.reset()
        for _ in range(steps):
            actions = [pol(observations[j], rng) for j, pol in enumerate(policies)]
            _, observations, table = env.step(actions)
            totals.append(float(np.mean(per_uav_mean_delays(table))))
    return float(np.mean(totals))


def evaluate_policies(env_factory, policy_sets: dict, episodes: int, steps: int,
                      seeds) -> dict[str, list[float]]:
    """Per-seed mean delays for named policy sets, each on a fresh seeded env."""
    out: dict[str, list[float]] = {name: [] for name in policy_sets}
    for seed in seeds:
        for name, policies in policy_sets.items():
            env = env_factory(seed)
            out[name].append(evaluate_policy(env, policies, episodes, steps, seed))
    return out
