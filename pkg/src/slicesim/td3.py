"""TD3 learner: replay, twin critics with targets, delayed actor updates.

Two constraint modes for the actor:

* ``softmax_embedded`` - the actor ends in a per-cell block softmax, so every
  output already sits on the simplex; proposal and executed action coincide.
* ``penalty`` - the actor ends in a sigmoid; raw proposals may violate the
  budget (that is the point: the reward carries the penalty), the executed
  action is the projected proposal.

Critics always score the raw proposal, which in softmax mode equals the
executed action.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import project_or_reject
from .nn import Adam, Mlp, MlpSpec

CONSTRAINT_MODES = ("softmax_embedded", "penalty")
ACTION_MODES = ("explore_random", "train_noisy", "eval")


@dataclass
class Experience:
    state: np.ndarray
    action: np.ndarray  # executed, on-simplex
    proposal: np.ndarray  # raw actor output, pre-projection
    reward: float
    next_state: np.ndarray


@dataclass
class Batch:
    states: np.ndarray
    proposals: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    @property
    def size(self) -> int:
        return self.states.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring buffer over flat experience arrays."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.size = 0
        self._cursor = 0
        self._states = np.zeros((capacity, state_dim))
        self._actions = np.zeros((capacity, action_dim))
        self._proposals = np.zeros((capacity, action_dim))
        self._rewards = np.zeros(capacity)
        self._next_states = np.zeros((capacity, state_dim))

    def add(self, exp: Experience) -> None:
        i = self._cursor
        self._states[i] = exp.state
        self._actions[i] = exp.action
        self._proposals[i] = exp.proposal
        self._rewards[i] = exp.reward
        self._next_states[i] = exp.next_state
        self._cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def peek(self, i: int) -> Experience:
        """Experience at slot i in insertion order (oldest surviving = 0)."""
        if not 0 <= i < self.size:
            raise IndexError("buffer index out of range")
        base = self._cursor if self.size == self.capacity else 0
        j = (base + i) % self.capacity
        return Experience(self._states[j].copy(), self._actions[j].copy(),
                          self._proposals[j].copy(), float(self._rewards[j]),
                          self._next_states[j].copy())

    def sample(self, rng: np.random.Generator, batch_size: int) -> Batch:
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(states=self._states[idx], proposals=self._proposals[idx],
                     rewards=self._rewards[idx], next_states=self._next_states[idx])


def soft_update(online: list[np.ndarray], target: list[np.ndarray], tau: float) -> None:
    """Polyak average: target <- tau * online + (1 - tau) * target, in place."""
    for src, dst in zip(online, target):
        dst *= 1.0 - tau
        dst += tau * src


def uniform_simplex(rng: np.random.Generator, blocks: int, block_size: int) -> np.ndarray:
    """Flat vector of ``blocks`` independent uniform draws on the simplex."""
    e = rng.standard_exponential((blocks, block_size))
    return (e / e.sum(axis=1, keepdims=True)).reshape(-1)


@dataclass(frozen=True)
class Td3Config:
    state_dim: int
    action_dim: int
    block_size: int  # slices + headroom; actions are per-cell blocks of this size
    constraint_mode: str = "softmax_embedded"
    actor_hidden: tuple[int, ...] = (48, 24)
    critic_hidden: tuple[int, ...] = (64, 24)
    gamma: float = 0.1
    batch_size: int = 32
    tau: float = 0.005
    policy_delay: int = 2
    target_noise: float = 0.2
    noise_clip: float = 0.5
    explore_noise: float = 0.1
    actor_lr: float = 5e-4
    critic_lr: float = 1e-3
    buffer_capacity: int = 100_000

    def __post_init__(self):
        if self.constraint_mode not in CONSTRAINT_MODES:
            raise ValueError(f"unknown constraint mode {self.constraint_mode!r}")
        if self.action_dim % self.block_size:
            raise ValueError("action_dim must be a multiple of block_size")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")


@dataclass
class TrainDiagnostics:
    updated: bool
    actor_updated: bool
    critic_loss: float
    actor_objective: float
    mean_abs_td: float


class Td3Agent:
    """One TD3 learner: actor, twin critics, their targets, three Adams."""

    def __init__(self, config: Td3Config, rng: np.random.Generator):
        self.config = config
        self._rng = rng
        c = config
        head = "softmax_blocks" if c.constraint_mode == "softmax_embedded" else "sigmoid"
        actor_spec = MlpSpec((c.state_dim, *c.actor_hidden, c.action_dim), head=head,
                             block_size=c.block_size if head == "softmax_blocks" else 0)
        critic_spec = MlpSpec((c.state_dim + c.action_dim, *c.critic_hidden, 1), head="linear")
        self.actor = Mlp.init(rng, actor_spec)
        self.critic1 = Mlp.init(rng, critic_spec)
        self.critic2 = Mlp.init(rng, critic_spec)
        self.actor_target = self.actor.copy()
        self.critic1_target = self.critic1.copy()
        self.critic2_target = self.critic2.copy()
        self.actor_opt = Adam(self.actor.parameters(), lr=c.actor_lr)
        self.critic1_opt = Adam(self.critic1.parameters(), lr=c.critic_lr)
        self.critic2_opt = Adam(self.critic2.parameters(), lr=c.critic_lr)
        self.buffer = ReplayBuffer(c.buffer_capacity, c.state_dim, c.action_dim)

    @property
    def rng(self) -> np.random.Generator:
        """The agent's private stream (exploration, smoothing, sampling)."""
        return self._rng

    # -- acting ---------------------------------------------------------------

    def _random_proposal(self) -> np.ndarray:
        c = self.config
        if c.constraint_mode == "softmax_embedded":
            return uniform_simplex(self._rng, c.action_dim // c.block_size, c.block_size)
        # raw box sample: lets the penalty agent experience violations
        return self._rng.random(c.action_dim)

    def _execute(self, proposal: np.ndarray) -> np.ndarray:
        c = self.config
        rows = project_or_reject(proposal.reshape(-1, c.block_size))
        return rows.reshape(-1)

    def select_action(self, state: np.ndarray, mode: str) -> tuple[np.ndarray, np.ndarray]:
        """Return (raw proposal, executed on-simplex action), both flat."""
        if mode not in ACTION_MODES:
            raise ValueError(f"unknown action mode {mode!r}")
        c = self.config
        if mode == "explore_random":
            proposal = self._random_proposal()
        else:
            # exploration perturbs the raw pre-head outputs, so the head
            # nonlinearity keeps noisy proposals in their natural range
            z = self.actor.logits(state)
            if mode == "train_noisy":
                z = z + self._rng.normal(0.0, c.explore_noise, size=z.shape)
            proposal = self.actor.apply_head(z)
        if not np.isfinite(proposal).all():
            raise FloatingPointError("actor produced a non-finite action")
        return proposal, self._execute(proposal)

    # -- learning -------------------------------------------------------------

    def _smoothed_target_actions(self, next_states: np.ndarray) -> np.ndarray:
        c = self.config
        noise = np.clip(self._rng.normal(0.0, c.target_noise, size=(next_states.shape[0], c.action_dim)),
                        -c.noise_clip, c.noise_clip)
        z = self.actor_target.logits(next_states)
        return self.actor_target.apply_head(z + noise)

    def compute_targets(self, rewards: np.ndarray, next_states: np.ndarray) -> np.ndarray:
        """TD targets g = r + gamma * min of the twin target critics at the
        smoothed target-policy action."""
        a2 = self._smoothed_target_actions(next_states)
        x2 = np.concatenate([next_states, a2], axis=1)
        q1 = self.critic1_target.forward(x2)[:, 0]
        q2 = self.critic2_target.forward(x2)[:, 0]
        return rewards + self.config.gamma * np.minimum(q1, q2)

    def critic_update(self, batch: Batch) -> tuple[float, float]:
        """One TD regression step on both critics; returns (pre-update MSE
        loss summed over the twins, mean |TD error| of critic 1)."""
        g = self.compute_targets(batch.rewards, batch.next_states)
        x = np.concatenate([batch.states, batch.proposals], axis=1)
        b = batch.size
        loss = 0.0
        mean_abs_td = 0.0
        for critic, opt in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            q, cache = critic.forward_cached(x)
            td = q[:, 0] - g
            loss += float(np.mean(td ** 2))
            if critic is self.critic1:
                mean_abs_td = float(np.mean(np.abs(td)))
            grads, _ = critic.backward(cache, (2.0 * td / b)[:, None])
            opt.step(critic.parameters(), grads)
        return loss, mean_abs_td

    def actor_gradients(self, batch: Batch) -> tuple[float, list[np.ndarray]]:
        """Objective mean Q1(s, pi(s)) and the gradients of its negation."""
        a, actor_cache = self.actor.forward_cached(batch.states)
        x = np.concatenate([batch.states, a], axis=1)
        q, critic_cache = self.critic1.forward_cached(x)
        objective = float(np.mean(q))
        b = batch.size
        _, gx = self.critic1.backward(critic_cache, np.full((b, 1), 1.0 / b))
        dq_da = gx[:, self.config.state_dim:]
        grads, _ = self.actor.backward(actor_cache, -dq_da)
        return objective, grads

    def actor_update(self, batch: Batch) -> float:
        """Ascend mean Q1(s, pi(s)); critics are read, never written."""
        objective, grads = self.actor_gradients(batch)
        self.actor_opt.step(self.actor.parameters(), grads)
        return objective

    def sync_targets(self) -> None:
        tau = self.config.tau
        soft_update(self.actor.parameters(), self.actor_target.parameters(), tau)
        soft_update(self.critic1.parameters(), self.critic1_target.parameters(), tau)
        soft_update(self.critic2.parameters(), self.critic2_target.parameters(), tau)

    def train_step(self, step: int) -> TrainDiagnostics:
        """Critic update every call; actor and targets every policy_delay."""
        c = self.config
        if self.buffer.size < c.batch_size:
            return TrainDiagnostics(False, False, float("nan"), float("nan"), float("nan"))
        batch = self.buffer.sample(self._rng, c.batch_size)
        loss, mean_abs_td = self.critic_update(batch)
        actor_obj = float("nan")
        actor_updated = step % c.policy_delay == 0
        if actor_updated:
            actor_obj = self.actor_update(batch)
            self.sync_targets()
        return TrainDiagnostics(True, actor_updated, loss, actor_obj, mean_abs_td)

    # -- checkpointing ----------------------------------------------------------

    def to_dict(self) -> dict:
        """All six networks plus optimizer states (not the RNG stream)."""
        return {
            "actor": self.actor.to_dict(),
            "critic1": self.critic1.to_dict(),
            "critic2": self.critic2.to_dict(),
            "actor_target": self.actor_target.to_dict(),
            "critic1_target": self.critic1_target.to_dict(),
            "critic2_target": self.critic2_target.to_dict(),
            "actor_opt": self.actor_opt.to_dict(),
            "critic1_opt": self.critic1_opt.to_dict(),
            "critic2_opt": self.critic2_opt.to_dict(),
        }

    def load_dict(self, data: dict) -> None:
        self.actor = Mlp.from_dict(data["actor"])
        self.critic1 = Mlp.from_dict(data["critic1"])
        self.critic2 = Mlp.from_dict(data["critic2"])
        self.actor_target = Mlp.from_dict(data["actor_target"])
        self.critic1_target = Mlp.from_dict(data["critic1_target"])
        self.critic2_target = Mlp.from_dict(data["critic2_target"])
        self.actor_opt = Adam.from_dict(data["actor_opt"])
        self.critic1_opt = Adam.from_dict(data["critic1_opt"])
        self.critic2_opt = Adam.from_dict(data["critic2_opt"])

    def param_count(self) -> int:
        return self.actor.param_count() + self.critic1.param_count() + self.critic2.param_count()
