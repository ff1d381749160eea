"""Controller layer: the compared agent configurations over one network.

Six kinds:

* ``cen_pen``   - one TD3 agent over the global state/action, sigmoid actor,
                  budget violations punished through the reward.
* ``cen_soft``  - one TD3 agent, per-cell block-softmax actor, constraint
                  satisfied by construction.
* ``dist``      - one independent TD3 agent per cell on its local state.
* ``dist_comm`` - like dist, plus a neighbour-load message in each state.
* ``baseline``  - no learning; split proportional to active users, no headroom.
* ``static_default`` - no learning; a fixed allocation everywhere.

A controller's step contract: ``act`` maps the current network state to
(raw proposals, executable allocation); ``record`` stores the transition with
scheme-appropriate rewards; ``train`` advances the learners.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import (
    RewardSpec,
    StateScaling,
    extract_message,
    global_state,
    local_state,
    reward_global,
    reward_local,
    reward_penalized,
)
from .netsim import ConfigError, NetState, Scenario
from .td3 import Experience, Td3Agent, Td3Config, TrainDiagnostics, uniform_simplex

SCHEME_KINDS = ("cen_pen", "cen_soft", "dist", "dist_comm", "baseline", "static_default")
PHASES = ("explore", "train", "eval")


@dataclass(frozen=True)
class AgentHyperParams:
    """TD3 and exploration knobs shared by every learning scheme."""

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
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    central_actor_hidden: tuple[int, ...] = (96, 64, 48)
    central_critic_hidden: tuple[int, ...] = (120, 64, 32)
    dist_actor_hidden: tuple[int, ...] = (48, 24)
    dist_critic_hidden: tuple[int, ...] = (64, 24)


@dataclass
class SchemeDiagnostics:
    critic_loss: float = float("nan")
    actor_objective: float = float("nan")
    mean_abs_td: float = float("nan")
    updated: bool = False


class Controller:
    """Common bookkeeping for every scheme."""

    kind: str = "?"
    trains = False

    def __init__(self, scenario: Scenario, rewards: RewardSpec, scaling: StateScaling):
        self.scenario = scenario
        self.rewards = rewards
        self.scaling = scaling

    def act(self, net: NetState, phase: str, step: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def record(self, prev: NetState, proposals: np.ndarray, allocation: np.ndarray,
               net: NetState) -> None:
        pass

    def train(self, step: int) -> SchemeDiagnostics:
        return SchemeDiagnostics()

    def param_count(self) -> int:
        """Parameters of one deployed model (the per-site footprint)."""
        return 0

    def total_param_count(self) -> int:
        return 0

    def checkpoint(self) -> dict:
        return {"kind": self.kind}


class StaticController(Controller):
    """Fixed allocation, identical in every cell, never learns."""

    kind = "static_default"

    def __init__(self, scenario, rewards, scaling, allocation_row):
        super().__init__(scenario, rewards, scaling)
        row = np.asarray(allocation_row, dtype=float)
        if row.shape != (scenario.slice_count + 1,):
            raise ConfigError("static allocation must have one entry per slice plus headroom")
        if (row < 0).any() or abs(row.sum() - 1.0) > 1e-9:
            raise ConfigError("static allocation must lie on the simplex")
        self._row = row

    def act(self, net, phase, step):
        alloc = np.tile(self._row, (self.scenario.cell_count, 1))
        return alloc.copy(), alloc


class BaselineController(Controller):
    """Traffic-aware heuristic: share resources proportional to active users.

    Headroom is always zero; a cell with no active users at all splits
    equally across slices.
    """

    kind = "baseline"

    def act(self, net, phase, step):
        alloc = baseline_allocation(net.users)
        return alloc.copy(), alloc


def baseline_allocation(users: np.ndarray) -> np.ndarray:
    u = np.asarray(users, dtype=float)
    k, n = u.shape
    alloc = np.zeros((k, n + 1))
    totals = u.sum(axis=1)
    idle = totals == 0
    safe = np.where(idle, 1.0, totals)
    alloc[:, 1:] = u / safe[:, None]
    alloc[idle, 1:] = 1.0 / n
    return alloc


class _EpsilonSchedule:
    """Linear anneal from start to end over a fixed number of steps."""

    def __init__(self, start: float, end: float, horizon: int):
        self.start = start
        self.end = end
        self.horizon = max(1, horizon)

    def value(self, step: int) -> float:
        frac = min(1.0, max(0.0, step / self.horizon))
        return self.start + (self.end - self.start) * frac


class CentralController(Controller):
    """Single agent that sees every cell and emits the full allocation."""

    trains = True

    def __init__(self, scenario, rewards, scaling, hyper: AgentHyperParams,
                 rng: np.random.Generator, kind: str, anneal_steps: int):
        super().__init__(scenario, rewards, scaling)
        self.kind = kind
        k, n = scenario.cell_count, scenario.slice_count
        self._block = n + 1
        mode = "penalty" if kind == "cen_pen" else "softmax_embedded"
        cfg = Td3Config(
            state_dim=3 * n * k, action_dim=k * (n + 1), block_size=n + 1,
            constraint_mode=mode,
            actor_hidden=hyper.central_actor_hidden,
            critic_hidden=hyper.central_critic_hidden,
            gamma=hyper.gamma, batch_size=hyper.batch_size, tau=hyper.tau,
            policy_delay=hyper.policy_delay, target_noise=hyper.target_noise,
            noise_clip=hyper.noise_clip, explore_noise=hyper.explore_noise,
            actor_lr=hyper.actor_lr, critic_lr=hyper.critic_lr,
            buffer_capacity=hyper.buffer_capacity)
        self.agent = Td3Agent(cfg, rng)
        self._eps = _EpsilonSchedule(hyper.epsilon_start, hyper.epsilon_end, anneal_steps)

    def _shape(self, flat: np.ndarray) -> np.ndarray:
        return flat.reshape(self.scenario.cell_count, self._block)

    def act(self, net, phase, step):
        s = global_state(net, self.scaling)
        if phase == "explore":
            prop, act = self.agent.select_action(s, "explore_random")
        elif phase == "eval":
            prop, act = self.agent.select_action(s, "eval")
        else:
            if self.agent.rng.random() < self._eps.value(step):
                prop = uniform_simplex(self.agent.rng, self.scenario.cell_count, self._block)
                act = prop.copy()
            else:
                prop, act = self.agent.select_action(s, "train_noisy")
        return self._shape(prop), self._shape(act)

    def record(self, prev, proposals, allocation, net):
        raw = reward_global(net, self.rewards)
        if self.kind == "cen_pen":
            stored = reward_penalized(raw, proposals, self.rewards.beta,
                                      aggregate=self.rewards.penalty_aggregate,
                                      signed=self.rewards.signed_penalty)
        else:
            stored = raw
        self.agent.buffer.add(Experience(
            state=global_state(prev, self.scaling), action=allocation.reshape(-1),
            proposal=proposals.reshape(-1), reward=stored,
            next_state=global_state(net, self.scaling)))

    def train(self, step):
        d = self.agent.train_step(step)
        return SchemeDiagnostics(d.critic_loss, d.actor_objective, d.mean_abs_td, d.updated)

    def param_count(self):
        return self.agent.param_count()

    def total_param_count(self):
        return self.agent.param_count()

    def checkpoint(self):
        return {"kind": self.kind, "agent": self.agent.to_dict()}


class DistributedController(Controller):
    """One independent TD3 agent per cell on local observations.

    With ``use_messages`` each agent additionally sees the per-slice mean
    load of its neighbours, refreshed from the same network state it acts on.
    """

    trains = True

    def __init__(self, scenario, rewards, scaling, hyper: AgentHyperParams,
                 rng: np.random.Generator, use_messages: bool, anneal_steps: int):
        super().__init__(scenario, rewards, scaling)
        self.kind = "dist_comm" if use_messages else "dist"
        self.use_messages = use_messages
        k, n = scenario.cell_count, scenario.slice_count
        self._block = n + 1
        state_dim = 3 * n + (n if use_messages else 0)
        cfg = Td3Config(
            state_dim=state_dim, action_dim=n + 1, block_size=n + 1,
            constraint_mode="softmax_embedded",
            actor_hidden=hyper.dist_actor_hidden,
            critic_hidden=hyper.dist_critic_hidden,
            gamma=hyper.gamma, batch_size=hyper.batch_size, tau=hyper.tau,
            policy_delay=hyper.policy_delay, target_noise=hyper.target_noise,
            noise_clip=hyper.noise_clip, explore_noise=hyper.explore_noise,
            actor_lr=hyper.actor_lr, critic_lr=hyper.critic_lr,
            buffer_capacity=hyper.buffer_capacity)
        self.agents = [Td3Agent(cfg, child) for child in rng.spawn(k)]
        self._eps = _EpsilonSchedule(hyper.epsilon_start, hyper.epsilon_end, anneal_steps)

    def _agent_state(self, net: NetState, k: int) -> np.ndarray:
        s = local_state(net, k, self.scaling)
        if self.use_messages:
            s = np.concatenate([s, extract_message(net, self.scenario.topology, k)])
        return s

    def act(self, net, phase, step):
        k = self.scenario.cell_count
        props = np.zeros((k, self._block))
        acts = np.zeros((k, self._block))
        for i, agent in enumerate(self.agents):
            s = self._agent_state(net, i)
            if phase == "explore":
                p, a = agent.select_action(s, "explore_random")
            elif phase == "eval":
                p, a = agent.select_action(s, "eval")
            elif agent.rng.random() < self._eps.value(step):
                p = uniform_simplex(agent.rng, 1, self._block)
                a = p.copy()
            else:
                p, a = agent.select_action(s, "train_noisy")
            props[i], acts[i] = p, a
        return props, acts

    def record(self, prev, proposals, allocation, net):
        for i, agent in enumerate(self.agents):
            agent.buffer.add(Experience(
                state=self._agent_state(prev, i), action=allocation[i],
                proposal=proposals[i], reward=reward_local(net, self.rewards, i),
                next_state=self._agent_state(net, i)))

    def train(self, step):
        diags = [agent.train_step(step) for agent in self.agents]
        losses = [d.critic_loss for d in diags if d.updated]
        objs = [d.actor_objective for d in diags if d.actor_updated]
        tds = [d.mean_abs_td for d in diags if d.updated]
        return SchemeDiagnostics(
            critic_loss=float(np.mean(losses)) if losses else float("nan"),
            actor_objective=float(np.mean(objs)) if objs else float("nan"),
            mean_abs_td=float(np.mean(tds)) if tds else float("nan"),
            updated=any(d.updated for d in diags))

    def param_count(self):
        return self.agents[0].param_count()

    def total_param_count(self):
        return sum(agent.param_count() for agent in self.agents)

    def checkpoint(self):
        return {"kind": self.kind, "agents": [a.to_dict() for a in self.agents]}


def build_scheme(kind: str, scenario: Scenario, rewards: RewardSpec,
                 scaling: StateScaling, hyper: AgentHyperParams,
                 rng: np.random.Generator, anneal_steps: int,
                 static_allocation=None) -> Controller:
    if kind == "static_default":
        if static_allocation is None:
            n = scenario.slice_count
            static_allocation = [0.0, 0.8] + [0.2 / (n - 1)] * (n - 1) if n > 1 else [0.2, 0.8]
        return StaticController(scenario, rewards, scaling, static_allocation)
    if kind == "baseline":
        return BaselineController(scenario, rewards, scaling)
    if kind in ("cen_pen", "cen_soft"):
        return CentralController(scenario, rewards, scaling, hyper, rng, kind, anneal_steps)
    if kind in ("dist", "dist_comm"):
        return DistributedController(scenario, rewards, scaling, hyper, rng,
                                     kind == "dist_comm", anneal_steps)
    raise ConfigError(f"unknown scheme kind {kind!r}")
