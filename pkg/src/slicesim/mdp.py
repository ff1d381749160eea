"""RL-facing view of the network: state vectors, rewards, action projection.

Everything here is a pure function of value inputs, so agents and harness
code can call into it from anywhere without locking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netsim import SIMPLEX_ATOL, ConstraintViolationError, NetState, Topology

REWARD_VARIANTS = ("plain", "delay_aware", "penalized")
PENALTY_AGGREGATES = ("mean", "max")


@dataclass(frozen=True)
class StateScaling:
    """Normalizers bringing every state feature into [0, 1].

    Per-user throughput is divided by the slice requirement (and capped at 1,
    since over-serving carries no extra reward), user counts by the slice's
    population cap; loads are already fractions.
    """

    throughput_req: tuple[float, ...]
    group_size_max: tuple[int, ...]


@dataclass(frozen=True)
class RewardSpec:
    """Reward variant and constants.

    ``plain`` scores throughput ratios only; ``delay_aware`` adds the
    delay-requirement ratio; ``penalized`` uses the delay-aware base and
    marks that the scheme subtracts a budget penalty from it. The penalty
    itself is computed by :func:`reward_penalized`.
    """

    variant: str
    throughput_req: tuple[float, ...]
    delay_req: tuple[float, ...]
    beta: float = 1.2
    signed_penalty: bool = False
    penalty_aggregate: str = "mean"

    def __post_init__(self):
        if self.variant not in REWARD_VARIANTS:
            raise ValueError(f"unknown reward variant {self.variant!r}")
        if self.penalty_aggregate not in PENALTY_AGGREGATES:
            raise ValueError(f"unknown penalty aggregate {self.penalty_aggregate!r}")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if min(self.throughput_req) <= 0 or min(self.delay_req) <= 0:
            raise ValueError("requirements must be positive")

    @property
    def uses_delay(self) -> bool:
        return self.variant != "plain"


# ---------------------------------------------------------------------------
# states and messages
# ---------------------------------------------------------------------------


def local_state(net: NetState, k: int, scaling: StateScaling) -> np.ndarray:
    """Observation of cell k: [throughput ratios, loads, user fractions]."""
    phi = np.minimum(net.throughput[k] / np.asarray(scaling.throughput_req), 1.0)
    users = net.users[k] / np.asarray(scaling.group_size_max, dtype=float)
    return np.concatenate([phi, net.load[k], users])


def global_state(net: NetState, scaling: StateScaling) -> np.ndarray:
    """All local observations concatenated in cell order."""
    return np.concatenate([local_state(net, k, scaling) for k in range(net.cell_count)])


def extract_message(net: NetState, topology: Topology, k: int) -> np.ndarray:
    """Coordination message for cell k: per-slice mean of neighbour loads.

    Cells without neighbours get a zero message.
    """
    nbrs = topology.neighbors[k]
    if not nbrs:
        return np.zeros(net.slice_count)
    return net.load[list(nbrs)].mean(axis=0)


# ---------------------------------------------------------------------------
# rewards
# ---------------------------------------------------------------------------


def reward_local(net: NetState, spec: RewardSpec, k: int) -> float:
    """Bottleneck service score of cell k, in [0, 1].

    Per active slice the score is min(throughput ratio, delay ratio, 1);
    the cell score is the worst slice. Idle slices (no users) are skipped;
    a fully idle cell scores 1 so it never drags a global min down.
    """
    worst = 1.0
    any_active = False
    for n in range(net.slice_count):
        if net.users[k, n] == 0:
            continue
        any_active = True
        term = net.throughput[k, n] / spec.throughput_req[n]
        if spec.uses_delay:
            term = min(term, spec.delay_req[n] / net.delay[k, n])
        worst = min(worst, term)
    if not any_active:
        return 1.0
    return float(min(worst, 1.0))


def reward_global(net: NetState, spec: RewardSpec) -> float:
    """Network-wide score: the worst cell's local score."""
    return min(reward_local(net, spec, k) for k in range(net.cell_count))


def penalty_gaps(proposal: np.ndarray, signed: bool = False) -> np.ndarray:
    """Per-cell budget gap of a raw action proposal.

    Unsigned form |1 - sum| punishes over- and under-spending alike; the
    signed form (sum - 1) is kept for comparison but rewards under-spending.
    """
    a = np.asarray(proposal, dtype=float)
    gaps = a.sum(axis=-1) - 1.0
    return gaps if signed else np.abs(gaps)


def reward_penalized(raw_reward: float, proposal: np.ndarray, beta: float,
                     aggregate: str = "mean", signed: bool = False) -> float:
    """Raw reward minus beta times the aggregated budget gap."""
    gaps = np.atleast_1d(penalty_gaps(proposal, signed=signed))
    agg = gaps.mean() if aggregate == "mean" else gaps.max()
    return float(raw_reward - beta * agg)


# ---------------------------------------------------------------------------
# action projection
# ---------------------------------------------------------------------------


def project_or_reject(proposal: np.ndarray, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    """Turn a raw proposal into an executable on-simplex action.

    Proposals already satisfying the simplex constraint pass through
    unchanged. Otherwise negatives are clipped to zero and the row is
    renormalized; an all-zero row falls back to the uniform split.
    Non-finite proposals are rejected outright.
    """
    a = np.asarray(proposal, dtype=float)
    if not np.isfinite(a).all():
        raise ConstraintViolationError("action proposal contains non-finite entries")
    ok = (a >= 0.0).all(axis=-1) & (np.abs(a.sum(axis=-1) - 1.0) <= atol)
    if np.all(ok):
        return a.copy()
    clipped = np.clip(a, 0.0, None)
    sums = clipped.sum(axis=-1, keepdims=True)
    safe = np.where(sums > 0.0, sums, 1.0)
    scaled = np.where(sums > 0.0, clipped / safe, 1.0 / a.shape[-1])
    return np.where(np.asarray(ok)[..., None], a, scaled)
