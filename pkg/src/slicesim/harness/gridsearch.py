"""Exhaustive static-allocation search for single-cell, constant-traffic scenarios.

Used as an independent optimum oracle: when the cell graph has one node and
every traffic mask is constant, the network state does not depend on time, so
the long-run reward of a fixed allocation equals its one-step reward. The
best grid point then bounds what any controller can achieve (up to grid
resolution).
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from ..mdp import RewardSpec, reward_global
from ..netsim import (ConfigError, Scenario, UserDistribution, active_user_target,
                      compute_kpis, offered_traffic, solve_coupled_loads,
                      validate_allocation)


def simplex_grid(parts: int, resolution: int):
    """Yield every length-``parts`` vector of multiples of 1/resolution summing to 1."""
    if parts < 1 or resolution < 1:
        raise ValueError("parts and resolution must be positive")
    for bars in combinations(range(resolution + parts - 1), parts - 1):
        counts = []
        prev = -1
        for b in bars + (resolution + parts - 1,):
            counts.append(b - prev - 1)
            prev = b
        yield np.array(counts, dtype=float) / resolution


def _require_static(scenario: Scenario) -> None:
    if scenario.cell_count != 1:
        raise ConfigError("grid search needs a single-cell scenario")
    for n, mask in enumerate(scenario.masks):
        values = {v for _, v in mask.breakpoints}
        if len(values) != 1:
            raise ConfigError(f"grid search needs constant masks, slice {n} varies")


def evaluate_static(scenario: Scenario, rewards: RewardSpec, allocation) -> float:
    """Steady-state global reward of one fixed allocation."""
    _require_static(scenario)
    sc = scenario
    targets = [active_user_target(g, m.value(0.0))
               for g, m in zip(sc.group_size_max, sc.masks)]
    dist = UserDistribution(np.array([targets], dtype=int), tuple(sc.group_size_max))
    offered = offered_traffic(dist, sc.slices)
    alloc = np.asarray(allocation, dtype=float).reshape(1, sc.slice_count + 1)
    validate_allocation(alloc, 1, sc.slice_count)
    loads, converged, _ = solve_coupled_loads(sc.topology, alloc, offered,
                                              tol=sc.fp_tol, max_iter=sc.fp_max_iter)
    state = compute_kpis(sc.topology, alloc, offered, loads, dist, 0,
                         sc.delay_base_s, sc.load_cap, fp_converged=converged)
    return reward_global(state, rewards)


def grid_search(scenario: Scenario, rewards: RewardSpec, step: float = 0.01) -> dict:
    """Evaluate every allocation on the simplex grid; returns the best one.

    Ties keep the first hit in enumeration order, so results are
    deterministic for a given step size.
    """
    if not 0.0 < step <= 1.0:
        raise ValueError("step must lie in (0, 1]")
    _require_static(scenario)
    resolution = int(round(1.0 / step))
    best_alloc = None
    best_reward = -np.inf
    points = 0
    for alloc in simplex_grid(scenario.slice_count + 1, resolution):
        points += 1
        r = evaluate_static(scenario, rewards, alloc)
        if r > best_reward:
            best_reward = r
            best_alloc = alloc
    return {
        "allocation": [float(x) for x in best_alloc],
        "reward": float(best_reward),
        "step": float(step),
        "points": points,
    }
