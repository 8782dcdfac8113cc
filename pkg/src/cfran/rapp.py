"""Threshold-tuning rApp: a greedy multi-armed bandit over a grid of
cluster-threshold values, rewarded by the median of the per-user
throughput distribution observed over one decision epoch.

Exploration comes entirely from the untried-first rule: while any arm is
unpulled the lowest-index unpulled arm is forced, after which selection is
pure argmax of the exponentially smoothed reward estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import BanditConfig


class NoPendingAction(RuntimeError):
    """update() called with no select_action() pending."""


class EmptyWindow(ValueError):
    """Reward requested over an empty throughput sample."""


@dataclass
class BanditState:
    config: BanditConfig
    q_values: list[float] = field(default_factory=list)
    pull_counts: list[int] = field(default_factory=list)
    last_action: int | None = None
    epoch: int = 0

    def __post_init__(self):
        if not self.q_values:
            self.q_values = [self.config.optimistic_init] * len(self.config.arms)
        if not self.pull_counts:
            self.pull_counts = [0] * len(self.config.arms)
        if not (len(self.q_values) == len(self.pull_counts) == len(self.config.arms)):
            raise ValueError("q_values, pull_counts and arms must have equal length")

    def snapshot(self) -> dict:
        return {
            "arms": list(self.config.arms),
            "q_values": list(self.q_values),
            "pull_counts": list(self.pull_counts),
            "epoch": self.epoch,
        }


def new_state(config: BanditConfig) -> BanditState:
    return BanditState(config=config)


def select_action(state: BanditState) -> int:
    """Arm index for the next epoch: lowest-index unpulled arm while any
    remain, then greedy argmax with ties to the lowest index."""
    for i, n in enumerate(state.pull_counts):
        if n == 0:
            state.last_action = i
            return i
    arm = int(np.argmax(state.q_values))  # argmax takes the first maximum
    state.last_action = arm
    return arm


def update(state: BanditState, reward: float) -> BanditState:
    """Exponential moving average toward the observed reward, on the
    last-pulled arm only: Q <- alpha*r + (1 - alpha)*Q."""
    if state.last_action is None:
        raise NoPendingAction("select_action must run before update")
    if not np.isfinite(reward) or reward < 0:
        raise ValueError(f"reward must be finite and >= 0, got {reward}")
    a = state.last_action
    alpha = state.config.alpha
    state.q_values[a] = alpha * reward + (1.0 - alpha) * state.q_values[a]
    state.pull_counts[a] += 1
    state.epoch += 1
    state.last_action = None
    return state


def compute_reward(samples) -> float:
    """Median per-user throughput over the epoch window (even count: mean
    of the two middle order statistics)."""
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise EmptyWindow("no throughput samples in window")
    return float(np.median(arr))
