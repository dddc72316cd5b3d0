"""Per-user channel beliefs and the two index statistics.

``mean``: sample mean + sqrt(2 ln n / T)
``opt``:  sample mean + min(sqrt(ln n / (2 T)), 1)

where ``n`` is the number of slots the user has observed and ``T`` the number
of times the channel was sensed. Natural logarithms throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import InputDomainError

STATISTICS = ("mean", "opt")


@dataclass
class UserBeliefState:
    """Counts of free observations and of sensing events per channel.

    The sample mean is kept as the ratio of two integer counters, so the
    streaming value equals the batch mean of the stored observations exactly.
    """

    free_count: np.ndarray
    count: np.ndarray
    n: int = 0

    @classmethod
    def empty(cls, channels: int) -> "UserBeliefState":
        return cls(np.zeros(channels, dtype=np.int64), np.zeros(channels, dtype=np.int64), 0)

    @property
    def channels(self) -> int:
        return self.count.size

    @property
    def sample_mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.free_count / self.count

    def scores(self, statistic: str) -> np.ndarray:
        return index_scores(self.free_count, self.count, self.n, statistic)


def update_belief(state: UserBeliefState, channel: int, observed_free: bool) -> UserBeliefState:
    if not 0 <= channel < state.channels:
        raise InputDomainError(f"channel {channel} out of range")
    state.count[channel] += 1
    state.free_count[channel] += bool(observed_free)
    state.n += 1
    return state


def pool_beliefs(beliefs) -> UserBeliefState:
    """Merge several users' observations into one central belief."""
    beliefs = list(beliefs)
    return UserBeliefState(
        free_count=np.sum([b.free_count for b in beliefs], axis=0),
        count=np.sum([b.count for b in beliefs], axis=0),
        n=sum(b.n for b in beliefs),
    )


def exploration_bonus(statistic: str, log_n: float, count):
    """Exploration term for a given ln(n); ``count`` may be an array."""
    if statistic == "mean":
        return np.sqrt(2.0 * log_n / count)
    if statistic == "opt":
        return np.minimum(np.sqrt(log_n / (2.0 * count)), 1.0)
    raise InputDomainError(f"unknown statistic {statistic!r}; expected one of {STATISTICS}")


def index_scores(free_count, count, n: int, statistic: str) -> np.ndarray:
    """Index of every channel; works on any array shape with channels last.

    This is the single implementation shared by the scalar and batched
    simulators, which keeps their rankings bit-identical.
    """
    log_n = math.log(n)
    return free_count / count + exploration_bonus(statistic, log_n, count)


def g_mean(state: UserBeliefState, channel: int) -> float:
    return float(index_scores(state.free_count[channel], state.count[channel], state.n, "mean"))


def g_opt(state: UserBeliefState, channel: int) -> float:
    return float(index_scores(state.free_count[channel], state.count[channel], state.n, "opt"))


def rank_channels(scores) -> np.ndarray:
    """Channels from highest to lowest score; ties go to the lower index."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")
