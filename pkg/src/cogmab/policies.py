"""Channel-selection policies.

Every distributed step function draws exactly one uniform variate from the
user's stream per call, whether or not a new rank is needed. That keeps the
random stream aligned with the slot index, which is what lets the scalar
reference simulator and the batched engine agree bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .indices import UserBeliefState, rank_channels
from .model import ChannelParams, InputDomainError

POLICIES = ("single", "centralized", "rho_rand", "rho_est", "perfect_rho_rand")


@dataclass
class PolicyState:
    """Mutable per-user state of the rank-based policies.

    ``phi[i]`` counts collisions observed on channel ``i`` since the last
    reset of the user-count estimate. ``rank`` is 1-based.
    """

    kind: str
    channels: int
    u_hat: int = 1
    rank: int = 1
    statistic: str = "mean"
    last_collided: bool = False
    phi: np.ndarray = None
    clamped: int = 0

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise InputDomainError(f"unknown policy {self.kind!r}")
        if self.phi is None:
            self.phi = np.zeros(self.channels, dtype=np.int64)


@dataclass(frozen=True)
class OraclePolicyParams:
    """Ground truth handed to the perfect-knowledge baseline only."""

    true_mu: ChannelParams


def draw_rank(u, pool):
    """Map a uniform variate on [0, 1) to a rank uniform on {1..pool}."""
    return np.minimum(np.floor(u * pool).astype(np.int64) + 1, pool)


def single_user_step(belief: UserBeliefState, statistic: str) -> int:
    return int(rank_channels(belief.scores(statistic))[0])


def centralized_step(pooled: UserBeliefState, users: int, statistic: str) -> np.ndarray:
    """Assign user ``j`` to the ``j``-th best channel of the pooled index."""
    if users > pooled.channels:
        raise InputDomainError(f"U={users} exceeds C={pooled.channels}")
    return rank_channels(pooled.scores(statistic))[:users]


def rho_rand_step(belief: UserBeliefState, state: PolicyState, users: int,
                  statistic: str, rng: np.random.Generator):
    """Redraw the rank after a collision, then target the rank-th best channel."""
    u = rng.random()
    if state.last_collided:
        state.rank = int(draw_rank(u, users))
    order = rank_channels(belief.scores(statistic))
    return int(order[state.rank - 1]), state


def perfect_rho_rand_step(oracle: OraclePolicyParams, state: PolicyState, users: int,
                          rng: np.random.Generator, rank_pool: int | None = None):
    """Randomized allocation when the true availability order is known."""
    u = rng.random()
    if state.last_collided:
        state.rank = int(draw_rank(u, rank_pool or users))
    return int(oracle.true_mu.order[state.rank - 1]), state


def rho_rand_feedback(state: PolicyState, collided: bool) -> PolicyState:
    state.last_collided = bool(collided)
    return state


def make_threshold(horizon: int, k: int, scale: float = 1.0) -> float:
    """Collision threshold for growing the user-count estimate past ``k``.

    One collision already proves there is more than one user, so the bar for
    ``k == 1`` is 1. Beyond that the threshold is ``scale * ln n * ln ln n``,
    which outgrows ``ln n``.
    """
    if k < 1 or scale <= 0:
        raise InputDomainError("need k >= 1 and scale > 0")
    if k == 1:
        return 1.0
    if horizon < 3:
        raise InputDomainError("horizon must be >= 3 for k > 1 (ln ln n undefined)")
    log_n = math.log(horizon)
    return scale * log_n * math.log(log_n)


def max_threshold(horizon: int, users: int, scale: float = 1.0) -> float:
    """Largest threshold over estimates 1..users."""
    return max(make_threshold(horizon, k, scale) for k in range(1, users + 1))


def rho_est_step(belief: UserBeliefState, state: PolicyState, statistic: str,
                 rng: np.random.Generator):
    """Channel choice under an unknown number of users.

    Returns ``(channel, scores, state)``; the scores are needed again by
    :func:`rho_est_feedback` for the same slot.
    """
    u = rng.random()
    if state.last_collided:
        state.rank = int(draw_rank(u, state.u_hat))
    scores = belief.scores(statistic)
    order = rank_channels(scores)
    return int(order[state.rank - 1]), scores, state


def collision_count(state: PolicyState, scores) -> int:
    """Collisions recorded on the current top-``u_hat`` channels of ``scores``."""
    top = rank_channels(scores)[: state.u_hat]
    return int(state.phi[top].sum())


def rho_est_feedback(state: PolicyState, channel: int, collided: bool, scores,
                     horizon: int, scale: float = 1.0) -> PolicyState:
    """Record this slot's feedback and grow ``u_hat`` if the count exceeds the threshold.

    Crossing the threshold wipes the whole collision history, including this
    slot's indicator, so the next slot keeps the current rank.
    """
    state.last_collided = bool(collided)
    if collided:
        state.phi[channel] += 1
    if collision_count(state, scores) > make_threshold(horizon, state.u_hat, scale):
        if state.u_hat < state.channels:
            state.u_hat += 1
        else:
            state.clamped += 1
        state.phi[:] = 0
        state.last_collided = False
    return state
