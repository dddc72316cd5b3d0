"""Slotted channel environment, collision resolution and run accounting.

Channels are indexed from 0. A user senses exactly one channel per slot and
transmits only if that channel is free of primary traffic. If two or more
users transmit on the same free channel, every one of those transmissions
fails.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InputDomainError(ValueError):
    """Raised when an argument falls outside the domain an operation accepts."""


@dataclass(frozen=True)
class ChannelParams:
    """Ground-truth mean availabilities of the channels.

    ``mu[i]`` is the probability that channel ``i`` is free in a slot.
    Policies never see this object (except the perfect-knowledge baseline).
    """

    mu: np.ndarray
    allow_ties: bool = False

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).copy()
        if mu.ndim != 1 or mu.size < 1:
            raise InputDomainError("mu must be a non-empty 1-d vector (C >= 1)")
        if not np.all((mu > 0.0) & (mu < 1.0)):
            raise InputDomainError("every mu[i] must lie strictly inside (0, 1)")
        if not self.allow_ties and np.unique(mu).size != mu.size:
            raise InputDomainError("mu entries must be pairwise distinct")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def channels(self) -> int:
        return int(self.mu.size)

    @property
    def order(self) -> np.ndarray:
        """Channels sorted from best to worst (ties by lower index)."""
        return np.argsort(-self.mu, kind="stable")

    def best(self, users: int) -> np.ndarray:
        """Indices of the ``users``-best channels, best first."""
        return self.order[:users]

    def worst(self, users: int) -> np.ndarray:
        return self.order[users:]


@dataclass
class SlotOutcome:
    """Everything that happened in one slot.

    ``collided`` marks failed transmissions only. ``overlap`` marks users who
    shared their sensed channel with at least one other user, whether or not
    the channel was free; it is the feedback of the idealized mode.
    """

    availability: np.ndarray
    choices: np.ndarray
    transmitted: np.ndarray
    ack: np.ndarray
    collided: np.ndarray
    overlap: np.ndarray
    occupants: np.ndarray

    def feedback(self, mode: str) -> np.ndarray:
        if mode == "transmission":
            return self.collided
        if mode == "sensing_overlap":
            return self.overlap
        raise InputDomainError(f"unknown feedback mode {mode!r}")


@dataclass
class RunLedger:
    """Per-run counters, indexed ``[user, channel]``.

    ``t_ij`` counts sensing events, ``v_ij`` counts slots where the user was
    the sole user sensing that channel. ``m_best`` is the number of non-sole
    sensing events in the true U-best channels and ``t_prime`` the number of
    slots in which some user's estimated top-U order was wrong.
    """

    t_ij: np.ndarray
    v_ij: np.ndarray
    successes: np.ndarray
    m_best: int = 0
    t_prime: int = 0
    slot: int = 0

    @classmethod
    def new(cls, users: int, channels: int) -> "RunLedger":
        return cls(
            t_ij=np.zeros((users, channels), dtype=np.int64),
            v_ij=np.zeros((users, channels), dtype=np.int64),
            successes=np.zeros(users, dtype=np.int64),
        )

    @property
    def users(self) -> int:
        return self.t_ij.shape[0]

    def copy(self) -> "RunLedger":
        return RunLedger(
            self.t_ij.copy(), self.v_ij.copy(), self.successes.copy(),
            self.m_best, self.t_prime, self.slot,
        )

    def __eq__(self, other):
        if not isinstance(other, RunLedger):
            return NotImplemented
        return (
            np.array_equal(self.t_ij, other.t_ij)
            and np.array_equal(self.v_ij, other.v_ij)
            and np.array_equal(self.successes, other.successes)
            and self.m_best == other.m_best
            and self.t_prime == other.t_prime
            and self.slot == other.slot
        )


def sample_slot(params: ChannelParams, rng: np.random.Generator) -> np.ndarray:
    """Draw the free/occupied state W(k) of every channel for one slot."""
    return rng.random(params.channels) < params.mu


def resolve_slot(choices, availability, suppress_transmission: bool = False) -> SlotOutcome:
    """Resolve sensing and transmission for one slot.

    With ``suppress_transmission`` set (initialization slots) users sense but
    nobody transmits, so no acknowledgement or collision is produced.
    """
    choices = np.asarray(choices, dtype=np.int64)
    availability = np.asarray(availability, dtype=bool)
    channels = availability.size
    if choices.size and (choices.min() < 0 or choices.max() >= channels):
        raise InputDomainError(f"channel choice out of range [0, {channels})")
    occupants = np.bincount(choices, minlength=channels)
    free = availability[choices]
    transmitted = free & (not suppress_transmission)
    transmitters = np.bincount(choices[transmitted], minlength=channels)
    ack = transmitted & (transmitters[choices] == 1)
    return SlotOutcome(
        availability=availability,
        choices=choices,
        transmitted=transmitted,
        ack=ack,
        collided=transmitted & ~ack,
        overlap=occupants[choices] >= 2,
        occupants=occupants,
    )


def top_order_wrong(scores, true_order: np.ndarray, users: int) -> bool:
    """True if the ordered top-``users`` channels of ``scores`` differ from truth."""
    if scores is None:
        return True
    estimated = np.argsort(-np.asarray(scores), kind="stable")[:users]
    return not np.array_equal(estimated, true_order[:users])


def update_ledger(ledger: RunLedger, outcome: SlotOutcome, params: ChannelParams,
                  users: int, belief_snapshots=None) -> RunLedger:
    """Fold one resolved slot into ``ledger`` (in place) and return it.

    ``belief_snapshots`` holds the score vector each user ranked channels by
    in this slot. ``None`` (initialization slots, where no estimate exists
    yet) counts as a wrong-order slot.
    """
    rows = np.arange(outcome.choices.size)
    sole = outcome.occupants[outcome.choices] == 1
    ledger.t_ij[rows, outcome.choices] += 1
    ledger.v_ij[rows[sole], outcome.choices[sole]] += 1
    ledger.successes += outcome.ack

    best = params.best(users)
    occ = outcome.occupants[best]
    ledger.m_best += int(occ[occ >= 2].sum())

    order = params.order
    if belief_snapshots is None:
        wrong = True
    else:
        wrong = any(top_order_wrong(s, order, users) for s in belief_snapshots)
    ledger.t_prime += int(wrong)
    ledger.slot += 1
    return ledger


def accounting_collisions(ledger: RunLedger, params: ChannelParams) -> int:
    """Recompute M(n) from the ledger as sum over U-best of (T_i - V_i)."""
    best = params.best(ledger.users)
    t_i = ledger.t_ij.sum(axis=0)
    v_i = ledger.v_ij.sum(axis=0)
    return int((t_i[best] - v_i[best]).sum())
