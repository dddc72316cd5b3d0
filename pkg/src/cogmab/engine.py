"""Batched slot simulator.

Runs a block of replications side by side with numpy arrays shaped
``(replications, users, channels)``. Every replication owns one random
stream; per slot it consumes ``U`` rank uniforms (one per user, in user
order) followed by ``C`` availability uniforms. The scalar reference
simulator in :mod:`cogmab.harness` consumes the same stream in the same
order, so both produce identical ledgers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .indices import index_scores
from .policies import draw_rank, make_threshold

_CHUNK = 1024


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """Stream of replication ``rep``; independent of how replications are batched."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(rep,))))


def log_checkpoints(horizon: int, extra=()) -> np.ndarray:
    """Slots 1, round(1.25**k), ... up to ``horizon`` (always included)."""
    pts = {horizon}
    x = 1.0
    while x <= horizon:
        pts.add(int(round(x)))
        x *= 1.25
    pts.update(int(e) for e in extra if 1 <= int(e) <= horizon)
    return np.array(sorted(pts), dtype=np.int64)


def initial_choices(policy: str, users: int, channels: int, slot: int) -> np.ndarray:
    """Channels sensed in initialization slot ``slot`` (1-based).

    Distributed users have no way to coordinate, so all of them sweep the
    channels in index order. The central agent staggers its users.
    """
    base = np.full(users, slot - 1, dtype=np.int64)
    if policy == "centralized":
        base = (base + np.arange(users)) % channels
    return base


@dataclass
class BatchResult:
    """Raw per-replication output of :func:`simulate_block`.

    Series arrays are shaped ``(R, K)`` or ``(R, K, U)`` for ``K``
    checkpoints; final-state arrays are ``(R, ...)``.
    """

    checkpoints: np.ndarray
    series: dict
    t_ij: np.ndarray
    v_ij: np.ndarray
    successes: np.ndarray
    m_best: np.ndarray
    t_prime: np.ndarray
    final_channel: np.ndarray
    best_slots: np.ndarray
    sole_best_at_end: np.ndarray
    u_hat: np.ndarray
    clamped: np.ndarray
    absorption_time: np.ndarray


def simulate_block(cfg, reps) -> BatchResult:
    """Simulate replications ``reps`` of ``cfg`` (an ExperimentConfig)."""
    reps = list(reps)
    R, U, C, n = len(reps), cfg.users, cfg.channels, cfg.horizon
    mu = np.asarray(cfg.mu, dtype=float)
    true_order = np.argsort(-mu, kind="stable")
    best_mask = np.zeros(C, dtype=bool)
    best_mask[true_order[:U]] = True
    top_u = true_order[:U]
    best_channel = true_order[0]
    policy, stat = cfg.policy, cfg.statistic
    overlap_feedback = cfg.feedback == "sensing_overlap"
    rank_policy = policy in ("rho_rand", "rho_est", "perfect_rho_rand")
    rank_pool = cfg.rank_pool or U

    rngs = [replication_rng(cfg.seed, r) for r in reps]
    checkpoints = log_checkpoints(n, cfg.checkpoints)
    K = checkpoints.size
    cp_index = {int(s): i for i, s in enumerate(checkpoints)}

    free = np.zeros((R, U, C), dtype=np.int64)
    cnt = np.zeros((R, U, C), dtype=np.int64)
    vij = np.zeros((R, U, C), dtype=np.int64)
    successes = np.zeros((R, U), dtype=np.int64)
    fb_count = np.zeros(R, dtype=np.int64)
    m_best = np.zeros(R, dtype=np.int64)
    t_prime = np.zeros(R, dtype=np.int64)
    best_slots = np.zeros((R, U), dtype=np.int64)
    rank = np.ones((R, U), dtype=np.int64)
    u_hat = np.ones((R, U), dtype=np.int64) if policy == "rho_est" else np.full((R, U), U, dtype=np.int64)
    phi = np.zeros((R, U, C), dtype=np.int64)
    last_coll = np.zeros((R, U), dtype=bool)
    clamped = np.zeros((R, U), dtype=np.int64)
    absorption = np.full(R, -1, dtype=np.int64)
    if policy == "rho_est":
        xi_one = make_threshold(n, 1, cfg.threshold_scale)
        xi_more = make_threshold(n, 2, cfg.threshold_scale) if n >= 3 else math.inf

    series = {name: np.zeros((R, K)) for name in
              ("regret", "collisions", "wrong_order", "feedback_collisions", "uworst_time")}
    series["successes"] = np.zeros((R, K, U))
    series["u_hat"] = np.zeros((R, K, U))

    ar_r = np.arange(R)[:, None]
    ar_u = np.arange(U)[None, :]
    chan = np.arange(C)
    opt_rate = math.fsum(np.sort(mu)[::-1][:U])
    choice = np.zeros((R, U), dtype=np.int64)
    block = None

    for k in range(1, n + 1):
        off = (k - 1) % _CHUNK
        if off == 0:
            size = min(_CHUNK, n - k + 1)
            block = np.stack([g.random((size, U + C)) for g in rngs])
        u_rank = block[:, off, :U]
        avail = block[:, off, U:] < mu

        main = k > C
        order = None
        if not main:
            choice[:] = initial_choices(policy, U, C, k)
        elif policy == "perfect_rho_rand":
            if rank_policy:
                rank = np.where(last_coll, draw_rank(u_rank, rank_pool), rank)
            choice = true_order[rank - 1]
            order = np.broadcast_to(true_order, (R, U, C))
        elif policy == "centralized":
            scores = index_scores(free.sum(axis=1), cnt.sum(axis=1), U * (k - 1), stat)
            pooled_order = np.argsort(-scores, axis=-1, kind="stable")
            choice = pooled_order[:, :U].copy()
            order = np.broadcast_to(pooled_order[:, None, :], (R, U, C))
        else:
            scores = index_scores(free, cnt, k - 1, stat)
            order = np.argsort(-scores, axis=-1, kind="stable")
            if policy == "single":
                choice = order[:, :, 0].copy()
            else:
                pool = u_hat if policy == "rho_est" else U
                rank = np.where(last_coll, draw_rank(u_rank, pool), rank)
                choice = np.take_along_axis(order, (rank - 1)[..., None], axis=2)[..., 0]

        onehot = choice[..., None] == chan
        occ = onehot.sum(axis=1)
        occ_choice = np.take_along_axis(occ, choice, axis=1)
        free_choice = np.take_along_axis(avail, choice, axis=1)
        transmitted = free_choice & (main or cfg.transmit_during_init)
        ntx = (onehot & transmitted[..., None]).sum(axis=1)
        ack = transmitted & (np.take_along_axis(ntx, choice, axis=1) == 1)
        collided = transmitted & ~ack
        overlap = occ_choice >= 2
        sole = occ_choice == 1

        cnt += onehot
        free += onehot & free_choice[..., None]
        vij += onehot & sole[..., None]
        successes += ack
        m_best += np.where(best_mask & (occ >= 2), occ, 0).sum(axis=1)
        if order is None:
            t_prime += 1
        else:
            t_prime += (order[..., :U] != top_u).any(axis=(1, 2))
        best_slots += choice == best_channel

        if main:
            fb = overlap if overlap_feedback else collided
            fb_count += fb.sum(axis=1)
            if absorption.min() < 0:
                newly = (absorption < 0) & (occ.max(axis=1) <= 1)
                absorption[newly] = k - (C + 1)
            if rank_policy:
                last_coll = fb.copy()
            if policy == "rho_est":
                phi += onehot & fb[..., None]
                pos = np.empty_like(order)
                np.put_along_axis(pos, order, chan, axis=2)
                in_top = pos < u_hat[..., None]
                count = (phi * in_top).sum(axis=2)
                xi = np.where(u_hat == 1, xi_one, xi_more)
                over = count > xi
                if over.any():
                    clamped += over & (u_hat >= C)
                    u_hat = np.where(over, np.minimum(u_hat + 1, C), u_hat)
                    phi[over] = 0
                    last_coll &= ~over

        i = cp_index.get(k)
        if i is not None:
            v_i = vij.sum(axis=1)
            t_i = cnt.sum(axis=1)
            series["regret"][:, i] = k * opt_rate - v_i @ mu
            series["collisions"][:, i] = m_best
            series["wrong_order"][:, i] = t_prime
            series["feedback_collisions"][:, i] = fb_count
            series["uworst_time"][:, i] = t_i[:, ~best_mask].sum(axis=1)
            series["successes"][:, i] = successes
            series["u_hat"][:, i] = u_hat

    return BatchResult(
        checkpoints=checkpoints,
        series=series,
        t_ij=cnt,
        v_ij=vij,
        successes=successes,
        m_best=m_best,
        t_prime=t_prime,
        final_channel=choice.copy(),
        best_slots=best_slots,
        sole_best_at_end=(choice == best_channel) & sole,
        u_hat=u_hat,
        clamped=clamped,
        absorption_time=absorption,
    )
