"""Monte Carlo experiment runner.

Replications are split into fixed-size blocks that are simulated by
:func:`cogmab.engine.simulate_block`, optionally in worker processes. Block
boundaries never affect results, because each replication draws from its
own stream, so the aggregate is the same for any number of workers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis
from .engine import BatchResult, initial_choices, log_checkpoints, replication_rng, simulate_block
from .indices import STATISTICS, UserBeliefState, pool_beliefs, update_belief
from .model import ChannelParams, InputDomainError, RunLedger, resolve_slot, sample_slot, update_ledger
from .policies import (
    POLICIES, OraclePolicyParams, PolicyState, centralized_step, perfect_rho_rand_step,
    rho_est_feedback, rho_est_step, rho_rand_feedback, rho_rand_step, single_user_step,
)

FEEDBACK_MODES = ("transmission", "sensing_overlap")
BLOCK_SIZE = 512
WORKERS_ENV = "COGMAB_WORKERS"


class ConfigError(InputDomainError):
    """An experiment configuration violates one of its invariants."""


def default_mu(channels: int) -> list[float]:
    """0.1, 0.2, ... for up to nine channels; evenly spaced in (0, 1) beyond."""
    if channels <= 9:
        return [round(0.1 * (i + 1), 10) for i in range(channels)]
    return [(i + 1) / (channels + 1) for i in range(channels)]


@dataclass(frozen=True)
class ExperimentConfig:
    users: int
    mu: tuple
    horizon: int
    replications: int = 1
    policy: str = "rho_rand"
    statistic: str = "mean"
    feedback: str = "transmission"
    threshold_scale: float = 1.0
    seed: int = 0
    workers: int = 1
    transmit_during_init: bool = False
    rank_pool: int | None = None
    checkpoints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))
        object.__setattr__(self, "checkpoints", tuple(int(c) for c in self.checkpoints))
        self.validate()

    @property
    def channels(self) -> int:
        return len(self.mu)

    def validate(self):
        try:
            ChannelParams(self.mu)
        except InputDomainError as exc:
            raise ConfigError(str(exc)) from None
        if not 1 <= self.users <= self.channels:
            raise ConfigError(f"U <= C violated: U={self.users}, C={self.channels}")
        if self.horizon < self.channels:
            raise ConfigError(f"n >= C violated: n={self.horizon}, C={self.channels}")
        if self.replications < 1:
            raise ConfigError("R >= 1 violated")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.statistic not in STATISTICS:
            raise ConfigError(f"unknown statistic {self.statistic!r}")
        if self.feedback not in FEEDBACK_MODES:
            raise ConfigError(f"unknown feedback mode {self.feedback!r}")
        if self.threshold_scale <= 0:
            raise ConfigError("threshold scale must be > 0")
        if self.policy == "rho_est" and self.horizon < 3:
            raise ConfigError("rho_est needs a horizon n >= 3")
        if self.rank_pool is not None:
            if self.policy != "perfect_rho_rand":
                raise ConfigError("rank_pool only applies to perfect_rho_rand")
            if not self.users <= self.rank_pool <= self.channels:
                raise ConfigError("rank_pool must satisfy U <= rank_pool <= C")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def params(self) -> ChannelParams:
        return ChannelParams(self.mu)


@dataclass
class ReplicationResult:
    ledger: RunLedger
    checkpoints: np.ndarray
    series: dict
    final_channel: np.ndarray
    best_slots: np.ndarray
    sole_best_at_end: np.ndarray
    u_hat: np.ndarray
    absorption_time: int


@dataclass
class MetricsSeries:
    """Replication means and standard errors at each checkpoint.

    ``final`` keeps the end-of-run per-replication arrays (leading axis R)
    for histograms and tail statistics.
    """

    checkpoints: np.ndarray
    mean: dict
    stderr: dict
    replications: int
    final: dict = field(default_factory=dict)

    def at(self, metric: str, slot: int):
        i = int(np.searchsorted(self.checkpoints, slot))
        if i >= self.checkpoints.size or self.checkpoints[i] != slot:
            raise KeyError(f"slot {slot} is not a checkpoint")
        return self.mean[metric][i], self.stderr[metric][i]


def _ledger(batch: BatchResult, r: int) -> RunLedger:
    return RunLedger(
        t_ij=batch.t_ij[r].copy(), v_ij=batch.v_ij[r].copy(),
        successes=batch.successes[r].copy(), m_best=int(batch.m_best[r]),
        t_prime=int(batch.t_prime[r]), slot=int(batch.t_ij[r, 0].sum()),
    )


def run_replication(config: ExperimentConfig, rep: int = 0) -> ReplicationResult:
    """One replication through the batched engine."""
    b = simulate_block(config, [rep])
    return ReplicationResult(
        ledger=_ledger(b, 0),
        checkpoints=b.checkpoints,
        series={k: v[0] for k, v in b.series.items()},
        final_channel=b.final_channel[0],
        best_slots=b.best_slots[0],
        sole_best_at_end=b.sole_best_at_end[0],
        u_hat=b.u_hat[0],
        absorption_time=int(b.absorption_time[0]),
    )


def run_reference(config: ExperimentConfig, rep: int = 0, trace: list | None = None):
    """Slot-by-slot replication built from the per-user step functions.

    Much slower than :func:`run_replication` but written directly in terms of
    the model, belief and policy operations. Returns ``(ledger, states)``.
    ``trace``, if given, receives ``(slot, ranks_before, outcome)`` per slot.
    """
    U, C, n = config.users, config.channels, config.horizon
    params = config.params
    rng = replication_rng(config.seed, rep)
    beliefs = [UserBeliefState.empty(C) for _ in range(U)]
    states = [PolicyState(config.policy, C, u_hat=1 if config.policy == "rho_est" else U,
                          statistic=config.statistic) for _ in range(U)]
    oracle = OraclePolicyParams(params)
    ledger = RunLedger.new(U, C)
    for k in range(1, n + 1):
        main = k > C
        snapshots = None
        scores = [None] * U
        ranks_before = [s.rank for s in states]
        if not main:
            rng.random(U)
            choices = initial_choices(config.policy, U, C, k)
        elif config.policy == "single":
            rng.random(U)
            scores = [b.scores(config.statistic) for b in beliefs]
            choices = np.array([single_user_step(b, config.statistic) for b in beliefs])
            snapshots = scores
        elif config.policy == "centralized":
            rng.random(U)
            pooled = pool_beliefs(beliefs)
            choices = centralized_step(pooled, U, config.statistic)
            snapshots = [pooled.scores(config.statistic)] * U
        elif config.policy == "perfect_rho_rand":
            choices = np.array([perfect_rho_rand_step(oracle, s, U, rng, config.rank_pool)[0]
                                for s in states])
            snapshots = [params.mu] * U
        elif config.policy == "rho_rand":
            choices = np.array([rho_rand_step(b, s, U, config.statistic, rng)[0]
                                for b, s in zip(beliefs, states)])
            scores = snapshots = [b.scores(config.statistic) for b in beliefs]
        else:
            picks = [rho_est_step(b, s, config.statistic, rng) for b, s in zip(beliefs, states)]
            choices = np.array([p[0] for p in picks])
            scores = snapshots = [p[1] for p in picks]
        availability = sample_slot(params, rng)
        outcome = resolve_slot(choices, availability,
                               suppress_transmission=not (main or config.transmit_during_init))
        update_ledger(ledger, outcome, params, U, snapshots)
        for j, b in enumerate(beliefs):
            update_belief(b, int(choices[j]), bool(availability[choices[j]]))
        if main:
            fb = outcome.feedback(config.feedback)
            for j, s in enumerate(states):
                if config.policy == "rho_est":
                    rho_est_feedback(s, int(choices[j]), bool(fb[j]), scores[j],
                                     n, config.threshold_scale)
                elif config.policy in ("rho_rand", "perfect_rho_rand"):
                    rho_rand_feedback(s, bool(fb[j]))
        if trace is not None:
            trace.append((k, ranks_before, outcome))
    return ledger, states


def aggregate(batches: list[BatchResult], config: ExperimentConfig) -> MetricsSeries:
    """Reduce per-replication results (in replication order) to means and stderrs."""
    series = {k: np.concatenate([b.series[k] for b in batches]) for k in batches[0].series}
    R = next(iter(series.values())).shape[0]
    mean = {k: v.mean(axis=0) for k, v in series.items()}
    if R > 1:
        stderr = {k: v.std(axis=0, ddof=1) / math.sqrt(R) for k, v in series.items()}
    else:
        stderr = {k: np.zeros_like(v[0]) for k, v in series.items()}
    final_names = ("t_ij", "v_ij", "successes", "m_best", "t_prime", "final_channel",
                   "best_slots", "sole_best_at_end", "u_hat", "clamped", "absorption_time")
    final = {k: np.concatenate([getattr(b, k) for b in batches]) for k in final_names}
    final["regret"] = series["regret"][:, -1]
    return MetricsSeries(batches[0].checkpoints, mean, stderr, R, final)


def _blocks(config: ExperimentConfig):
    reps = range(config.replications)
    return [list(reps[i:i + BLOCK_SIZE]) for i in range(0, len(reps), BLOCK_SIZE)]


def _run_block(args):
    config, reps = args
    return simulate_block(config, reps)


def run_experiment(config: ExperimentConfig) -> MetricsSeries:
    """All replications of ``config``, aggregated.

    ``config.workers`` (or the ``COGMAB_WORKERS`` environment variable when
    the config leaves it at 1) sets the number of worker processes.
    """
    workers = config.workers
    if workers == 1 and os.environ.get(WORKERS_ENV):
        workers = max(1, int(os.environ[WORKERS_ENV]))
    jobs = [(config, reps) for reps in _blocks(config)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_block, jobs))
    else:
        batches = [_run_block(j) for j in jobs]
    return aggregate(batches, config)


@dataclass
class SweepPoint:
    value: int
    config: ExperimentConfig | None
    metrics: MetricsSeries | None
    bounds: dict
    error: str | None = None


class SweepError(RuntimeError):
    """A sweep point was invalid; ``partial`` holds the points completed so far."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def _sweep_bounds(config: ExperimentConfig) -> dict:
    mu, U, n = config.mu, config.users, config.horizon
    out = {
        "lower_centralized": analysis.asymptotic_lower_bound(mu, U, "centralized"),
        "lower_distributed": analysis.asymptotic_lower_bound(mu, U, "distributed"),
        "upper_rho_rand": analysis.finite_time_upper_bound(mu, U, n, "rho_rand_regret").value,
        "upper_centralized": analysis.finite_time_upper_bound(mu, U, n, "centralized_gmean").value,
    }
    if U == 1:
        out["lower_single"] = analysis.asymptotic_lower_bound(mu, 1, "single")
    return out


def sweep(template: ExperimentConfig, axis: str, values) -> list[SweepPoint]:
    """Run ``template`` once per value of ``axis`` (``U``, ``C`` or ``n``).

    Sweeping ``C`` uses the default availability vector for that many
    channels, so every added channel is better than the existing ones.
    """
    points = []
    for v in values:
        v = int(v)
        try:
            if axis == "U":
                cfg = replace(template, users=v)
            elif axis == "C":
                cfg = replace(template, mu=tuple(default_mu(v)))
            elif axis == "n":
                cfg = replace(template, horizon=v)
            else:
                raise ConfigError(f"unknown sweep axis {axis!r}; expected U, C or n")
        except InputDomainError as exc:
            points.append(SweepPoint(v, None, None, {}, str(exc)))
            raise SweepError(f"invalid sweep point {axis}={v}: {exc}", points) from exc
        points.append(SweepPoint(v, cfg, run_experiment(cfg), _sweep_bounds(cfg)))
    return points


def fixed_ratio_sweep(template: ExperimentConfig, users_values, ratio: float = 0.5):
    """Sweep U with C = U / ratio channels, availabilities from :func:`default_mu`."""
    points = []
    for u in users_values:
        c = int(round(u / ratio))
        cfg = replace(template, users=int(u), mu=tuple(default_mu(c)))
        points.append(SweepPoint(int(u), cfg, run_experiment(cfg), _sweep_bounds(cfg)))
    return points


def simulate_absorption(users: int, channels: int, replications: int, seed: int = 0,
                        start=None, max_steps: int = 10 ** 6) -> np.ndarray:
    """Monte Carlo absorption times of the rank-redraw chain, no learning involved.

    Colliding users redraw uniformly over ``channels``; returns one
    absorption time per replication.
    """
    rng = np.random.default_rng(seed)
    state = np.zeros((replications, users), dtype=np.int64)
    if start is not None:
        state[:] = np.asarray(start, dtype=np.int64)
    times = np.zeros(replications, dtype=np.int64)
    active = np.ones(replications, dtype=bool)
    chan = np.arange(channels)
    for _ in range(max_steps):
        occ = (state[..., None] == chan).sum(axis=1)
        shared = np.take_along_axis(occ, state, axis=1) >= 2
        active = shared.any(axis=1)
        if not active.any():
            return times
        times += active
        redraw = rng.integers(0, channels, size=state.shape)
        state = np.where(shared, redraw, state)
    raise RuntimeError("absorption not reached within max_steps")
