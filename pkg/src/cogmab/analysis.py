"""Closed-form regret bounds and the exact absorption-time oracle.

All logarithms are natural. ``Delta(a, b)`` is ``mu[a] - mu[b]``; channels are
addressed by their availability rank where the formulas call for it
(``rank_channel(mu, k)`` is the k-th best channel, 1-based).
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .indices import rank_channels
from .model import ChannelParams, InputDomainError, RunLedger

PI2_3 = math.pi ** 2 / 3.0
REGIMES = ("single", "centralized", "distributed")
BOUND_KINDS = (
    "single_gmean", "centralized_gmean", "uworst_time", "wrong_order", "collisions",
    "rho_rand_regret", "rho_est_collisions", "rho_est_regret",
)


class ResourceError(RuntimeError):
    """The requested computation exceeds the configured size cap."""


def _mu(mu) -> np.ndarray:
    if isinstance(mu, ChannelParams):
        return mu.mu
    return np.asarray(mu, dtype=float)


def _check_users(mu: np.ndarray, users: int):
    if not 1 <= users <= mu.size:
        raise InputDomainError(f"need 1 <= U <= C, got U={users}, C={mu.size}")


def kl_bernoulli(p: float, q: float) -> float:
    """KL divergence D(B(p) || B(q)) in nats."""
    if not 0.0 <= p <= 1.0:
        raise InputDomainError(f"p={p} outside [0, 1]")
    if not 0.0 < q < 1.0:
        raise InputDomainError(f"q={q} outside (0, 1)")
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return out


def optimal_reward(mu, users: int, n: int) -> float:
    """Expected successes of a genie that parks the users on the U-best channels."""
    mu = _mu(mu)
    _check_users(mu, users)
    return n * math.fsum(np.sort(mu)[::-1][:users])


@dataclass
class RegretBreakdown:
    """Realized regret of one run and the pathwise bounds around it.

    ``uworst_time`` is the number of sensing events in U-worst channels,
    ``collisions`` the U-best collision count M(n). ``upper`` and ``lower``
    are the pathwise versions of the two-sided regret bound.
    """

    regret: float
    uworst_time: int
    collisions: int
    upper: float
    lower: float


def compute_regret(ledger: RunLedger, mu, users: int | None = None) -> RegretBreakdown:
    mu = _mu(mu)
    users = ledger.users if users is None else users
    order = rank_channels(mu)
    best, worst = order[:users], order[users:]
    t_i = ledger.t_ij.sum(axis=0)
    v_i = ledger.v_ij.sum(axis=0)
    regret = optimal_reward(mu, users, ledger.slot) - float(v_i @ mu)
    uworst = int(t_i[worst].sum())
    collisions = int((t_i[best] - v_i[best]).sum())
    mu_u = mu[order[users - 1]]
    lower = float(((mu_u - mu[worst]) * t_i[worst]).sum())
    return RegretBreakdown(
        regret=regret,
        uworst_time=uworst,
        collisions=collisions,
        upper=float(mu[order[0]]) * (uworst + collisions),
        lower=lower,
    )


def asymptotic_lower_bound(mu, users: int, regime: str) -> float:
    """Coefficient of ln n in the asymptotic regret lower bound."""
    mu = _mu(mu)
    _check_users(mu, users)
    order = rank_channels(mu)
    worst = order[users:]
    if regime == "single":
        if users != 1:
            raise InputDomainError("the single-user regime requires U = 1")
        top = mu[order[0]]
        return sum((top - mu[i]) / kl_bernoulli(mu[i], top) for i in worst)
    if regime == "centralized":
        mu_u = mu[order[users - 1]]
        return sum((mu_u - mu[i]) / kl_bernoulli(mu[i], mu_u) for i in worst)
    if regime == "distributed":
        mu_u = mu[order[users - 1]]
        return sum(
            (mu_u - mu[i]) / kl_bernoulli(mu[i], mu[order[j]])
            for i in worst for j in range(users)
        )
    raise InputDomainError(f"unknown regime {regime!r}; expected one of {REGIMES}")


@dataclass
class BoundReport:
    kind: str
    value: float
    per_term: dict = field(default_factory=dict)
    log_base: str = "natural"


def _report(kind, terms: dict) -> BoundReport:
    return BoundReport(kind=kind, value=sum(terms.values()), per_term=terms)


def _ucb_term(log_n: float, gap: float) -> float:
    return 8.0 * log_n / gap ** 2 + 1.0 + PI2_3


def compositions_bound(users: int) -> tuple[int, int]:
    """Number of compositions binom(2U-1, U) and the collision bound U*(that - 1)."""
    if users < 1:
        raise InputDomainError("U must be >= 1")
    count = math.comb(2 * users - 1, users)
    return count, users * (count - 1)


def finite_time_upper_bound(mu, users: int, n: float, kind: str, *,
                            threshold_scale: float = 1.0,
                            upsilon: float | None = None) -> BoundReport:
    """Evaluate one of the finite-horizon upper bounds at horizon ``n``.

    ``per_term`` keys are tuples of 1-based availability ranks, e.g.
    ``(m, i)`` for the m-th best and i-th best channel.

    ``collisions`` uses ``binom(2U-1, U) - 1`` for the expected absorption
    time unless an exact ``upsilon`` is supplied.
    """
    mu = _mu(mu)
    _check_users(mu, users)
    if n < 1:
        raise InputDomainError("n must be >= 1")
    log_n = math.log(n)
    srt = np.sort(mu)[::-1]
    C = srt.size

    def gap(a, b):  # 1-based ranks
        return float(srt[a - 1] - srt[b - 1])

    if kind == "single_gmean":
        # With one user the gap in the bracket is to the best channel.
        return _report(kind, {(i,): gap(1, i) * _ucb_term(log_n, gap(1, i))
                              for i in range(2, C + 1)})
    if kind == "centralized_gmean":
        # The inner sum over k repeats a k-independent summand U times; kept as is.
        return _report(kind, {
            (m, i): sum(gap(m, i) / users * _ucb_term(log_n, gap(m, i)) for _ in range(users))
            for m in range(1, users + 1) for i in range(users + 1, C + 1)
        })
    if kind == "uworst_time":
        return _report(kind, {(i, k): users * _ucb_term(log_n, gap(k, i))
                              for i in range(users + 1, C + 1) for k in range(1, users + 1)})
    if kind == "wrong_order":
        return _report(kind, {(a, b): users * _ucb_term(log_n, gap(a, b))
                              for a in range(1, users + 1) for b in range(a + 1, C + 1)})
    if kind == "collisions":
        ups = compositions_bound(users)[0] - 1 if upsilon is None else upsilon
        wrong = finite_time_upper_bound(mu, users, n, "wrong_order")
        factor = users * (ups + 1)
        return _report(kind, {k: factor * v for k, v in wrong.per_term.items()})
    if kind == "rho_rand_regret":
        top = float(srt[0])
        terms = {("uworst",) + k: top * v for k, v in
                 finite_time_upper_bound(mu, users, n, "uworst_time").per_term.items()}
        terms.update({("collisions",) + k: top * v for k, v in finite_time_upper_bound(
            mu, users, n, "collisions", upsilon=upsilon).per_term.items()})
        return _report(kind, terms)
    if kind == "rho_est_collisions":
        from .policies import make_threshold
        return _report(kind, {(k,): users * make_threshold(max(n, 3), k, threshold_scale)
                              for k in range(1, users + 1)})
    if kind == "rho_est_regret":
        top = float(srt[0])
        terms = {("uworst",) + k: top * v for k, v in
                 finite_time_upper_bound(mu, users, n, "uworst_time").per_term.items()}
        terms.update({("collisions",) + k: top * v for k, v in finite_time_upper_bound(
            mu, users, n, "rho_est_collisions", threshold_scale=threshold_scale
        ).per_term.items()})
        return _report(kind, terms)
    raise InputDomainError(f"unknown bound kind {kind!r}; expected one of {BOUND_KINDS}")


# --------------------------------------------------------------------------
# Absorption of the rank-randomization chain
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AbsorptionSpec:
    users: int
    channels: int
    feedback: str = "sensing_overlap"
    max_states: int = 10 ** 6

    def __post_init__(self):
        if self.users < 1 or self.channels < 1:
            raise InputDomainError("need U >= 1 and k >= 1")


@dataclass(frozen=True)
class Diverges:
    """Absorption never happens: fewer channels than users."""

    users: int
    channels: int

    def __str__(self):
        return "diverges"


@dataclass
class AbsorptionResult:
    """Expected absorption time from the worst start state.

    ``hitting_times`` maps every labeled configuration (tuple of channel per
    user) to its expected number of slots until no two users share a channel.
    """

    expected: float
    worst_state: tuple
    hitting_times: dict


def _colliders(state) -> list[int]:
    counts = Counter(state)
    return [u for u, c in enumerate(state) if counts[c] >= 2]


def markov_absorption_oracle(spec: AbsorptionSpec):
    """Exact E[time to a collision-free configuration], maximized over starts.

    States are labeled assignments of U users to k channels. Every user who
    shares a channel redraws uniformly over the k channels; lone users stay.
    The hitting-time system is solved with a sparse direct solver.
    """
    U, k = spec.users, spec.channels
    if k < U:
        return Diverges(U, k)
    if k ** U > spec.max_states:
        raise ResourceError(f"state space k^U = {k ** U} exceeds cap {spec.max_states}")
    states = list(itertools.product(range(k), repeat=U))
    transient = [s for s in states if _colliders(s)]
    if not transient:
        return AbsorptionResult(0.0, states[0], {s: 0.0 for s in states})
    index = {s: i for i, s in enumerate(transient)}
    rows, cols, vals = [], [], []
    for s in transient:
        movers = _colliders(s)
        p = 1.0 / k ** len(movers)
        nxt = list(s)
        for draw in itertools.product(range(k), repeat=len(movers)):
            for u, c in zip(movers, draw):
                nxt[u] = c
            j = index.get(tuple(nxt))
            if j is not None:
                rows.append(index[s])
                cols.append(j)
                vals.append(p)
    m = len(transient)
    q = sp.csc_matrix((vals, (rows, cols)), shape=(m, m))
    h = spla.spsolve(sp.identity(m, format="csc") - q, np.ones(m))
    h = np.atleast_1d(h)
    times = {s: 0.0 for s in states}
    times.update({s: float(h[i]) for s, i in index.items()})
    worst = max(transient, key=lambda s: (times[s], s))
    return AbsorptionResult(times[worst], worst, times)


def exact_absorption_time(users: int, channels: int):
    """Same quantity as the oracle, in exact rational arithmetic.

    Works on the chain lumped by symmetry (sorted occupancy profile), which
    is exact because hitting times are invariant under relabeling users and
    channels. Returns a :class:`fractions.Fraction` or :class:`Diverges`.
    """
    U, k = users, channels
    if U < 1 or k < 1:
        raise InputDomainError("need U >= 1 and k >= 1")
    if k < U:
        return Diverges(U, k)

    def profile(state):
        occ = Counter(state)
        return tuple(sorted(occ.values(), reverse=True))

    # one labeled representative per profile
    reps = {}
    for s in itertools.product(range(k), repeat=U):
        reps.setdefault(profile(s), s)
    transient = [p for p in reps if p[0] >= 2]
    if not transient:
        return Fraction(0)
    idx = {p: i for i, p in enumerate(transient)}
    m = len(transient)
    # rows of (I - Q) h = 1
    a = [[Fraction(int(i == j)) for j in range(m)] + [Fraction(1)] for i in range(m)]
    for p in transient:
        s = reps[p]
        movers = _colliders(s)
        w = Fraction(1, k ** len(movers))
        nxt = list(s)
        for draw in itertools.product(range(k), repeat=len(movers)):
            for u, c in zip(movers, draw):
                nxt[u] = c
            q = profile(nxt)
            if q in idx:
                a[idx[p]][idx[q]] -= w
    # Gauss-Jordan elimination
    for col in range(m):
        piv = next(r for r in range(col, m) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        pv = a[col][col]
        a[col] = [x / pv for x in a[col]]
        for r in range(m):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return max(row[m] for row in a)
