"""Single, centralized and rank-based channel selection."""
import math

import numpy as np
import pytest

from cogmab.indices import UserBeliefState
from cogmab.model import ChannelParams, InputDomainError
from cogmab.policies import (
    OraclePolicyParams, PolicyState, centralized_step, collision_count, draw_rank,
    make_threshold, max_threshold, perfect_rho_rand_step, rho_est_feedback, rho_est_step,
    rho_rand_feedback, rho_rand_step, single_user_step,
)


def belief_from_scores(scores, n=1):
    """A belief whose mean index equals ``scores`` at n=1 (no exploration term)."""
    count = np.full(len(scores), 10 ** 6, dtype=np.int64)
    free = np.round(np.asarray(scores) * 10 ** 6).astype(np.int64)
    return UserBeliefState(free, count, n)


class TestSingle:
    def test_picks_highest_score(self):
        assert single_user_step(belief_from_scores([0.2, 0.9, 0.5]), "mean") == 1

    def test_large_sample_picks_true_best(self):
        mu = np.array([0.1 * (i + 1) for i in range(9)])
        count = np.full(9, 10 ** 6, dtype=np.int64)
        b = UserBeliefState(np.round(mu * count).astype(np.int64), count, 9 * 10 ** 6)
        assert single_user_step(b, "mean") == 8
        assert single_user_step(b, "opt") == 8


class TestCentralized:
    def test_assigns_top_u(self):
        out = centralized_step(belief_from_scores([0.1, 0.8, 0.6]), 2, "mean")
        assert set(out.tolist()) == {1, 2}
        np.testing.assert_array_equal(out, [1, 2])

    def test_too_many_users(self):
        with pytest.raises(InputDomainError):
            centralized_step(belief_from_scores([0.1, 0.8]), 3, "mean")


class TestRankDraw:
    def test_bounds(self):
        u = np.array([0.0, 0.2499, 0.25, 0.9999999999, np.nextafter(1.0, 0.0)])
        np.testing.assert_array_equal(draw_rank(u, 4), [1, 1, 2, 4, 4])

    def test_uniform(self):
        rng = np.random.default_rng(8)
        ranks = draw_rank(rng.random(100_000), 4)
        freq = np.bincount(ranks, minlength=5)[1:] / ranks.size
        np.testing.assert_allclose(freq, 0.25, atol=0.01)


class TestRhoRand:
    def test_retains_rank_without_collision(self):
        b = belief_from_scores([0.2, 0.9, 0.5, 0.7])
        s = PolicyState("rho_rand", 4, u_hat=3, rank=3)
        rng = np.random.default_rng(0)
        for _ in range(50):
            ch, s = rho_rand_step(b, s, 3, "mean", rng)
            assert s.rank == 3 and ch == 2
            rho_rand_feedback(s, False)

    def test_consumes_one_uniform_per_call(self):
        b = belief_from_scores([0.2, 0.9])
        rng = np.random.default_rng(5)
        rho_rand_step(b, PolicyState("rho_rand", 2), 2, "mean", rng)
        ref = np.random.default_rng(5)
        ref.random()
        assert rng.random() == ref.random()

    def test_redraw_after_collision(self):
        b = belief_from_scores([0.2, 0.9, 0.5, 0.7])
        rng = np.random.default_rng(1)
        ranks = []
        for _ in range(20_000):
            s = PolicyState("rho_rand", 4, rank=1, last_collided=True)
            rho_rand_step(b, s, 4, "mean", rng)
            ranks.append(s.rank)
        freq = np.bincount(ranks, minlength=5)[1:] / len(ranks)
        np.testing.assert_allclose(freq, 0.25, atol=0.015)

    def test_perfect_knowledge_uses_true_order(self):
        oracle = OraclePolicyParams(ChannelParams([0.3, 0.9, 0.6]))
        s = PolicyState("perfect_rho_rand", 3, rank=2)
        ch, _ = perfect_rho_rand_step(oracle, s, 2, np.random.default_rng(0))
        assert ch == 2

    def test_unknown_kind(self):
        with pytest.raises(InputDomainError):
            PolicyState("greedy", 3)


class TestThreshold:
    def test_k1(self):
        assert make_threshold(10, 1) == 1.0 and make_threshold(10 ** 9, 1, 5.0) == 1.0

    def test_frozen_value(self):
        assert make_threshold(10 ** 4, 2) == pytest.approx(20.4499656236707204, abs=1e-12)

    def test_superlogarithmic(self):
        assert make_threshold(10 ** 6, 2) / math.log(10 ** 6) > make_threshold(10 ** 3, 2) / math.log(10 ** 3)

    def test_domain(self):
        with pytest.raises(InputDomainError):
            make_threshold(2, 2)
        with pytest.raises(InputDomainError):
            make_threshold(100, 0)
        with pytest.raises(InputDomainError):
            make_threshold(100, 2, scale=0.0)

    def test_max(self):
        assert max_threshold(10 ** 4, 3) == make_threshold(10 ** 4, 3)
        assert max_threshold(10 ** 4, 1) == 1.0


class TestRhoEst:
    scores = np.array([0.2, 0.9, 0.5, 0.7])

    def test_strict_threshold_for_first_increment(self):
        s = PolicyState("rho_est", 4)
        rho_est_feedback(s, 1, True, self.scores, 10 ** 4)
        assert s.u_hat == 1 and s.phi[1] == 1 and s.last_collided
        rho_est_feedback(s, 1, True, self.scores, 10 ** 4)
        assert s.u_hat == 2
        assert s.phi.sum() == 0 and not s.last_collided

    def test_collisions_outside_top_ignored(self):
        s = PolicyState("rho_est", 4)
        for _ in range(5):
            rho_est_feedback(s, 0, True, self.scores, 10 ** 4)
        assert s.u_hat == 1 and collision_count(s, self.scores) == 0

    def test_lone_user_never_increments(self):
        b = belief_from_scores(self.scores)
        s = PolicyState("rho_est", 4)
        rng = np.random.default_rng(0)
        for _ in range(1000):
            ch, sc, s = rho_est_step(b, s, "mean", rng)
            rho_est_feedback(s, ch, False, sc, 1000)
        assert s.u_hat == 1 and s.rank == 1

    def test_clamps_at_channel_count(self):
        s = PolicyState("rho_est", 2, u_hat=2)
        xi = make_threshold(100, 2)
        for _ in range(int(xi) + 1):
            rho_est_feedback(s, 1, True, self.scores[:2], 100)
        assert s.u_hat == 2 and s.clamped == 1 and s.phi.sum() == 0

    def test_rank_within_estimate(self):
        b = belief_from_scores(self.scores)
        rng = np.random.default_rng(3)
        s = PolicyState("rho_est", 4, u_hat=3, last_collided=True)
        for _ in range(300):
            s.last_collided = True
            rho_est_step(b, s, "mean", rng)
            assert 1 <= s.rank <= s.u_hat
