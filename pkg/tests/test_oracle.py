import math

import numpy as np
import pytest

from cookiewalk import CookieEnvironment, oracle
from cookiewalk.branching import _draw_failures
from cookiewalk.streams import stream


class TestEnumeratePaths:
    def test_fair_two_steps(self, e0):
        law = oracle.enumerate_paths(e0, 2)
        assert law.as_dict() == pytest.approx({0: 0.5, 2: 0.25, -2: 0.25})
        assert law.truncation_mass == 0.0

    def test_deterministic_right_walk(self, all_ones):
        law = oracle.enumerate_paths(all_ones, 5)
        assert law.as_dict() == pytest.approx({5: 1.0})

    def test_first_step_probability(self, e1):
        law = oracle.enumerate_paths(e1, 1)
        assert law.prob(1) == pytest.approx(0.7)
        assert law.prob(-1) == pytest.approx(0.3)

    @pytest.mark.parametrize("n", [3, 6, 9, 12])
    def test_total_mass_one(self, e1, n):
        law = oracle.enumerate_paths(e1, n)
        assert law.probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_total_mass_one_mixture(self, mix_env):
        law = oracle.enumerate_paths(mix_env, 8)
        assert law.probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_mirror_reflects_position_law(self, e1):
        law = oracle.enumerate_paths(e1, 5)
        mirrored = oracle.enumerate_paths(e1.mirror(), 5)
        for k, p in law.as_dict().items():
            assert mirrored.prob(-k) == pytest.approx(p, abs=1e-12)

    def test_rejects_large_n(self, e1):
        with pytest.raises(ValueError, match="22"):
            oracle.enumerate_paths(e1, 23)

    def test_three_step_hand_values(self, e1):
        # all-right path consumes one fresh cookie per site
        law = oracle.enumerate_paths(e1, 3)
        assert law.prob(3) == pytest.approx(0.7**3)
        assert law.prob(-3) == pytest.approx(0.3**3)


class TestHittingLaw:
    def test_two_up_probability(self, e1):
        law = oracle.hitting_law(e1, 2, 12)
        assert law.prob(2) == pytest.approx(0.49)

    def test_deterministic(self, all_ones):
        law = oracle.hitting_law(all_ones, 4, 10)
        assert law.as_dict() == pytest.approx({4: 1.0})
        assert law.truncation_mass == 0.0

    def test_mass_accounting(self, e0):
        law = oracle.hitting_law(e0, 3, 15)
        assert law.probs.sum() + law.truncation_mass == pytest.approx(1.0, abs=1e-9)
        # nearest-neighbour parity: hits happen at |target| + 2k only
        assert all((t - 3) % 2 == 0 for t in law.support)


class TestTransitionRow:
    def test_single_cookie_row(self, e1):
        row = oracle.transition_row(e1, 0, 12)
        expected = [0.7] + [0.3 * 0.5**j for j in range(1, 13)]
        assert np.allclose(row.probs, expected)

    def test_fair_row_is_geometric(self, e0):
        row = oracle.transition_row(e0, 0, 12)
        assert np.allclose(row.probs, [0.5 ** (j + 1) for j in range(13)])

    def test_all_ones_point_mass_inside_stack(self):
        env = CookieEnvironment.deterministic([1.0] * 6, strict=False)
        for k in range(5):
            row = oracle.transition_row(env, k, 5)
            assert row.probs[0] == pytest.approx(1.0)

    def test_row_mass(self, e2):
        row = oracle.transition_row(e2, 3, 40)
        assert row.probs.sum() + row.truncation_mass == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("k", [0, 1, 2, 3, 5])
    def test_monte_carlo_marginals(self, e1, k):
        row = oracle.transition_row(e1, k, 25)
        draws = _draw_failures(np.full(100_000, k + 1, dtype=np.int64), e1,
                               stream(5050, "row-check", k))
        for j in range(6):
            p = row.probs[j]
            se = math.sqrt(p * (1 - p) / draws.size)
            assert abs((draws == j).mean() - p) < 5 * se + 1e-4

    def test_mixture_row_is_weighted(self, mix_env):
        row = oracle.transition_row(mix_env, 0, 10)
        lo = oracle.transition_row(CookieEnvironment.deterministic([0.1]), 0, 10)
        hi = oracle.transition_row(CookieEnvironment.deterministic([0.9]), 0, 10)
        assert np.allclose(row.probs, 0.5 * lo.probs + 0.5 * hi.probs)


class TestOffspringRow:
    def test_zero_is_absorbing(self, e1):
        row = oracle.offspring_row(e1, 0, 5)
        assert row.probs[0] == 1.0

    def test_one_parent_single_cookie(self, e1):
        # failures before the first success: P(0) = 0.7, P(j) = 0.3 * 2^-j
        row = oracle.offspring_row(e1, 1, 10)
        assert row.probs[0] == pytest.approx(0.7)
        assert row.probs[3] == pytest.approx(0.3 * 0.125)


class TestSigmaWLaw:
    def test_hand_values(self, e1):
        law = oracle.sigma_w_law(e1, 6, 12)
        d = law.as_dict()
        assert d[(1, 0)] == pytest.approx(0.7)
        # one child, then extinction: P(V_1 = 1) * P(F_2 = 0)
        assert d[(2, 1)] == pytest.approx((0.3 * 0.5) * (0.7 * 0.5))

    def test_point_mass_when_always_succeeding(self, all_ones):
        law = oracle.sigma_w_law(all_ones, 4, 4)
        assert law.as_dict() == pytest.approx({(1, 0): 1.0})
        assert law.truncation_mass == 0.0

    def test_sigma_one_probability_is_mean_first_cookie(self, mix_env):
        law = oracle.sigma_w_law(mix_env, 4, 8)
        assert law.as_dict()[(1, 0)] == pytest.approx(mix_env.expect_omega1())

    def test_support_respects_cycle_inequality(self, e1):
        law = oracle.sigma_w_law(e1, 6, 12)
        for s, w in law.support:
            assert w >= s - 1

    def test_state_budget_guard(self, e1):
        with pytest.raises(ValueError, match="budget"):
            oracle.sigma_w_law(e1, 1000, 10_000, 1000)


class TestExactMgf:
    def test_origin_value_recurrent(self, e1):
        bracket = oracle.exact_mgf(e1, 0.0, 0.0)
        assert bracket.certified
        assert bracket.contains(0.0, slack=1e-9)
        assert bracket.lower <= 0.0

    def test_degenerate_is_linear_in_eta(self):
        env = CookieEnvironment.deterministic([1.0] * 5, strict=False)
        for eta in (-1.0, 0.0, 0.4):
            bracket = oracle.exact_mgf(env, -0.5, eta)
            assert bracket.lower == pytest.approx(eta, abs=1e-12)
            assert bracket.upper == pytest.approx(eta, abs=1e-12)

    def test_matches_direct_summation(self, e1):
        lam, eta = -0.5, 0.0
        law = oracle.sigma_w_law(e1, 60, 150, 60)
        direct = math.log(sum(math.exp(lam * w + eta * s) * p
                              for (s, w), p in law.as_dict().items()))
        bracket = oracle.exact_mgf(e1, lam, eta)
        assert bracket.lower == pytest.approx(direct, abs=1e-12)
        assert bracket.upper - bracket.lower < 1e-9

    def test_rejects_positive_lam(self, e1):
        with pytest.raises(ValueError):
            oracle.exact_mgf(e1, 0.1, 0.0)

    def test_uncertified_above_diagonal(self, e1):
        bracket = oracle.exact_mgf(e1, -0.1, 0.5)
        assert not bracket.certified
        assert bracket.upper == math.inf


class TestLambdaVExact:
    def test_root_residual_is_zero(self, e1):
        lo, hi = oracle.lambda_v_exact(e1, -1.0)
        assert hi - lo < 1e-4
        eta_star = -0.5 * (lo + hi)
        residual = oracle.exact_mgf(e1, -1.0, eta_star)
        assert residual.contains(0.0, slack=1e-4)

    def test_deep_lambda_approaches_log_mean_first_cookie(self, e1):
        lo, hi = oracle.lambda_v_exact(e1, -20.0)
        assert math.log(0.7) == pytest.approx(0.5 * (lo + hi), abs=1e-3)


class TestRepresentationIdentity:
    """Joint law of per-level down-crossings: the exact hitting-time law
    equals the exact law of m + 2*(chain sums) computed from the rows."""

    @pytest.mark.parametrize("env_name,m", [("e1", 2), ("e1", 3), ("e0", 2)])
    def test_exact_laws_agree(self, env_name, m, request):
        env = request.getfixturevalue(env_name)
        total_max = 9
        steps = m + 2 * total_max
        walk_law = oracle.hitting_law(env, m, steps)
        rep_law = oracle.hitting_representation_law(env, m, total_max, total_max + 1)
        tv = walk_law.tv_distance(rep_law)
        assert tv < 1e-6 + walk_law.truncation_mass + rep_law.truncation_mass
        for t in walk_law.support:
            assert rep_law.prob(t) == pytest.approx(walk_law.prob(t), abs=1e-9)


class TestEscapeProbability:
    def test_exact_beats_product_bound_single_cookie(self, e1):
        env = e1.mirror()  # drift -0.4: leftward walk, the bound's regime
        for n in range(2, 11):
            lo, hi = oracle.first_passage_before_backstep(env, n, v_max=300)
            bound = oracle.ballistic_escape_lower_bound(env, n)
            assert lo >= bound, f"n={n}: {lo} < bound {bound}"
            assert hi - lo < 1e-9

    def test_matches_monte_carlo_race(self, e1, rng):
        env = e1.mirror()
        lo, hi = oracle.first_passage_before_backstep(env, 3, v_max=300)
        wins = 0
        reps = 40_000
        from cookiewalk import WalkState

        for _ in range(reps):
            state = WalkState(env, rng)
            while True:
                pos = state.step()
                if pos == 3:
                    wins += 1
                    break
                if pos == -1:
                    break
        freq = wins / reps
        se = math.sqrt(freq * (1 - freq) / reps)
        assert abs(freq - lo) < 4 * se

    def test_v_zero_probabilities_first_step(self, e1):
        out = oracle.v_zero_probabilities(e1, [1], 50)
        lo, hi = out[1]
        assert lo == pytest.approx(0.7, abs=1e-9)

    def test_v_zero_matches_row_composition(self, e1):
        row0 = oracle.transition_row(e1, 0, 60)
        back = np.array([oracle.transition_row(e1, k, 60).probs[0] for k in range(61)])
        by_hand = float(row0.probs @ back)
        lo, hi = oracle.v_zero_probabilities(e1, [2], 60)[2]
        assert lo - 1e-12 <= by_hand <= hi + 1e-12
        assert by_hand == pytest.approx(lo, abs=1e-9)


class TestExactLawType:
    def test_mass_validation(self):
        with pytest.raises(ValueError, match="mass"):
            oracle.ExactLaw([0, 1], np.array([0.5, 0.2]), 0.0)

    def test_negative_probability_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            oracle.ExactLaw([0, 1], np.array([1.1, -0.1]), 0.0)

    def test_tv_distance(self):
        a = oracle.ExactLaw([0, 1], np.array([0.5, 0.5]), 0.0)
        b = oracle.ExactLaw([0, 2], np.array([0.5, 0.5]), 0.0)
        assert a.tv_distance(b) == pytest.approx(0.5)
