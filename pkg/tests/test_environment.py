import numpy as np
import pytest

from cookiewalk import CookieEnvironment, CookieVector
from cookiewalk.environment import RECURRENT, TRANSIENT_LEFT, TRANSIENT_RIGHT


def test_delta_three_cookies_08():
    env = CookieEnvironment.deterministic([0.8, 0.8, 0.8])
    assert env.delta() == pytest.approx(1.8)


def test_delta_symmetric_mixture_is_zero(mix_env):
    assert mix_env.delta() == pytest.approx(0.0, abs=1e-15)


def test_delta_five_cookies_075(e2):
    assert e2.delta() == pytest.approx(2.5)


def test_delta_linear_formula():
    env = CookieEnvironment.deterministic([0.8] * 3)
    assert env.delta() == pytest.approx(3 * (2 * 0.8 - 1))


@pytest.mark.parametrize(
    "probs,recurrence,speed",
    [
        ([0.5], RECURRENT, "zero"),
        ([0.75] * 5, TRANSIENT_RIGHT, "positive"),
        ([0.8] * 3, TRANSIENT_RIGHT, "zero"),
        ([0.2] * 3, TRANSIENT_LEFT, "zero"),
        ([0.25] * 5, TRANSIENT_LEFT, "negative"),
    ],
)
def test_classify_regimes(probs, recurrence, speed):
    report = CookieEnvironment.deterministic(probs).classify()
    assert report.recurrence == recurrence
    assert report.speed_sign == speed


def test_classify_boundaries_are_closed():
    # drift exactly 1: recurrent; drift exactly 2: zero speed
    at_one = CookieEnvironment.deterministic([1.0, 0.5], strict=False)
    assert at_one.delta() == pytest.approx(1.0)
    assert at_one.classify().recurrence == RECURRENT
    at_two = CookieEnvironment.deterministic([1.0, 1.0], strict=False)
    assert at_two.delta() == pytest.approx(2.0)
    assert at_two.classify().speed_sign == "zero"


def test_classify_sweep_straddles_thresholds():
    for drift_per_cookie in np.linspace(-0.49, 0.49, 21):
        p = 0.5 + drift_per_cookie / 2
        env = CookieEnvironment.deterministic([p] * 5, strict=False)
        d = env.delta()
        rep = env.classify()
        assert (rep.recurrence == RECURRENT) == (-1.0 <= d <= 1.0)
        assert (rep.speed_sign == "zero") == (-2.0 <= d <= 2.0)


def test_mirror_negates_delta(e3):
    assert e3.mirror().delta() == pytest.approx(-e3.delta())


def test_mirror_involution(mix_env):
    assert mix_env.mirror().mirror() == mix_env


def test_mirror_fixed_point(e0):
    assert e0.mirror() == e0


def test_mirror_reflects_cookies():
    env = CookieEnvironment.deterministic([0.75] * 5)
    assert env.mirror().vectors[0].probs == (0.25,) * 5
    assert env.mirror().delta() == pytest.approx(-2.5)


def test_sample_site_deterministic(e1, rng):
    for _ in range(5):
        assert e1.sample_site(rng) == e1.vectors[0]


def test_sample_site_degenerate_mixture(rng):
    env = CookieEnvironment.mixture([(1.0, [0.6])])
    assert env.sample_site(rng).probs == (0.6,)


def test_sample_site_frequencies(mix_env, rng):
    draws = 100_000
    hits = sum(1 for _ in range(draws) if mix_env.sample_site(rng).probs[0] == 0.1)
    # binomial concentration: 0.5 +- 0.01 at 1e5 draws
    assert abs(hits / draws - 0.5) < 0.01


def test_component_indices_match_weights(rng):
    env = CookieEnvironment.mixture([(0.2, [0.3]), (0.8, [0.6])])
    idx = env.sample_component_indices(200_000, rng)
    assert abs((idx == 0).mean() - 0.2) < 0.01


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError, match="sum"):
        CookieEnvironment.mixture([(0.5, [0.3]), (0.6, [0.7])])


def test_weights_must_be_positive():
    with pytest.raises(ValueError, match="positive"):
        CookieEnvironment.mixture([(0.0, [0.3]), (1.0, [0.7])])


def test_degenerate_environment_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        CookieEnvironment.deterministic([0.0])
    with pytest.raises(ValueError, match="degenerate"):
        CookieEnvironment.deterministic([1.0])
    # a mixture where another component keeps the products positive is fine
    CookieEnvironment.mixture([(0.5, [0.0]), (0.5, [0.5])])


def test_cookie_vector_validation():
    with pytest.raises(ValueError):
        CookieVector(())
    with pytest.raises(ValueError):
        CookieVector((1.2,))
    v = CookieVector((0.7, 0.6))
    assert v.strength(1) == 0.7
    assert v.strength(2) == 0.6
    assert v.strength(3) == 0.5  # beyond the stack the coin is fair


def test_moments(e1, mix_env):
    assert e1.expect_omega1() == pytest.approx(0.7)
    assert mix_env.expect_omega1() == pytest.approx(0.5)
    assert e1.expect_product_omega() == pytest.approx(0.7)
    env = CookieEnvironment.deterministic([0.8, 0.8, 0.8])
    assert env.expect_product_omega() == pytest.approx(0.8**3)
    assert env.expect_product_one_minus_omega() == pytest.approx(0.2**3)


def test_env_hash_distinguishes(e1, e2):
    assert e1.env_hash() != e2.env_hash()
    assert e1.env_hash() == CookieEnvironment.deterministic([0.7]).env_hash()


def test_canonical_text_round_trip(mix_env):
    from cookiewalk.config import environment_config_block, parse_config

    text = environment_config_block(mix_env)
    assert parse_config(text).environment() == mix_env
