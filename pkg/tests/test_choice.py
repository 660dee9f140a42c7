import math
import random
from itertools import combinations

import numpy as np
import pytest
from pytest import approx

from beliefkit.choice import (
    ChoiceError,
    DiscreteBelief,
    GoodBelief,
    RecommendationSlate,
    SignalModel,
    UtilityFunction,
    choose_with_recommendation,
    choose_without_recommendation,
    expected_utility,
    optimal_slate,
    slate_value,
    slate_value_under_prior,
    update_beliefs,
)

LINEAR = UtilityFunction.linear()
SQRT = UtilityFunction.power(0.5)
EXP = UtilityFunction.exponential(1.0)


# -- utility functions -----------------------------------------------------------


def test_utilities_strictly_increasing_on_grid():
    grid = np.linspace(-4, 6, 101)
    for u in (LINEAR, SQRT, EXP, UtilityFunction.power(0.3), UtilityFunction.exponential(2.5)):
        values = u(grid)
        assert np.all(np.diff(values) > 0)


def test_utility_validation():
    with pytest.raises(ChoiceError):
        UtilityFunction("cubic")
    with pytest.raises(ChoiceError):
        UtilityFunction.power(1.5)
    with pytest.raises(ChoiceError):
        UtilityFunction.exponential(-1)


# -- expected utility --------------------------------------------------------------


def test_linear_expected_utility_is_mean():
    assert expected_utility(GoodBelief(3.2, 0.0), LINEAR) == approx(3.2)
    assert expected_utility(GoodBelief(3.2, 1.7), LINEAR) == approx(3.2)


def test_point_mass_beats_spread_mixture_under_sqrt():
    a = expected_utility(GoodBelief(3.0, 0.0), SQRT)
    b = expected_utility(DiscreteBelief((1.0, 5.0), (0.5, 0.5)), SQRT)
    assert a == approx(math.sqrt(3), abs=1e-4)
    assert b == approx((1 + math.sqrt(5)) / 2, abs=1e-4)
    assert a > b


def test_exponential_matches_closed_form():
    # independent oracle: E[-exp(-aX)] = -exp(-a*mu + a^2 sigma^2 / 2)
    for a in (0.5, 1.0, 2.0):
        u = UtilityFunction.exponential(a)
        for mu in (-1.0, 0.0, 2.5, 4.0):
            for sigma in (0.1, 0.5, 1.0, 2.0):
                closed = -math.exp(-a * mu + a * a * sigma * sigma / 2)
                assert expected_utility(GoodBelief(mu, sigma), u) == approx(closed, abs=1e-8)


def test_expected_utility_rejects_non_finite():
    with pytest.raises(ChoiceError):
        GoodBelief(float("nan"), 1.0)
    with pytest.raises(ChoiceError):
        GoodBelief(0.0, float("inf"))


def test_discrete_belief_validation():
    with pytest.raises(ChoiceError):
        DiscreteBelief((1.0,), (0.5,))


# -- choice without recommendation ---------------------------------------------------


def test_choose_argmax():
    beliefs = {1: GoodBelief(3.0, 0.5), 2: GoodBelief(4.0, 0.5)}
    assert choose_without_recommendation(beliefs, LINEAR) == 2


def test_choose_tie_breaks_to_lowest_id():
    beliefs = {4: GoodBelief(3.0, 0.0), 2: GoodBelief(3.0, 0.0)}
    assert choose_without_recommendation(beliefs, LINEAR) == 2


def test_choose_invariant_to_shared_shift():
    beliefs = {1: GoodBelief(2.0, 0.3), 2: GoodBelief(3.5, 0.3), 3: GoodBelief(1.0, 0.3)}
    shifted = {m: GoodBelief(b.mean + 10.0, b.sd) for m, b in beliefs.items()}
    assert choose_without_recommendation(beliefs, LINEAR) == choose_without_recommendation(
        shifted, LINEAR
    )


def test_choose_empty_errors():
    with pytest.raises(ChoiceError):
        choose_without_recommendation({}, LINEAR)


def test_affine_transform_never_changes_choice():
    rng = random.Random(5)
    for _ in range(50):
        beliefs = {
            m: GoodBelief(rng.uniform(0.5, 5.0), rng.uniform(0.0, 1.5)) for m in range(1, 6)
        }
        for u in (LINEAR, SQRT, EXP):
            transformed = u.affine(rng.uniform(0.1, 7.0), rng.uniform(-5, 5))
            assert choose_without_recommendation(beliefs, u) == choose_without_recommendation(
                beliefs, transformed
            )


# -- belief updates -----------------------------------------------------------------


def test_conjugate_update_values():
    beliefs = {1: GoodBelief(0.0, 1.0)}
    slate = RecommendationSlate((1,), signals={1: 2.0})
    updated = update_beliefs(beliefs, slate, {1: 2.0}, SignalModel(1.0), random.Random(0))
    assert updated[1].mean == approx(1.0)
    assert updated[1].sd**2 == approx(0.5)


def test_uninformative_signal_leaves_prior():
    beliefs = {1: GoodBelief(2.5, 0.8)}
    slate = RecommendationSlate((1,))
    updated = update_beliefs(beliefs, slate, {1: 4.0}, SignalModel(1e9), random.Random(1))
    assert updated[1].mean == approx(2.5, abs=1e-6)
    assert updated[1].sd == approx(0.8, abs=1e-6)


def test_posterior_variance_shrinks():
    rng = random.Random(2)
    for _ in range(50):
        sd = rng.uniform(0.1, 3.0)
        noise = rng.uniform(0.1, 3.0)
        beliefs = {1: GoodBelief(rng.uniform(0, 5), sd)}
        updated = update_beliefs(
            beliefs, RecommendationSlate((1,)), {1: rng.uniform(0, 5)}, SignalModel(noise), rng
        )
        assert updated[1].sd < sd


def test_certain_prior_unchanged():
    beliefs = {1: GoodBelief(3.0, 0.0)}
    updated = update_beliefs(
        beliefs, RecommendationSlate((1,)), {1: 5.0}, SignalModel(0.1), random.Random(3)
    )
    assert updated[1] == beliefs[1]


def test_non_recommended_beliefs_untouched():
    beliefs = {1: GoodBelief(3.0, 1.0), 2: GoodBelief(2.0, 1.0)}
    updated = update_beliefs(
        beliefs, RecommendationSlate((1,)), {1: 4.0}, SignalModel(0.5), random.Random(4)
    )
    assert updated[2] == beliefs[2]


def test_update_requires_belief_and_truth():
    with pytest.raises(ChoiceError):
        update_beliefs({}, RecommendationSlate((1,)), {1: 3.0}, SignalModel(1.0), random.Random(0))
    with pytest.raises(ChoiceError):
        update_beliefs(
            {1: GoodBelief(1, 1)}, RecommendationSlate((1,)), {}, SignalModel(1.0), random.Random(0)
        )


# -- choice with recommendation ---------------------------------------------------------


def test_confirming_signals_keep_choice():
    beliefs = {1: GoodBelief(4.0, 0.5), 2: GoodBelief(3.0, 0.5)}
    slate = RecommendationSlate((1, 2), signals={1: 4.0, 2: 3.0})
    chosen = choose_with_recommendation(
        beliefs, slate, {1: 4.0, 2: 3.0}, SignalModel(0.01), LINEAR, random.Random(0)
    )
    assert chosen == choose_without_recommendation(beliefs, LINEAR) == 1


def test_underrated_good_wins_after_precise_signal():
    beliefs = {1: GoodBelief(4.0, 0.1), 2: GoodBelief(2.0, 1.5)}
    slate = RecommendationSlate((2,))
    chosen = choose_with_recommendation(
        beliefs, slate, {1: 4.0, 2: 5.0}, SignalModel(0.1), LINEAR, random.Random(0)
    )
    assert chosen == 2


def test_recommending_chosen_good_with_favorable_signal_keeps_it():
    beliefs = {1: GoodBelief(4.0, 0.7), 2: GoodBelief(3.0, 0.7)}
    for s in np.arange(4.0, 6.01, 0.25):
        slate = RecommendationSlate((1,), signals={1: float(s)})
        chosen = choose_with_recommendation(
            beliefs, slate, {1: 4.0, 2: 3.0}, SignalModel(0.5), LINEAR, random.Random(0)
        )
        assert chosen == 1


def test_choice_can_land_outside_the_slate():
    beliefs = {1: GoodBelief(4.0, 0.0), 2: GoodBelief(2.0, 0.5)}
    slate = RecommendationSlate((2,), signals={2: 0.5})
    chosen = choose_with_recommendation(
        beliefs, slate, {1: 4.0, 2: 0.5}, SignalModel(0.1), LINEAR, random.Random(0)
    )
    assert chosen == 1


# -- optimal slate ------------------------------------------------------------------------


def oracle_optimal_slate(beliefs, truths, signal, u, k, candidates, rng, num_draws):
    """Brute-force oracle: pure-Python enumeration with closed-form expected
    utilities, consuming the rng with the same draw-major contract."""
    candidates = sorted(candidates)
    eps = [[rng.gauss(0.0, 1.0) for _ in candidates] for _ in range(num_draws)]
    col = {m: j for j, m in enumerate(candidates)}

    def eu(mean, sd):
        if u.kind == "linear":
            return u.scale * mean + u.offset
        assert u.kind == "exponential"
        a = u.risk_aversion
        return u.scale * -math.exp(-a * mean + a * a * sd * sd / 2) + u.offset

    prior_eu = {m: eu(b.mean, b.sd) for m, b in beliefs.items()}
    best_subset, best_value = None, -math.inf
    for subset in combinations(candidates, k):
        total = 0.0
        for d in range(num_draws):
            best = max((prior_eu[m] for m in beliefs if m not in subset), default=-math.inf)
            for m in subset:
                prior = beliefs[m]
                if prior.sd == 0:
                    post_mean, post_sd = prior.mean, 0.0
                else:
                    s = truths[m] + signal.noise_sd * eps[d][col[m]]
                    prec = 1 / prior.sd**2 + 1 / signal.noise_sd**2
                    post_mean = (prior.mean / prior.sd**2 + s / signal.noise_sd**2) / prec
                    post_sd = math.sqrt(1 / prec)
                best = max(best, eu(post_mean, post_sd))
            total += best
        value = total / num_draws
        if value > best_value:
            best_subset, best_value = subset, value
    return best_subset


def test_optimal_slate_prefers_uncertain_high_truth_good():
    beliefs = {
        1: GoodBelief(3.0, 0.0),
        2: GoodBelief(3.0, 2.5),
        3: GoodBelief(2.9, 0.0),
    }
    truths = {1: 3.0, 2: 5.0, 3: 2.9}
    slate = optimal_slate(
        beliefs, truths, SignalModel(0.2), LINEAR, 1, [1, 2, 3], random.Random(0), num_draws=500
    )
    assert slate.movie_ids == (2,)


def test_optimal_slate_all_known_returns_lexicographic_first():
    beliefs = {m: GoodBelief(float(m), 0.0) for m in (1, 2, 3, 4)}
    truths = {m: float(m) for m in beliefs}
    slate = optimal_slate(
        beliefs, truths, SignalModel(0.5), LINEAR, 2, [1, 2, 3, 4], random.Random(0), num_draws=200
    )
    assert slate.movie_ids == (1, 2)


def test_optimal_slate_full_set_when_k_equals_candidates():
    beliefs = {1: GoodBelief(1.0, 0.5), 2: GoodBelief(2.0, 0.5)}
    truths = {1: 1.0, 2: 2.0}
    slate = optimal_slate(
        beliefs, truths, SignalModel(0.5), LINEAR, 2, [1, 2], random.Random(0), num_draws=100
    )
    assert slate.movie_ids == (1, 2)


def test_optimal_slate_k_too_large_errors():
    beliefs = {1: GoodBelief(1.0, 0.5)}
    with pytest.raises(ChoiceError):
        optimal_slate(beliefs, {1: 1.0}, SignalModel(0.5), LINEAR, 2, [1], random.Random(0))


def test_optimal_slate_matches_oracle():
    for seed in range(12):
        rng = random.Random(seed)
        n = rng.randint(2, 6)
        k = rng.randint(1, min(2, n))
        beliefs = {
            m: GoodBelief(rng.uniform(0.5, 5.0), rng.choice([0.0, rng.uniform(0.2, 2.0)]))
            for m in range(1, n + 1)
        }
        truths = {m: rng.uniform(0.5, 5.0) for m in beliefs}
        signal = SignalModel(rng.uniform(0.1, 1.5))
        u = rng.choice([LINEAR, EXP])
        ours = optimal_slate(
            beliefs, truths, signal, u, k, list(beliefs), random.Random(1000 + seed), num_draws=300
        )
        expected = oracle_optimal_slate(
            beliefs, truths, signal, u, k, list(beliefs), random.Random(1000 + seed), num_draws=300
        )
        assert ours.movie_ids == expected, seed


# -- recommendation value --------------------------------------------------------------------


def test_no_value_when_choice_never_changes():
    # recommended goods are already known exactly: no draw can move beliefs
    beliefs = {1: GoodBelief(4.5, 0.0), 2: GoodBelief(2.0, 0.0), 3: GoodBelief(1.0, 0.0)}
    truths = {m: b.mean for m, b in beliefs.items()}
    value, se = slate_value(
        beliefs, truths, SignalModel(0.5), LINEAR, [2, 3], random.Random(0), num_draws=500
    )
    assert value == approx(0.0, abs=1e-12)
    assert se == approx(0.0, abs=1e-12)


def test_slate_value_under_prior_non_negative():
    rng = random.Random(31)
    for _ in range(25):
        n = rng.randint(2, 5)
        beliefs = {
            m: GoodBelief(rng.uniform(0.5, 5.0), rng.uniform(0.0, 1.5)) for m in range(1, n + 1)
        }
        k = rng.randint(1, min(2, n))
        slate_ids = rng.sample(sorted(beliefs), k)
        u = rng.choice([LINEAR, EXP])
        value, se = slate_value_under_prior(
            beliefs, SignalModel(rng.uniform(0.2, 1.5)), u, slate_ids, rng, num_draws=800
        )
        assert value >= -3 * se
