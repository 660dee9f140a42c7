import random

import pytest

from beliefkit.pool import ElicitationPool
from beliefkit.sampler import (
    ElicitationBatch,
    ElicitationHistory,
    PredictedRatings,
    SamplerError,
    eligible_set,
    excluded_set,
    refresh_batch,
    sample_batch,
)

DAY = 86400
NOW = 1_700_000_000


def make_pool(movie_ids):
    return ElicitationPool((2023, 6), {m: frozenset({"popularity"}) for m in movie_ids})


def predictions_for(user_id, movie_ids, value=3.5):
    return PredictedRatings("test", {(user_id, m): value for m in movie_ids})


# -- eligibility ---------------------------------------------------------------


def test_eligible_set_difference():
    pool = make_pool([1, 2, 3])
    assert eligible_set(9, pool, {9: {2}}) == {1, 3}


def test_eligible_set_unrated_user():
    pool = make_pool([1, 2, 3])
    assert eligible_set(9, pool, {}) == {1, 2, 3}


def test_eligible_set_everything_rated():
    pool = make_pool([1, 2])
    assert eligible_set(9, pool, {9: {1, 2, 99}}) == set()


# -- exclusion ------------------------------------------------------------------


def test_excluded_after_two_recent_presentations():
    history = ElicitationHistory()
    history.record_presentation(9, 5, NOW - 80 * DAY)
    history.record_presentation(9, 5, NOW - 10 * DAY)
    assert excluded_set(9, history, NOW) == {5}


def test_not_excluded_when_one_presentation_is_91_days_old():
    history = ElicitationHistory()
    history.record_presentation(9, 5, NOW - 91 * DAY)
    history.record_presentation(9, 5, NOW - 10 * DAY)
    assert excluded_set(9, history, NOW) == set()


def test_boundary_exactly_90_days_counts():
    history = ElicitationHistory()
    history.record_presentation(9, 5, NOW - 90 * DAY)
    history.record_presentation(9, 5, NOW)
    assert excluded_set(9, history, NOW) == {5}


def test_single_presentation_not_excluded():
    history = ElicitationHistory()
    history.record_presentation(9, 5, NOW - 1 * DAY)
    assert excluded_set(9, history, NOW) == set()


def test_history_rejects_regressing_timestamps():
    history = ElicitationHistory()
    history.record_presentation(9, 5, NOW)
    with pytest.raises(SamplerError):
        history.record_presentation(9, 5, NOW - 1)


def test_history_rejects_response_without_presentation():
    history = ElicitationHistory()
    with pytest.raises(SamplerError):
        history.record_response(9, 5, NOW, 0)


# -- batch composition ------------------------------------------------------------


def abundant_inputs(user_id=9):
    pool_ids = list(range(1, 61))
    pool = make_pool(pool_ids)
    recent = set(range(50, 61))
    top_picks = list(range(1, 31))
    predicted = predictions_for(user_id, pool_ids)
    return pool, recent, top_picks, predicted


def test_batch_composition_3_4_1():
    pool, recent, top_picks, predicted = abundant_inputs()
    batch = sample_batch(
        9, pool, ElicitationHistory(), predicted, top_picks, random.Random(1),
        now=NOW, rated_movies={}, recent_releases=recent,
    )
    assert len(batch.slots) == 8
    assert batch.source_counts() == {"broad": 3, "rec": 4, "new": 1}
    assert batch.shortfall_reason is None
    assert len(set(batch.movie_ids())) == 8


def test_rec_slots_come_from_top_100_with_predictions():
    pool_ids = list(range(1, 301))
    pool = make_pool(pool_ids)
    top_picks = list(range(300, 0, -1))  # 300 first; top-100 window is 300..201
    predicted = PredictedRatings("test", {(9, m): 4.0 for m in range(201, 301)})
    batch = sample_batch(
        9, pool, ElicitationHistory(), predicted, top_picks, random.Random(2),
        now=NOW, rated_movies={}, recent_releases=set(),
    )
    window = set(top_picks[:100])
    for slot in batch.slots:
        if slot.source == "rec":
            assert slot.movie_id in window
            assert predicted.has(9, slot.movie_id)


def test_empty_top_picks_falls_back_to_broad():
    pool, recent, _, predicted = abundant_inputs()
    batch = sample_batch(
        9, pool, ElicitationHistory(), predicted, [], random.Random(3),
        now=NOW, rated_movies={}, recent_releases=recent,
    )
    assert batch.source_counts() == {"broad": 7, "rec": 0, "new": 1}


def test_no_recent_releases_falls_back_to_broad():
    pool, _, top_picks, predicted = abundant_inputs()
    batch = sample_batch(
        9, pool, ElicitationHistory(), predicted, top_picks, random.Random(4),
        now=NOW, rated_movies={}, recent_releases=set(),
    )
    assert batch.source_counts() == {"broad": 4, "rec": 4, "new": 0}


def test_short_batch_with_reason_when_pool_small():
    pool = make_pool([1, 2, 3, 4, 5])
    batch = sample_batch(
        9, pool, ElicitationHistory(), PredictedRatings("test", {}), [], random.Random(5),
        now=NOW, rated_movies={}, recent_releases=set(),
    )
    assert len(batch.slots) == 5
    assert all(s.source == "broad" for s in batch.slots)
    assert batch.shortfall_reason is not None


def test_exhausted_pool_yields_empty_batch():
    pool = make_pool([1, 2])
    batch = sample_batch(
        9, pool, ElicitationHistory(), PredictedRatings("test", {}), [], random.Random(6),
        now=NOW, rated_movies={9: {1, 2}}, recent_releases=set(),
    )
    assert batch.slots == ()
    assert batch.shortfall_reason == "exhausted"


def test_batch_never_contains_rated_or_excluded():
    rng = random.Random(0)
    pool_ids = list(range(1, 41))
    pool = make_pool(pool_ids)
    for trial in range(200):
        rated = set(rng.sample(pool_ids, rng.randint(0, 20)))
        history = ElicitationHistory()
        excluded_target = set(rng.sample(pool_ids, rng.randint(0, 10)))
        for m in excluded_target:
            history.record_presentation(9, m, NOW - 5 * DAY)
            history.record_presentation(9, m, NOW - 1 * DAY)
        batch = sample_batch(
            9, pool, history, predictions_for(9, pool_ids), pool_ids[:20], rng,
            now=NOW, rated_movies={9: rated}, recent_releases={38, 39, 40},
        )
        assert not (set(batch.movie_ids()) & rated)
        assert not (set(batch.movie_ids()) & excluded_set(9, history, NOW))


def test_broad_uniformity_over_10000_draws():
    pool = make_pool(list(range(1, 11)))
    counts = {m: 0 for m in range(1, 11)}
    draws = 10_000
    for seed in range(draws):
        batch = sample_batch(
            9, pool, ElicitationHistory(), PredictedRatings("test", {}), [],
            random.Random(seed), now=NOW, rated_movies={}, recent_releases=set(),
        )
        assert batch.source_counts()["broad"] == 8
        for m in batch.movie_ids():
            counts[m] += 1
    p = 8 / 10
    se = (p * (1 - p) / draws) ** 0.5
    for m, c in counts.items():
        assert abs(c / draws - p) <= 3 * se, (m, c / draws)


def test_batch_determinism():
    pool, recent, top_picks, predicted = abundant_inputs()
    a = sample_batch(
        9, pool, ElicitationHistory(), predicted, top_picks, random.Random(11),
        now=NOW, rated_movies={}, recent_releases=recent,
    )
    b = sample_batch(
        9, pool, ElicitationHistory(), predicted, top_picks, random.Random(11),
        now=NOW, rated_movies={}, recent_releases=recent,
    )
    assert a == b


# -- refresh ------------------------------------------------------------------------


def refreshed(batch, answered, seed=21):
    pool, recent, top_picks, predicted = abundant_inputs()
    return refresh_batch(
        9, batch, answered, pool, ElicitationHistory(), predicted, top_picks,
        random.Random(seed), now=NOW + DAY, rated_movies={}, recent_releases=recent,
    )


def make_batch(seed=20):
    pool, recent, top_picks, predicted = abundant_inputs()
    return sample_batch(
        9, pool, ElicitationHistory(), predicted, top_picks, random.Random(seed),
        now=NOW, rated_movies={}, recent_releases=recent,
    )


def test_refresh_no_responses_is_noop():
    batch = make_batch()
    assert refreshed(batch, set()) is batch


def test_refresh_replaces_only_answered_slots():
    batch = make_batch()
    answered = {batch.slots[2].movie_id, batch.slots[5].movie_id}
    new = refreshed(batch, answered)
    assert len(new.slots) == 8
    for i, slot in enumerate(new.slots):
        if i in (2, 5):
            assert slot.movie_id != batch.slots[i].movie_id
            assert slot.movie_id not in answered
        else:
            assert slot == batch.slots[i]
    assert len(set(new.movie_ids())) == 8


def test_refresh_all_answered_gives_full_new_batch():
    batch = make_batch()
    answered = set(batch.movie_ids())
    new = refreshed(batch, answered)
    assert len(new.slots) == 8
    assert not (set(new.movie_ids()) & answered)


def test_refresh_wrong_user_rejected():
    batch = make_batch()
    pool, recent, top_picks, predicted = abundant_inputs()
    with pytest.raises(SamplerError):
        refresh_batch(
            8, batch, set(), pool, ElicitationHistory(), predicted, top_picks,
            random.Random(0), now=NOW, rated_movies={}, recent_releases=recent,
        )
