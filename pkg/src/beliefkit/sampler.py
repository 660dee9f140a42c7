"""Per-user elicitation batches: 8 movies drawn from the current pool.

Slot composition targets 3 broad + 4 rec + 1 new:

- ``rec`` slots come uniformly from the top 100 of the user's
  recommendation-ordered list, restricted to movies with a predicted rating.
- ``new`` is one recent release.
- ``broad`` slots are uniform over the remaining eligible pool.

Shortfalls in rec/new fall back to broad (tagged broad); an exhausted pool
yields a short batch with ``shortfall_reason`` set.  Movies the user has
rated are never presented, nor movies presented to them twice in the
trailing 90 days ("elicited" counts presentations, not responses, so
non-responders do not burn the same movies).
"""

from __future__ import annotations

from dataclasses import dataclass

from .catalog import is_grid_rating

BATCH_SIZE = 8
BROAD_TARGET = 3
REC_TARGET = 4
NEW_TARGET = 1
TOP_PICKS_WINDOW = 100
EXCLUSION_WINDOW_SECONDS = 90 * 86400
EXCLUSION_PRESENTATION_CAP = 2

SOURCES = ("broad", "rec", "new")


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class BatchSlot:
    movie_id: int
    source: str


@dataclass(frozen=True)
class ElicitationBatch:
    user_id: int
    created_at: int
    slots: tuple[BatchSlot, ...]
    shortfall_reason: str | None = None

    def movie_ids(self) -> tuple[int, ...]:
        return tuple(s.movie_id for s in self.slots)

    def source_counts(self) -> dict[str, int]:
        counts = {s: 0 for s in SOURCES}
        for slot in self.slots:
            counts[slot.source] += 1
        return counts


class ElicitationHistory:
    """Presentation and response timestamps per (user, movie).

    Timestamps are Unix seconds and must be non-decreasing per pair; a
    response requires a prior presentation.
    """

    def __init__(self):
        self._presentations: dict[tuple[int, int], list[int]] = {}
        self._responses: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def record_presentation(self, user_id: int, movie_id: int, ts: int) -> None:
        key = (user_id, movie_id)
        seen = self._presentations.setdefault(key, [])
        if seen and ts < seen[-1]:
            raise SamplerError(f"presentation timestamps regress for {key}")
        seen.append(ts)

    def record_response(self, user_id: int, movie_id: int, ts: int, is_seen: int) -> None:
        key = (user_id, movie_id)
        if not self._presentations.get(key):
            raise SamplerError(f"response without presentation for {key}")
        self._responses.setdefault(key, []).append((ts, is_seen))

    def presentations(self, user_id: int, movie_id: int) -> list[int]:
        return self._presentations.get((user_id, movie_id), [])

    def presented_movies(self, user_id: int) -> set[int]:
        return {m for (u, m) in self._presentations if u == user_id}


class UserHistoryIndex:
    """Per-user view over an ElicitationHistory, avoiding full scans when one
    user is sampled repeatedly (the simulator's hot path)."""

    def __init__(self, history: ElicitationHistory, user_id: int):
        self.history = history
        self.user_id = user_id
        self._mine: dict[int, list[int]] = {}
        self._multi: set[int] = set()

    def record_presentation(self, movie_id: int, ts: int) -> None:
        self.history.record_presentation(self.user_id, movie_id, ts)
        stamps = self._mine.setdefault(movie_id, [])
        stamps.append(ts)
        if len(stamps) >= EXCLUSION_PRESENTATION_CAP:
            self._multi.add(movie_id)

    def excluded(self, now: int) -> set[int]:
        # only movies presented at least twice ever can be excluded
        cutoff = now - EXCLUSION_WINDOW_SECONDS
        out = set()
        for movie_id in self._multi:
            stamps = self._mine[movie_id]
            recent = sum(1 for t in stamps if cutoff <= t <= now)
            if recent >= EXCLUSION_PRESENTATION_CAP:
                out.add(movie_id)
        return out


@dataclass(frozen=True)
class PredictedRatings:
    """Pluggable predicted-ratings map; any provider with ``has``/``get``
    works for sampling.  Values must sit on the half-point grid."""

    provider: str
    values: dict[tuple[int, int], float]

    def __post_init__(self):
        for key, v in self.values.items():
            if not is_grid_rating(v):
                raise SamplerError(f"off-grid predicted rating {v} for {key}")

    def has(self, user_id: int, movie_id: int) -> bool:
        return (user_id, movie_id) in self.values

    def get(self, user_id: int, movie_id: int) -> float | None:
        return self.values.get((user_id, movie_id))


def eligible_set(user_id: int, pool, rated_movies: dict[int, set[int]]) -> set[int]:
    """Pool movies the user has not rated at any time so far."""
    rated = rated_movies.get(user_id, set())
    return {m for m in pool.entries if m not in rated}


def excluded_set(user_id: int, history: ElicitationHistory, now: int) -> set[int]:
    """Movies presented to the user at least twice in the trailing 90 days."""
    cutoff = now - EXCLUSION_WINDOW_SECONDS
    out = set()
    for movie_id in history.presented_movies(user_id):
        stamps = history.presentations(user_id, movie_id)
        recent = sum(1 for t in stamps if cutoff <= t <= now)
        if recent >= EXCLUSION_PRESENTATION_CAP:
            out.add(movie_id)
    return out


def _draw(rng, candidates: list[int], k: int) -> list[int]:
    if k <= 0 or not candidates:
        return []
    if k >= len(candidates):
        return list(candidates)
    return rng.sample(candidates, k)


def sample_batch(
    user_id: int,
    pool,
    history: ElicitationHistory,
    predicted,
    top_picks: list[int],
    rng,
    *,
    now: int,
    rated_movies: dict[int, set[int]],
    recent_releases: set[int],
    excluded: set[int] | None = None,
) -> ElicitationBatch:
    """Draw one batch.  Deterministic given the rng state.

    ``top_picks`` is the user's recommendation-ordered movie list (may be
    empty); ``recent_releases`` the currently-recent movie ids.  ``excluded``
    overrides the exclusion-set computation when the caller already has it.
    """
    eligible = eligible_set(user_id, pool, rated_movies)
    if excluded is None:
        excluded = excluded_set(user_id, history, now)
    available = eligible - excluded
    if not available:
        return ElicitationBatch(user_id, now, (), "exhausted")

    rec_candidates = [
        m
        for m in top_picks[:TOP_PICKS_WINDOW]
        if m in available and predicted.has(user_id, m)
    ]
    rec_chosen = _draw(rng, rec_candidates, REC_TARGET)
    chosen = set(rec_chosen)

    new_candidates = sorted((available & recent_releases) - chosen)
    new_chosen = _draw(rng, new_candidates, NEW_TARGET)
    chosen.update(new_chosen)

    shortfall = (REC_TARGET - len(rec_chosen)) + (NEW_TARGET - len(new_chosen))
    broad_candidates = sorted(available - chosen)
    broad_chosen = _draw(rng, broad_candidates, BROAD_TARGET + shortfall)

    slots = (
        [BatchSlot(m, "rec") for m in rec_chosen]
        + [BatchSlot(m, "new") for m in new_chosen]
        + [BatchSlot(m, "broad") for m in broad_chosen]
    )
    rng.shuffle(slots)

    reason = None
    if len(slots) < BATCH_SIZE:
        reason = f"only {len(slots)} available after eligibility and exclusion"
    return ElicitationBatch(user_id, now, tuple(slots), reason)


def refresh_batch(
    user_id: int,
    current_batch: ElicitationBatch,
    answered: set[int],
    pool,
    history: ElicitationHistory,
    predicted,
    top_picks: list[int],
    rng,
    *,
    now: int,
    rated_movies: dict[int, set[int]],
    recent_releases: set[int],
) -> ElicitationBatch:
    """Replace only the slots whose movies already received a response
    (isSeen 0 or 1); unanswered slots keep their movie and position.

    Replacements target the slot's original source with the same constraints,
    falling back to broad; a slot with no candidate at all is dropped.
    """
    if current_batch.user_id != user_id:
        raise SamplerError("batch does not belong to user")
    to_replace = [s for s in current_batch.slots if s.movie_id in answered]
    if not to_replace:
        return current_batch

    eligible = eligible_set(user_id, pool, rated_movies)
    excluded = excluded_set(user_id, history, now)
    kept = {s.movie_id for s in current_batch.slots if s.movie_id not in answered}
    available = eligible - excluded - kept - answered

    rec_reservoir = [
        m
        for m in top_picks[:TOP_PICKS_WINDOW]
        if m in available and predicted.has(user_id, m)
    ]

    slots: list[BatchSlot] = []
    dropped = 0
    taken: set[int] = set()
    for slot in current_batch.slots:
        if slot.movie_id not in answered:
            slots.append(slot)
            continue
        replacement = None
        source = slot.source
        if source == "rec":
            candidates = [m for m in rec_reservoir if m not in taken]
            if candidates:
                replacement = rng.choice(candidates)
        elif source == "new":
            candidates = sorted((available & recent_releases) - taken)
            if candidates:
                replacement = rng.choice(candidates)
        if replacement is None:
            source = "broad"
            candidates = sorted(available - taken)
            if candidates:
                replacement = rng.choice(candidates)
        if replacement is None:
            dropped += 1
            continue
        taken.add(replacement)
        slots.append(BatchSlot(replacement, source))

    reason = f"{dropped} slot(s) dropped: pool exhausted" if dropped else None
    return ElicitationBatch(user_id, now, tuple(slots), reason)
