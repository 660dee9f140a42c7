"""Monthly elicitation pool: the platform-wide set of movies eligible for
belief elicitation, rebuilt at the start of every calendar month.

Five inclusion criteria, each applied genre by genre with quotas
proportional to the genre's share of the catalog (``ceil(share * budget *
y)``), then unioned with duplicates merged:

- ``popularity``: most-rated movies (budget 50y); every genre member is
  eligible, zero-rated movies rank last.
- ``rating``: highest rating score (budget 25y); only rated movies are
  eligible, the score is 0 otherwise.
- ``recent_popular``: most-rated among recent releases (budget 10y).
- ``trendy``: highest trendy score (budget 10y); only movies with a strictly
  positive score are eligible.
- ``serendipity``: uniform without replacement within the genre (budget 5y).

Ties break by (score desc, number of ratings desc, movie id asc), so a pool
is fully determined by (snapshot, shares, config).  Deduplication does not
refill: the pool may end up smaller than 100y.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from datetime import date
from math import ceil

from .catalog import CatalogSnapshot, rating_score, trendy_score

CRITERIA = ("popularity", "rating", "recent_popular", "trendy", "serendipity")

CRITERION_BUDGETS = {
    "popularity": 50,
    "rating": 25,
    "recent_popular": 10,
    "trendy": 10,
    "serendipity": 5,
}

POOL_HEADER = ["month", "movieId", "criteria"]


class PoolError(ValueError):
    pass


@dataclass(frozen=True)
class PoolConfig:
    y: float = 11.0
    recent_threshold_months: int = 6
    num_rating_threshold: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if self.y <= 0:
            raise PoolError(f"y must be positive, got {self.y}")


@dataclass(frozen=True)
class ElicitationPool:
    """The month's pool: movie ids with the criteria that selected them.

    ``selections`` records per (genre, criterion) provenance before
    deduplication, for audit and quota checks.
    """

    month: tuple[int, int]
    entries: dict[int, frozenset[str]]
    selections: dict[tuple[str, str], tuple[int, ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def movie_ids(self) -> set[int]:
        return set(self.entries)

    def criteria_for(self, movie_id: int) -> frozenset[str]:
        return self.entries[movie_id]


def refresh_schedule(clock_date: date) -> tuple[int, int]:
    """Pool identity key: pools are rebuilt when (year, month) changes."""
    return (clock_date.year, clock_date.month)


def build_pool(
    snap: CatalogSnapshot,
    shares: dict[str, float],
    config: PoolConfig,
) -> ElicitationPool:
    """Construct the month's pool from a snapshot.

    Deterministic given the config seed; a genre with fewer eligible movies
    than its quota contributes all of them.
    """
    if not snap.stats:
        raise PoolError("empty snapshot")

    rng = random.Random(config.rng_seed)
    recent = snap.recent_releases(config.recent_threshold_months)

    def count(mid: int) -> int:
        return snap.stats[mid].num_ratings_now

    entries: dict[int, set[str]] = {}
    selections: dict[tuple[str, str], tuple[int, ...]] = {}

    for genre in sorted(shares):
        members = snap.catalog.genre_members(genre)
        members = [m for m in members if m in snap.stats]
        quotas = {
            c: ceil(shares[genre] * budget * config.y)
            for c, budget in CRITERION_BUDGETS.items()
        }

        ranked = {
            "popularity": sorted(members, key=lambda m: (-count(m), m)),
            "rating": sorted(
                (m for m in members if count(m) > 0),
                key=lambda m: (-rating_score(m, snap), -count(m), m),
            ),
            "recent_popular": sorted(
                (m for m in members if m in recent), key=lambda m: (-count(m), m)
            ),
            "trendy": sorted(
                (
                    m
                    for m in members
                    if trendy_score(m, snap, config.num_rating_threshold) > 0
                ),
                key=lambda m: (
                    -trendy_score(m, snap, config.num_rating_threshold),
                    -count(m),
                    m,
                ),
            ),
        }

        for criterion in ("popularity", "rating", "recent_popular", "trendy"):
            chosen = tuple(ranked[criterion][: quotas[criterion]])
            selections[(genre, criterion)] = chosen
            for m in chosen:
                entries.setdefault(m, set()).add(criterion)

        k = min(quotas["serendipity"], len(members))
        chosen = tuple(rng.sample(members, k))
        selections[(genre, "serendipity")] = chosen
        for m in chosen:
            entries.setdefault(m, set()).add("serendipity")

    return ElicitationPool(
        month=refresh_schedule(snap.as_of),
        entries={m: frozenset(tags) for m, tags in entries.items()},
        selections=selections,
    )


class PoolScheduler:
    """Caches one pool per calendar month; ``current`` rebuilds only when the
    month key changes.  Single-writer: callers serialize month rollovers."""

    def __init__(self, builder):
        self._builder = builder
        self._month: tuple[int, int] | None = None
        self._pool: ElicitationPool | None = None

    def current(self, clock_date: date) -> ElicitationPool:
        key = refresh_schedule(clock_date)
        if key != self._month:
            self._pool = self._builder(clock_date)
            self._month = key
        return self._pool


def write_pool(pool: ElicitationPool, path) -> None:
    """Audit export: ``month,movieId,criteria`` with criteria pipe-separated."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(POOL_HEADER)
        month = f"{pool.month[0]:04d}-{pool.month[1]:02d}"
        for mid in sorted(pool.entries):
            w.writerow([month, mid, "|".join(sorted(pool.entries[mid]))])


def read_pool(path) -> ElicitationPool:
    entries: dict[int, frozenset[str]] = {}
    month: tuple[int, int] | None = None
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != POOL_HEADER:
            raise PoolError(f"{path}: bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                y, m = row[0].split("-")
                row_month = (int(y), int(m))
                mid = int(row[1])
                tags = frozenset(t for t in row[2].split("|") if t)
            except (ValueError, IndexError):
                raise PoolError(f"{path}:{lineno}: malformed row {row!r}") from None
            if not tags or not tags <= set(CRITERIA):
                raise PoolError(f"{path}:{lineno}: bad criteria {row[2]!r}")
            if month is None:
                month = row_month
            elif row_month != month:
                raise PoolError(f"{path}:{lineno}: mixed months in one pool file")
            if mid in entries:
                raise PoolError(f"{path}:{lineno}: duplicate movieId {mid}")
            entries[mid] = tags
    if month is None:
        raise PoolError(f"{path}: empty pool file")
    return ElicitationPool(month=month, entries=entries)
