"""Movie catalog: ingestion, dated snapshots, and per-movie scores.

A :class:`Catalog` is built once from a movies file and a ratings file and is
immutable afterwards; snapshots are pure functions of (catalog, date) and are
safe to share across threads.

File formats:

- movies file: header ``movieId,title,genres,releaseDate``; genres
  pipe-separated from the fixed 18-genre list; dates ISO (YYYY-MM-DD),
  release date may be empty.
- ratings file: header ``userId,movieId,rating,timestamp``; rating on the
  half-point grid 0.5..5.0; timestamp integer Unix seconds.

"Number of ratings" everywhere means distinct users holding a current rating
for the movie: a user re-rating a movie overwrites their previous rating and
does not increase the count.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from datetime import date, datetime, timezone

GENRES = (
    "Action",
    "Adventure",
    "Animation",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "History",
    "Horror",
    "Music",
    "Mystery",
    "Romance",
    "Science Fiction",
    "TV Movie",
    "Thriller",
    "War",
    "Western",
)
GENRE_SET = frozenset(GENRES)

RATING_GRID = tuple(i / 2 for i in range(1, 11))

MOVIES_HEADER = ["movieId", "title", "genres", "releaseDate"]
RATINGS_HEADER = ["userId", "movieId", "rating", "timestamp"]


class CatalogError(ValueError):
    """Malformed input file or invalid catalog query."""


def is_grid_rating(value: float) -> bool:
    """True if value sits exactly on the half-point grid 0.5..5.0."""
    return 0.5 <= value <= 5.0 and round(value * 2) == value * 2


def round_to_grid(value: float) -> float:
    """Nearest half-point grid value, clamped to [0.5, 5.0]."""
    return min(5.0, max(0.5, round(value * 2) / 2))


_DAYS_IN_MONTH = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)


def _month_length(year: int, month: int) -> int:
    if month == 2 and (year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)):
        return 29
    return _DAYS_IN_MONTH[month - 1]


def shift_months(d: date, months: int) -> date:
    """Shift a date by whole calendar months, clamping to month end.

    Mar 31 shifted by -1 gives Feb 28 (29 in leap years).
    """
    index = d.year * 12 + (d.month - 1) + months
    year, month = divmod(index, 12)
    month += 1
    return date(year, month, min(d.day, _month_length(year, month)))


def day_end_ts(d: date) -> int:
    """Unix second of the last instant of the given UTC day."""
    midnight = datetime(d.year, d.month, d.day, tzinfo=timezone.utc)
    return int(midnight.timestamp()) + 86400 - 1


@dataclass(frozen=True)
class Movie:
    movie_id: int
    title: str
    genres: frozenset[str]
    release_date: date | None

    def __post_init__(self):
        if self.movie_id <= 0:
            raise CatalogError(f"movie_id must be positive, got {self.movie_id}")
        if not self.genres:
            raise CatalogError(f"movie {self.movie_id} has no genres")
        unknown = self.genres - GENRE_SET
        if unknown:
            raise CatalogError(
                f"movie {self.movie_id} has unknown genre label(s): {sorted(unknown)}"
            )


@dataclass(frozen=True)
class RatingEvent:
    user_id: int
    movie_id: int
    rating: float
    timestamp: int

    def __post_init__(self):
        if self.user_id <= 0 or self.movie_id <= 0:
            raise CatalogError("user_id and movie_id must be positive")
        if not is_grid_rating(self.rating):
            raise CatalogError(f"off-grid rating {self.rating}")


@dataclass(frozen=True)
class MovieStats:
    """Per-movie rating statistics at a snapshot date."""

    num_ratings_now: int
    num_ratings_one_month_ago: int
    avg_rating: float | None
    rating_var: float | None


class Catalog:
    """Immutable store of movies and rating events.

    Events are kept in full; the *current* rating for a (user, movie) pair at
    any date is the latest event at or before it.
    """

    def __init__(self, movies: dict[int, Movie], events: list[RatingEvent]):
        self.movies = dict(movies)
        self.events = sorted(events, key=lambda e: (e.timestamp, e.user_id, e.movie_id))
        for e in self.events:
            if e.movie_id not in self.movies:
                raise CatalogError(f"rating references unknown movieId {e.movie_id}")
        self._by_movie: dict[int, list[RatingEvent]] = {}
        self._by_user: dict[int, list[RatingEvent]] = {}
        for e in self.events:
            self._by_movie.setdefault(e.movie_id, []).append(e)
            self._by_user.setdefault(e.user_id, []).append(e)
        self._genre_members: dict[str, list[int]] = {}
        for mid in sorted(self.movies):
            for g in self.movies[mid].genres:
                self._genre_members.setdefault(g, []).append(mid)

    @property
    def num_movies(self) -> int:
        return len(self.movies)

    @property
    def num_events(self) -> int:
        return len(self.events)

    def num_current_ratings(self) -> int:
        """Distinct (user, movie) pairs holding a rating."""
        return len({(e.user_id, e.movie_id) for e in self.events})

    def genre_members(self, genre: str) -> list[int]:
        """Movie ids listing the genre, ascending."""
        return self._genre_members.get(genre, [])

    def rated_movies(self, user_id: int, as_of_ts: int | None = None) -> set[int]:
        """Movies the user has rated by the given Unix second (all time if None)."""
        out = set()
        for e in self._by_user.get(user_id, []):
            if as_of_ts is None or e.timestamp <= as_of_ts:
                out.add(e.movie_id)
        return out

    def rated_by_user(self) -> dict[int, set[int]]:
        """user_id -> set of movie ids the user has ever rated."""
        return {u: {e.movie_id for e in evs} for u, evs in self._by_user.items()}

    def movie_events(self, movie_id: int) -> list[RatingEvent]:
        return self._by_movie.get(movie_id, [])

    def data_range(self) -> tuple[date, date] | None:
        """(first, last) event dates, or None if there are no events."""
        if not self.events:
            return None
        first = datetime.fromtimestamp(self.events[0].timestamp, tz=timezone.utc).date()
        last = datetime.fromtimestamp(self.events[-1].timestamp, tz=timezone.utc).date()
        return first, last


class CatalogSnapshot:
    """Per-movie statistics as of a date; counts include only events on or
    before the date (UTC).  Percentiles used by the rating score are computed
    lazily over movies with at least one rating."""

    def __init__(self, catalog: Catalog, as_of: date, stats: dict[int, MovieStats]):
        self.catalog = catalog
        self.as_of = as_of
        self.stats = stats
        self._count_pct: dict[int, float] | None = None
        self._avg_pct: dict[int, float] | None = None
        self._release_index: tuple[list[date], list[int]] | None = None

    def __contains__(self, movie_id: int) -> bool:
        return movie_id in self.stats

    def num_ratings(self, movie_id: int) -> int:
        return self.stats[movie_id].num_ratings_now

    def _percentiles(self) -> tuple[dict[int, float], dict[int, float]]:
        if self._count_pct is None:
            rated = [m for m, s in self.stats.items() if s.num_ratings_now > 0]
            self._count_pct = _tie_averaged_percentiles(
                rated, lambda m: self.stats[m].num_ratings_now
            )
            self._avg_pct = _tie_averaged_percentiles(
                rated, lambda m: self.stats[m].avg_rating
            )
        return self._count_pct, self._avg_pct

    def recent_releases(self, threshold_months: int = 6) -> set[int]:
        """Movies released within the threshold window ending at as_of."""
        lo = shift_months(self.as_of, -threshold_months)
        if self._release_index is None:
            dated = sorted(
                (m.release_date, m.movie_id)
                for m in self.catalog.movies.values()
                if m.release_date is not None
            )
            self._release_index = ([d for d, _ in dated], [i for _, i in dated])
        dates, ids = self._release_index
        start = bisect_left(dates, lo)
        end = bisect_right(dates, self.as_of)
        return set(ids[start:end])


def _tie_averaged_percentiles(ids: list[int], key) -> dict[int, float]:
    """percentile = average rank / N, ranks ascending from 1, ties averaged."""
    n = len(ids)
    ordered = sorted(ids, key=lambda m: (key(m), m))
    pct: dict[int, float] = {}
    i = 0
    while i < n:
        j = i
        while j + 1 < n and key(ordered[j + 1]) == key(ordered[i]):
            j += 1
        avg_rank = (i + 1 + j + 1) / 2
        for k in range(i, j + 1):
            pct[ordered[k]] = avg_rank / n
        i = j + 1
    return pct


def ingest(movies_file, ratings_file) -> Catalog:
    """Load a catalog from a movies file and a raw ratings file.

    Rejects the whole file on the first malformed row, naming the line.
    """
    movies: dict[int, Movie] = {}
    with open(movies_file, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != MOVIES_HEADER:
            raise CatalogError(f"{movies_file}: bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise CatalogError(f"{movies_file}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                mid = int(row[0])
                genres = frozenset(g for g in row[2].split("|") if g)
                release = date.fromisoformat(row[3]) if row[3] else None
                movie = Movie(mid, row[1], genres, release)
            except (ValueError, CatalogError) as exc:
                raise CatalogError(f"{movies_file}:{lineno}: {exc}") from None
            if mid in movies:
                raise CatalogError(f"{movies_file}:{lineno}: duplicate movieId {mid}")
            movies[mid] = movie

    events: list[RatingEvent] = []
    with open(ratings_file, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != RATINGS_HEADER:
            raise CatalogError(f"{ratings_file}: bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise CatalogError(f"{ratings_file}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                events.append(
                    RatingEvent(int(row[0]), int(row[1]), float(row[2]), int(row[3]))
                )
            except (ValueError, CatalogError) as exc:
                raise CatalogError(f"{ratings_file}:{lineno}: {exc}") from None

    try:
        return Catalog(movies, events)
    except CatalogError as exc:
        raise CatalogError(f"{ratings_file}: {exc}") from None


def snapshot(catalog: Catalog, as_of: date) -> CatalogSnapshot:
    """Per-movie statistics at as_of and at one calendar month earlier.

    The lag date keeps the day-of-month, clamped to the shorter month's end.
    """
    now_ts = day_end_ts(as_of)
    ago_ts = day_end_ts(shift_months(as_of, -1))
    stats: dict[int, MovieStats] = {}
    for mid in catalog.movies:
        latest: dict[int, RatingEvent] = {}
        ago_users = set()
        for e in catalog.movie_events(mid):
            if e.timestamp > now_ts:
                break
            latest[e.user_id] = e
            if e.timestamp <= ago_ts:
                ago_users.add(e.user_id)
        n = len(latest)
        if n:
            values = [e.rating for e in latest.values()]
            avg = sum(values) / n
            var = sum((v - avg) ** 2 for v in values) / n
        else:
            avg = var = None
        stats[mid] = MovieStats(n, len(ago_users), avg, var)
    return CatalogSnapshot(catalog, as_of, stats)


def genre_shares(catalog: Catalog) -> dict[str, float]:
    """Fraction of movies listing each genre; genres overlap, so the values
    can sum above 1.  Only genres with at least one movie appear."""
    if not catalog.movies:
        raise CatalogError("empty catalog")
    total = catalog.num_movies
    return {
        g: len(members) / total
        for g, members in sorted(catalog._genre_members.items())
    }


def rating_score(movie_id: int, snap: CatalogSnapshot) -> float:
    """Product of the movie's percentile in number of ratings and its
    percentile in average rating; 0 for movies with no ratings.

    Percentile = rank/N with average rank for ties, over rated movies only.
    """
    if movie_id not in snap.stats:
        raise CatalogError(f"snapshot does not cover movie {movie_id}")
    if snap.stats[movie_id].num_ratings_now == 0:
        return 0.0
    count_pct, avg_pct = snap._percentiles()
    return count_pct[movie_id] * avg_pct[movie_id]


def trendy_score(movie_id: int, snap: CatalogSnapshot, num_rating_threshold: int = 100) -> float:
    """Rating-growth score: delta * ln(delta) / count_now.

    0 if the movie has fewer than the threshold ratings or a non-positive
    change since the previous month.
    """
    s = snap.stats[movie_id]
    if s.num_ratings_now < num_rating_threshold:
        return 0.0
    delta = s.num_ratings_now - s.num_ratings_one_month_ago
    if delta <= 0:
        return 0.0
    return delta * math.log(delta) / s.num_ratings_now


def is_recent_release(movie: Movie, as_of: date, recent_threshold_months: int = 6) -> bool:
    """True iff released within the threshold window ending at as_of, both
    ends inclusive.  Movies without a release date are never recent."""
    if movie.release_date is None:
        return False
    return shift_months(as_of, -recent_threshold_months) <= movie.release_date <= as_of


def write_movies(movies: dict[int, Movie], path) -> None:
    """Write a movies file in the ingest format (sorted by id)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(MOVIES_HEADER)
        for mid in sorted(movies):
            m = movies[mid]
            w.writerow(
                [
                    mid,
                    m.title,
                    "|".join(sorted(m.genres)),
                    m.release_date.isoformat() if m.release_date else "",
                ]
            )
