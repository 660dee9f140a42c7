"""Shared fixtures: small in-memory catalogs and file writers."""

from __future__ import annotations

from datetime import date, datetime, timezone

import pytest

from beliefkit.catalog import Catalog, Movie, RatingEvent


def ts_of(d: date, second: int = 43200) -> int:
    """Unix second within the given UTC day (noon by default)."""
    return int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp()) + second


def make_movie(movie_id, genres=("Drama",), release=None, title=None) -> Movie:
    return Movie(movie_id, title or f"Movie {movie_id}", frozenset(genres), release)


def make_catalog(movies, events=()) -> Catalog:
    return Catalog({m.movie_id: m for m in movies}, list(events))


@pytest.fixture
def drama_catalog():
    """Ten Drama movies, movie i rated by users 1..i, all at the same value
    per movie so averages are exact; counts 1..10 and distinct averages put
    movie 9 at count-percentile 0.9 and average-percentile 0.8."""
    avgs = {1: 0.5, 2: 1.0, 3: 1.5, 4: 2.0, 5: 2.5, 6: 3.0, 7: 3.5, 8: 4.5, 9: 4.0, 10: 5.0}
    movies = [make_movie(i, release=date(2020, 1, 1)) for i in range(1, 11)]
    events = [
        RatingEvent(u, i, avgs[i], ts_of(date(2023, 1, 1)) + i * 100 + u)
        for i in range(1, 11)
        for u in range(1, i + 1)
    ]
    return make_catalog(movies, events)
