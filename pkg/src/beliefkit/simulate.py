"""Synthetic users running the full elicitation loop.

Each simulated day, every user receives a top-picks slate (a noisy-greedy
stub ranking movies by current belief means), has their beliefs shifted by
the slate's signals, is presented a fresh 8-slot elicitation batch, responds
to each slot with their personal propensity, and after a not-seen response
decides to watch the movie with probability

    beta0 + beta1 * reported_rating + beta2 * (6 - reported_certainty)

so the watch regression can recover the planted coefficients.  Watched
movies get a rating equal to the latent value rounded to the grid and become
ineligible.

True values come from a rank-d latent factor model clamped to the rating
scale; prior means are the values plus bias noise; prior standard deviations
grow with the movie's popularity rank so users are surer about popular
movies.  Reported certainty is the prior precision (1/sd) quantile-binned
into five population-level bins.

Everything is driven by per-user RNG streams derived from (seed, user_id),
so runs are reproducible byte for byte and users could be simulated in
parallel; monthly pools are built from the pre-generated platform history
only, keeping users independent of each other.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, fields, replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from . import dataset_io
from .catalog import (
    Catalog,
    GENRES,
    Movie,
    RatingEvent,
    day_end_ts,
    round_to_grid,
    shift_months,
    snapshot,
    genre_shares,
    write_movies,
)
from .choice import GoodBelief, RecommendationSlate, SignalModel, UtilityFunction, update_beliefs
from .dataset_io import BeliefRecord, ElicitationRequestRecord, RecommendationLogRecord
from .pool import PoolConfig, build_pool, refresh_schedule
from .sampler import ElicitationHistory, UserHistoryIndex, sample_batch


@dataclass(frozen=True)
class SimConfig:
    num_users: int = 1000
    num_movies: int = 2000
    horizon_days: int = 90
    y: float = 11.0
    rng_seed: int = 0
    start: date = date(2023, 3, 1)
    # response model: propensity ~ Beta(a, b), calibrated to a 0.078 mean
    # and 0.031 median response ratio
    response_beta_a: float = 0.387
    response_beta_b: float = 4.577
    rec_response_boost: float = 1.0
    # consumption linear probability model (planted targets)
    beta0: float = 0.75
    beta1: float = 0.028
    beta2: float = -0.134
    # beliefs and recommendation signals
    signal_sd: float = 0.6
    latent_dim: int = 2
    user_factor_loc: float = 1.0
    user_factor_scale: float = 0.35
    item_factor_scale: float = 0.45
    value_noise_sd: float = 0.35
    prior_bias_sd: float = 0.5
    prior_sd_min: float = 0.3
    prior_sd_max: float = 1.2
    prior_sd_jitter: float = 0.05
    # synthetic platform history
    num_history_users: int = 3000
    history_scale: float = 3000.0
    history_exponent: float = 0.75
    user_history_ratings: int = 30
    seen_unrated_fraction: float = 0.05
    recent_fraction: float = 0.10
    # recommender stub
    slate_size: int = 10
    slate_noise_sd: float = 0.4
    top_picks_length: int = 150

    def digest(self) -> str:
        line = ";".join(f"{f.name}={getattr(self, f.name)}" for f in fields(self))
        return hashlib.sha256(line.encode()).hexdigest()


@dataclass
class SimUser:
    user_id: int
    truths: np.ndarray
    prior_means: np.ndarray
    prior_sds: np.ndarray
    response_propensity: float
    seen_unrated: dict[int, date]
    rated: set[int]
    utility: UtilityFunction


@dataclass
class Population:
    config: SimConfig
    movies: dict[int, Movie]
    history_events: list[RatingEvent]
    users: list[SimUser]
    certainty_edges: np.ndarray
    popularity_order: list[int]

    def movie_ids(self) -> list[int]:
        return sorted(self.movies)

    def certainty(self, sd: float) -> int:
        if sd <= 0:
            return 5
        return 1 + int(np.searchsorted(self.certainty_edges, 1.0 / sd, side="right"))


def _movie_stream(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0xCA7])

def _history_stream(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0x1157])

def _user_stream(seed: int, user_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0x05E2, user_id])


def spawn_population(config: SimConfig) -> Population:
    """Deterministic synthetic platform: movies, history, users, priors."""
    rng = _movie_stream(config.rng_seed)
    m = config.num_movies

    movies: dict[int, Movie] = {}
    start = config.start
    for mid in range(1, m + 1):
        k = int(rng.choice([1, 2, 3], p=[0.45, 0.40, 0.15]))
        genres = frozenset(rng.choice(GENRES, size=k, replace=False))
        if rng.random() < config.recent_fraction:
            offset = int(rng.integers(1, 150))
        else:
            offset = int(rng.integers(181, 3650))
        movies[mid] = Movie(mid, f"Movie {mid}", genres, start - timedelta(days=offset))

    # planted popularity: target rating counts decay in popularity rank
    order = list(rng.permutation(np.arange(1, m + 1)))
    popularity_order = [int(x) for x in order]
    counts = {
        mid: min(
            config.num_history_users,
            max(3, int(config.history_scale * (rank + 1) ** -config.history_exponent)),
        )
        for rank, mid in enumerate(popularity_order)
    }

    hist_rng = _history_stream(config.rng_seed)
    start_ts = day_end_ts(start - timedelta(days=1)) + 1
    horizon_ts = start_ts + config.horizon_days * 86400
    quality = {mid: 3.4 + 0.5 * hist_rng.standard_normal() for mid in sorted(movies)}
    hist_users = np.arange(
        config.num_users + 1, config.num_users + config.num_history_users + 1
    )
    history_events: list[RatingEvent] = []
    for mid in sorted(movies):
        raters = hist_rng.choice(hist_users, size=counts[mid], replace=False)
        release_ts = day_end_ts(movies[mid].release_date)
        lo = max(release_ts, start_ts - 730 * 86400)
        stamps = hist_rng.integers(lo, horizon_ts, size=counts[mid])
        values = quality[mid] + 0.7 * hist_rng.standard_normal(counts[mid])
        for u, ts, v in zip(raters, stamps, values):
            history_events.append(RatingEvent(int(u), mid, round_to_grid(v), int(ts)))

    rank_of = {mid: rank for rank, mid in enumerate(popularity_order)}
    sd_base = np.array(
        [
            config.prior_sd_min
            + (config.prior_sd_max - config.prior_sd_min) * rank_of[mid] / max(1, m - 1)
            for mid in sorted(movies)
        ]
    )
    count_weights = np.array([counts[mid] for mid in sorted(movies)], dtype=float)
    count_weights /= count_weights.sum()

    # shared item factors: the value matrix is rank-d before noise and clamp
    d = config.latent_dim
    factor_rng = np.random.default_rng([config.rng_seed, 0xFAC7])
    item_loc = (3.2 / d) / config.user_factor_loc
    item_factors = item_loc + config.item_factor_scale * factor_rng.standard_normal((m, d))

    users: list[SimUser] = []
    all_inv_sds = []
    for uid in range(1, config.num_users + 1):
        urng = _user_stream(config.rng_seed, uid)
        u_vec = config.user_factor_loc + config.user_factor_scale * urng.standard_normal(d)
        raw = item_factors @ u_vec + config.value_noise_sd * urng.standard_normal(m)
        truths = np.clip(raw, 0.5, 5.0)
        prior_means = np.clip(truths + config.prior_bias_sd * urng.standard_normal(m), 0.5, 5.0)
        prior_sds = sd_base * np.exp(config.prior_sd_jitter * urng.standard_normal(m))
        rho = float(urng.beta(config.response_beta_a, config.response_beta_b))

        # pre-start rating history, popularity weighted
        n_hist = min(config.user_history_ratings, m)
        picked = urng.choice(np.arange(1, m + 1), size=n_hist, replace=False, p=count_weights)
        rated = set()
        for mid in sorted(int(x) for x in picked):
            ts = int(urng.integers(start_ts - 730 * 86400, start_ts))
            ts = max(ts, day_end_ts(movies[mid].release_date))
            value = truths[mid - 1] + 0.3 * urng.standard_normal()
            history_events.append(RatingEvent(uid, mid, round_to_grid(value), ts))
            rated.add(mid)

        seen_unrated = {}
        for mid in sorted(movies):
            if mid not in rated and urng.random() < config.seen_unrated_fraction:
                seen_unrated[mid] = start - timedelta(days=int(urng.integers(30, 720)))

        users.append(
            SimUser(
                uid,
                truths,
                prior_means,
                prior_sds,
                rho,
                seen_unrated,
                rated,
                UtilityFunction.linear(),
            )
        )
        all_inv_sds.append(1.0 / prior_sds)

    edges = np.percentile(np.concatenate(all_inv_sds), [20, 40, 60, 80])
    return Population(config, movies, history_events, users, edges, popularity_order)


@dataclass
class SimLogs:
    config: SimConfig
    movies: dict[int, Movie]
    requests: list[ElicitationRequestRecord]
    beliefs: list[BeliefRecord]
    ratings: list[RatingEvent]
    recommendations: list[RecommendationLogRecord]
    consumption: list[tuple[int, int, int]]  # (timestamp, user, movie)
    history: ElicitationHistory


def _month_starts(start: date, horizon_days: int) -> list[date]:
    out = [start]
    current = date(start.year, start.month, 1)
    end = start + timedelta(days=horizon_days)
    while True:
        current = shift_months(current, 1)
        if current > end:
            break
        out.append(current)
    return out


class _AllPredicted:
    """Prediction stub for the simulator: the platform can score any movie
    in the synthetic catalog (every movie has ratings)."""

    provider = "sim-stub"

    @staticmethod
    def has(user_id: int, movie_id: int) -> bool:
        return True


def run(config: SimConfig, population: Population | None = None) -> SimLogs:
    """Run the full loop and return logs in released-schema records.

    A pre-spawned (possibly edited) population can be supplied for
    controlled experiments; by default one is spawned from the config.
    """
    if population is None:
        population = spawn_population(config)
    catalog = Catalog(population.movies, population.history_events)
    shares = genre_shares(catalog)

    pools = {}
    for month_start in _month_starts(config.start, config.horizon_days):
        snap = snapshot(catalog, month_start)
        pool_config = PoolConfig(y=config.y, rng_seed=config.rng_seed)
        pools[refresh_schedule(month_start)] = build_pool(snap, shares, pool_config)

    release_days = sorted(
        (mv.release_date, mid) for mid, mv in population.movies.items()
    )
    recent_cache: dict[int, set[int]] = {}

    def recent_on(day: date, day_idx: int) -> set[int]:
        if day_idx not in recent_cache:
            lo = shift_months(day, -6)
            recent_cache[day_idx] = {
                mid for (rel, mid) in release_days if lo <= rel <= day
            }
        return recent_cache[day_idx]

    start_ts = day_end_ts(config.start - timedelta(days=1)) + 1
    history = ElicitationHistory()
    signal = SignalModel(config.signal_sd)

    requests: list[ElicitationRequestRecord] = []
    beliefs: list[BeliefRecord] = []
    sim_ratings: list[RatingEvent] = []
    recommendations: list[RecommendationLogRecord] = []
    consumption: list[tuple[int, int, int]] = []

    movie_ids = np.array(sorted(population.movies))
    truths_index = {mid: i for i, mid in enumerate(movie_ids)}

    for user in population.users:
        uid = user.user_id
        sampler_rng = random.Random(f"{config.rng_seed}/{uid}/sampler")
        signal_rng = random.Random(f"{config.rng_seed}/{uid}/signals")
        draw_rng = _user_stream(config.rng_seed, uid).spawn(1)[0]
        means = user.prior_means.copy()
        sds = user.prior_sds.copy()
        rated = set(user.rated)
        seen_unrated = dict(user.seen_unrated)
        hist_index = UserHistoryIndex(history, uid)

        for d in range(config.horizon_days):
            day = config.start + timedelta(days=d)
            visit_ts = start_ts + d * 86400 + 3600 + (uid * 37) % 64800
            pool = pools[refresh_schedule(day)]
            recent = recent_on(day, d)

            # top-picks slate: noisy-greedy on current belief means
            scores = means + config.slate_noise_sd * draw_rng.standard_normal(len(means))
            if rated:
                scores[[truths_index[mid] for mid in rated]] = -np.inf
            ranking = np.argsort(-scores, kind="stable")
            slate_ids = [int(movie_ids[i]) for i in ranking[: config.slate_size]]
            top_picks = [int(movie_ids[i]) for i in ranking[: config.top_picks_length]]
            for pos, mid in enumerate(slate_ids, start=1):
                recommendations.append(
                    RecommendationLogRecord(visit_ts, uid, pos, mid)
                )

            slate_beliefs = {
                mid: GoodBelief(float(means[truths_index[mid]]), float(sds[truths_index[mid]]))
                for mid in slate_ids
            }
            slate_truths = {mid: float(user.truths[truths_index[mid]]) for mid in slate_ids}
            updated = update_beliefs(
                slate_beliefs, RecommendationSlate(tuple(slate_ids)), slate_truths, signal, signal_rng
            )
            for mid, belief in updated.items():
                means[truths_index[mid]] = belief.mean
                sds[truths_index[mid]] = belief.sd

            batch_ts = visit_ts + 1
            batch = sample_batch(
                uid,
                pool,
                history,
                _AllPredicted,
                top_picks,
                sampler_rng,
                now=batch_ts,
                rated_movies={uid: rated},
                recent_releases=recent,
                excluded=hist_index.excluded(batch_ts),
            )
            batch_id = f"u{uid}-d{d}"
            for slot in batch.slots:
                requests.append(
                    ElicitationRequestRecord(batch_ts, uid, slot.movie_id, slot.source, batch_id)
                )
                hist_index.record_presentation(slot.movie_id, batch_ts)

            for idx, slot in enumerate(batch.slots):
                mid = slot.movie_id
                i = truths_index[mid]
                ts_r = visit_ts + 2 + idx
                p_respond = user.response_propensity
                if slot.source == "rec":
                    p_respond = min(1.0, p_respond * config.rec_response_boost)
                if draw_rng.random() >= p_respond:
                    beliefs.append(BeliefRecord(ts_r, uid, mid, -1))
                    continue
                if mid in seen_unrated:
                    rating = round_to_grid(float(user.truths[i]))
                    watch_date = seen_unrated.pop(mid)
                    beliefs.append(
                        BeliefRecord(ts_r, uid, mid, 1, elicit_rating=rating, watch_date=watch_date)
                    )
                    history.record_response(uid, mid, ts_r, 1)
                    sim_ratings.append(RatingEvent(uid, mid, rating, ts_r))
                    rated.add(mid)
                    continue
                predict = round_to_grid(float(means[i]))
                cert = population.certainty(float(sds[i]))
                beliefs.append(
                    BeliefRecord(ts_r, uid, mid, 0, predict_rating=predict, certainty=cert)
                )
                history.record_response(uid, mid, ts_r, 0)
                p_watch = config.beta0 + config.beta1 * predict + config.beta2 * (6 - cert)
                p_watch = min(1.0, max(0.0, p_watch))
                if draw_rng.random() < p_watch:
                    lag = int(draw_rng.integers(1, 15))
                    ts_watch = ts_r + lag * 86400 + 300
                    rating = round_to_grid(float(user.truths[i]))
                    sim_ratings.append(RatingEvent(uid, mid, rating, ts_watch))
                    consumption.append((ts_watch, uid, mid))
                    rated.add(mid)

    all_ratings = sorted(
        population.history_events + sim_ratings,
        key=lambda e: (e.timestamp, e.user_id, e.movie_id),
    )
    requests.sort(key=lambda r: (r.timestamp, r.user_id, r.movie_id))
    beliefs.sort(key=lambda b: (b.timestamp, b.user_id, b.movie_id))
    recommendations.sort(key=lambda r: (r.timestamp, r.user_id, r.position))
    consumption.sort()

    return SimLogs(
        config=config,
        movies=population.movies,
        requests=requests,
        beliefs=beliefs,
        ratings=all_ratings,
        recommendations=recommendations,
        consumption=consumption,
        history=history,
    )


def write_logs(logs: SimLogs, outdir) -> Path:
    """Write the five log files plus a manifest with the config hash."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_movies(logs.movies, outdir / "movies.csv")
    dataset_io.write_ratings(logs.ratings, outdir / dataset_io.RATINGS_FILE)
    dataset_io.write_beliefs(logs.beliefs, outdir / dataset_io.BELIEFS_FILE)
    dataset_io.write_rec_log(logs.recommendations, outdir / dataset_io.REC_LOG_FILE)
    dataset_io.write_elicit_log(logs.requests, outdir / dataset_io.ELICIT_LOG_FILE)
    with open(outdir / "manifest.txt", "w", encoding="utf-8") as f:
        for field in fields(logs.config):
            f.write(f"{field.name}={getattr(logs.config, field.name)}\n")
        f.write(f"config_sha256={logs.config.digest()}\n")
        f.write(f"requests={len(logs.requests)}\n")
        f.write(f"beliefs={len(logs.beliefs)}\n")
        f.write(f"ratings={len(logs.ratings)}\n")
        f.write(f"recommendations={len(logs.recommendations)}\n")
    return outdir


def parse_config_file(path) -> SimConfig:
    """Flat key=value overrides on top of the defaults."""
    overrides = {}
    types = {f.name: f.type for f in fields(SimConfig)}
    base = SimConfig()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            current = getattr(base, key)
            if isinstance(current, bool):
                overrides[key] = value.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                overrides[key] = int(value)
            elif isinstance(current, float):
                overrides[key] = float(value)
            elif isinstance(current, date):
                overrides[key] = date.fromisoformat(value)
            else:
                overrides[key] = value
    return replace(base, **overrides)
