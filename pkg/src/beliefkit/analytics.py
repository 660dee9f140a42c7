"""Descriptive statistics and regressions over elicitation corpora.

All statistics are pure functions of the logs.  The regression engine is a
plain normal-equations OLS with homoskedastic standard errors; p-values use
the normal approximation to the t distribution, reported for orientation
only.  "Popularity" throughout is ln(1 + number of ratings).  Certainty is
reverse-coded to an uncertainty measure as (6 - userCertainty) wherever a
regression calls for uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .catalog import CatalogSnapshot, RatingEvent
from .dataset_io import (
    BeliefRecord,
    ElicitationRequestRecord,
    RecommendationLogRecord,
)


class AnalyticsError(ValueError):
    pass


@dataclass(frozen=True)
class RegressionResult:
    coefficients: tuple[float, ...]
    intercept: float
    std_errors: tuple[float, ...]
    intercept_se: float
    r_squared: float
    n: int
    p_values: tuple[float, ...]


def _normal_p_value(t: float) -> float:
    return math.erfc(abs(t) / math.sqrt(2.0))


def ols(rows: Sequence[tuple[Sequence[float], float]]) -> RegressionResult:
    """Least squares of target on features plus an intercept.

    Raises on a rank-deficient design, naming the collinear columns.
    """
    if not rows:
        raise AnalyticsError("no rows")
    x = np.asarray([list(f) for f, _ in rows], dtype=float)
    y = np.asarray([t for _, t in rows], dtype=float)
    n, k = x.shape
    design = np.hstack([np.ones((n, 1)), x])
    if n < design.shape[1]:
        raise AnalyticsError(f"n={n} below number of parameters {design.shape[1]}")

    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        collinear = []
        running = design[:, :1]
        for j in range(1, design.shape[1]):
            trial = np.hstack([running, design[:, j : j + 1]])
            if np.linalg.matrix_rank(trial) == running.shape[1]:
                collinear.append(f"x{j - 1}")
            else:
                running = trial
        raise AnalyticsError(f"rank-deficient design; collinear column(s): {collinear}")

    xtx = design.T @ design
    beta = np.linalg.solve(xtx, design.T @ y)
    residuals = y - design @ beta
    dof = n - design.shape[1]
    s2 = float(residuals @ residuals) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(xtx)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    tss = float(np.sum((y - y.mean()) ** 2))
    rss = float(residuals @ residuals)
    r_squared = 1.0 - rss / tss if tss > 0 else 0.0

    p_values = tuple(
        _normal_p_value(beta[j] / se[j]) if se[j] > 0 else (0.0 if beta[j] else 1.0)
        for j in range(1, len(beta))
    )
    return RegressionResult(
        coefficients=tuple(float(b) for b in beta[1:]),
        intercept=float(beta[0]),
        std_errors=tuple(float(v) for v in se[1:]),
        intercept_se=float(se[0]),
        r_squared=r_squared,
        n=n,
        p_values=p_values,
    )


def response_stats(
    requests: Iterable[ElicitationRequestRecord],
    beliefs: Iterable[BeliefRecord],
) -> dict[str, float]:
    """Request/response volume and the per-user response-ratio distribution.

    The ratio distribution conditions on users with at least one response;
    users prompted but never responding are tallied separately.
    """
    req_per_user: dict[int, int] = {}
    total_requests = 0
    for r in requests:
        total_requests += 1
        req_per_user[r.user_id] = req_per_user.get(r.user_id, 0) + 1

    resp_per_user: dict[int, int] = {}
    movies = set()
    total_responses = 0
    for b in beliefs:
        if b.is_seen in (0, 1):
            total_responses += 1
            resp_per_user[b.user_id] = resp_per_user.get(b.user_id, 0) + 1
            movies.add(b.movie_id)

    ratios = [
        resp_per_user[u] / req_per_user[u]
        for u in sorted(resp_per_user)
        if req_per_user.get(u)
    ]
    never = sum(1 for u in req_per_user if u not in resp_per_user)
    return {
        "total_requests": total_requests,
        "total_responses": total_responses,
        "distinct_users": len(resp_per_user),
        "distinct_movies": len(movies),
        "response_ratio_mean": float(np.mean(ratios)) if ratios else 0.0,
        "response_ratio_median": float(np.median(ratios)) if ratios else 0.0,
        "mean_beliefs_per_responder": (
            total_responses / len(resp_per_user) if resp_per_user else 0.0
        ),
        "never_responders": never,
    }


def _popularity(snap: CatalogSnapshot, movie_id: int) -> float:
    return math.log1p(snap.stats[movie_id].num_ratings_now)


def movie_selection_regression(
    requests: Iterable[ElicitationRequestRecord],
    beliefs: Iterable[BeliefRecord],
    snap: CatalogSnapshot,
) -> RegressionResult:
    """Per-movie response rate on popularity and community rating variance."""
    req: dict[int, int] = {}
    for r in requests:
        req[r.movie_id] = req.get(r.movie_id, 0) + 1
    resp: dict[int, int] = {}
    for b in beliefs:
        if b.is_seen in (0, 1):
            resp[b.movie_id] = resp.get(b.movie_id, 0) + 1

    rows = []
    for movie_id in sorted(req):
        if movie_id not in snap.stats:
            continue
        stats = snap.stats[movie_id]
        rows.append(
            (
                (_popularity(snap, movie_id), stats.rating_var or 0.0),
                resp.get(movie_id, 0) / req[movie_id],
            )
        )
    if len(rows) < 2:
        raise AnalyticsError("need at least 2 movies with requests")
    return ols(rows)


def uncertainty_popularity_regression(
    beliefs: Iterable[BeliefRecord],
    snap: CatalogSnapshot,
) -> RegressionResult:
    """User uncertainty (6 - certainty) on the log of total ratings."""
    rows = []
    for b in beliefs:
        if b.is_seen == 0 and b.movie_id in snap.stats:
            rows.append(((_popularity(snap, b.movie_id),), float(6 - b.certainty)))
    if not rows:
        raise AnalyticsError("no not-seen responses")
    return ols(rows)


def watch_lpm(
    beliefs: Iterable[BeliefRecord],
    ratings: Iterable[RatingEvent],
) -> RegressionResult:
    """Linear probability model: watched-after-elicitation on the expected
    rating and the uncertainty (6 - certainty) of each not-seen response."""
    rated_at: dict[tuple[int, int], int] = {}
    for e in ratings:
        key = (e.user_id, e.movie_id)
        if key not in rated_at or e.timestamp < rated_at[key]:
            rated_at[key] = e.timestamp

    rows = []
    for b in beliefs:
        if b.is_seen != 0:
            continue
        watched_ts = rated_at.get((b.user_id, b.movie_id))
        watched = 1.0 if watched_ts is not None and watched_ts > b.timestamp else 0.0
        rows.append(((b.predict_rating, float(6 - b.certainty)), watched))
    if not rows:
        raise AnalyticsError("no not-seen responses")
    return ols(rows)


def overlap_metrics(
    requests: Iterable[ElicitationRequestRecord],
    beliefs: Iterable[BeliefRecord],
    recs: Iterable[RecommendationLogRecord],
) -> dict[str, float]:
    """Per-user overlap between elicited movies and ever-recommended movies,
    averaged over users; once for requested movies, once for responded ones."""
    elicited: dict[int, set[int]] = {}
    for r in requests:
        elicited.setdefault(r.user_id, set()).add(r.movie_id)
    responded: dict[int, set[int]] = {}
    for b in beliefs:
        if b.is_seen in (0, 1):
            responded.setdefault(b.user_id, set()).add(b.movie_id)
    recommended: dict[int, set[int]] = {}
    for r in recs:
        recommended.setdefault(r.user_id, set()).add(r.movie_id)

    def mean_overlap(sets: dict[int, set[int]]) -> float:
        fractions = [
            len(movies & recommended.get(user, set())) / len(movies)
            for user, movies in sorted(sets.items())
            if movies
        ]
        return float(np.mean(fractions)) if fractions else 0.0

    return {
        "request_overlap_mean": mean_overlap(elicited),
        "response_overlap_mean": mean_overlap(responded),
    }


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def regression_lines(name: str, result: RegressionResult, labels: Sequence[str]) -> dict[str, float]:
    out = {f"{name}.intercept": result.intercept, f"{name}.r_squared": result.r_squared,
           f"{name}.n": result.n}
    for label, coef, se, p in zip(labels, result.coefficients, result.std_errors, result.p_values):
        out[f"{name}.{label}"] = coef
        out[f"{name}.{label}.se"] = se
        out[f"{name}.{label}.p"] = p
    return out


def write_report(stats: dict[str, float], txt_path, kv_path) -> None:
    """Aligned plain-text table plus a machine-readable key=value file."""
    width = max(len(k) for k in stats) if stats else 0
    with open(txt_path, "w", encoding="utf-8") as f:
        for key in stats:
            f.write(f"{key.ljust(width)}  {_fmt(stats[key])}\n")
    with open(kv_path, "w", encoding="utf-8") as f:
        for key in stats:
            f.write(f"{key}={_fmt(stats[key])}\n")
