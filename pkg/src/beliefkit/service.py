"""HTTP elicitation service: batches, belief submission, top picks.

Persistence is append-only record logs in the released dataset formats plus
a session journal; there is no database.  Every record is appended with a
single ``os.write`` so a killed process never leaves a torn row, and request
rows are logged *before* a batch is returned, so every stored belief row has
a preceding request row.  On startup the service repairs unterminated log
tails, replays the session journal, and reconciles it against the beliefs
table, making kill-and-restart safe at any point.

Endpoints (JSON bodies):

- ``GET  /users/{id}/elicitation-batch``  current batch, created on first
  touch; ``?refresh=1`` replaces only the answered slots.
- ``POST /users/{id}/beliefs``            one slot's response.
- ``GET  /users/{id}/top-picks``          recommendation slate, logged.
- ``POST /admin/pool/rebuild``            monthly pool rebuild (admin token).

Auth is a demo bearer scheme: ``Bearer user-<id>`` for user endpoints, the
``ADMIN_TOKEN`` environment value for admin ones.
"""

from __future__ import annotations

import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import dataset_io
from .catalog import (
    Catalog,
    CatalogError,
    RatingEvent,
    ingest,
    genre_shares,
    round_to_grid,
    shift_months,
    snapshot,
)
from .dataset_io import BeliefRecord, belief_violations
from .pool import PoolConfig, build_pool, read_pool, refresh_schedule, write_pool
from .sampler import (
    BatchSlot,
    ElicitationBatch,
    ElicitationHistory,
    refresh_batch,
    sample_batch,
)

SESSIONS_FILE = "sessions.log"


def repair_log_tail(path: Path) -> None:
    """Drop an unterminated final line left by a mid-write crash."""
    if not path.exists():
        return
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        cut = data.rfind(b"\n")
        path.write_bytes(data[: cut + 1] if cut >= 0 else b"")


class AppendLog:
    """Append-only log file; one write syscall per record."""

    def __init__(self, path: Path, header: str | None):
        self.path = path
        repair_log_tail(path)
        fresh = not path.exists() or path.stat().st_size == 0
        self._fd = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        self._lock = threading.Lock()
        if fresh and header is not None:
            os.write(self._fd, (header + "\n").encode())

    def append(self, line: str) -> None:
        with self._lock:
            os.write(self._fd, (line + "\n").encode())

    def close(self) -> None:
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1


@dataclass
class Session:
    user_id: int
    batch_id: str
    created_at: int
    slots: list[tuple[int, str]]  # (movie_id, source)
    answered: set[int] = field(default_factory=set)
    seq: int = 1

    def slot_movies(self) -> set[int]:
        return {m for m, _ in self.slots}


class ItemMeanPredictor:
    """Default predicted-ratings provider: the movie's mean rating, on the
    grid; rankable for every movie with at least one rating."""

    provider = "item-mean"

    def __init__(self, catalog: Catalog, as_of: date):
        snap = snapshot(catalog, as_of)
        self._avg = {
            mid: s.avg_rating for mid, s in snap.stats.items() if s.avg_rating is not None
        }
        self._counts = {mid: snap.stats[mid].num_ratings_now for mid in self._avg}
        self._ranking = sorted(
            self._avg, key=lambda m: (-self._avg[m], -self._counts[m], m)
        )

    def has(self, user_id: int, movie_id: int) -> bool:
        return movie_id in self._avg

    def get(self, user_id: int, movie_id: int) -> float | None:
        avg = self._avg.get(movie_id)
        return round_to_grid(avg) if avg is not None else None

    def ranking(self, exclude: set[int], length: int) -> list[int]:
        out = []
        for mid in self._ranking:
            if mid not in exclude:
                out.append(mid)
                if len(out) >= length:
                    break
        return out


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


class ElicitationService:
    """All service state and request handling, independent of HTTP."""

    TOP_PICKS_LENGTH = 200
    SLATE_SIZE = 10

    def __init__(
        self,
        data_dir,
        *,
        pool_y: float = 11.0,
        rng_seed: int = 0,
        now_fn=time.time,
        admin_token: str | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.pool_y = pool_y
        self.rng_seed = rng_seed
        self.now_fn = now_fn
        self.admin_token = admin_token

        ratings_path = self.data_dir / dataset_io.RATINGS_FILE
        repair_log_tail(ratings_path)
        if not ratings_path.exists():
            ratings_path.write_text(",".join(dataset_io.RATINGS_COLUMNS) + "\n")
        self.catalog = ingest(self.data_dir / "movies.csv", ratings_path)
        self.shares = genre_shares(self.catalog)

        self.beliefs_log = AppendLog(
            self.data_dir / dataset_io.BELIEFS_FILE, ",".join(dataset_io.BELIEFS_COLUMNS)
        )
        self.ratings_log = AppendLog(ratings_path, ",".join(dataset_io.RATINGS_COLUMNS))
        self.elicit_log = AppendLog(
            self.data_dir / dataset_io.ELICIT_LOG_FILE, ",".join(dataset_io.ELICIT_LOG_COLUMNS)
        )
        self.rec_log = AppendLog(
            self.data_dir / dataset_io.REC_LOG_FILE, ",".join(dataset_io.REC_LOG_COLUMNS)
        )
        self.sessions_log = AppendLog(self.data_dir / SESSIONS_FILE, None)

        self._rated = self.catalog.rated_by_user()
        self.history = ElicitationHistory()
        self._replay_elicit_log()
        self.sessions: dict[int, Session] = {}
        self._replay_sessions()
        self._reconcile_beliefs()
        self._compact_sessions()

        self._pool = None
        self._pool_lock = threading.Lock()
        self._user_locks: dict[int, threading.Lock] = {}
        self._locks_lock = threading.Lock()
        self.predictor = ItemMeanPredictor(self.catalog, self._today())
        self._release_days = sorted(
            (m.release_date, mid)
            for mid, m in self.catalog.movies.items()
            if m.release_date is not None
        )

    # -- time ---------------------------------------------------------------

    def _now(self) -> int:
        return int(self.now_fn())

    def _today(self) -> date:
        return datetime.fromtimestamp(self._now(), tz=timezone.utc).date()

    # -- boot replay ----------------------------------------------------------

    def _replay_elicit_log(self) -> None:
        path = self.data_dir / dataset_io.ELICIT_LOG_FILE
        for r in dataset_io.read_elicit_log(path):
            self.history.record_presentation(r.user_id, r.movie_id, r.timestamp)

    def _replay_sessions(self) -> None:
        path = self.data_dir / SESSIONS_FILE
        if not path.exists():
            return
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            op = json.loads(line)
            if op["op"] == "batch":
                self.sessions[op["user"]] = Session(
                    user_id=op["user"],
                    batch_id=op["batch_id"],
                    created_at=op["created_at"],
                    slots=[(m, s) for m, s in op["slots"]],
                    seq=op["seq"],
                )
            elif op["op"] == "answer":
                session = self.sessions.get(op["user"])
                if session and session.batch_id == op["batch_id"]:
                    session.answered.add(op["movie"])

    def _reconcile_beliefs(self) -> None:
        # a belief row appended right before a crash may predate its answer op
        path = self.data_dir / dataset_io.BELIEFS_FILE
        for b in dataset_io.read_beliefs(path):
            if b.is_seen not in (0, 1):
                continue
            session = self.sessions.get(b.user_id)
            if (
                session
                and b.movie_id in session.slot_movies()
                and b.timestamp >= session.created_at
            ):
                session.answered.add(b.movie_id)

    def _compact_sessions(self) -> None:
        tmp = self.data_dir / (SESSIONS_FILE + ".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            for session in self.sessions.values():
                f.write(json.dumps(self._batch_op(session)) + "\n")
                for movie in sorted(session.answered):
                    f.write(json.dumps(self._answer_op(session, movie)) + "\n")
        self.sessions_log.close()
        os.replace(tmp, self.data_dir / SESSIONS_FILE)
        self.sessions_log = AppendLog(self.data_dir / SESSIONS_FILE, None)

    @staticmethod
    def _batch_op(session: Session) -> dict:
        return {
            "op": "batch",
            "user": session.user_id,
            "batch_id": session.batch_id,
            "created_at": session.created_at,
            "slots": [[m, s] for m, s in session.slots],
            "seq": session.seq,
        }

    @staticmethod
    def _answer_op(session: Session, movie_id: int) -> dict:
        return {
            "op": "answer",
            "user": session.user_id,
            "batch_id": session.batch_id,
            "movie": movie_id,
        }

    # -- pool -----------------------------------------------------------------

    def current_pool(self):
        today = self._today()
        month = refresh_schedule(today)
        with self._pool_lock:
            if self._pool is not None and self._pool.month == month:
                return self._pool
            pool_path = self.data_dir / f"pool-{month[0]:04d}-{month[1]:02d}.csv"
            if pool_path.exists():
                self._pool = read_pool(pool_path)
            else:
                snap = snapshot(self.catalog, today)
                config = PoolConfig(y=self.pool_y, rng_seed=self.rng_seed)
                self._pool = build_pool(snap, self.shares, config)
                write_pool(self._pool, pool_path)
            return self._pool

    def _recent_releases(self, today: date) -> set[int]:
        lo = shift_months(today, -6)
        return {mid for rel, mid in self._release_days if lo <= rel <= today}

    def _user_lock(self, user_id: int) -> threading.Lock:
        with self._locks_lock:
            if user_id not in self._user_locks:
                self._user_locks[user_id] = threading.Lock()
            return self._user_locks[user_id]

    # -- handlers ---------------------------------------------------------------

    def _batch_payload(self, session: Session) -> dict:
        return {
            "userId": session.user_id,
            "batchId": session.batch_id,
            "createdAt": session.created_at,
            "slots": [
                {
                    "movieId": movie_id,
                    "title": self.catalog.movies[movie_id].title,
                    "source": source,
                    "answered": movie_id in session.answered,
                }
                for movie_id, source in session.slots
            ],
        }

    def _log_requests(self, session: Session, movie_ids: list[int], ts: int) -> None:
        # write-ahead: request rows land before the batch is acked
        sources = dict(session.slots)
        for movie_id in movie_ids:
            record = dataset_io.ElicitationRequestRecord(
                ts, session.user_id, movie_id, sources[movie_id], session.batch_id
            )
            self.elicit_log.append(dataset_io.format_elicit_line(record))
            self.history.record_presentation(session.user_id, movie_id, ts)

    def get_batch(self, user_id: int, refresh: bool = False) -> dict:
        if user_id <= 0:
            raise ServiceError(404, "unknown user")
        with self._user_lock(user_id):
            try:
                pool = self.current_pool()
            except (ValueError, OSError) as exc:
                raise ServiceError(503, f"pool unavailable, retry later: {exc}")
            now = self._now()
            today = self._today()
            session = self.sessions.get(user_id)

            if session is not None and (not refresh or not session.answered):
                return self._batch_payload(session)

            rated = self._rated.get(user_id, set())
            recent = self._recent_releases(today)
            top_picks = self.predictor.ranking(rated, self.TOP_PICKS_LENGTH)
            seq = 1 if session is None else session.seq + 1
            rng = random.Random(f"{self.rng_seed}/{user_id}/{seq}")

            if session is None:
                batch = sample_batch(
                    user_id,
                    pool,
                    self.history,
                    self.predictor,
                    top_picks,
                    rng,
                    now=now,
                    rated_movies={user_id: rated},
                    recent_releases=recent,
                )
                new_movies = list(batch.movie_ids())
            else:
                current = ElicitationBatch(
                    user_id,
                    session.created_at,
                    tuple(BatchSlot(m, s) for m, s in session.slots),
                )
                batch = refresh_batch(
                    user_id,
                    current,
                    set(session.answered),
                    pool,
                    self.history,
                    self.predictor,
                    top_picks,
                    rng,
                    now=now,
                    rated_movies={user_id: rated},
                    recent_releases=recent,
                )
                kept = session.slot_movies() - session.answered
                new_movies = [m for m in batch.movie_ids() if m not in kept]

            new_session = Session(
                user_id=user_id,
                batch_id=f"b{user_id}-{seq}",
                created_at=now,
                slots=[(s.movie_id, s.source) for s in batch.slots],
                seq=seq,
            )
            self._log_requests(new_session, new_movies, now)
            self.sessions_log.append(json.dumps(self._batch_op(new_session)))
            self.sessions[user_id] = new_session
            payload = self._batch_payload(new_session)
            if batch.shortfall_reason:
                payload["shortfallReason"] = batch.shortfall_reason
            return payload

    def post_belief(self, user_id: int, body: dict) -> dict:
        with self._user_lock(user_id):
            session = self.sessions.get(user_id)
            if session is None or body.get("batchId") != session.batch_id:
                raise ServiceError(404, "unknown batch")
            movie_id = body.get("movieId")
            if movie_id not in session.slot_movies():
                raise ServiceError(404, "movie is not a slot of this batch")
            if movie_id in session.answered:
                raise ServiceError(409, "slot already answered")

            now = self._now()
            is_seen = body.get("isSeen")
            if is_seen not in (0, 1):
                raise ServiceError(422, "isSeen must be 0 or 1")
            try:
                watch_date = (
                    date.fromisoformat(body["watchDate"]) if body.get("watchDate") else None
                )
            except ValueError:
                raise ServiceError(422, "bad watchDate")
            record = BeliefRecord(
                timestamp=now,
                user_id=user_id,
                movie_id=movie_id,
                is_seen=is_seen,
                elicit_rating=body.get("rating"),
                watch_date=watch_date,
                predict_rating=body.get("predictRating"),
                certainty=body.get("certainty"),
            )
            violations = belief_violations(record)
            if violations:
                raise ServiceError(422, "; ".join(violations))

            self.beliefs_log.append(dataset_io.format_belief_line(record))
            if is_seen == 1:
                event = RatingEvent(user_id, movie_id, record.elicit_rating, now)
                self.ratings_log.append(dataset_io.format_rating_line(event))
                self._rated.setdefault(user_id, set()).add(movie_id)
            self.history.record_response(user_id, movie_id, now, is_seen)
            session.answered.add(movie_id)
            self.sessions_log.append(json.dumps(self._answer_op(session, movie_id)))
            return {"status": "recorded", "movieId": movie_id, "isSeen": is_seen}

    def top_picks(self, user_id: int) -> dict:
        with self._user_lock(user_id):
            now = self._now()
            rated = self._rated.get(user_id, set())
            slate = self.predictor.ranking(rated, self.SLATE_SIZE)
            for pos, movie_id in enumerate(slate, start=1):
                record = dataset_io.RecommendationLogRecord(now, user_id, pos, movie_id)
                self.rec_log.append(dataset_io.format_rec_line(record))
            return {
                "userId": user_id,
                "picks": [
                    {
                        "position": pos,
                        "movieId": movie_id,
                        "title": self.catalog.movies[movie_id].title,
                        "predictedRating": self.predictor.get(user_id, movie_id),
                    }
                    for pos, movie_id in enumerate(slate, start=1)
                ],
            }

    def rebuild_pool(self, token: str | None) -> dict:
        if self.admin_token is None or token != self.admin_token:
            raise ServiceError(403, "admin token required")
        month = refresh_schedule(self._today())
        with self._pool_lock:
            cached = self._pool is not None and self._pool.month == month
        pool = self.current_pool()
        return {
            "status": "cached" if cached else "rebuilt",
            "month": f"{pool.month[0]:04d}-{pool.month[1]:02d}",
            "size": len(pool),
        }

    def close(self) -> None:
        for log in (self.beliefs_log, self.ratings_log, self.elicit_log, self.rec_log, self.sessions_log):
            log.close()


_USER_ROUTE = re.compile(r"^/users/(\d+)/(elicitation-batch|beliefs|top-picks)$")


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    service: ElicitationService = None  # set by serve()
    quiet = True

    def log_message(self, fmt, *args):
        if not self.quiet:
            super().log_message(fmt, *args)

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _bearer(self) -> str | None:
        auth = self.headers.get("Authorization", "")
        return auth[len("Bearer ") :] if auth.startswith("Bearer ") else None

    def _check_user(self, user_id: int) -> bool:
        return self._bearer() == f"user-{user_id}"

    def do_OPTIONS(self):
        self._send(204, {})

    def do_GET(self):
        url = urlparse(self.path)
        match = _USER_ROUTE.match(url.path)
        if not match:
            self._send(404, {"error": "not found"})
            return
        user_id, endpoint = int(match.group(1)), match.group(2)
        if not self._check_user(user_id):
            self._send(401, {"error": "bearer token user-<id> required"})
            return
        try:
            if endpoint == "elicitation-batch":
                refresh = parse_qs(url.query).get("refresh", ["0"])[0] == "1"
                self._send(200, self.service.get_batch(user_id, refresh=refresh))
            elif endpoint == "top-picks":
                self._send(200, self.service.top_picks(user_id))
            else:
                self._send(405, {"error": "method not allowed"})
        except ServiceError as exc:
            self._send(exc.status, {"error": exc.message})

    def do_POST(self):
        url = urlparse(self.path)
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length) or b"{}")
        except (ValueError, json.JSONDecodeError):
            self._send(400, {"error": "bad JSON body"})
            return

        if url.path == "/admin/pool/rebuild":
            try:
                self._send(200, self.service.rebuild_pool(self._bearer()))
            except ServiceError as exc:
                self._send(exc.status, {"error": exc.message})
            return

        match = _USER_ROUTE.match(url.path)
        if not match or match.group(2) != "beliefs":
            self._send(404, {"error": "not found"})
            return
        user_id = int(match.group(1))
        if not self._check_user(user_id):
            self._send(401, {"error": "bearer token user-<id> required"})
            return
        try:
            self._send(201, self.service.post_belief(user_id, body))
        except ServiceError as exc:
            self._send(exc.status, {"error": exc.message})


def serve(service: ElicitationService, port: int, quiet: bool = True) -> ThreadingHTTPServer:
    handler = type("Handler", (_Handler,), {"service": service, "quiet": quiet})
    server = ThreadingHTTPServer(("0.0.0.0", port), handler)
    return server
