"""Readers/writers for the released table formats, plus corpus validation.

Canonical serialization (fixed column order, empty string for absent
optionals, one decimal for grid ratings, integer Unix-second timestamps, LF
line endings) so that write(read(file)) reproduces the file byte for byte.
Readers accept reordered columns but reject unknown ones.

Belief rows branch on ``isSeen``:

- ``-1``  the user did not respond; all four optional fields absent.
- ``0``   not seen; userPredictRating and userCertainty present, the
  elicit/watchDate pair absent.
- ``1``   seen; userElicitRating present (watchDate optionally), the
  predict/certainty pair absent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Iterator

from .catalog import RatingEvent, is_grid_rating

BELIEFS_COLUMNS = [
    "timestamp",
    "userId",
    "movieId",
    "isSeen",
    "userElicitRating",
    "watchDate",
    "userPredictRating",
    "userCertainty",
]
RATINGS_COLUMNS = ["userId", "movieId", "rating", "timestamp"]
REC_LOG_COLUMNS = ["timestamp", "userId", "position", "movieId"]
ELICIT_LOG_COLUMNS = ["timestamp", "userId", "movieId", "source", "batchId"]

BELIEFS_FILE = "beliefs.csv"
RATINGS_FILE = "ratings.csv"
REC_LOG_FILE = "rec_log.csv"
ELICIT_LOG_FILE = "elicit_log.csv"

ELICIT_SOURCES = ("broad", "rec", "new")


class DatasetError(ValueError):
    """Malformed table file or invariant-violating record."""


@dataclass(frozen=True)
class BeliefRecord:
    timestamp: int
    user_id: int
    movie_id: int
    is_seen: int
    elicit_rating: float | None = None
    watch_date: date | None = None
    predict_rating: float | None = None
    certainty: int | None = None


@dataclass(frozen=True)
class RecommendationLogRecord:
    timestamp: int
    user_id: int
    position: int
    movie_id: int


@dataclass(frozen=True)
class ElicitationRequestRecord:
    timestamp: int
    user_id: int
    movie_id: int
    source: str
    batch_id: str


def belief_violations(r: BeliefRecord) -> list[str]:
    """Invariant violations of a single belief record (empty when valid)."""
    out = []
    if r.is_seen not in (-1, 0, 1):
        out.append(f"isSeen must be -1, 0 or 1, got {r.is_seen}")
    if r.elicit_rating is not None and not is_grid_rating(r.elicit_rating):
        out.append(f"off-grid userElicitRating {r.elicit_rating}")
    if r.predict_rating is not None and not is_grid_rating(r.predict_rating):
        out.append(f"off-grid userPredictRating {r.predict_rating}")
    if r.certainty is not None and r.certainty not in (1, 2, 3, 4, 5):
        out.append(f"userCertainty must be in 1..5, got {r.certainty}")
    if r.is_seen == 1:
        if r.elicit_rating is None:
            out.append("isSeen=1 requires userElicitRating")
        if r.predict_rating is not None or r.certainty is not None:
            out.append("isSeen=1 forbids predict/certainty fields")
    elif r.is_seen == 0:
        if r.predict_rating is None or r.certainty is None:
            out.append("isSeen=0 requires userPredictRating and userCertainty")
        if r.elicit_rating is not None or r.watch_date is not None:
            out.append("isSeen=0 forbids elicit/watchDate fields")
    elif r.is_seen == -1:
        if (
            r.elicit_rating is not None
            or r.watch_date is not None
            or r.predict_rating is not None
            or r.certainty is not None
        ):
            out.append("isSeen=-1 forbids all optional fields")
    if r.user_id <= 0 or r.movie_id <= 0:
        out.append("ids must be positive")
    return out


def _fmt_rating(v: float | None) -> str:
    return "" if v is None else f"{v:.1f}"


def _belief_row(r: BeliefRecord) -> list[str]:
    return [
        str(r.timestamp),
        str(r.user_id),
        str(r.movie_id),
        str(r.is_seen),
        _fmt_rating(r.elicit_rating),
        r.watch_date.isoformat() if r.watch_date else "",
        _fmt_rating(r.predict_rating),
        "" if r.certainty is None else str(r.certainty),
    ]


def _parse_belief(fields: dict[str, str]) -> BeliefRecord:
    def opt_float(name):
        return float(fields[name]) if fields[name] != "" else None

    return BeliefRecord(
        timestamp=int(fields["timestamp"]),
        user_id=int(fields["userId"]),
        movie_id=int(fields["movieId"]),
        is_seen=int(fields["isSeen"]),
        elicit_rating=opt_float("userElicitRating"),
        watch_date=date.fromisoformat(fields["watchDate"]) if fields["watchDate"] else None,
        predict_rating=opt_float("userPredictRating"),
        certainty=int(fields["userCertainty"]) if fields["userCertainty"] != "" else None,
    )


def _read_header(reader, path, columns) -> list[int]:
    """Column permutation mapping canonical order to the file's order."""
    header = next(reader, None)
    if header is None:
        raise DatasetError(f"{path}: empty file")
    if sorted(header) != sorted(columns):
        unknown = set(header) - set(columns)
        if unknown:
            raise DatasetError(f"{path}: unknown column(s) {sorted(unknown)}")
        raise DatasetError(f"{path}: header {header!r} does not match {columns}")
    return [header.index(c) for c in columns]


def _scan_table(path, columns, parse) -> Iterator[tuple[int, object, list[str]]]:
    """Yield (line_number, record_or_None, violations) per data row."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        perm = _read_header(reader, path, columns)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns):
                yield lineno, None, [f"expected {len(columns)} fields, got {len(row)}"]
                continue
            fields = {c: row[perm[i]] for i, c in enumerate(columns)}
            try:
                record, violations = parse(fields)
            except (ValueError, KeyError) as exc:
                yield lineno, None, [f"malformed row: {exc}"]
                continue
            yield lineno, record, violations


def _parse_belief_row(fields):
    record = _parse_belief(fields)
    return record, belief_violations(record)


def _parse_rating_row(fields):
    rating = float(fields["rating"])
    violations = [] if is_grid_rating(rating) else [f"off-grid rating {rating}"]
    if violations:
        return None, violations
    record = RatingEvent(
        int(fields["userId"]), int(fields["movieId"]), rating, int(fields["timestamp"])
    )
    return record, []


def _parse_rec_row(fields):
    record = RecommendationLogRecord(
        int(fields["timestamp"]),
        int(fields["userId"]),
        int(fields["position"]),
        int(fields["movieId"]),
    )
    violations = [] if record.position >= 1 else [f"position must be >= 1, got {record.position}"]
    return record, violations


def _parse_elicit_row(fields):
    record = ElicitationRequestRecord(
        int(fields["timestamp"]),
        int(fields["userId"]),
        int(fields["movieId"]),
        fields["source"],
        fields["batchId"],
    )
    violations = []
    if record.source not in ELICIT_SOURCES:
        violations.append(f"unknown source {record.source!r}")
    if not record.batch_id:
        violations.append("empty batchId")
    return record, violations


def _read_strict(path, columns, parse) -> list:
    records = []
    for lineno, record, violations in _scan_table(path, columns, parse):
        if violations:
            raise DatasetError(f"{path}:{lineno}: {'; '.join(violations)}")
        records.append(record)
    return records


def _write_rows(path, columns, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
    return path


def read_beliefs(path) -> list[BeliefRecord]:
    return _read_strict(path, BELIEFS_COLUMNS, _parse_belief_row)


def write_beliefs(records: Iterable[BeliefRecord], path) -> Path:
    rows = []
    for i, r in enumerate(records):
        violations = belief_violations(r)
        if violations:
            raise DatasetError(f"record {i}: {'; '.join(violations)}")
        rows.append(_belief_row(r))
    return _write_rows(path, BELIEFS_COLUMNS, rows)


def read_ratings(path) -> list[RatingEvent]:
    return _read_strict(path, RATINGS_COLUMNS, _parse_rating_row)


def write_ratings(events: Iterable[RatingEvent], path) -> Path:
    rows = [
        [str(e.user_id), str(e.movie_id), f"{e.rating:.1f}", str(e.timestamp)]
        for e in events
    ]
    return _write_rows(path, RATINGS_COLUMNS, rows)


def read_rec_log(path) -> list[RecommendationLogRecord]:
    records = _read_strict(path, REC_LOG_COLUMNS, _parse_rec_row)
    seen = set()
    for r in records:
        key = (r.user_id, r.timestamp, r.position)
        if key in seen:
            raise DatasetError(f"{path}: duplicate position {key}")
        seen.add(key)
    return records


def write_rec_log(records: Iterable[RecommendationLogRecord], path) -> Path:
    rows = [
        [str(r.timestamp), str(r.user_id), str(r.position), str(r.movie_id)]
        for r in records
    ]
    return _write_rows(path, REC_LOG_COLUMNS, rows)


def read_elicit_log(path) -> list[ElicitationRequestRecord]:
    return _read_strict(path, ELICIT_LOG_COLUMNS, _parse_elicit_row)


def write_elicit_log(records: Iterable[ElicitationRequestRecord], path) -> Path:
    rows = [
        [str(r.timestamp), str(r.user_id), str(r.movie_id), r.source, r.batch_id]
        for r in records
    ]
    return _write_rows(path, ELICIT_LOG_COLUMNS, rows)


def format_belief_line(r: BeliefRecord) -> str:
    """One canonical CSV line (no newline), for appenders."""
    return ",".join(_belief_row(r))


def format_rating_line(e: RatingEvent) -> str:
    return f"{e.user_id},{e.movie_id},{e.rating:.1f},{e.timestamp}"


def format_rec_line(r: RecommendationLogRecord) -> str:
    return f"{r.timestamp},{r.user_id},{r.position},{r.movie_id}"


def format_elicit_line(r: ElicitationRequestRecord) -> str:
    return f"{r.timestamp},{r.user_id},{r.movie_id},{r.source},{r.batch_id}"


@dataclass
class TableReport:
    path: str
    rows: int = 0
    violations: list[str] = field(default_factory=list)


@dataclass
class ValidationReport:
    tables: dict[str, TableReport] = field(default_factory=dict)
    belief_responses: int = 0
    distinct_users: int = 0
    distinct_movies: int = 0
    referential_violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.referential_violations and all(
            not t.violations for t in self.tables.values()
        )

    def all_violations(self) -> list[str]:
        out = []
        for t in self.tables.values():
            out.extend(t.violations)
        out.extend(self.referential_violations)
        return out

    def summary(self) -> str:
        lines = []
        for name, t in sorted(self.tables.items()):
            lines.append(f"{name}: {t.rows} rows, {len(t.violations)} violation(s)")
        lines.append(
            f"beliefs: {self.belief_responses} responses, "
            f"{self.distinct_users} distinct users, {self.distinct_movies} distinct movies"
        )
        lines.append(f"referential violations: {len(self.referential_violations)}")
        for v in self.all_violations()[:50]:
            lines.append(f"  {v}")
        return "\n".join(lines)


def validate_corpus(directory) -> ValidationReport:
    """Validate every table present in the directory; never raises on bad
    rows, every failure becomes a located report entry."""
    directory = Path(directory)
    report = ValidationReport()
    tables = {
        BELIEFS_FILE: (BELIEFS_COLUMNS, _parse_belief_row),
        RATINGS_FILE: (RATINGS_COLUMNS, _parse_rating_row),
        REC_LOG_FILE: (REC_LOG_COLUMNS, _parse_rec_row),
        ELICIT_LOG_FILE: (ELICIT_LOG_COLUMNS, _parse_elicit_row),
    }
    parsed: dict[str, list] = {}
    for name, (columns, parse) in tables.items():
        path = directory / name
        if not path.exists():
            continue
        t = TableReport(str(path))
        rows = []
        try:
            for lineno, record, violations in _scan_table(path, columns, parse):
                t.rows += 1
                for v in violations:
                    t.violations.append(f"{path}:{lineno}: {v}")
                if record is not None and not violations:
                    rows.append(record)
        except DatasetError as exc:
            t.violations.append(str(exc))
        except (UnicodeDecodeError, csv.Error, OSError) as exc:
            t.violations.append(f"{path}: unreadable: {exc}")
        parsed[name] = rows
        report.tables[name] = t

    beliefs = parsed.get(BELIEFS_FILE, [])
    responses = [b for b in beliefs if b.is_seen in (0, 1)]
    report.belief_responses = len(responses)
    report.distinct_users = len({b.user_id for b in responses})
    report.distinct_movies = len({b.movie_id for b in responses})

    if BELIEFS_FILE in parsed and ELICIT_LOG_FILE in parsed:
        requested = {(r.user_id, r.movie_id) for r in parsed[ELICIT_LOG_FILE]}
        for b in beliefs:
            if (b.user_id, b.movie_id) not in requested:
                report.referential_violations.append(
                    f"belief for user {b.user_id} movie {b.movie_id} "
                    f"at {b.timestamp} has no elicitation request"
                )
    return report
