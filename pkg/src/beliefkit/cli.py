"""Command-line entry points.

Subcommands: ``pool build``, ``sample``, ``choice eval``, ``choice
opt-slate``, ``simulate``, ``analyze``, ``serve``.
"""

from __future__ import annotations

import argparse
import csv
import os
import random
import sys
from datetime import date, datetime, timezone
from pathlib import Path

from . import analytics, dataset_io, simulate
from .catalog import genre_shares, ingest, snapshot
from .choice import GoodBelief, SignalModel, UtilityFunction, expected_utility, optimal_slate
from .pool import PoolConfig, build_pool, write_pool
from .sampler import PredictedRatings, ElicitationHistory, sample_batch
from .service import ElicitationService, serve


def _parse_utility(spec: str) -> UtilityFunction:
    if spec == "linear":
        return UtilityFunction.linear()
    kind, _, param = spec.partition(":")
    if kind == "power":
        return UtilityFunction.power(float(param or 0.5))
    if kind == "exp":
        return UtilityFunction.exponential(float(param or 1.0))
    raise argparse.ArgumentTypeError(f"unknown utility {spec!r}")


def _read_beliefs_table(path) -> tuple[dict[int, GoodBelief], dict[int, float]]:
    beliefs, truths = {}, {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            movie_id = int(row["movieId"])
            beliefs[movie_id] = GoodBelief(float(row["mean"]), float(row["sd"]))
            if row.get("truth"):
                truths[movie_id] = float(row["truth"])
    return beliefs, truths


def _build_snapshot(args):
    catalog = ingest(args.movies, args.ratings)
    if args.as_of:
        as_of = date.fromisoformat(args.as_of)
    else:
        span = catalog.data_range()
        as_of = span[1] if span else date.today()
    return catalog, snapshot(catalog, as_of)


def cmd_pool_build(args) -> int:
    catalog, snap = _build_snapshot(args)
    config = PoolConfig(y=args.y, rng_seed=args.seed)
    pool = build_pool(snap, genre_shares(catalog), config)
    write_pool(pool, args.out)
    print(f"pool {pool.month[0]:04d}-{pool.month[1]:02d}: {len(pool)} movies -> {args.out}")
    return 0


def cmd_sample(args) -> int:
    catalog, snap = _build_snapshot(args)
    config = PoolConfig(y=args.y, rng_seed=args.seed)
    pool = build_pool(snap, genre_shares(catalog), config)
    predictor = PredictedRatings("none", {})
    now = int(datetime.now(tz=timezone.utc).timestamp())
    batch = sample_batch(
        args.user,
        pool,
        ElicitationHistory(),
        predictor,
        [],
        random.Random(args.seed),
        now=now,
        rated_movies=catalog.rated_by_user(),
        recent_releases=snap.recent_releases(),
    )
    print(f"batch for user {args.user} ({len(batch.slots)} slots)")
    for slot in batch.slots:
        title = catalog.movies[slot.movie_id].title
        print(f"  {slot.source:<5}  {slot.movie_id:>7}  {title}")
    if batch.shortfall_reason:
        print(f"  shortfall: {batch.shortfall_reason}")
    return 0


def cmd_choice_eval(args) -> int:
    beliefs, _ = _read_beliefs_table(args.beliefs)
    u = _parse_utility(args.utility)
    print(f"{'movieId':>8}  {'mean':>7}  {'sd':>6}  {'E[u]':>10}")
    best, best_eu = None, float("-inf")
    for movie_id in sorted(beliefs):
        b = beliefs[movie_id]
        eu = expected_utility(b, u)
        if eu > best_eu:
            best, best_eu = movie_id, eu
        print(f"{movie_id:>8}  {b.mean:>7.3f}  {b.sd:>6.3f}  {eu:>10.5f}")
    print(f"choice: {best}")
    return 0


def cmd_choice_opt_slate(args) -> int:
    beliefs, truths = _read_beliefs_table(args.beliefs)
    missing = sorted(set(beliefs) - set(truths))
    if missing:
        print(f"error: movies without a truth column value: {missing}", file=sys.stderr)
        return 2
    u = _parse_utility(args.utility)
    slate = optimal_slate(
        beliefs,
        truths,
        SignalModel(args.signal_sd),
        u,
        args.k,
        sorted(beliefs),
        random.Random(args.seed),
        num_draws=args.draws,
    )
    print("optimal slate:", " ".join(str(m) for m in slate.movie_ids))
    return 0


def cmd_simulate(args) -> int:
    config = simulate.parse_config_file(args.config) if args.config else simulate.SimConfig()
    logs = simulate.run(config)
    simulate.write_logs(logs, args.out)
    print(
        f"simulated {config.num_users} users x {config.horizon_days} days: "
        f"{len(logs.requests)} requests, "
        f"{sum(1 for b in logs.beliefs if b.is_seen in (0, 1))} responses -> {args.out}"
    )
    return 0


def cmd_analyze(args) -> int:
    directory = Path(args.dir)
    catalog = ingest(directory / "movies.csv", directory / dataset_io.RATINGS_FILE)
    span = catalog.data_range()
    snap = snapshot(catalog, span[1] if span else date.today())

    beliefs = dataset_io.read_beliefs(directory / dataset_io.BELIEFS_FILE)
    requests = dataset_io.read_elicit_log(directory / dataset_io.ELICIT_LOG_FILE)
    recs = dataset_io.read_rec_log(directory / dataset_io.REC_LOG_FILE)
    ratings = dataset_io.read_ratings(directory / dataset_io.RATINGS_FILE)

    stats: dict[str, float] = {}
    stats.update(analytics.response_stats(requests, beliefs))
    stats.update(analytics.overlap_metrics(requests, beliefs, recs))
    stats.update(
        analytics.regression_lines(
            "movie_selection",
            analytics.movie_selection_regression(requests, beliefs, snap),
            ["popularity", "rating_var"],
        )
    )
    stats.update(
        analytics.regression_lines(
            "uncertainty_popularity",
            analytics.uncertainty_popularity_regression(beliefs, snap),
            ["popularity"],
        )
    )
    stats.update(
        analytics.regression_lines(
            "watch_lpm",
            analytics.watch_lpm(beliefs, ratings),
            ["predict_rating", "uncertainty"],
        )
    )

    out = Path(args.report)
    out.mkdir(parents=True, exist_ok=True)
    analytics.write_report(stats, out / "report.txt", out / "report.kv")
    print((out / "report.txt").read_text(), end="")
    return 0


def cmd_serve(args) -> int:
    data_dir = args.data or os.environ.get("DATA_DIR")
    if not data_dir:
        print("error: --data or DATA_DIR required", file=sys.stderr)
        return 2
    port = args.port or int(os.environ.get("PORT", "8080"))
    pool_y = args.y if args.y is not None else float(os.environ.get("POOL_Y", "11"))
    service = ElicitationService(
        data_dir,
        pool_y=pool_y,
        rng_seed=args.seed,
        admin_token=os.environ.get("ADMIN_TOKEN"),
    )
    server = serve(service, port, quiet=args.quiet)
    print(f"serving on port {port}, data in {data_dir}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        service.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beliefkit")
    sub = parser.add_subparsers(dest="command", required=True)

    pool_cmd = sub.add_parser("pool", help="elicitation pool tools")
    pool_sub = pool_cmd.add_subparsers(dest="pool_command", required=True)
    build_cmd = pool_sub.add_parser("build", help="build the month's pool")
    build_cmd.add_argument("--movies", required=True)
    build_cmd.add_argument("--ratings", required=True)
    build_cmd.add_argument("--as-of", dest="as_of")
    build_cmd.add_argument("--y", type=float, default=11.0)
    build_cmd.add_argument("--seed", type=int, default=0)
    build_cmd.add_argument("--out", required=True)
    build_cmd.set_defaults(func=cmd_pool_build)

    sample_cmd = sub.add_parser("sample", help="draw one user's batch offline")
    sample_cmd.add_argument("--movies", required=True)
    sample_cmd.add_argument("--ratings", required=True)
    sample_cmd.add_argument("--as-of", dest="as_of")
    sample_cmd.add_argument("--user", type=int, required=True)
    sample_cmd.add_argument("--seed", type=int, default=0)
    sample_cmd.add_argument("--y", type=float, default=11.0)
    sample_cmd.set_defaults(func=cmd_sample)

    choice_cmd = sub.add_parser("choice", help="expected-utility choice tools")
    choice_sub = choice_cmd.add_subparsers(dest="choice_command", required=True)
    eval_cmd = choice_sub.add_parser("eval", help="evaluate expected utilities")
    eval_cmd.add_argument("--beliefs", required=True, help="CSV movieId,mean,sd[,truth]")
    eval_cmd.add_argument("--utility", default="linear")
    eval_cmd.set_defaults(func=cmd_choice_eval)
    opt_cmd = choice_sub.add_parser("opt-slate", help="exhaustive optimal slate")
    opt_cmd.add_argument("--beliefs", required=True, help="CSV movieId,mean,sd,truth")
    opt_cmd.add_argument("--utility", default="linear")
    opt_cmd.add_argument("--k", type=int, default=1)
    opt_cmd.add_argument("--signal-sd", dest="signal_sd", type=float, default=0.5)
    opt_cmd.add_argument("--seed", type=int, default=0)
    opt_cmd.add_argument("--draws", type=int, default=2000)
    opt_cmd.set_defaults(func=cmd_choice_opt_slate)

    sim_cmd = sub.add_parser("simulate", help="run the synthetic-user simulator")
    sim_cmd.add_argument("--config", help="key=value config file (defaults when omitted)")
    sim_cmd.add_argument("--out", required=True)
    sim_cmd.set_defaults(func=cmd_simulate)

    analyze_cmd = sub.add_parser("analyze", help="descriptive statistics over a corpus")
    analyze_cmd.add_argument("--dir", required=True)
    analyze_cmd.add_argument("--report", required=True)
    analyze_cmd.set_defaults(func=cmd_analyze)

    serve_cmd = sub.add_parser("serve", help="run the elicitation HTTP service")
    serve_cmd.add_argument("--port", type=int)
    serve_cmd.add_argument("--data")
    serve_cmd.add_argument("--y", type=float)
    serve_cmd.add_argument("--seed", type=int, default=0)
    serve_cmd.add_argument("--quiet", action="store_true", default=True)
    serve_cmd.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
