"""Belief-elicitation toolkit for a movie platform.

Pipeline pieces, bottom to top:

- ``catalog``: movie/rating ingestion, dated snapshots, per-movie scores.
- ``pool``: the platform-wide monthly elicitation pool.
- ``sampler``: per-user 8-slot elicitation batches.
- ``choice``: expected-utility choice with and without recommendations.
- ``simulate``: synthetic users running the full loop, emitting logs.
- ``dataset_io``: canonical readers/writers for the released table formats.
- ``analytics``: descriptive statistics and regressions over the logs.
- ``service``: the HTTP elicitation service with append-only persistence.
"""

__version__ = "0.1.0"
