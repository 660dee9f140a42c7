"""Expected-utility choice with and without recommendations.

Users hold a belief per good (Gaussian over a monetary-equivalent value, or
a discrete mixture for exact small-case arithmetic) and pick the good with
the highest expected utility.  A recommendation delivers an unbiased
Gaussian signal of the good's true value, which conjugately updates the
belief; the post-recommendation choice is again the argmax over *all* goods,
not just the recommended ones.  The welfare-optimal slate maximizes the
expectation over signal noise of the maximized post-update expected utility.

All operations are pure given an explicit RNG; ties break toward the lowest
movie id (lexicographically smallest id set for slates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping

import numpy as np

GH_NODES = 64
_GH_X, _GH_W = np.polynomial.hermite.hermgauss(GH_NODES)


class ChoiceError(ValueError):
    pass


@dataclass(frozen=True)
class UtilityFunction:
    """Strictly increasing, continuous utility over monetary equivalents.

    ``power`` uses the odd extension sign(x)*|x|^alpha so it stays increasing
    on the whole line (Gaussian beliefs have full support).  ``scale`` and
    ``offset`` apply a positive affine transform, which must never change any
    choice.
    """

    kind: str
    alpha: float = 1.0
    risk_aversion: float = 1.0
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "power", "exponential"):
            raise ChoiceError(f"unknown utility kind {self.kind!r}")
        if self.kind == "power" and not 0 < self.alpha <= 1:
            raise ChoiceError("power exponent must be in (0, 1]")
        if self.kind == "exponential" and self.risk_aversion <= 0:
            raise ChoiceError("risk aversion must be positive")
        if self.scale <= 0:
            raise ChoiceError("scale must be positive")

    @classmethod
    def linear(cls) -> "UtilityFunction":
        return cls("linear")

    @classmethod
    def power(cls, alpha: float) -> "UtilityFunction":
        return cls("power", alpha=alpha)

    @classmethod
    def exponential(cls, risk_aversion: float) -> "UtilityFunction":
        return cls("exponential", risk_aversion=risk_aversion)

    def affine(self, scale: float, offset: float) -> "UtilityFunction":
        return UtilityFunction(
            self.kind, self.alpha, self.risk_aversion, self.scale * scale,
            self.offset * scale + offset,
        )

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        if self.kind == "linear":
            out = arr
        elif self.kind == "power":
            out = np.sign(arr) * np.abs(arr) ** self.alpha
        else:
            out = -np.exp(-self.risk_aversion * arr)
        out = self.scale * out + self.offset
        return out if isinstance(x, np.ndarray) else float(out)


@dataclass(frozen=True)
class GoodBelief:
    """Gaussian belief over the monetary equivalent; sd 0 is a point mass."""

    mean: float
    sd: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sd)):
            raise ChoiceError("belief parameters must be finite")
        if self.sd < 0:
            raise ChoiceError("belief sd must be non-negative")


@dataclass(frozen=True)
class DiscreteBelief:
    """Finite mixture over point values, for exact test arithmetic."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ChoiceError("values and probs must be non-empty and aligned")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ChoiceError("probs must be non-negative and sum to 1")


@dataclass(frozen=True)
class RecommendationSlate:
    """Ordered recommended ids, optionally with fixed signal realizations."""

    movie_ids: tuple[int, ...]
    signals: dict[int, float] | None = None

    def __post_init__(self):
        if len(set(self.movie_ids)) != len(self.movie_ids) or not self.movie_ids:
            raise ChoiceError("slate ids must be distinct and non-empty")


@dataclass(frozen=True)
class SignalModel:
    """Recommending good n delivers s = x_n + Normal(0, noise_sd^2)."""

    noise_sd: float

    def __post_init__(self):
        if not (self.noise_sd > 0 and math.isfinite(self.noise_sd)):
            raise ChoiceError("signal noise sd must be positive and finite")


def expected_utility(belief, u: UtilityFunction) -> float:
    """E[u(X)] under the belief.

    Linear utility and point masses are closed form; discrete mixtures are
    exact sums; otherwise 64-node Gauss-Hermite quadrature (error well under
    1e-8 against the exponential closed form).
    """
    if isinstance(belief, DiscreteBelief):
        return float(sum(p * u(v) for v, p in zip(belief.values, belief.probs)))
    if not isinstance(belief, GoodBelief):
        raise ChoiceError(f"unsupported belief type {type(belief).__name__}")
    if belief.sd == 0:
        return float(u(belief.mean))
    if u.kind == "linear":
        return u.scale * belief.mean + u.offset
    xs = belief.mean + math.sqrt(2.0) * belief.sd * _GH_X
    return float(np.dot(_GH_W, u(xs)) / math.sqrt(math.pi))


def choose_without_recommendation(beliefs: Mapping[int, object], u: UtilityFunction) -> int:
    """Argmax of expected utility over all goods; ties go to the lowest id."""
    if not beliefs:
        raise ChoiceError("no goods to choose from")
    best_id, best_eu = None, -math.inf
    for movie_id in sorted(beliefs):
        eu = expected_utility(beliefs[movie_id], u)
        if eu > best_eu:
            best_id, best_eu = movie_id, eu
    return best_id


def _posterior(prior: GoodBelief, signal_value: float, noise_sd: float) -> GoodBelief:
    if prior.sd == 0:
        return prior
    prior_prec = 1.0 / prior.sd**2
    signal_prec = 1.0 / noise_sd**2
    var = 1.0 / (prior_prec + signal_prec)
    mean = var * (prior.mean * prior_prec + signal_value * signal_prec)
    return GoodBelief(mean, math.sqrt(var))


def update_beliefs(
    beliefs: Mapping[int, GoodBelief],
    slate: RecommendationSlate,
    truths: Mapping[int, float],
    signal: SignalModel,
    rng,
) -> dict[int, GoodBelief]:
    """Conjugate update of the recommended goods' beliefs; others unchanged.

    Signal realizations come from ``slate.signals`` when present, otherwise
    they are drawn as truth + noise in slate order from ``rng``.
    """
    updated = dict(beliefs)
    for movie_id in slate.movie_ids:
        if movie_id not in updated:
            raise ChoiceError(f"slate movie {movie_id} has no belief")
        if movie_id not in truths:
            raise ChoiceError(f"slate movie {movie_id} has no true value")
        if slate.signals is not None and movie_id in slate.signals:
            s = slate.signals[movie_id]
        else:
            s = truths[movie_id] + rng.gauss(0.0, signal.noise_sd)
        updated[movie_id] = _posterior(updated[movie_id], s, signal.noise_sd)
    return updated


def choose_with_recommendation(
    beliefs: Mapping[int, GoodBelief],
    slate: RecommendationSlate,
    truths: Mapping[int, float],
    signal: SignalModel,
    u: UtilityFunction,
    rng,
) -> int:
    """Choice after the slate's signals update beliefs; still an argmax over
    every good, so the chosen one need not be recommended."""
    return choose_without_recommendation(
        update_beliefs(beliefs, slate, truths, signal, rng), u
    )


def _noise_matrix(rng, num_draws: int, candidates: list[int]) -> dict[int, np.ndarray]:
    """Standard-normal draws, consumed draw-major then candidate-major in
    ascending candidate order.  Oracles must consume the rng identically."""
    eps = np.empty((num_draws, len(candidates)))
    for d in range(num_draws):
        for j in range(len(candidates)):
            eps[d, j] = rng.gauss(0.0, 1.0)
    return {m: eps[:, j] for j, m in enumerate(candidates)}


def _posterior_eu_per_draw(
    prior: GoodBelief, truth: float, noise_sd: float, eps: np.ndarray, u: UtilityFunction
) -> np.ndarray:
    """Expected utility of the posterior for each signal-noise draw."""
    if prior.sd == 0:
        return np.full(len(eps), expected_utility(prior, u))
    signals = truth + noise_sd * eps
    prior_prec = 1.0 / prior.sd**2
    signal_prec = 1.0 / noise_sd**2
    var = 1.0 / (prior_prec + signal_prec)
    means = var * (prior.mean * prior_prec + signals * signal_prec)
    if u.kind == "linear":
        return u.scale * means + u.offset
    sd = math.sqrt(var)
    grid = means[:, None] + math.sqrt(2.0) * sd * _GH_X[None, :]
    return u(grid) @ _GH_W / math.sqrt(math.pi)


def _max_utility_per_draw(
    beliefs, truths, signal, u, subset, noise, prior_eu
) -> np.ndarray:
    best_outside = max(
        (prior_eu[m] for m in beliefs if m not in subset), default=-math.inf
    )
    num_draws = len(next(iter(noise.values())))
    best = np.full(num_draws, best_outside)
    for m in subset:
        eu = _posterior_eu_per_draw(beliefs[m], truths[m], signal.noise_sd, noise[m], u)
        np.maximum(best, eu, out=best)
    return best


def optimal_slate(
    beliefs: Mapping[int, GoodBelief],
    truths: Mapping[int, float],
    signal: SignalModel,
    u: UtilityFunction,
    k: int,
    candidates,
    rng,
    num_draws: int = 2000,
) -> RecommendationSlate:
    """Welfare-optimal slate of size k by exhaustive enumeration.

    Each k-subset is scored by the Monte Carlo average (over shared signal
    noise) of the maximized post-update expected utility; ties return the
    lexicographically smallest id set.  Desk scale only.
    """
    candidates = sorted(candidates)
    if k > len(candidates):
        raise ChoiceError(f"k={k} exceeds {len(candidates)} candidates")
    if k < 1:
        raise ChoiceError("k must be at least 1")
    for m in candidates:
        if m not in beliefs or m not in truths:
            raise ChoiceError(f"candidate {m} lacks a belief or truth")

    noise = _noise_matrix(rng, num_draws, candidates)
    prior_eu = {m: expected_utility(b, u) for m, b in beliefs.items()}

    best_subset, best_value = None, -math.inf
    for subset in combinations(candidates, k):
        value = float(
            np.mean(_max_utility_per_draw(beliefs, truths, signal, u, subset, noise, prior_eu))
        )
        if value > best_value:
            best_subset, best_value = subset, value
    return RecommendationSlate(best_subset)


def slate_value(
    beliefs: Mapping[int, GoodBelief],
    truths: Mapping[int, float],
    signal: SignalModel,
    u: UtilityFunction,
    slate_ids,
    rng,
    num_draws: int = 2000,
) -> tuple[float, float]:
    """Monte Carlo estimate (mean, standard error) of the slate's value: the
    post-recommendation maximized expected utility minus the no-recommendation
    one.  Zero exactly when no noise draw changes the choice."""
    subset = tuple(sorted(set(slate_ids)))
    noise = _noise_matrix(rng, num_draws, list(subset))
    prior_eu = {m: expected_utility(b, u) for m, b in beliefs.items()}
    u_nrec = max(prior_eu.values())
    per_draw = _max_utility_per_draw(beliefs, truths, signal, u, subset, noise, prior_eu)
    diffs = per_draw - u_nrec
    se = float(np.std(diffs, ddof=1) / math.sqrt(num_draws)) if num_draws > 1 else 0.0
    return float(np.mean(diffs)), se


def slate_value_under_prior(
    beliefs: Mapping[int, GoodBelief],
    signal: SignalModel,
    u: UtilityFunction,
    slate_ids,
    rng,
    num_draws: int = 2000,
) -> tuple[float, float]:
    """Slate value with the true values themselves drawn from the beliefs.

    Integrating over the user's own uncertainty makes the value non-negative
    in expectation: information cannot hurt a maximizer who updates first.
    Per draw (draw-major, candidates ascending) the rng yields one truth and
    one noise innovation per slate good.
    """
    subset = tuple(sorted(set(slate_ids)))
    prior_eu = {m: expected_utility(b, u) for m, b in beliefs.items()}
    u_nrec = max(prior_eu.values())
    best_outside = max(
        (prior_eu[m] for m in beliefs if m not in subset), default=-math.inf
    )
    diffs = np.empty(num_draws)
    for d in range(num_draws):
        best = best_outside
        for m in subset:
            prior = beliefs[m]
            x = prior.mean + prior.sd * rng.gauss(0.0, 1.0)
            s = x + signal.noise_sd * rng.gauss(0.0, 1.0)
            post = _posterior(prior, s, signal.noise_sd)
            eu = expected_utility(post, u)
            if eu > best:
                best = eu
        diffs[d] = best - u_nrec
    se = float(np.std(diffs, ddof=1) / math.sqrt(num_draws)) if num_draws > 1 else 0.0
    return float(np.mean(diffs)), se
