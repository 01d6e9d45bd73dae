"""Shapley values over partition parts and the end-to-end explainer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .config import RunConfig
from .errors import DimensionError, SpecError
from .interaction import InteractionGraph, build_interaction_graph
from .model import CenteredModel, Dataset, as_points, center
from .partition import (
    ObjectiveConfig,
    Partition,
    ValueCache,
    find_partition_exact,
    find_partition_greedy,
)
from .sampling import estimate_values, stream_generator

MAX_PLAYERS = 20


def _popcounts(m: int) -> np.ndarray:
    masks = np.arange(1 << m)
    counts = np.zeros(1 << m, dtype=np.intp)
    for i in range(m):
        counts += (masks >> i) & 1
    return counts


def shapley_weights(m: int) -> np.ndarray:
    """``w[s] = s! (m - s - 1)! / m!`` for coalitions of size ``s`` not containing the player."""
    return np.array(
        [math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)]
    )


@dataclass
class CoalitionGame:
    """Game over ``players`` (index sets); ``value`` maps a union of member sets to a number."""

    players: tuple[tuple[int, ...], ...]
    value: Callable[[tuple[int, ...]], float]

    @property
    def m(self) -> int:
        return len(self.players)

    def coalition(self, mask: int) -> tuple[int, ...]:
        return tuple(sorted(i for k, p in enumerate(self.players) if mask >> k & 1 for i in p))

    def table(self) -> np.ndarray:
        """``v'`` for every coalition, indexed by player bitmask; ``v'(empty) = 0``."""
        values = np.zeros(1 << self.m)
        for mask in range(1, 1 << self.m):
            values[mask] = self.value(self.coalition(mask))
        return values


def shapley_from_table(values: np.ndarray, m: int) -> np.ndarray:
    """Exact Shapley values from a table of ``2**m`` coalition values."""
    if m > MAX_PLAYERS:
        raise SpecError(f"exact Shapley limited to {MAX_PLAYERS} players, got {m}")
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (1 << m,):
        raise ValueError(f"expected {1 << m} coalition values, got {values.shape}")
    if m == 0:
        return np.zeros(0)
    # the full coalition never lacks a player; pad its weight with 0
    weights = np.append(shapley_weights(m), 0.0)[_popcounts(m)]
    masks = np.arange(1 << m)
    phi = np.empty(m)
    for i in range(m):
        without = masks[(masks >> i) & 1 == 0]
        phi[i] = np.sum(weights[without] * (values[without | (1 << i)] - values[without]))
    return phi


def shapley_values(game: CoalitionGame) -> np.ndarray:
    if game.m > MAX_PLAYERS:
        raise SpecError(f"exact Shapley limited to {MAX_PLAYERS} players, got {game.m}")
    return shapley_from_table(game.table(), game.m)


def interaction_effect(part: Sequence[int], cache: ValueCache) -> float:
    """``v(part) - sum_j v({j})``; exactly zero for singletons."""
    part = tuple(part)
    if len(part) == 1:
        return 0.0
    return cache.lookup(part).mean - sum(cache.lookup((j,)).mean for j in part)


@dataclass
class ExplanationPart:
    features: tuple[int, ...]
    value: float
    individual_sum: float
    interaction_effect: float


@dataclass
class Explanation:
    prediction: float
    baseline: float
    tolerance: float
    parts: list[ExplanationPart]
    graph: InteractionGraph
    partition: Partition
    config: dict
    # search diagnostics, not part of the serialized explanation
    stats: dict = field(default_factory=dict)

    @property
    def centered_prediction(self) -> float:
        return self.prediction - self.baseline

    def to_dict(self) -> dict:
        return {
            "prediction": self.prediction,
            "baseline": self.baseline,
            "tolerance": self.tolerance,
            "parts": [
                {
                    "features": list(p.features),
                    "value": p.value,
                    "individual_sum": p.individual_sum,
                    "interaction_effect": p.interaction_effect,
                }
                for p in self.parts
            ],
            "graph": {
                "edges": [[i, j, self.graph.p_values[(i, j)]] for i, j in sorted(self.graph.edges)]
            },
            "partition": [list(p) for p in self.partition],
            "config": self.config,
        }


def value_cache_for(x, centered: CenteredModel, background: Dataset, n: int, seed: int) -> ValueCache:
    """Cache of Monte-Carlo estimates of ``v(S)`` at ``x``."""
    return ValueCache(lambda sets: estimate_values(sets, x, centered, background, n=n, seed=seed))


def explain(
    x,
    model,
    background: Dataset,
    config: RunConfig = RunConfig(),
    *,
    centered: CenteredModel | None = None,
    graph: InteractionGraph | None = None,
    complete_graph: bool = False,
    cache: ValueCache | None = None,
) -> Explanation:
    """Explain ``model(x)`` as a sum of values of significantly interacting feature groups.

    Pipeline: center the model on ``background``, build the interaction graph,
    search the partition (greedy or exact), play the Shapley game whose
    players are the parts, and attach each part's interaction effect.

    ``centered`` skips re-centering when the caller explains many points;
    ``graph`` or ``complete_graph`` replace the interaction test (the latter
    is the ablation without testing).  ``cache`` supplies the value function,
    e.g. an analytic one.
    """
    if centered is None:
        centered = center(model, background)
    d = centered.d
    x = as_points(np.asarray(x, dtype=np.float64).reshape(1, -1), d)[0]
    if background.d != d:
        raise DimensionError(f"background has {background.d} columns, model expects {d}")

    fx_c = float(centered.predict(x[None, :])[0])
    raw_prediction = fx_c + centered.baseline_mean

    lam = config.lam
    if config.lambda_autoscale:
        lam = config.lam * float(np.var(centered.predict(background.values)))
    objective = ObjectiveConfig(lam, config.regularizer)

    if graph is None:
        if complete_graph:
            graph = InteractionGraph.complete(d, config.alpha)
        else:
            graph = build_interaction_graph(x, centered, background, config.n_s, config.alpha, config.seed)

    if cache is None:
        cache = value_cache_for(x, centered, background, config.n, config.seed)

    if config.mode == "exact":
        result = find_partition_exact(graph, cache, fx_c, objective, config.exact_limit)
    else:
        result = find_partition_greedy(graph, cache, fx_c, objective, config.merge_rule)
    partition = result.partition

    m = len(partition)
    cache.prefetch(list(partition) + [(j,) for j in range(d)] + [tuple(range(d))])
    if m <= config.shapley_exact_max:
        game = CoalitionGame(partition, cache.mean)
        cache.prefetch([game.coalition(mask) for mask in range(1, 1 << m)])
        table = game.table()
        phi = shapley_from_table(table, m)
        scale = float(np.max(np.abs(table)))
        shapley_method = "exact"
    else:
        sampled = sampling_shapley(x, centered, background, partition, config.n, config.seed)
        phi = sampled.values
        scale = float(np.max(np.abs(phi)))
        shapley_method = "sampled"
    # both paths telescope to v([d]) - v(empty) = f_c(x), which carries no
    # sampling error; what remains is floating-point rounding
    full = cache.lookup(tuple(range(d)))
    tolerance = 3.0 * math.sqrt(full.sem2) + 1e-9 * (1.0 + max(abs(fx_c), scale))

    parts = []
    for part, value in zip(partition, phi):
        individual = sum(cache.lookup((j,)).mean for j in part)
        parts.append(ExplanationPart(part, float(value), float(individual),
                                     float(interaction_effect(part, cache))))

    echo = config.to_dict()
    echo["lambda_effective"] = lam
    return Explanation(
        prediction=raw_prediction,
        baseline=centered.baseline_mean,
        tolerance=tolerance,
        parts=parts,
        graph=graph,
        partition=partition,
        config=echo,
        stats={
            "value_fn_evaluations": cache.misses,
            "candidate_partitions": result.candidates,
            "greedy_steps": result.steps,
            "objective": result.score,
            "shapley": shapley_method,
        },
    )


class SamplingShapley(NamedTuple):
    values: np.ndarray
    stderr: np.ndarray
    # f_c(x), which the values of every walk sum to exactly
    total: float = 0.0


def sampling_shapley(x, model, background, groups, n_permutations: int = 1000, seed: int = 0) -> SamplingShapley:
    """Permutation-sampling Shapley values of feature groups under the marginal value function.

    For every sampled permutation of the groups, a background row is walked
    towards ``x`` one group at a time; each step's output change is that
    group's marginal contribution.  The walk starts from ``v(empty) = 0``
    rather than from the row's own output (``model`` is centered on
    ``background``, so that is its expectation), which makes every walk sum
    to exactly ``f_c(x)``.
    """
    if n_permutations < 1:
        raise SpecError("n_permutations must be >= 1")
    bg = np.asarray(getattr(background, "values", background), dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    d = bg.shape[1]
    m = len(groups)
    member = np.zeros((m, d), dtype=bool)
    for k, g in enumerate(groups):
        member[k, list(g)] = True
    rng = stream_generator(seed, "permutation", tuple(len(g) for g in groups))
    perms = np.argsort(rng.random((n_permutations, m)), axis=1)
    rows = rng.integers(0, bg.shape[0], size=n_permutations)
    position = np.argsort(perms, axis=1)
    # step of the walk (1-based) at which each feature is switched to x
    feature_step = position @ member.astype(np.intp) + 1
    steps = np.arange(1, m)
    mask = feature_step[:, None, :] <= steps[None, :, None]
    points = np.where(mask, x, bg[rows][:, None, :]).reshape(-1, d)
    fx = float(model.predict(x[None, :])[0])
    y = np.empty((n_permutations, m + 1))
    y[:, 0] = 0.0
    y[:, m] = fx
    if m > 1:
        y[:, 1:m] = np.asarray(model.predict(points), dtype=np.float64).reshape(n_permutations, m - 1)
    deltas = np.diff(y, axis=1)
    contrib = np.empty_like(deltas)
    np.put_along_axis(contrib, perms, deltas, axis=1)
    # a lone group's walk is deterministic; skip the averaging round-off
    values = contrib.mean(axis=0) if m > 1 else np.array([fx])
    if n_permutations > 1:
        stderr = contrib.std(axis=0, ddof=1) / math.sqrt(n_permutations)
    else:
        stderr = np.zeros(m)
    return SamplingShapley(values, stderr, fx)


def sampling_shapley_singletons(x, model, background, n_permutations: int = 1000, seed: int = 0) -> SamplingShapley:
    """Per-feature permutation-sampling Shapley values (the plain SHAP baseline)."""
    d = np.asarray(getattr(background, "values", background)).shape[1]
    return sampling_shapley(x, model, background, [(j,) for j in range(d)], n_permutations, seed)
