"""Partition scoring and search.

A partition is a tuple of sorted index tuples, the parts ordered by their
smallest member (canonical form).  The objective of a partition is the
squared reconstruction error of the prediction by the summed part values,
plus ``lambda`` times a complexity penalty.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from itertools import combinations, product
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from .errors import ExactModeGuardError, SpecError
from .interaction import InteractionGraph, connected_components
from .sampling import ValueEstimate

Part = tuple[int, ...]
Partition = tuple[Part, ...]

DEFAULT_LAMBDA = 5e-3
EXACT_COMPONENT_LIMIT = 16
REGULARIZERS = ("pairwise", "cardinality")
MERGE_RULES = ("edge", "path")


def canonical(parts: Iterable[Iterable[int]]) -> Partition:
    return tuple(sorted((tuple(sorted(p)) for p in parts), key=lambda p: p[0]))


def make_partition(parts: Iterable[Iterable[int]], d: int) -> Partition:
    """Validate and canonicalize ``parts`` as a partition of ``range(d)``."""
    p = canonical(parts)
    if any(len(part) == 0 for part in p):
        raise SpecError("partition parts must be nonempty")
    flat = sorted(i for part in p for i in part)
    if flat != list(range(d)):
        raise SpecError(f"not a partition of range({d}): {p}")
    return p


def singletons(d: int) -> Partition:
    return tuple((i,) for i in range(d))


@dataclass(frozen=True)
class ObjectiveConfig:
    lam: float = DEFAULT_LAMBDA
    regularizer: str = "pairwise"

    def __post_init__(self):
        if not (self.lam >= 0.0 and self.lam != float("inf")):
            raise SpecError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.regularizer not in REGULARIZERS:
            raise SpecError(f"unknown regularizer {self.regularizer!r}")


class ValueCache:
    """Memoized value function ``v(S)``.

    ``compute`` receives a list of canonical index tuples and returns one
    :class:`ValueEstimate` (or plain number) per set.  Every set is computed
    at most once; ``misses`` counts how many were.  The empty set is worth
    exactly zero and is never computed.
    """

    def __init__(self, compute: Callable[[list[Part]], Sequence]):
        self._compute = compute
        self._store: dict[Part, ValueEstimate] = {(): ValueEstimate(0.0, 0.0, 1)}
        self._lock = threading.Lock()
        self.misses = 0

    @classmethod
    def from_function(cls, fn: Callable[[Part], float]) -> ValueCache:
        return cls(lambda sets: [fn(S) for S in sets])

    @classmethod
    def from_table(cls, table: Mapping[Iterable[int], float]) -> ValueCache:
        lookup = {tuple(sorted(k)): v for k, v in table.items()}

        def compute(sets):
            try:
                return [lookup[S] for S in sets]
            except KeyError as exc:
                raise KeyError(f"missing cache entry for {exc.args[0]}") from None

        return cls(compute)

    def __contains__(self, S) -> bool:
        return tuple(sorted(S)) in self._store

    def __len__(self) -> int:
        return len(self._store) - 1

    def prefetch(self, sets: Iterable[Iterable[int]]) -> None:
        """Compute all missing sets in one batch."""
        with self._lock:
            missing = []
            seen = set()
            for S in sets:
                key = tuple(sorted(S))
                if key not in self._store and key not in seen:
                    seen.add(key)
                    missing.append(key)
            if not missing:
                return
            results = self._compute(missing)
            for key, est in zip(missing, results):
                if not isinstance(est, ValueEstimate):
                    est = ValueEstimate(float(est), 0.0, 1)
                self._store[key] = est
            self.misses += len(missing)

    def get(self, S: Iterable[int]) -> ValueEstimate:
        key = tuple(sorted(S))
        est = self._store.get(key)
        if est is None:
            self.prefetch([key])
            est = self._store[key]
        return est

    def mean(self, S: Iterable[int]) -> float:
        return self.get(S).mean

    def lookup(self, S: Iterable[int]) -> ValueEstimate:
        """Like :meth:`get` but never computes; raises ``KeyError`` when absent."""
        key = tuple(sorted(S))
        try:
            return self._store[key]
        except KeyError:
            raise KeyError(f"missing cache entry for {key}") from None


def regularization(p: Partition, cfg: ObjectiveConfig) -> float:
    if cfg.regularizer == "pairwise":
        return float(sum(len(s) * (len(s) - 1) // 2 for s in p))
    return float(sum(len(s) for s in p))


def score_partition(p: Partition, cache: ValueCache, prediction: float, cfg: ObjectiveConfig) -> float:
    """Squared reconstruction error plus ``lambda * regularization``.

    Every part must already be in the cache.
    """
    total = 0.0
    for part in p:
        total += cache.lookup(part).mean
    err = prediction - total
    return err * err + cfg.lam * regularization(p, cfg)


def _component_index(graph: InteractionGraph) -> list[int]:
    comp_of = [0] * graph.d
    for c, comp in enumerate(connected_components(graph)):
        for i in comp:
            comp_of[i] = c
    return comp_of


def is_valid(p: Partition, g: InteractionGraph) -> bool:
    """True iff every part lies inside one connected component of ``g``."""
    comp_of = _component_index(g)
    return all(len({comp_of[i] for i in part}) == 1 for part in p)


def set_partitions(items: Sequence[int]) -> Iterator[list[list[int]]]:
    """All set partitions of ``items`` via restricted growth strings.

    ``a[0] = 0`` and ``a[k] <= 1 + max(a[:k])``; item ``k`` goes to block
    ``a[k]``.  Strings are produced in lexicographic order.
    """
    n = len(items)
    if n == 0:
        yield []
        return
    a = [0] * n
    # b[k] = 1 + max(a[:k]), the largest block index item k may open
    b = [1] * n
    while True:
        blocks: list[list[int]] = [[] for _ in range(max(a) + 1)]
        for item, block in zip(items, a):
            blocks[block].append(item)
        yield blocks
        k = n - 1
        while k > 0 and a[k] == b[k]:
            k -= 1
        if k == 0:
            return
        a[k] += 1
        for j in range(k + 1, n):
            a[j] = 0
            b[j] = max(b[k], a[k] + 1)


def _check_guard(components, limit):
    for comp in components:
        if len(comp) > limit:
            raise ExactModeGuardError(comp, limit)


def enumerate_valid_partitions(g: InteractionGraph, limit: int = EXACT_COMPONENT_LIMIT) -> Iterator[Partition]:
    """Every partition whose parts each lie inside one component, once each."""
    components = connected_components(g)
    _check_guard(components, limit)
    per_component = [list(set_partitions(comp)) for comp in components]
    for combo in product(*per_component):
        yield canonical(block for blocks in combo for block in blocks)


def _subsets(items: Sequence[int]) -> Iterator[Part]:
    for r in range(1, len(items) + 1):
        yield from combinations(items, r)


@dataclass
class SearchResult:
    partition: Partition
    score: float
    candidates: int = 0  # partitions scored
    steps: int = 0  # greedy merges applied


def find_partition_exact(
    g: InteractionGraph,
    cache: ValueCache,
    prediction: float,
    cfg: ObjectiveConfig,
    limit: int = EXACT_COMPONENT_LIMIT,
) -> SearchResult:
    """Exhaustive search over the valid partitions of ``g``.

    Ties go to the lower regularization, then to the canonically first partition.
    """
    components = connected_components(g)
    _check_guard(components, limit)
    cache.prefetch(S for comp in components for S in _subsets(comp))
    best_key = None
    count = 0
    for p in enumerate_valid_partitions(g, limit):
        count += 1
        key = (score_partition(p, cache, prediction, cfg), regularization(p, cfg), p)
        if best_key is None or key < best_key:
            best_key = key
    return SearchResult(best_key[2], best_key[0], candidates=count)


def find_partition_greedy(
    g: InteractionGraph,
    cache: ValueCache,
    prediction: float,
    cfg: ObjectiveConfig,
    merge_rule: str = "edge",
) -> SearchResult:
    """Bottom-up merging from the all-singleton partition.

    Each step scores every eligible pair merge and applies the one with the
    lowest score if it strictly improves on the current partition.  Under the
    ``edge`` rule two parts are eligible when a graph edge joins them; under
    ``path`` when they share a connected component.
    """
    if merge_rule not in MERGE_RULES:
        raise SpecError(f"unknown merge rule {merge_rule!r}")
    comp_of = _component_index(g)
    current = singletons(g.d)
    cache.prefetch(current)
    best_score = score_partition(current, cache, prediction, cfg)
    candidates = 0
    steps = 0

    def eligible(a: Part, b: Part) -> bool:
        if merge_rule == "path":
            return comp_of[a[0]] == comp_of[b[0]]
        return any(g.has_edge(k, l) for k in a for l in b)

    while True:
        merges = [
            (i, j)
            for i, j in combinations(range(len(current)), 2)
            if eligible(current[i], current[j])
        ]
        if not merges:
            break
        cache.prefetch(current[i] + current[j] for i, j in merges)
        step_best = None
        for i, j in merges:
            merged = canonical([*(current[k] for k in range(len(current)) if k not in (i, j)),
                                current[i] + current[j]])
            s = score_partition(merged, cache, prediction, cfg)
            candidates += 1
            if s < best_score and (step_best is None or s < step_best[0]):
                step_best = (s, merged)
        if step_best is None:
            break
        best_score, current = step_best
        steps += 1
    return SearchResult(current, best_score, candidates=candidates, steps=steps)
