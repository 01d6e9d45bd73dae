"""Pairwise interaction testing and the interaction graph.

For every feature pair the shared mask sample is split into four buckets by
whether ``i`` and ``j`` were fixed to the explained point.  No interaction
means ``E[v(S+i)] + E[v(S+j)] - E[v(S+ij)] - E[v(S)] = 0``; that linear
contrast of four group means is tested with a Welch-type t statistic and
Welch-Satterthwaite degrees of freedom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import SpecError
from .sampling import DEFAULT_N_S, MaskSample, draw_mask_sample
from .stats import t_two_sided_p

DEFAULT_ALPHA = 0.01


@dataclass(frozen=True)
class GroupStats:
    mean: float
    variance: float
    n: int

    @classmethod
    def of(cls, values) -> GroupStats:
        values = np.asarray(values, dtype=np.float64)
        n = values.size
        if n == 0:
            return cls(0.0, 0.0, 0)
        variance = float(values.var(ddof=1)) if n > 1 else 0.0
        return cls(float(values.mean()), variance, n)


@dataclass(frozen=True)
class BucketStats:
    both: GroupStats  # i and j fixed
    only_i: GroupStats
    only_j: GroupStats
    neither: GroupStats

    @property
    def groups(self) -> tuple[GroupStats, GroupStats, GroupStats, GroupStats]:
        return (self.both, self.only_i, self.only_j, self.neither)

    @property
    def contrast(self) -> float:
        return self.only_i.mean + self.only_j.mean - self.both.mean - self.neither.mean


def bucket_pair(sample: MaskSample, i: int, j: int) -> BucketStats:
    if i == j:
        raise ValueError("bucket_pair needs two distinct features")
    zi = sample.masks[:, i]
    zj = sample.masks[:, j]
    y = sample.outputs
    return BucketStats(
        both=GroupStats.of(y[zi & zj]),
        only_i=GroupStats.of(y[zi & ~zj]),
        only_j=GroupStats.of(y[~zi & zj]),
        neither=GroupStats.of(y[~zi & ~zj]),
    )


def contrast_test(stats: BucketStats) -> float:
    """Two-sided p-value for ``H0: contrast == 0``.

    A group with fewer than two draws makes the test inconclusive (p = 1).
    With zero standard error the answer is 1 for a zero contrast and 0
    otherwise.
    """
    groups = stats.groups
    if any(g.n < 2 for g in groups):
        return 1.0
    delta = stats.contrast
    both, only_i, only_j, neither = (g.variance / g.n for g in groups)
    # pairing the terms keeps the result bit-identical when i and j swap roles
    se2 = (both + neither) + (only_i + only_j)
    if se2 == 0.0:
        return 1.0 if delta == 0.0 else 0.0
    w = [t * t / (g.n - 1) for t, g in zip((both, only_i, only_j, neither), groups)]
    dof = se2 * se2 / ((w[0] + w[3]) + (w[1] + w[2]))
    return t_two_sided_p(delta / math.sqrt(se2), dof)


@dataclass
class InteractionGraph:
    d: int
    edges: frozenset[tuple[int, int]]
    p_values: dict[tuple[int, int], float]
    alpha: float

    def p_value(self, i: int, j: int) -> float:
        return self.p_values[(i, j) if i < j else (j, i)]

    def has_edge(self, i: int, j: int) -> bool:
        return ((i, j) if i < j else (j, i)) in self.edges

    @classmethod
    def from_p_values(cls, d: int, p_values: dict[tuple[int, int], float], alpha: float) -> InteractionGraph:
        p_values = {(min(i, j), max(i, j)): float(p) for (i, j), p in p_values.items()}
        for pair in combinations(range(d), 2):
            p_values.setdefault(pair, 1.0)
        edges = frozenset(pair for pair, p in p_values.items() if p < alpha)
        return cls(d, edges, p_values, alpha)

    @classmethod
    def from_edges(cls, d: int, edges, alpha: float = DEFAULT_ALPHA) -> InteractionGraph:
        """Graph with p = 0 on the given edges and p = 1 elsewhere."""
        p_values = {(min(i, j), max(i, j)): 0.0 for i, j in edges}
        return cls.from_p_values(d, p_values, alpha)

    @classmethod
    def complete(cls, d: int, alpha: float = DEFAULT_ALPHA) -> InteractionGraph:
        return cls.from_edges(d, combinations(range(d), 2), alpha)

    def to_dot(self, x=None) -> str:
        lines = ["graph ishap {"]
        for i in range(self.d):
            label = f"f{i}" if x is None else f"f{i}:{format(float(x[i]), '.17g')}"
            lines.append(f'  {i} [label="{label}"];')
        for i, j in sorted(self.edges):
            lines.append(f'  {i} -- {j} [label="p={format(self.p_values[(i, j)], ".17g")}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_interaction_graph(
    x,
    model,
    background,
    n_s: int = DEFAULT_N_S,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
) -> InteractionGraph:
    """Test every pair on one shared mask sample (``n_s`` model evaluations in total)."""
    if not 0.0 < alpha < 1.0:
        raise SpecError(f"alpha must lie in (0, 1), got {alpha}")
    sample = draw_mask_sample(x, model, background, n_s, seed)
    d = sample.masks.shape[1]
    p_values = {(i, j): contrast_test(bucket_pair(sample, i, j)) for i, j in combinations(range(d), 2)}
    return InteractionGraph.from_p_values(d, p_values, alpha)


class UnionFind:
    """Disjoint sets over ``range(n)`` with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


def connected_components(graph: InteractionGraph) -> list[tuple[int, ...]]:
    """Components as sorted tuples, ordered by smallest member."""
    uf = UnionFind(graph.d)
    for i, j in graph.edges:
        uf.union(i, j)
    groups: dict[int, list[int]] = {}
    for i in range(graph.d):
        groups.setdefault(uf.find(i), []).append(i)
    return sorted((tuple(g) for g in groups.values()), key=lambda g: g[0])
