"""Independent reference implementations used only by the tests."""

from itertools import combinations

import numpy as np


def all_partitions(items):
    """Every set partition of ``items`` by inserting one element at a time."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in all_partitions(rest):
        yield [[first]] + p
        for k in range(len(p)):
            yield p[:k] + [[first] + p[k]] + p[k + 1 :]


def bell(n):
    """Bell numbers from the Bell triangle."""
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def canon(p):
    return tuple(sorted((tuple(sorted(s)) for s in p), key=lambda s: s[0]))


def reachable_components(d, edges):
    adj = {i: set() for i in range(d)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, comps = set(), []
    for s in range(d):
        if s in seen:
            continue
        stack, comp = [s], set()
        while stack:
            v = stack.pop()
            if v in comp:
                continue
            comp.add(v)
            stack.extend(adj[v] - comp)
        seen |= comp
        comps.append(comp)
    return comps


def brute_valid(p, d, edges):
    comps = reachable_components(d, edges)
    return all(any(set(part) <= c for c in comps) for part in p)


def brute_score(p, table, prediction, lam, regularizer="pairwise"):
    err = prediction - sum(table[tuple(sorted(s))] for s in p)
    if regularizer == "pairwise":
        reg = sum(len(s) * (len(s) - 1) // 2 for s in p)
    else:
        reg = sum(len(s) for s in p)
    return err * err + lam * reg


def random_table(d, rng):
    """Value table over all nonempty subsets of range(d)."""
    table = {}
    for r in range(1, d + 1):
        for S in combinations(range(d), r):
            table[S] = float(rng.normal())
    return table


def shapley_by_permutations(m, value):
    """Exact Shapley values by averaging marginals over all m! orders."""
    from itertools import permutations

    phi = np.zeros(m)
    count = 0
    for order in permutations(range(m)):
        coalition = frozenset()
        for i in order:
            phi[i] += value(coalition | {i}) - value(coalition)
            coalition = coalition | {i}
        count += 1
    return phi / count


def additive_table(terms, d, rng):
    """Exact value table of a game that is additive over ``terms`` with interacting terms."""
    inner = {}
    for term in terms:
        for r in range(1, len(term) + 1):
            for S in combinations(term, r):
                inner[S] = float(rng.normal() * 3)
    table = {}
    for r in range(1, d + 1):
        for S in combinations(range(d), r):
            total = 0.0
            for term in terms:
                part = tuple(i for i in term if i in S)
                if part:
                    total += inner[part]
            table[S] = total
    return table
