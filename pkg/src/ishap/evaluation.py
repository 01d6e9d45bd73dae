"""Metrics and experiment protocols on synthetic ground truth."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .config import RunConfig
from .errors import ExactModeGuardError, SpecError
from .model import CenteredModel, Dataset, center
from .partition import Partition, canonical
from .sampling import stream_generator
from .shapley import explain, sampling_shapley_singletons
from .synth import (
    GroundTruthGAM,
    feature_importance,
    ground_truth_importance,
    permute_features,
    sample_dataset,
    sample_ground_truth,
)

BENCH_ROWS = 10_000
MAX_SPLIT_DRAWS = 1000
MAX_POINT_DRAWS = 50

# explanation producer: point -> [(features, value), ...]
Explainer = Callable[[np.ndarray], list[tuple[tuple[int, ...], float]]]


@dataclass
class F1Report:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def _f1(tp: int, n_pred: int, n_true: int) -> F1Report:
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_true if n_true else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return F1Report(precision, recall, f1, tp, n_pred - tp, n_true - tp)


def _domain(p: Partition) -> list[int]:
    return sorted(i for part in p for i in part)


def set_f1(predicted: Partition, truth: Partition) -> F1Report:
    """F1 over exactly matching parts, singletons included."""
    predicted, truth = canonical(predicted), canonical(truth)
    if _domain(predicted) != _domain(truth):
        raise SpecError("partitions cover different features")
    tp = len(set(predicted) & set(truth))
    return _f1(tp, len(predicted), len(truth))


def _pairs(p: Partition) -> set[tuple[int, int]]:
    return {pair for part in p for pair in combinations(sorted(part), 2)}


def pairwise_f1(predicted: Partition, truth: Partition) -> F1Report:
    """F1 over co-grouped feature pairs; two pair-free partitions score 1."""
    predicted, truth = canonical(predicted), canonical(truth)
    if _domain(predicted) != _domain(truth):
        raise SpecError("partitions cover different features")
    pred, true = _pairs(predicted), _pairs(truth)
    if not pred and not true:
        return F1Report(1.0, 1.0, 1.0, 0, 0, 0)
    return _f1(len(pred & true), len(pred), len(true))


@dataclass
class FidelityReport:
    r_squared: float
    trials: int
    pairs: list[tuple[float, float]]  # (implied, actual) per trial
    skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "r_squared": self.r_squared,
            "trials": self.trials,
            "skipped": self.skipped,
            "pairs": [list(p) for p in self.pairs],
        }


def r_squared(implied: Sequence[float], actual: Sequence[float]) -> float:
    implied = np.asarray(implied, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    ss_res = float(np.sum((actual - implied) ** 2))
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else -math.inf
    return 1.0 - ss_res / ss_tot


def ishap_explainer(centered: CenteredModel, background: Dataset, config: RunConfig) -> Explainer:
    def run(x):
        e = explain(x, centered.inner, background, config, centered=centered)
        return [(p.features, p.value) for p in e.parts]

    return run


def shap_explainer(centered: CenteredModel, background: Dataset, n_permutations: int = 1000, seed: int = 0) -> Explainer:
    def run(x):
        values = sampling_shapley_singletons(x, centered, background, n_permutations, seed).values
        return [((j,), float(v)) for j, v in enumerate(values)]

    return run


def surrogate_fidelity(
    explainer: Explainer,
    model: CenteredModel,
    dataset: Dataset,
    trials: int,
    seed: int = 0,
) -> FidelityReport:
    """R^2 of additive surrogate predictions on points mixed from two rows.

    Each trial picks rows ``x1``, ``x2`` and a uniform split of the features.
    The split must keep every part of both explanations on one side; it is
    redrawn up to ``MAX_SPLIT_DRAWS`` times, then new rows are drawn.  The
    implied prediction sums each explanation's parts lying on its own side.
    """
    if trials < 2:
        raise SpecError("trials must be >= 2")
    X = dataset.values
    d = dataset.d
    memo: dict[int, list] = {}

    def explanation(row):
        if row not in memo:
            memo[row] = [(tuple(f), float(v)) for f, v in explainer(X[row])]
        return memo[row]

    pairs = []
    skipped = 0
    for trial in range(trials):
        rng = stream_generator(seed, "fidelity", (trial,))
        found = None
        for _ in range(MAX_POINT_DRAWS):
            r1, r2 = (int(r) for r in rng.integers(0, X.shape[0], size=2))
            e1, e2 = explanation(r1), explanation(r2)
            parts = [f for f, _ in e1] + [f for f, _ in e2]
            for _ in range(MAX_SPLIT_DRAWS):
                side = rng.random(d) < 0.5  # True: value taken from x1
                if all(side[list(f)].all() or not side[list(f)].any() for f in parts):
                    found = (r1, r2, e1, e2, side)
                    break
            if found:
                break
        if found is None:
            skipped += 1
            continue
        r1, r2, e1, e2, side = found
        mixed = np.where(side, X[r1], X[r2])
        implied = sum(v for f, v in e1 if side[list(f)].all())
        implied += sum(v for f, v in e2 if not side[list(f)].any())
        actual = float(model.predict(mixed[None, :])[0])
        pairs.append((float(implied), actual))
    if len(pairs) < 2:
        raise SpecError("fewer than two admissible fidelity trials")
    r2 = r_squared([p[0] for p in pairs], [p[1] for p in pairs])
    return FidelityReport(r2, len(pairs), pairs, skipped)


def _pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        return math.nan
    return float(a @ b) / denom


@dataclass
class CorrelationReport:
    r: float
    matched: int
    unmatched: int
    per_group: dict = field(default_factory=dict)


def _correlate(groups: dict, pooling: str, matched: int, unmatched: int) -> CorrelationReport:
    if matched < 3:
        raise SpecError(f"need at least 3 matched observations, got {matched}")
    if pooling == "pooled":
        xs = [a for obs in groups.values() for a, _ in obs]
        ys = [b for obs in groups.values() for _, b in obs]
        return CorrelationReport(_pearson(xs, ys), matched, unmatched)
    if pooling != "per_part":
        raise SpecError(f"unknown pooling {pooling!r}")
    per_group = {}
    for key, obs in groups.items():
        if len(obs) >= 3:
            r = _pearson([a for a, _ in obs], [b for _, b in obs])
            if not math.isnan(r):
                per_group[key] = r
    if not per_group:
        raise SpecError("no group has enough varying observations")
    return CorrelationReport(float(np.mean(list(per_group.values()))), matched, unmatched, per_group)


def importance_correlation(
    explanations: Sequence[Sequence[tuple[Sequence[int], float]]],
    gam: GroundTruthGAM,
    points,
    pooling: str = "per_part",
) -> CorrelationReport:
    """Pearson r between explanation values and the gradient-times-value oracle.

    Only explanation parts that equal a ground-truth part are compared.  With
    ``per_part`` pooling r is computed per ground-truth part across points and
    averaged over parts; ``pooled`` correlates all observations at once.
    """
    truth_index = {part: k for k, part in enumerate(gam.partition)}
    groups: dict = {}
    matched = unmatched = 0
    for expl, x in zip(explanations, points):
        oracle = ground_truth_importance(gam, x)
        for features, value in expl:
            k = truth_index.get(tuple(sorted(features)))
            if k is None:
                unmatched += 1
                continue
            matched += 1
            groups.setdefault(gam.partition[k], []).append((float(value), oracle[k]))
    return _correlate(groups, pooling, matched, unmatched)


def feature_correlation(values, gam: GroundTruthGAM, points, pooling: str = "per_part") -> CorrelationReport:
    """Per-feature attributions (one row per point) against ``x_j * df/dx_j``."""
    groups: dict = {}
    values = np.asarray(values, dtype=np.float64)
    for row, x in zip(values, points):
        oracle = feature_importance(gam, x)
        for j in range(gam.d):
            groups.setdefault((j,), []).append((float(row[j]), oracle[j]))
    return _correlate(groups, pooling, values.size, 0)


@dataclass
class BenchTrial:
    trial: int
    d: int
    set_f1: float
    set_precision: float
    set_recall: float
    pairwise_f1: float
    pairwise_precision: float
    pairwise_recall: float
    true_parts: int
    found_parts: int
    edges: int
    value_fn_evaluations: int
    candidate_partitions: int
    runtime: float = 0.0
    error: str = ""

    def row(self, timing: bool = False) -> dict:
        doc = asdict(self)
        if not timing:
            doc.pop("runtime")
        return doc


def bench_problem(d: int, kind: str, dist: str, seed: int, trial: int, n_rows: int = BENCH_ROWS):
    """Ground-truth GAM (features shuffled), its dataset and the row to explain."""
    rng = stream_generator(seed, "bench", (trial,))
    gam = sample_ground_truth(d, kind, dist, rng)
    gam = permute_features(gam, rng.permutation(d))
    data = sample_dataset(gam, n_rows, rng)
    row = int(rng.integers(0, data.n))
    return gam, data, row


def run_bench_trial(
    d: int,
    kind: str,
    dist: str,
    config: RunConfig,
    trial: int,
    with_test: bool = True,
    n_rows: int = BENCH_ROWS,
) -> BenchTrial:
    gam, data, row = bench_problem(d, kind, dist, config.seed, trial, n_rows)
    model = gam.to_model()
    centered = center(model, data)
    trial_config = replace(config, seed=(config.seed * 1_000_003 + trial) % (1 << 63))
    start = time.perf_counter()
    try:
        e = explain(data.values[row], model, data, trial_config, centered=centered,
                    complete_graph=not with_test)
    except ExactModeGuardError as exc:
        return BenchTrial(trial, d, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan,
                          len(gam.partition), 0, 0, 0, 0, time.perf_counter() - start, str(exc))
    runtime = time.perf_counter() - start
    sf = set_f1(e.partition, gam.partition)
    pf = pairwise_f1(e.partition, gam.partition)
    return BenchTrial(
        trial, d, sf.f1, sf.precision, sf.recall, pf.f1, pf.precision, pf.recall,
        len(gam.partition), len(e.partition), len(e.graph.edges),
        e.stats["value_fn_evaluations"], e.stats["candidate_partitions"], runtime,
    )


@dataclass
class BenchReport:
    trials: list[BenchTrial]

    @property
    def completed(self) -> list[BenchTrial]:
        return [t for t in self.trials if not t.error]

    def mean(self, name: str) -> float:
        done = self.completed
        if not done:
            return math.nan
        return float(np.mean([getattr(t, name) for t in done]))

    def summary(self, timing: bool = False) -> dict:
        keys = [k for k in self.trials[0].row(timing) if k not in ("trial", "d", "error")] if self.trials else []
        doc = {k: self.mean(k) for k in keys}
        doc["failed"] = len(self.trials) - len(self.completed)
        return doc


def synth_bench(d: int, kind: str, dist: str, trials: int, config: RunConfig,
                n_rows: int = BENCH_ROWS) -> BenchReport:
    if trials < 1:
        raise SpecError("trials must be >= 1")
    return BenchReport([run_bench_trial(d, kind, dist, config, t, True, n_rows) for t in range(trials)])


def ablation_run(d: int, kind: str, dist: str, config: RunConfig, with_test: bool, trials: int,
                 n_rows: int = BENCH_ROWS) -> BenchReport:
    """Benchmark with the interaction test, or with a complete graph in its place."""
    if trials < 1:
        raise SpecError("trials must be >= 1")
    return BenchReport([run_bench_trial(d, kind, dist, config, t, with_test, n_rows) for t in range(trials)])
