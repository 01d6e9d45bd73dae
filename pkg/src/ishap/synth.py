"""Ground-truth GAM benchmarks with analytic oracles.

Features are split into consecutive blocks whose sizes follow a Poisson(1.5)
law clamped to ``[1, remaining]``.  Each block gets a product term
``prod_j a_j x_j`` or a sine term ``sin(sum_j a_j x_j)`` with
``|a_j| ~ U[0.5, 1.5]`` and a random sign.  Columns are independent, either
normal with ``mu ~ U[0, 3]``, ``sigma ~ U[0.5, 1.5]`` or uniform on [0, 3].
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import Dataset, GAMModel, ModelSpec, Term
from .partition import Partition

POISSON_RATE = 1.5
COEF_LOW, COEF_HIGH = 0.5, 1.5
UNIFORM_LOW, UNIFORM_HIGH = 0.0, 3.0
KINDS = ("product", "sine", "mixed")
DISTS = ("normal", "uniform")


@dataclass(frozen=True)
class Column:
    dist: str  # "normal" | "uniform"
    a: float  # mean, or lower bound
    b: float  # standard deviation, or upper bound

    @property
    def mean(self) -> float:
        return self.a if self.dist == "normal" else 0.5 * (self.a + self.b)

    def char_fn(self, t: float) -> complex:
        """``E[exp(i t X)]``."""
        if self.dist == "normal":
            return cmath.exp(1j * t * self.a - 0.5 * (t * self.b) ** 2)
        if t == 0.0:
            return 1.0 + 0j
        width = self.b - self.a
        return (cmath.exp(1j * t * self.b) - cmath.exp(1j * t * self.a)) / (1j * t * width)


@dataclass
class GroundTruthGAM:
    d: int
    partition: Partition
    kinds: tuple[str, ...]
    coeffs: tuple[tuple[float, ...], ...]
    columns: tuple[Column, ...]

    def terms(self) -> list[Term]:
        return [Term(part, kind, c) for part, kind, c in zip(self.partition, self.kinds, self.coeffs)]

    def to_model(self) -> GAMModel:
        return GAMModel(self.d, self.terms())

    def to_spec(self) -> ModelSpec:
        return ModelSpec("gam", self.d, terms=tuple(self.terms()), ground_truth_partition=self.partition)

    def term_mean(self, k: int, fixed: dict[int, float] | None = None) -> float:
        """``E[f_k]`` with the coordinates in ``fixed`` held at the given values."""
        fixed = fixed or {}
        part, kind, coeffs = self.partition[k], self.kinds[k], self.coeffs[k]
        if kind == "product":
            out = 1.0
            for j, a in zip(part, coeffs):
                out *= a * (fixed[j] if j in fixed else self.columns[j].mean)
            return out
        phase = 1.0 + 0j
        for j, a in zip(part, coeffs):
            if j in fixed:
                phase *= cmath.exp(1j * a * fixed[j])
            else:
                phase *= self.columns[j].char_fn(a)
        return phase.imag

    def mean_output(self) -> float:
        return sum(self.term_mean(k) for k in range(len(self.partition)))

    def exact_value(self, x: Sequence[float], S: Sequence[int]) -> float:
        """Analytic centered value ``E[f | X_S = x_S] - E[f]`` under the true column laws."""
        S = set(S)
        total = 0.0
        for k, part in enumerate(self.partition):
            fixed = {j: float(x[j]) for j in part if j in S}
            if fixed:
                total += self.term_mean(k, fixed) - self.term_mean(k)
        return total


def _part_sizes(d: int, rng: np.random.Generator) -> list[int]:
    sizes = []
    remaining = d
    while remaining > 0:
        k = int(rng.poisson(POISSON_RATE))
        k = min(max(k, 1), remaining)
        sizes.append(k)
        remaining -= k
    return sizes


def sample_ground_truth(d: int, kind: str, dist: str, rng: np.random.Generator) -> GroundTruthGAM:
    if d < 1:
        raise ValueError("d must be >= 1")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if dist not in DISTS:
        raise ValueError(f"dist must be one of {DISTS}")
    parts = []
    start = 0
    for size in _part_sizes(d, rng):
        parts.append(tuple(range(start, start + size)))
        start += size
    kinds = []
    coeffs = []
    for part in parts:
        if kind == "mixed":
            kinds.append("product" if rng.random() < 0.5 else "sine")
        else:
            kinds.append(kind)
        magnitude = rng.uniform(COEF_LOW, COEF_HIGH, size=len(part))
        sign = np.where(rng.random(len(part)) < 0.5, -1.0, 1.0)
        coeffs.append(tuple(float(c) for c in magnitude * sign))
    columns = []
    for _ in range(d):
        if dist == "normal":
            columns.append(Column("normal", float(rng.uniform(0.0, 3.0)), float(rng.uniform(0.5, 1.5))))
        else:
            columns.append(Column("uniform", UNIFORM_LOW, UNIFORM_HIGH))
    return GroundTruthGAM(d, tuple(parts), tuple(kinds), tuple(coeffs), tuple(columns))


def sample_dataset(gam: GroundTruthGAM, n: int, rng: np.random.Generator) -> Dataset:
    if n < 2:
        raise ValueError("n must be >= 2")
    X = np.empty((n, gam.d))
    for j, col in enumerate(gam.columns):
        if col.dist == "normal":
            X[:, j] = rng.normal(col.a, col.b, size=n)
        else:
            X[:, j] = rng.uniform(col.a, col.b, size=n)
    return Dataset.from_array(X)


def ground_truth_importance(gam: GroundTruthGAM, x: Sequence[float]) -> list[float]:
    """Mixed partial derivative of each part's term times the part's feature values.

    Only defined for product terms, where it equals ``prod_j a_j * prod_j x_j``.
    """
    out = []
    for part, kind, coeffs in zip(gam.partition, gam.kinds, gam.coeffs):
        if kind != "product":
            raise ValueError(f"oracle undefined for this kind: {kind}")
        value = 1.0
        for j, a in zip(part, coeffs):
            value *= a * float(x[j])
        out.append(value)
    return out


def feature_importance(gam: GroundTruthGAM, x: Sequence[float]) -> list[float]:
    """Per-feature gradient times value, ``x_j * df/dx_j``, for product GAMs."""
    out = [0.0] * gam.d
    for part, value in zip(gam.partition, ground_truth_importance(gam, x)):
        # x_j * d/dx_j prod_k a_k x_k == prod_k a_k x_k
        for j in part:
            out[j] = value
    return out


def permute_features(gam: GroundTruthGAM, perm: Sequence[int]) -> GroundTruthGAM:
    """Relabel feature ``j`` as ``perm[j]``; the function is otherwise unchanged."""
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(gam.d)):
        raise ValueError("perm must be a permutation of range(d)")
    terms = []
    for part, kind, coeffs in zip(gam.partition, gam.kinds, gam.coeffs):
        pairs = sorted((perm[j], a) for j, a in zip(part, coeffs))
        terms.append((tuple(j for j, _ in pairs), kind, tuple(a for _, a in pairs)))
    terms.sort(key=lambda t: t[0][0])
    columns = [None] * gam.d
    for j, col in enumerate(gam.columns):
        columns[perm[j]] = col
    return GroundTruthGAM(
        gam.d,
        tuple(t[0] for t in terms),
        tuple(t[1] for t in terms),
        tuple(t[2] for t in terms),
        tuple(columns),
    )
