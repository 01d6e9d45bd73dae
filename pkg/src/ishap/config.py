from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import SpecError
from .interaction import DEFAULT_ALPHA
from .partition import DEFAULT_LAMBDA, EXACT_COMPONENT_LIMIT, MERGE_RULES, REGULARIZERS
from .sampling import DEFAULT_N, DEFAULT_N_S

MODES = ("greedy", "exact")


@dataclass(frozen=True)
class RunConfig:
    alpha: float = DEFAULT_ALPHA
    lam: float = DEFAULT_LAMBDA
    n: int = DEFAULT_N
    n_s: int = DEFAULT_N_S
    mode: str = "greedy"
    regularizer: str = "pairwise"
    merge_rule: str = "edge"
    seed: int = 0
    lambda_autoscale: bool = False
    exact_limit: int = EXACT_COMPONENT_LIMIT
    # largest partition whose Shapley game is enumerated exactly; above it
    # the values are estimated by permutation sampling
    shapley_exact_max: int = 10

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and 0.0 < self.alpha < 1.0):
            raise SpecError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (math.isfinite(self.lam) and self.lam >= 0.0):
            raise SpecError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.n < 1:
            raise SpecError(f"n must be >= 1, got {self.n}")
        if self.n_s < 8:
            raise SpecError(f"n_s must be >= 8, got {self.n_s}")
        if self.mode not in MODES:
            raise SpecError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.regularizer not in REGULARIZERS:
            raise SpecError(f"regularizer must be one of {REGULARIZERS}, got {self.regularizer!r}")
        if self.merge_rule not in MERGE_RULES:
            raise SpecError(f"merge_rule must be one of {MERGE_RULES}, got {self.merge_rule!r}")
        if self.seed < 0:
            raise SpecError(f"seed must be >= 0, got {self.seed}")
        if not 1 <= self.shapley_exact_max <= 20:
            raise SpecError(f"shapley_exact_max must lie in [1, 20], got {self.shapley_exact_max}")
        if self.exact_limit < 1:
            raise SpecError(f"exact_limit must be >= 1, got {self.exact_limit}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["lambda"] = doc.pop("lam")
        return doc
