"""Monte-Carlo estimation of the marginal value function.

``v(S) = E[f(X_S = x_S, X_rest ~ background)]`` is estimated by drawing
background rows uniformly with replacement and overwriting the coordinates in
``S`` with the explained point.

Random streams
--------------
Every estimate draws from its own stream, keyed by ``(seed, tag, S)``::

    h = splitmix64(seed ^ tag_key)
    for i in sorted(S): h = splitmix64(h ^ (i + 1))
    h = splitmix64(h ^ (len(S) << 32))

Draw ``k`` of that stream is ``splitmix64(h + (k + 1) * GOLDEN)``; its top 53
bits give a uniform in [0, 1) that is scaled to a row index.  Because the
stream is a pure function of the key, estimates do not depend on evaluation
order, batching, caching or thread count.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import SpecError

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

DEFAULT_N = 2000
DEFAULT_N_S = 2000
# points per model call when estimating many sets at once
CHUNK_POINTS = 1 << 15


def splitmix64(z: int) -> int:
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _splitmix64_array(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _tag_key(tag: str) -> int:
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


def stream_key(seed: int, tag: str, S: Iterable[int] = ()) -> int:
    """64-bit key of the stream for operation ``tag`` on index set ``S``."""
    S = sorted(S)
    h = splitmix64((seed & MASK64) ^ _tag_key(tag))
    for i in S:
        h = splitmix64(h ^ (i + 1))
    return splitmix64(h ^ (len(S) << 32))


def stream_uniforms(key: int, n: int) -> np.ndarray:
    k = np.arange(1, n + 1, dtype=np.uint64)
    z = _splitmix64_array(np.uint64(key) + k * np.uint64(GOLDEN))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def stream_indices(key: int, n: int, upper: int) -> np.ndarray:
    """``n`` row indices uniform on ``range(upper)`` from stream ``key``."""
    u = (_splitmix64_array(np.uint64(key) + np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN))
         >> np.uint64(11)).astype(np.float64)
    return np.minimum((u * (2.0**-53 * upper)).astype(np.intp), upper - 1)


def stream_generator(seed: int, tag: str, S: Iterable[int] = ()) -> np.random.Generator:
    """A numpy Generator seeded from the ``(seed, tag, S)`` stream key."""
    return np.random.default_rng(stream_key(seed, tag, S))


def thread_count() -> int:
    """Parallelism cap from ``ISHAP_THREADS`` (default 1)."""
    raw = os.environ.get("ISHAP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ValueEstimate:
    mean: float
    variance: float
    n: int

    @property
    def sem2(self) -> float:
        """Squared standard error of the mean."""
        return self.variance / self.n


def _background_values(background) -> np.ndarray:
    values = getattr(background, "values", background)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise SpecError("empty background")
    return values


def estimate_values(
    sets: Sequence[Sequence[int]],
    x,
    model,
    background,
    n: int = DEFAULT_N,
    seed: int = 0,
    tag: str = "value",
) -> list[ValueEstimate]:
    """Estimate ``v(S)`` for many sets, batching model calls.

    Result ``k`` is bit-identical to ``estimate_value(sets[k], ...)``.
    """
    if n < 1:
        raise SpecError("n must be >= 1")
    bg = _background_values(background)
    x = np.asarray(x, dtype=np.float64)
    d = bg.shape[1]
    N = bg.shape[0]
    out: list[ValueEstimate | None] = [None] * len(sets)

    full = []
    sampled = []
    for k, S in enumerate(sets):
        S = tuple(S)
        if len(set(S)) == d:
            full.append(k)
        else:
            sampled.append((k, S))

    if full:
        fx = float(model.predict(x[None, :])[0])
        for k in full:
            out[k] = ValueEstimate(fx, 0.0, n)

    per_chunk = max(1, CHUNK_POINTS // n)
    chunks = [sampled[i : i + per_chunk] for i in range(0, len(sampled), per_chunk)]
    columns = np.ascontiguousarray(bg.T)
    draws = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN)

    def run(chunk):
        K = len(chunk)
        keys = np.array([stream_key(seed, tag, S) for _, S in chunk], dtype=np.uint64)
        u = (_splitmix64_array(keys[:, None] + draws[None, :]) >> np.uint64(11)).astype(np.float64)
        idx = np.minimum((u * (2.0**-53 * N)).astype(np.intp), N - 1)
        fixed = np.zeros((K, d), dtype=bool)
        for row, (_, S) in enumerate(chunk):
            fixed[row, list(S)] = True
        # column-major composites: one contiguous gather per feature
        points = np.empty((K * n, d), order="F")
        for j in range(d):
            col = points[:, j].reshape(K, n)
            free = ~fixed[:, j]
            col[fixed[:, j]] = x[j]
            if free.any():
                col[free] = columns[j].take(idx[free])
        y = np.asarray(model.predict(points), dtype=np.float64).reshape(K, n)
        means = y.mean(axis=1)
        variances = y.var(axis=1, ddof=1) if n > 1 else np.zeros(K)
        return [
            (k, ValueEstimate(float(m), float(v), n))
            for (k, _), m, v in zip(chunk, means, variances)
        ]

    threads = thread_count()
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    for chunk_result in results:
        for k, est in chunk_result:
            out[k] = est
    return out  # type: ignore[return-value]


def estimate_value(S, x, model, background, n: int = DEFAULT_N, seed: int = 0) -> ValueEstimate:
    """Estimate ``v(S)`` with ``n`` background draws from the stream of ``(seed, S)``."""
    return estimate_values([tuple(S)], x, model, background, n=n, seed=seed)[0]


@dataclass
class MaskSample:
    masks: np.ndarray  # (n_s, d) bool
    perturbed_points: np.ndarray  # (n_s, d)
    outputs: np.ndarray  # (n_s,)


def draw_mask_sample(x, model, background, n_s: int = DEFAULT_N_S, seed: int = 0) -> MaskSample:
    """Shared random-intervention sample for the pairwise interaction test.

    Each draw starts from a uniformly chosen background row; every coordinate
    is independently replaced by the explained point with probability 1/2.
    """
    if n_s < 8:
        raise SpecError(f"n_s must be >= 8, got {n_s}")
    bg = _background_values(background)
    x = np.asarray(x, dtype=np.float64)
    rng = stream_generator(seed, "mask")
    d = bg.shape[1]
    masks = rng.random((n_s, d)) < 0.5
    rows = rng.integers(0, bg.shape[0], size=n_s)
    points = np.where(masks, x, bg[rows])
    outputs = np.asarray(model.predict(points), dtype=np.float64)
    return MaskSample(masks, points, outputs)
