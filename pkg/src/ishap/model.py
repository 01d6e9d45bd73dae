"""Black-box models, model specs, datasets and mean-centering.

A model is anything with an integer attribute ``d`` and a ``predict`` method
mapping an ``(n, d)`` float64 array to ``n`` outputs.  Three families are
built in: linear, GAM (product / sine terms) and an external process spoken
to over a newline-delimited stdin/stdout protocol.
"""

from __future__ import annotations

import csv
import json
import math
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import DimensionError, ModelProtocolError, SpecError

TERM_KINDS = ("product", "sine")


@dataclass(frozen=True)
class Term:
    features: tuple[int, ...]
    kind: str
    coeffs: tuple[float, ...]


@dataclass
class ModelSpec:
    kind: str
    d: int
    weights: tuple[float, ...] = ()
    intercept: float = 0.0
    terms: tuple[Term, ...] = ()
    cmd: str = ""
    args: tuple[str, ...] = ()
    # only set for specs written by the synthetic generator
    ground_truth_partition: tuple[tuple[int, ...], ...] | None = None

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "linear":
            doc = {"type": "linear", "weights": list(self.weights), "intercept": self.intercept}
        elif self.kind == "gam":
            doc = {
                "type": "gam",
                "d": self.d,
                "terms": [
                    {"features": list(t.features), "kind": t.kind, "coeffs": list(t.coeffs)}
                    for t in self.terms
                ],
            }
        else:
            doc = {"type": "external", "d": self.d, "cmd": self.cmd, "args": list(self.args)}
        if self.ground_truth_partition is not None:
            doc["ground_truth_partition"] = [list(p) for p in self.ground_truth_partition]
        return doc


def _real(value, what):
    # bool is an int subclass; reject it explicitly
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecError(f"{what} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise SpecError(f"{what} must be finite")
    return value


def _index(value, what):
    if isinstance(value, bool) or not isinstance(value, int):
        raise SpecError(f"{what} must be an integer, got {value!r}")
    if value < 0:
        raise SpecError(f"{what} out of range: {value}")
    return value


def _require(doc, key):
    if key not in doc:
        raise SpecError(f"missing field {key!r}")
    return doc[key]


def parse_model_spec(doc: Any) -> ModelSpec:
    """Validate an already-decoded JSON document into a :class:`ModelSpec`."""
    if not isinstance(doc, dict):
        raise SpecError("model spec must be a JSON object")
    kind = doc.get("type")
    gt = doc.get("ground_truth_partition")
    if gt is not None:
        if not isinstance(gt, list) or not all(isinstance(p, list) for p in gt):
            raise SpecError("ground_truth_partition must be a list of lists")
        gt = tuple(tuple(_index(i, "ground_truth_partition index") for i in p) for p in gt)

    if kind == "linear":
        weights = _require(doc, "weights")
        if not isinstance(weights, list) or not weights:
            raise SpecError("weights must be a nonempty list")
        weights = tuple(_real(w, "weight") for w in weights)
        intercept = _real(doc.get("intercept", 0.0), "intercept")
        d = len(weights)
        if "d" in doc and doc["d"] != d:
            raise SpecError(f"declared d={doc['d']} but {d} weights given")
        spec = ModelSpec("linear", d, weights=weights, intercept=intercept)
    elif kind == "gam":
        raw_terms = _require(doc, "terms")
        if not isinstance(raw_terms, list):
            raise SpecError("terms must be a list")
        terms = []
        for t in raw_terms:
            if not isinstance(t, dict):
                raise SpecError("each term must be an object")
            feats = _require(t, "features")
            if not isinstance(feats, list) or not feats:
                raise SpecError("term features must be a nonempty list")
            feats = tuple(_index(i, "feature index") for i in feats)
            if len(set(feats)) != len(feats):
                raise SpecError(f"duplicate feature in term {list(feats)}")
            tkind = t.get("kind", "product")
            if tkind not in TERM_KINDS:
                raise SpecError(f"unknown term kind {tkind!r}")
            coeffs = t.get("coeffs", [1.0] * len(feats))
            if not isinstance(coeffs, list) or len(coeffs) != len(feats):
                raise SpecError("coeffs must have one entry per feature")
            coeffs = tuple(_real(c, "coefficient") for c in coeffs)
            terms.append(Term(feats, tkind, coeffs))
        max_index = max((max(t.features) for t in terms), default=-1)
        if "d" in doc:
            d = _index(doc["d"], "d")
            if max_index >= d:
                raise SpecError(f"feature index {max_index} out of range for d={d}")
        else:
            d = max_index + 1
        if d < 1:
            raise SpecError("gam model needs d >= 1")
        spec = ModelSpec("gam", d, terms=tuple(terms))
    elif kind == "external":
        cmd = _require(doc, "cmd")
        if not isinstance(cmd, str) or not cmd:
            raise SpecError("cmd must be a nonempty string")
        args = doc.get("args", [])
        if not isinstance(args, list) or not all(isinstance(a, str) for a in args):
            raise SpecError("args must be a list of strings")
        d = _index(_require(doc, "d"), "d")
        if d < 1:
            raise SpecError("external model needs d >= 1")
        spec = ModelSpec("external", d, cmd=cmd, args=tuple(args))
    else:
        raise SpecError(f"unknown model type {kind!r}")

    if gt is not None:
        flat = sorted(i for p in gt for i in p)
        if flat != list(range(spec.d)):
            raise SpecError("ground_truth_partition must be a partition of range(d)")
        spec.ground_truth_partition = gt
    return spec


def load_model_spec(document: str) -> ModelSpec:
    """Parse the JSON text of a model spec."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON: {exc}") from None
    return parse_model_spec(doc)


class LinearModel:
    def __init__(self, weights: Sequence[float], intercept: float = 0.0):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.intercept = float(intercept)
        self.d = len(self.weights)

    def predict(self, X: np.ndarray) -> np.ndarray:
        # fixed left-to-right accumulation: identical bits for any batch or memory layout
        out = X[:, 0] * self.weights[0]
        for j in range(1, self.d):
            out = out + X[:, j] * self.weights[j]
        return out + self.intercept


class GAMModel:
    """Sum of product terms ``prod_j a_j x_j`` and sine terms ``sin(sum_j a_j x_j)``."""

    def __init__(self, d: int, terms: Sequence[Term]):
        self.d = d
        self.terms = tuple(terms)
        self._compiled = [
            (t.kind, np.asarray(t.features, dtype=np.intp), np.asarray(t.coeffs, dtype=np.float64))
            for t in self.terms
        ]

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape[0])
        for kind, feats, coeffs in self._compiled:
            if kind == "product":
                # prod(a_j) * prod(x_j) == prod(a_j x_j)
                term = np.prod(coeffs) * X[:, feats[0]]
                for f in feats[1:]:
                    term = term * X[:, f]
            else:
                arg = coeffs[0] * X[:, feats[0]]
                for a, f in zip(coeffs[1:], feats[1:]):
                    arg = arg + a * X[:, f]
                term = np.sin(arg)
            out += term
        return out


class ExternalModel:
    """Client for a child process speaking the ``predict <n>`` line protocol.

    The child is started lazily and kept alive between requests.  Exchanges
    are serialized through a lock so the model can be shared across threads.
    """

    def __init__(self, cmd: str, args: Sequence[str], d: int):
        self.cmd = cmd
        self.args = tuple(args)
        self.d = d
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def _start(self):
        try:
            self._proc = subprocess.Popen(
                [self.cmd, *self.args],
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ModelProtocolError(f"cannot start predictor {self.cmd!r}: {exc}") from None

    def predict(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        if n == 0:
            return np.zeros(0)
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                if self._proc is not None:
                    raise ModelProtocolError(
                        f"predictor exited with status {self._proc.returncode}"
                    )
                self._start()
            proc = self._proc
            lines = [f"predict {n}"]
            lines.extend(",".join("%.17g" % v for v in row) for row in X)
            try:
                proc.stdin.write("\n".join(lines) + "\n")
                proc.stdin.flush()
                reply = [proc.stdout.readline() for _ in range(n)]
            except (BrokenPipeError, OSError) as exc:
                raise ModelProtocolError(f"predictor pipe failed: {exc}") from None
            out = np.empty(n)
            for k, line in enumerate(reply):
                if not line:
                    status = proc.poll()
                    raise ModelProtocolError(
                        f"predictor replied with {k} of {n} values"
                        + (f" and exited with status {status}" if status is not None else "")
                    )
                try:
                    out[k] = float(line)
                except ValueError:
                    raise ModelProtocolError(f"malformed predictor reply: {line.strip()!r}") from None
            return out

    def close(self):
        with self._lock:
            if self._proc is not None:
                proc, self._proc = self._proc, None
                try:
                    proc.stdin.close()
                except OSError:
                    pass
                try:
                    proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    proc.kill()
                    proc.wait()
                if proc.stdout is not None:
                    proc.stdout.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def build_model(spec: ModelSpec):
    if spec.kind == "linear":
        return LinearModel(spec.weights, spec.intercept)
    if spec.kind == "gam":
        return GAMModel(spec.d, spec.terms)
    if spec.kind == "external":
        return ExternalModel(spec.cmd, spec.args, spec.d)
    raise SpecError(f"unknown model type {spec.kind!r}")


def as_points(points, d: int) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1 and d == 1 and X.size:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != d:
        raise DimensionError(f"expected points of length {d}, got array of shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DimensionError("points must be finite")
    return X


def evaluate_batch(model, points) -> np.ndarray:
    """Evaluate ``model`` on a batch of points, preserving order."""
    X = as_points(points, model.d)
    out = np.asarray(model.predict(X), dtype=np.float64)
    if out.shape != (X.shape[0],):
        raise ModelProtocolError(f"model returned {out.shape} outputs for {X.shape[0]} points")
    return out


class CenteredModel:
    """``inner(x) - baseline_mean``; makes the empty coalition worth zero."""

    def __init__(self, inner, baseline_mean: float):
        self.inner = inner
        self.baseline_mean = float(baseline_mean)
        self.d = inner.d

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.inner.predict(X) - self.baseline_mean


@dataclass
class Dataset:
    columns: list[str]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise SpecError("dataset must be a 2-d matrix")
        n, d = self.values.shape
        if n < 2:
            raise SpecError(f"dataset needs at least 2 rows, got {n}")
        if len(self.columns) != d:
            raise SpecError(f"{len(self.columns)} column names for {d} columns")
        if not np.all(np.isfinite(self.values)):
            raise SpecError("dataset contains non-finite entries")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_array(cls, values) -> Dataset:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise SpecError("dataset must be a 2-d matrix")
        return cls([f"x{i}" for i in range(values.shape[1])], values)


def load_dataset(path) -> Dataset:
    """Read a numeric CSV with a single header row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SpecError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SpecError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise SpecError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise SpecError(f"{path}: no data rows")
    return Dataset([h.strip() for h in header], np.array(rows))


def center(model, background: Dataset) -> CenteredModel:
    if background.n == 0:
        raise SpecError("empty background")
    if background.d != model.d:
        raise DimensionError(f"background has {background.d} columns, model expects {model.d}")
    baseline = float(np.mean(evaluate_batch(model, background.values)))
    return CenteredModel(model, baseline)
