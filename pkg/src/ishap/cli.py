"""Command-line front end.

Exit codes: 0 success, 1 usage or parse error, 2 model protocol failure,
3 exact-mode guard.  Every failure prints a single line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from typing import Any, Sequence

import numpy as np

from .config import MODES, RunConfig
from .errors import ExactModeGuardError, ModelProtocolError
from .evaluation import (
    BenchReport,
    ablation_run,
    ishap_explainer,
    shap_explainer,
    surrogate_fidelity,
    synth_bench,
)
from .model import as_points, build_model, center, load_dataset, load_model_spec
from .partition import MERGE_RULES, REGULARIZERS
from .shapley import explain
from .synth import DISTS, KINDS

EXIT_USAGE = 1
EXIT_PROTOCOL = 2
EXIT_GUARD = 3


class UsageError(Exception):
    pass


def format_float(v: float) -> str:
    return "%.17g" % v


def to_json(obj: Any, indent: int = 2) -> str:
    """JSON with every float written to 17 significant digits; non-finite floats become null."""

    def enc(o, depth):
        pad = " " * (indent * (depth + 1))
        end = " " * (indent * depth)
        if o is None or isinstance(o, bool):
            return json.dumps(o)
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            o = float(o)
            return format_float(o) if math.isfinite(o) else "null"
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, depth + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            if len(o) == 0:
                return "[]"
            # numeric leaves stay on one line
            if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in o):
                return "[" + ", ".join(enc(v, depth + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, depth + 1) for v in o) + "\n" + end + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(obj, 0) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory and rename it into place."""
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ishap-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def bench_csv(reports: Sequence[tuple[str, BenchReport]], timing: bool) -> str:
    """Trial rows followed by one summary row per report.

    With several reports a leading ``variant`` column tells them apart.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    labelled = len(reports) > 1
    header = None
    for label, report in reports:
        rows = [t.row(timing) for t in report.trials]
        if header is None:
            header = (["variant"] if labelled else []) + list(rows[0])
            writer.writerow(header)
        for row in rows:
            writer.writerow(([label] if labelled else []) + [_cell(v) for v in row.values()])
        summary = report.summary(timing)
        out = []
        for key in header[1 if labelled else 0:]:
            if key == "trial":
                out.append("summary")
            elif key == "d":
                out.append(report.trials[0].d)
            elif key == "error":
                out.append(f"failed={summary['failed']}")
            else:
                out.append(_cell(summary[key]))
        writer.writerow(([label] if labelled else []) + out)
    return buf.getvalue()


def _cell(v):
    if isinstance(v, float):
        return format_float(v)
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {v}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=0.01, help="significance level of the interaction test")
    p.add_argument("--lambda", dest="lam", type=float, default=5e-3, help="regularization weight")
    p.add_argument("--n", type=int, default=2000, help="background draws per value-function estimate")
    p.add_argument("--n-s", dest="n_s", type=int, default=2000, help="draws for the interaction test")
    p.add_argument("--mode", choices=MODES, default="greedy")
    p.add_argument("--regularizer", choices=REGULARIZERS, default="pairwise")
    p.add_argument("--merge-rule", choices=MERGE_RULES, default="edge")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda-autoscale", action="store_true",
                   help="multiply lambda by the variance of the model output on the background")
    p.add_argument("--shapley-exact-max", type=int, default=10,
                   help="largest number of parts whose Shapley values are computed exactly")


def _config(args) -> RunConfig:
    return RunConfig(
        alpha=args.alpha,
        lam=args.lam,
        n=args.n,
        n_s=args.n_s,
        mode=args.mode,
        regularizer=args.regularizer,
        merge_rule=args.merge_rule,
        seed=args.seed,
        lambda_autoscale=args.lambda_autoscale,
        shapley_exact_max=args.shapley_exact_max,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ishap", description="Interaction-aware Shapley explanations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("explain", help="explain one prediction")
    p.add_argument("--model", required=True, help="model spec JSON")
    p.add_argument("--data", required=True, help="background CSV with a header row")
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--row", type=int, help="index of the data row to explain")
    where.add_argument("--point", help="comma-separated feature values")
    p.add_argument("--out", default="-", help="explanation JSON path (default stdout)")
    p.add_argument("--graph-out", help="write the interaction graph in DOT format")
    _add_config_args(p)

    p = sub.add_parser("synth-bench", help="partition recovery on synthetic GAMs")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--kind", choices=KINDS, default="product")
    p.add_argument("--dist", choices=DISTS, default="normal")
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--out", default="-", help="CSV path (default stdout)")
    p.add_argument("--timing", action="store_true", help="add a wall-clock runtime column")
    _add_config_args(p)

    p = sub.add_parser("fidelity", help="surrogate fidelity by point mixing")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("ishap", "shap"), default="ishap")
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--out", default="-")
    _add_config_args(p)

    p = sub.add_parser("ablation", help="interaction test versus a complete graph")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--kind", choices=KINDS, default="product")
    p.add_argument("--dist", choices=DISTS, default="normal")
    p.add_argument("--trials", type=_positive_int, default=20)
    p.add_argument("--out", default="-")
    p.add_argument("--timing", action="store_true")
    _add_config_args(p)
    return parser


def _parse_point(text: str) -> np.ndarray:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"malformed --point {text!r}") from None
    return np.array(values)


def _load_model(path: str):
    with open(path) as fh:
        spec = load_model_spec(fh.read())
    return build_model(spec)


def _close(model) -> None:
    close = getattr(model, "close", None)
    if close is not None:
        close()


def cmd_explain(args) -> int:
    config = _config(args)
    model = _load_model(args.model)
    try:
        data = load_dataset(args.data)
        if args.point is not None:
            x = as_points(_parse_point(args.point)[None, :], model.d)[0]
        else:
            if not 0 <= args.row < data.n:
                raise UsageError(f"--row {args.row} out of range for {data.n} rows")
            x = data.values[args.row]
        e = explain(x, model, data, config)
    finally:
        _close(model)
    write_atomic(args.out, to_json(e.to_dict()))
    if args.graph_out:
        write_atomic(args.graph_out, e.graph.to_dot(x))
    return 0


def cmd_synth_bench(args) -> int:
    if args.d < 2:
        raise UsageError(f"--d must be >= 2, got {args.d}")
    report = synth_bench(args.d, args.kind, args.dist, args.trials, _config(args))
    write_atomic(args.out, bench_csv([("", report)], args.timing))
    return 0


def cmd_fidelity(args) -> int:
    config = _config(args)
    model = _load_model(args.model)
    try:
        data = load_dataset(args.data)
        centered = center(model, data)
        if args.method == "ishap":
            explainer = ishap_explainer(centered, data, config)
        else:
            explainer = shap_explainer(centered, data, config.n, config.seed)
        if args.trials < 2:
            raise UsageError("--trials must be >= 2")
        report = surrogate_fidelity(explainer, centered, data, args.trials, config.seed)
    finally:
        _close(model)
    doc = {"method": args.method}
    doc.update(report.to_dict())
    doc["config"] = config.to_dict()
    write_atomic(args.out, to_json(doc))
    return 0


def cmd_ablation(args) -> int:
    if args.d < 2:
        raise UsageError(f"--d must be >= 2, got {args.d}")
    config = _config(args)
    tested = ablation_run(args.d, args.kind, args.dist, config, True, args.trials)
    complete = ablation_run(args.d, args.kind, args.dist, config, False, args.trials)
    write_atomic(args.out, bench_csv([("test", tested), ("complete", complete)], args.timing))
    return 0


COMMANDS = {
    "explain": cmd_explain,
    "synth-bench": cmd_synth_bench,
    "fidelity": cmd_fidelity,
    "ablation": cmd_ablation,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except ExactModeGuardError as exc:
        print(f"ishap: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ModelProtocolError as exc:
        print(f"ishap: model protocol failure: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (UsageError, ValueError, OSError, json.JSONDecodeError) as exc:
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"ishap: {message}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
