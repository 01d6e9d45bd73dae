"""Reference external predictor.

Serves a built-in (linear or gam) model spec over the line protocol::

    python -m ishap.reference_predictor model.json

Reads ``predict <n>`` followed by n comma-separated rows from stdin and
writes n floats (``%.17g``) to stdout, until stdin closes.
"""

import sys

import numpy as np

from .model import build_model, load_model_spec


def serve(model, stdin=sys.stdin, stdout=sys.stdout):
    while True:
        header = stdin.readline()
        if not header:
            return 0
        header = header.strip()
        if not header:
            continue
        cmd, _, count = header.partition(" ")
        if cmd != "predict":
            print(f"unknown command {cmd!r}", file=sys.stderr)
            return 1
        n = int(count)
        rows = [stdin.readline() for _ in range(n)]
        X = np.array([[float(v) for v in row.split(",")] for row in rows], dtype=np.float64)
        X = X.reshape(n, model.d)
        y = model.predict(X)
        stdout.write("".join("%.17g\n" % v for v in y))
        stdout.flush()


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m ishap.reference_predictor MODEL_JSON", file=sys.stderr)
        return 1
    with open(argv[0]) as fh:
        spec = load_model_spec(fh.read())
    if spec.kind == "external":
        print("reference predictor serves built-in models only", file=sys.stderr)
        return 1
    return serve(build_model(spec))


if __name__ == "__main__":
    sys.exit(main())
