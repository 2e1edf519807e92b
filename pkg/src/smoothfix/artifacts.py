"""Atomic CSV/JSON writers and schema loading."""

import csv
import hashlib
import io
import json
import os
import tempfile
from importlib import resources

import numpy as np


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temporary file and ``os.replace``."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    return atomic_write(path, csv_text(header, rows))


def samples_csv_rows(x, extra=None):
    """Rows ``x_1..x_d`` (plus extra columns) for a ``(n, d)`` sample batch."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cols = [] if extra is None else [np.asarray(c) for c in extra]
    for i in range(x.shape[0]):
        yield [*x[i].tolist(), *(c[i] if c.ndim == 1 else c[i].tolist() for c in cols)]


class NumpyEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        return super().default(o)


def _finite(obj):
    # JSON has no inf/nan; spell them as strings
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not np.isfinite(obj):
        return str(float(obj))
    return obj


def json_text(obj):
    obj = json.loads(json.dumps(obj, cls=NumpyEncoder))
    return json.dumps(_finite(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    return atomic_write(path, json_text(obj))


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def load_schema(name):
    """One of the JSON schemas shipped with the package, e.g. ``'config'``."""
    text = resources.files("smoothfix").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)
