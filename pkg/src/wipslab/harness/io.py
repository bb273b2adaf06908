"""Result tables on disk: CSV with round-trip floats plus a JSON manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def render_csv(columns, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, schema has {len(columns)}")
        w.writerow([format_value(v) for v in row])
    return buf.getvalue().encode("utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan; keep them readable and unambiguous
        return v if math.isfinite(v) else format_value(v)
    return obj


@dataclass
class ResultTable:
    kind: str
    columns: tuple
    rows: list
    manifest: dict = field(default_factory=dict)
    directory: str | None = None

    def csv_bytes(self) -> bytes:
        return render_csv(self.columns, self.rows)

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]


def write_table(table: ResultTable, directory: str) -> tuple[str, str]:
    """Persist ``results.csv`` and ``manifest.json``; returns both paths."""
    data = table.csv_bytes()
    table.manifest["results_sha256"] = hashlib.sha256(data).hexdigest()
    table.manifest["rows"] = len(table.rows)
    table.manifest["columns"] = list(table.columns)
    csv_path = os.path.join(directory, "results.csv")
    man_path = os.path.join(directory, "manifest.json")
    try:
        os.makedirs(directory, exist_ok=True)
        with open(csv_path, "wb") as fh:
            fh.write(data)
        with open(man_path, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(table.manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as err:
        raise ConfigError(f"cannot write results to {err.filename or directory}: {err.strerror}") from None
    table.directory = directory
    return csv_path, man_path


def read_manifest(path: str) -> dict:
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read manifest {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"manifest {path} is not valid JSON: {err.msg}") from None
