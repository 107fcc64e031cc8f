"""Trace, report and configuration files."""

from __future__ import annotations

import csv
import json
import math
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigurationError, TraceFormatError
from .model import Trace

TRACE_HEADER = ("time_s", "intensity")
UNIFORM_TOL = 1e-6


def _round_sig(x: float, digits: int = 12) -> float:
    if x == 0:
        return 0.0
    return round(x, digits - 1 - int(math.floor(math.log10(abs(x)))))


def write_trace(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for t, v in zip(trace.times, trace.samples):
            w.writerow((repr(float(t)), repr(float(v))))


def read_trace(path, normalize: bool = False) -> Trace:
    """Read a ``time_s,intensity`` CSV on a uniform time grid.

    The sample interval is the first time step rounded to 12 significant
    digits; every other step must agree with it to 1e-6 relative.
    """
    times, values = [], []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None:
            raise TraceFormatError("empty file", 1)
        if tuple(h.strip() for h in header) != TRACE_HEADER:
            raise TraceFormatError(f"expected header {','.join(TRACE_HEADER)}, got {','.join(header)}", 1)
        for line, row in enumerate(rows, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise TraceFormatError(f"expected 2 columns, got {len(row)}", line)
            try:
                t, v = float(row[0]), float(row[1])
            except ValueError:
                raise TraceFormatError(f"not a number: {','.join(row)}", line) from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise TraceFormatError("non-finite value", line)
            if times:
                if t <= times[-1]:
                    raise TraceFormatError(f"time {t} does not increase", line)
                if len(times) >= 2:
                    dt0 = times[1] - times[0]
                    if abs((t - times[-1]) - dt0) > UNIFORM_TOL * dt0:
                        raise TraceFormatError(f"non-uniform time step {t - times[-1]!r} (expected {dt0!r})", line)
            times.append(t)
            values.append(v)
    if len(times) < 2:
        raise TraceFormatError("a trace needs at least two samples", None)
    trace = Trace(_round_sig(times[1] - times[0]), np.array(values), False, times[0])
    return trace.normalize() if normalize else trace


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def report_schema() -> dict:
    return json.loads(resources.files("mcloop").joinpath("data/report.schema.json").read_text())


def validate_report(data: dict) -> None:
    jsonschema.validate(data, report_schema())


def write_json(data: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=1)
        fh.write("\n")


def write_report(report: dict, path) -> None:
    """Validate against the bundled schema and write as JSON."""
    data = _jsonable(report)
    validate_report(data)
    write_json(data, path)


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def bundled_config(name: str = "paper_testbed.json") -> dict:
    return json.loads(resources.files("mcloop").joinpath("data", name).read_text())


def load_config(path) -> dict:
    """Load a JSON config; names of bundled configs work without a path."""
    p = Path(path)
    if p.exists():
        return read_json(p)
    if p.name == str(path) and resources.files("mcloop").joinpath("data", p.name).is_file():
        return bundled_config(p.name)
    raise ConfigurationError(f"config file not found: {path}")


def write_columns(path, header, columns) -> None:
    """Write equally long columns as CSV with the given header."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else int(x) for x in row])


def convert_recording(src, dst, time_column: str = "time", intensity_column: str = "intensity",
                      time_scale: float = 1.0, delimiter: str = ",") -> Trace:
    """Convert a recorded trace with arbitrary column names to the canonical CSV.

    ``time_scale`` converts the source time unit to seconds (e.g. 1e-3 for ms).
    Rows are kept in file order; the result is checked like any other trace.
    """
    with open(src, newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        missing = {time_column, intensity_column} - set(reader.fieldnames or ())
        if missing:
            raise TraceFormatError(f"missing columns {sorted(missing)}", 1)
        rows = []
        for line, row in enumerate(reader, start=2):
            try:
                rows.append((float(row[time_column]) * time_scale, float(row[intensity_column])))
            except (TypeError, ValueError):
                raise TraceFormatError("not a number", line) from None
    with open(dst, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for t, v in rows:
            w.writerow((repr(t), repr(v)))
    return read_trace(dst)
