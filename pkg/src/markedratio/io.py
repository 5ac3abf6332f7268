"""Plain-text file formats.

Event file::

    # horizon=1000.0
    t,type,mark
    0.4172913561232,1,0

Covariate file (change-points: a row whenever a covariate takes a new value)::

    # horizon=1000.0
    t,name,value
    0.0,X1,1.0

Floats are written with ``repr``, which round-trips exactly.
"""
from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import numpy as np

from .model import CovariatePath, EventStream, InvalidInputError

EVENT_HEADER = ("t", "type", "mark")
COVARIATE_HEADER = ("t", "name", "value")


class FileFormatError(InvalidInputError):
    """A malformed input file; the message names the file and line."""


def _fmt(x: float) -> str:
    return repr(float(x))


def atomic_write_text(path, text: str):
    """Write through a temporary file so that readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path, obj):
    atomic_write_text(path, dumps_json(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def format_events(stream: EventStream) -> str:
    out = [f"# horizon={_fmt(stream.horizon)}", ",".join(EVENT_HEADER)]
    out += [f"{_fmt(t)},{int(i)},{int(k)}" for t, i, k in zip(stream.times, stream.types, stream.marks)]
    return "\n".join(out) + "\n"


def write_events(path, stream: EventStream):
    atomic_write_text(path, format_events(stream))


def _read_lines(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileFormatError(f"{path}: cannot read ({exc.strerror})") from None
    return path, text.splitlines()


def _parse_preamble(path, lines, header, horizon):
    """Consume the optional horizon comment and the header; returns (horizon, first data line)."""
    pos = 0
    if lines and lines[0].startswith("#"):
        key, _, value = lines[0][1:].strip().partition("=")
        if key.strip() != "horizon":
            raise FileFormatError(f"{path}:1: unknown directive {lines[0]!r}")
        try:
            file_horizon = float(value)
        except ValueError:
            raise FileFormatError(f"{path}:1: bad horizon {value!r}") from None
        if horizon is None:
            horizon = file_horizon
        pos = 1
    if pos >= len(lines):
        raise FileFormatError(f"{path}: empty file (no header)")
    if tuple(c.strip() for c in lines[pos].split(",")) != header:
        raise FileFormatError(f"{path}:{pos + 1}: expected header {','.join(header)!r}, got {lines[pos]!r}")
    return horizon, pos + 1


def read_events(path, horizon: float | None = None) -> EventStream:
    path, lines = _read_lines(path)
    horizon, start = _parse_preamble(path, lines, EVENT_HEADER, horizon)
    times, types, marks = [], [], []
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise FileFormatError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
        try:
            t = float(parts[0])
            i, k = int(parts[1]), int(parts[2])
        except ValueError:
            raise FileFormatError(f"{path}:{lineno}: cannot parse {line!r}") from None
        if not np.isfinite(t):
            raise FileFormatError(f"{path}:{lineno}: non-finite time")
        if times and t <= times[-1]:
            raise FileFormatError(f"{path}:{lineno}: times must be strictly increasing")
        if i < 0 or k < 0:
            raise FileFormatError(f"{path}:{lineno}: negative type or mark")
        times.append(t)
        types.append(i)
        marks.append(k)
    if horizon is None:
        horizon = times[-1] if times else 0.0
    if times and times[-1] > horizon:
        raise FileFormatError(f"{path}: event at t={times[-1]} beyond horizon {horizon}")
    return EventStream(np.asarray(times, dtype=float), np.asarray(types, dtype=np.int64),
                       np.asarray(marks, dtype=np.int64), float(horizon))


def format_covariates(path: CovariatePath, names=None) -> str:
    names = list(path.names if names is None else names)
    cols = [path.names.index(n) for n in names]
    out = [f"# horizon={_fmt(path.horizon)}", ",".join(COVARIATE_HEADER)]
    prev = None
    for s, t in enumerate(path.breakpoints):
        row = path.values[s, cols]
        for j, n in enumerate(names):
            if prev is None or row[j] != prev[j]:
                out.append(f"{_fmt(t)},{n},{_fmt(row[j])}")
        prev = row
    return "\n".join(out) + "\n"


def write_covariates(file, path: CovariatePath, names=None):
    atomic_write_text(file, format_covariates(path, names))


def read_covariates(file, horizon: float | None = None) -> CovariatePath:
    file, lines = _read_lines(file)
    horizon, start = _parse_preamble(file, lines, COVARIATE_HEADER, horizon)
    rows = []
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        parts = next(csv.reader(io.StringIO(line)))
        if len(parts) != 3:
            raise FileFormatError(f"{file}:{lineno}: expected 3 fields, got {len(parts)}")
        try:
            t, v = float(parts[0]), float(parts[2])
        except ValueError:
            raise FileFormatError(f"{file}:{lineno}: cannot parse {line!r}") from None
        if not parts[1]:
            raise FileFormatError(f"{file}:{lineno}: empty covariate name")
        if rows and t < rows[-1][0]:
            raise FileFormatError(f"{file}:{lineno}: times must be non-decreasing")
        rows.append((t, parts[1], v, lineno))
    if not rows or rows[0][0] != 0.0:
        raise FileFormatError(f"{file}: covariates must be given at t=0")
    names = []
    for _, n, _, _ in rows:
        if n not in names:
            names.append(n)
    initial = {n for t, n, _, _ in rows if t == 0.0}
    if initial != set(names):
        raise FileFormatError(f"{file}: covariates {sorted(set(names) - initial)} have no value at t=0")
    breaks = sorted({t for t, *_ in rows})
    values = np.empty((len(breaks), len(names)))
    pos = {n: j for j, n in enumerate(names)}
    current = np.zeros(len(names))
    s = -1
    last_t = None
    for t, n, v, lineno in rows:
        if t != last_t:
            if s >= 0:
                values[s] = current
            s += 1
            last_t = t
        current[pos[n]] = v
    values[s] = current
    if horizon is None:
        horizon = breaks[-1]
    if breaks[-1] > horizon:
        raise FileFormatError(f"{file}: change-point beyond horizon {horizon}")
    return CovariatePath(np.asarray(breaks), tuple(names), values, float(horizon))


def write_csv(path, header, rows):
    """Deterministic CSV: floats via ``repr``, fixed column order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in (r[h] for h in header)])
    atomic_write_text(path, buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
