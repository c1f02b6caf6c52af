"""CSV ingestion for the two-sample format and table writers for CLI output.

Experimental CSV: header with ``y``, ``a`` and covariates ``x1..xp`` (covariates in order).
Target CSV: header ``x1..xp`` with an optional trailing ``weight`` column.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re

import numpy as np

from .data import DataError, ExperimentalSample, TargetSample

_XCOL = re.compile(r"^x([1-9][0-9]*)$")


class InputError(DataError):
    """Malformed input file."""


def _read_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as err:
        raise InputError(f"{path}: not valid UTF-8 ({err})") from None
    except OSError as err:
        raise InputError(f"{path}: {err.strerror}") from None
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise InputError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    return header, rows[1:]


def _covariate_columns(path, header, allow_extra, known):
    xcols = [(i, int(_XCOL.match(h).group(1))) for i, h in enumerate(header) if _XCOL.match(h)]
    numbers = [k for _, k in xcols]
    if numbers != list(range(1, len(numbers) + 1)):
        raise InputError(f"{path}: covariate columns must be x1..xp in order, got "
                         f"{[header[i] for i, _ in xcols]}")
    extra = [h for h in header if h not in known and not _XCOL.match(h)]
    if extra and not allow_extra:
        raise InputError(f"{path}: unknown columns {extra} (use --allow-extra to ignore them)")
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names in header")
    return [i for i, _ in xcols]


def _parse(path, header, body, columns):
    out = np.empty((len(body), len(columns)))
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise InputError(f"{path}: row {r} has {len(row)} fields, header has {len(header)}")
        for c, idx in enumerate(columns):
            cell = row[idx].strip()
            try:
                val = float(cell)
            except ValueError:
                raise InputError(f"{path}: non-numeric value {cell!r} at row {r}, "
                                 f"column {header[idx]}") from None
            if not math.isfinite(val):
                raise InputError(f"{path}: non-finite value {cell!r} at row {r}, "
                                 f"column {header[idx]}")
            out[r - 1, c] = val
    return out


def ingest_experimental_csv(path, allow_extra: bool = False) -> ExperimentalSample:
    header, body = _read_rows(path)
    for required in ("y", "a"):
        if required not in header:
            raise InputError(f"{path}: missing required column {required!r}")
    xcols = _covariate_columns(path, header, allow_extra, {"y", "a"})
    iy, ia = header.index("y"), header.index("a")
    values = _parse(path, header, body, [iy, ia] + xcols)
    a = values[:, 1]
    bad = np.flatnonzero((a != 0) & (a != 1))
    if bad.size:
        raise InputError(f"{path}: treatment must be 0 or 1, got {a[bad[0]]:g} at row "
                         f"{bad[0] + 1}, column a")
    return ExperimentalSample(values[:, 0], a, values[:, 2:])


def ingest_target_csv(path, allow_extra: bool = False) -> TargetSample:
    header, body = _read_rows(path)
    has_weight = "weight" in header
    if has_weight and header[-1] != "weight":
        raise InputError(f"{path}: 'weight' must be the last column")
    xcols = _covariate_columns(path, header, allow_extra, {"weight"})
    cols = xcols + ([len(header) - 1] if has_weight else [])
    values = _parse(path, header, body, cols)
    weights = None
    if has_weight:
        weights = values[:, -1]
        bad = np.flatnonzero(weights <= 0)
        if bad.size:
            raise InputError(f"{path}: weight must be positive, got {weights[bad[0]]:g} at row "
                             f"{bad[0] + 1}, column weight")
        values = values[:, :-1]
    return TargetSample(values, weights)


# ---------------------------------------------------------------------------
# output


def format_value(value):
    """Round-trip text for a table cell; non-finite numbers become ``NA``."""
    if value is None:
        return "NA"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return repr(value) if math.isfinite(value) else "NA"
    return str(value)


def json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else "NA"
    return value


def render_table(rows, columns, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c)) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        records = [{c: json_value(row.get(c)) for c in columns} for row in rows]
        return json.dumps(records, indent=2) + "\n"
    raise ValueError(f"unknown output format {fmt!r}")


def covariate_label(j: int) -> str:
    return f"x{j + 1}"


def join_labels(indices) -> str:
    return ";".join(covariate_label(j) for j in indices)


def join_coefficients(coefs: dict) -> str:
    return ";".join(f"{covariate_label(j)}={format_value(c)}" for j, c in sorted(coefs.items()))
