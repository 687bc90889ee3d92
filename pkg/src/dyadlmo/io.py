"""File formats for signals, coefficient tensors and CSV records.

Signal / coefficient files: one JSON header line, then one value per line in
C order, printed with 17 significant digits.  Header keys: ``format``
(``dyadlmo-signal`` or ``dyadlmo-coeffs``), ``version``, ``n_params``,
``depth`` (list), ``count`` and, for coefficients, ``truncated``.

Sparse CSV: rows ``i1,...,iN,value`` (optional header), missing entries are 0.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .dyadic import GridSignal, HaarExpansion

FORMAT_VERSION = 1
SIGNAL_FORMAT = "dyadlmo-signal"
COEFF_FORMAT = "dyadlmo-coeffs"


class MalformedFileError(ValueError):
    pass


def fmt(x: float) -> str:
    return "%.17g" % float(x)


def dumps_array(kind: str, values: np.ndarray, truncated: bool = False) -> str:
    depth = [int(n).bit_length() - 1 for n in values.shape]
    header = {"format": kind, "version": FORMAT_VERSION, "n_params": len(depth),
              "depth": depth, "count": int(values.size)}
    if kind == COEFF_FORMAT:
        header["truncated"] = bool(truncated)
    lines = [json.dumps(header, sort_keys=True)]
    lines += [fmt(v) for v in values.ravel()]
    return "\n".join(lines) + "\n"


def loads_array(text: str):
    """Parse a signal or coefficient file; returns a GridSignal or HaarExpansion."""
    lines = text.splitlines()
    if not lines:
        raise MalformedFileError("empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"line 1: bad header: {exc.msg}") from None
    if not isinstance(header, dict):
        raise MalformedFileError("line 1: header must be a JSON object")
    kind = header.get("format")
    if kind not in (SIGNAL_FORMAT, COEFF_FORMAT):
        raise MalformedFileError(f"line 1: unknown format {kind!r}")
    if header.get("version") != FORMAT_VERSION:
        raise MalformedFileError(f"line 1: unsupported version {header.get('version')!r}")
    depth = header.get("depth")
    if (not isinstance(depth, list) or not depth
            or not all(isinstance(j, int) and j >= 1 for j in depth)
            or header.get("n_params") != len(depth)):
        raise MalformedFileError("line 1: depth must be a list of positive ints matching n_params")
    count = int(np.prod([2 ** j for j in depth]))
    if header.get("count") != count:
        raise MalformedFileError(f"line 1: count must be {count}")
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != count:
        raise MalformedFileError(f"expected {count} values, found {len(body)}")
    values = np.empty(count)
    for i, ln in enumerate(body):
        try:
            values[i] = float(ln)
        except ValueError:
            raise MalformedFileError(f"line {i + 2}: not a number: {ln.strip()!r}") from None
    if not np.all(np.isfinite(values)):
        raise MalformedFileError("non-finite value")
    values = values.reshape(tuple(2 ** j for j in depth))
    if kind == SIGNAL_FORMAT:
        return GridSignal(values)
    return HaarExpansion(values, bool(header.get("truncated", False)))


def write_signal(path, sig: GridSignal) -> None:
    Path(path).write_text(dumps_array(SIGNAL_FORMAT, sig.values))


def write_coeffs(path, exp: HaarExpansion) -> None:
    Path(path).write_text(dumps_array(COEFF_FORMAT, exp.coeffs, exp.truncated))


def read_any(path):
    return loads_array(Path(path).read_text())


def read_signal(path) -> GridSignal:
    obj = read_any(path)
    if not isinstance(obj, GridSignal):
        raise MalformedFileError("expected a signal file")
    return obj


def read_coeffs(path) -> HaarExpansion:
    obj = read_any(path)
    if not isinstance(obj, HaarExpansion):
        raise MalformedFileError("expected a coefficient file")
    return obj


def array_to_csv(values: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"i{a + 1}" for a in range(values.ndim)] + ["value"])
    for idx in np.ndindex(values.shape):
        w.writerow([*idx, fmt(values[idx])])
    return buf.getvalue()


def csv_to_array(text: str, depth=None) -> np.ndarray:
    """Parse ``i1,...,iN,value`` rows; shape from ``depth`` or the largest index."""
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or (lineno == 1 and not row[0].strip().lstrip("-").isdigit()):
            continue
        try:
            *idx, val = row
            rows.append((tuple(int(i) for i in idx), float(val)))
        except ValueError:
            raise MalformedFileError(f"line {lineno}: malformed row {row!r}") from None
    if not rows:
        raise MalformedFileError("no data rows")
    n = len(rows[0][0])
    if n == 0 or any(len(i) != n for i, _ in rows):
        raise MalformedFileError("rows must share the same number of indices")
    if depth is None:
        depth = []
        for a in range(n):
            top = max(i[a] for i, _ in rows) + 1
            J = max(1, (top - 1).bit_length())
            depth.append(J)
    shape = tuple(2 ** J for J in depth)
    out = np.zeros(shape)
    for idx, val in rows:
        if any(not 0 <= i < s for i, s in zip(idx, shape)):
            raise MalformedFileError(f"index {idx} outside shape {shape}")
        out[idx] = val
    return out
