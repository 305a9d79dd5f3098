"""Binary tensor files, adjacency CSV ingestion and JSON helpers.

TensorFile layout (all little-endian)::

    magic   4 bytes  b"SSTN"
    version u16      1
    order   u8       3 or 4
    dims    u32 * order
    payload f64 * prod(dims), slice-major

Slice-major means column-major over ``dims``: each ``P x P`` node slice is
contiguous, then slices advance along the remaining modes in order.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .tensor import REJECT_TOL, SemiSymmetricTensor, SymmetryError, max_asymmetry

MAGIC = b"SSTN"
VERSION = 1
FORMAT_VERSION = "1.0"
_HEAD = struct.Struct("<4sHB")


class TensorFormatError(ValueError):
    """A tensor or adjacency file is malformed."""


def write_tensor(path, X) -> None:
    X = np.asarray(X, dtype=float)
    if X.ndim not in (3, 4):
        raise ValueError(f"only order-3 and order-4 tensors are supported, got {X.ndim}")
    header = _HEAD.pack(MAGIC, VERSION, X.ndim) + struct.pack(f"<{X.ndim}I", *X.shape)
    payload = np.asarray(X.ravel(order="F"), dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path) -> np.ndarray:
    """Load a TensorFile; order-3 payloads must be semi-symmetric (repaired up to 1e-6)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size:
        raise TensorFormatError(f"{path}: file too short for a header")
    magic, version, order = _HEAD.unpack_from(raw)
    if magic != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if order not in (3, 4):
        raise TensorFormatError(f"{path}: unsupported order {order}")
    off = _HEAD.size + 4 * order
    if len(raw) < off:
        raise TensorFormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{order}I", raw, _HEAD.size)
    count = int(np.prod(dims))
    if len(raw) - off != 8 * count:
        raise TensorFormatError(f"{path}: payload has {len(raw) - off} bytes, expected {8 * count}")
    X = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(dims, order="F").astype(float)
    if dims[0] != dims[1]:
        raise TensorFormatError(f"{path}: node modes differ ({dims[0]} vs {dims[1]})")
    if not np.all(np.isfinite(X)):
        raise TensorFormatError(f"{path}: payload contains non-finite values")
    if order == 3:
        try:
            return np.array(SemiSymmetricTensor(X).values)
        except SymmetryError as exc:
            raise TensorFormatError(f"{path}: {exc}") from exc
    if max_asymmetry(X) > REJECT_TOL:
        raise TensorFormatError(f"{path}: node slices are not symmetric")
    return 0.5 * (X + X.transpose(1, 0, 2, 3))


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise TensorFormatError(f"{path}:{line_no}: non-numeric entry ({exc})") from exc
    if not rows:
        raise TensorFormatError(f"{path}: empty matrix")
    width = len(rows[0])
    for line_no, r in enumerate(rows, start=1):
        if len(r) != width:
            raise TensorFormatError(f"{path}: ragged row {line_no} ({len(r)} vs {width} columns)")
    return np.array(rows)


def load_adjacency_csv(paths) -> SemiSymmetricTensor:
    """Stack per-subject ``P x P`` CSV adjacency matrices into a semi-symmetric tensor."""
    paths = list(paths)
    if not paths:
        raise TensorFormatError("no adjacency files given")
    mats = []
    for p in paths:
        A = read_matrix_csv(p)
        if A.shape[0] != A.shape[1]:
            raise TensorFormatError(f"{p}: matrix is {A.shape[0]} x {A.shape[1]}, not square")
        if mats and A.shape != mats[0].shape:
            raise TensorFormatError(f"{p}: P={A.shape[0]} differs from P={mats[0].shape[0]} of {paths[0]}")
        diff = np.abs(A - A.T)
        if diff.max() > REJECT_TOL:
            i, j = np.unravel_index(np.argmax(diff), diff.shape)
            raise TensorFormatError(
                f"{p}: asymmetric at ({i}, {j}): {A[i, j]!r} vs {A[j, i]!r} (|diff| = {diff[i, j]:.3g})"
            )
        mats.append(A)
    return SemiSymmetricTensor(np.stack(mats, axis=2))


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TensorFormatError(f"{path}: empty table") from None
        rows = [r for r in reader if r]
    for i, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise TensorFormatError(f"{path}:{i}: expected {len(header)} fields, got {len(r)}")
    return header, rows


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def numeric_columns(path, skip: int = 0) -> tuple[list[str], list[str], np.ndarray]:
    """Read a header + rows table; returns (column names, first-column labels, numeric block).

    Empty cells and ``NA``/``nan`` become NaN.
    """
    header, rows = read_table(path)
    labels = [r[0] for r in rows]
    body = []
    for i, r in enumerate(rows, start=2):
        vals = []
        for c in r[skip:]:
            c = c.strip()
            if c == "" or c.lower() in ("na", "nan"):
                vals.append(np.nan)
                continue
            try:
                vals.append(float(c))
            except ValueError as exc:
                raise TensorFormatError(f"{path}:{i}: non-numeric entry {c!r}") from exc
        body.append(vals)
    return header[skip:], labels, np.array(body, dtype=float).reshape(len(rows), len(header) - skip)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dump_json(path, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable, allow_nan=True)
    Path(path).write_text(text + "\n")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise TensorFormatError(f"{path}: invalid JSON ({exc})") from exc
