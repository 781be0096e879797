"""On-disk formats: HMAT1 matrices, CSV tables, JSON documents."""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"HMAT1\n"


def fmt(v) -> str:
    """CSV cell: 17 significant digits for floats, plain text otherwise."""
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    return str(v)


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_bytes(header, rows) -> bytes:
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(fmt(v) for v in row) + "\n")
    return out.getvalue().encode("utf-8")


def write_csv(path, header, rows) -> Path:
    atomic_write(path, csv_bytes(header, rows))
    return Path(path)


def read_csv(path):
    import csv
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if np.isfinite(f) else None
    if isinstance(o, complex):
        return [o.real, o.imag]
    return o


def write_json(path, doc) -> Path:
    data = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    atomic_write(path, data.encode("utf-8"))
    return Path(path)


def write_hmat(path, matrix, header: dict) -> Path:
    """``HMAT1`` magic, one JSON header line, then row-major little-endian float64."""
    a = np.ascontiguousarray(matrix, dtype="<f8")
    if a.ndim != 2:
        raise ValueError("HMAT1 stores 2-d arrays")
    head = dict(header)
    head.setdefault("size", a.shape[0])
    head["shape"] = list(a.shape)
    blob = MAGIC + (json.dumps(_jsonable(head), sort_keys=True) + "\n").encode("utf-8") + a.tobytes()
    atomic_write(path, blob)
    return Path(path)


def read_hmat(path):
    """Return ``(matrix, header)`` from an HMAT1 file."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not an HMAT1 file")
        header = json.loads(fh.readline().decode("utf-8"))
        shape = tuple(header.get("shape") or (header["size"], header["size"]))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != shape[0] * shape[1]:
        raise ValueError(f"{path}: expected {shape[0] * shape[1]} values, found {data.size}")
    return data.reshape(shape).astype(np.float64), header


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
