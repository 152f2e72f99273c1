"""Tensor and HHD files.

``.hht-tensor`` is little-endian binary: the magic ``b"HHDT"``, ``u32``
version (1), ``u32`` order ``d``, ``d`` ``u32`` dimensions and the entries as
``f64`` in row-major order.  Small tensors may instead be stored as JSON
``{"shape": [...], "data": [...]}``.  HHDs are stored as ``.hhd.json`` with
the keys ``shape``, ``ranks`` and ``factors``, the latter nested as
factor -> term -> mode vector.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import IoError
from .tensor import Cpd, OrderedHhd, Rank1Tensor, as_shape, element_count

__all__ = [
    "MAGIC",
    "hhd_from_json",
    "hhd_to_json",
    "read_hhd",
    "read_tensor",
    "write_hhd",
    "write_tensor",
]

MAGIC = b"HHDT"
VERSION = 1
_HEAD = struct.Struct("<4sII")


def write_tensor(path, t) -> None:
    """Write ``t`` as binary, or as JSON when ``path`` ends in ``.json``."""
    t = np.asarray(t, dtype=np.float64)
    path = Path(path)
    try:
        if path.suffix == ".json":
            path.write_text(json.dumps({"shape": list(t.shape), "data": t.ravel().tolist()}))
            return
        with open(path, "wb") as fh:
            fh.write(_HEAD.pack(MAGIC, VERSION, t.ndim))
            fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if raw[:4] != MAGIC:
        try:
            doc = json.loads(raw)
            shape = as_shape(doc["shape"])
            data = np.asarray(doc["data"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise IoError(f"{path} is neither a binary nor a JSON tensor") from exc
        if data.size != element_count(shape):
            raise IoError(f"{path}: {data.size} values for shape {shape}")
        return data.reshape(shape)
    if len(raw) < _HEAD.size:
        raise IoError(f"{path}: truncated header")
    _, version, d = _HEAD.unpack_from(raw)
    if version != VERSION:
        raise IoError(f"{path}: unsupported version {version}")
    end = _HEAD.size + 4 * d
    if d == 0 or len(raw) < end:
        raise IoError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{d}I", raw, _HEAD.size)
    try:
        shape = as_shape(shape)
    except ValueError as exc:
        raise IoError(f"{path}: {exc}") from exc
    if len(raw) - end != 8 * element_count(shape):
        raise IoError(f"{path}: data size does not match shape {shape}")
    return np.frombuffer(raw, dtype="<f8", offset=end).astype(np.float64).reshape(shape)


def hhd_to_json(h: OrderedHhd) -> dict:
    return {
        "shape": list(h.shape),
        "ranks": list(h.ranks),
        "factors": [
            [[v.tolist() for v in term.factors] for term in f.terms] for f in h.factors
        ],
    }


def hhd_from_json(doc: dict) -> OrderedHhd:
    try:
        shape = as_shape(doc["shape"])
        factors = tuple(
            Cpd(shape, tuple(Rank1Tensor(tuple(np.asarray(v, dtype=np.float64) for v in term)) for term in f))
            for f in doc["factors"]
        )
        h = OrderedHhd(shape, factors)
    except (KeyError, TypeError, ValueError) as exc:
        raise IoError(f"malformed HHD document: {exc}") from exc
    if "ranks" in doc and list(doc["ranks"]) != list(h.ranks):
        raise IoError(f"declared ranks {doc['ranks']} do not match factors {h.ranks}")
    return h


def write_hhd(path, h: OrderedHhd) -> None:
    try:
        Path(path).write_text(json.dumps(hhd_to_json(h)))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_hhd(path) -> OrderedHhd:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return hhd_from_json(doc)
