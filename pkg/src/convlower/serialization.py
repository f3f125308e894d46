"""JSON encoding shared by every artifact.

Tensors are stored as ``{"shape": [...], "data": [...]}`` with ``data`` the
row-major flattening. Documents are written with sorted keys and compact
separators so that dump -> load -> dump is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .exceptions import ParseError


def tensor_to_json(arr) -> dict:
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": [int(n) for n in arr.shape], "data": [float(v) for v in arr.reshape(-1)]}


def tensor_from_json(obj, path: str = "tensor", ndim=None) -> np.ndarray:
    if not isinstance(obj, dict) or "shape" not in obj or "data" not in obj:
        raise ParseError(path, "expected an object with 'shape' and 'data'")
    shape = obj["shape"]
    if not isinstance(shape, list) or not all(isinstance(n, int) and n >= 0 for n in shape):
        raise ParseError(f"{path}.shape", "must be a list of non-negative integers")
    if ndim is not None and len(shape) not in np.atleast_1d(ndim):
        raise ParseError(f"{path}.shape", f"expected {ndim} axes, got {len(shape)}")
    data = obj["data"]
    if not isinstance(data, list):
        raise ParseError(f"{path}.data", "must be a flat list of numbers")
    try:
        arr = np.array(data, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}.data", f"non-numeric entry ({exc})") from None
    if arr.ndim != 1 or arr.size != int(np.prod(shape, dtype=np.int64)):
        raise ParseError(f"{path}.data", f"expected {int(np.prod(shape))} numbers, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{path}.data", "contains non-finite values")
    return arr.reshape(shape)


def vector_from_json(obj, path: str) -> np.ndarray:
    if not isinstance(obj, list):
        raise ParseError(path, "expected a list of numbers")
    try:
        arr = np.array(obj, dtype=np.float64)
    except (TypeError, ValueError):
        raise ParseError(path, "expected a list of numbers") from None
    if arr.ndim != 1:
        raise ParseError(path, "expected a flat list")
    return arr


def require(doc, key, path):
    if not isinstance(doc, dict):
        raise ParseError(path, "expected an object")
    if key not in doc:
        raise ParseError(f"{path}.{key}", "missing field")
    return doc[key]


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def loads(text: str, path: str = "<input>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"malformed JSON ({exc})") from None


def read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(str(path), f"cannot read file ({exc.strerror})") from None
    return loads(text, str(path))


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc))
