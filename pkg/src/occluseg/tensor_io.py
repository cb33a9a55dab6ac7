"""Score/feature tensors on disk.

Binary layout (little-endian): magic ``b"OCTN"``, uint32 ndim, ndim x uint64
dims, then the float64 values in C order. JSON layout:
``{"shape": [...], "values": [...]}`` with values flat or nested.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import SchemaError

MAGIC = b"OCTN"


def write_tensor(path, array) -> None:
    a = np.asarray(array, dtype="<f8")
    header = MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    Path(path).write_bytes(header + a.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".json":
        return tensor_from_json(json.loads(path.read_text()), source=str(path))
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise SchemaError("not a tensor file (bad magic)", source=str(path))
    (ndim,) = struct.unpack_from("<I", raw, 4)
    dims = struct.unpack_from(f"<{ndim}Q", raw, 8)
    offset = 8 + 8 * ndim
    count = int(np.prod(dims)) if dims else 1
    if len(raw) - offset != 8 * count:
        raise SchemaError(f"body holds {len(raw) - offset} bytes, expected {8 * count}", source=str(path))
    return np.frombuffer(raw, dtype="<f8", offset=offset).reshape(dims).astype(np.float64)


def tensor_from_json(doc, source=None) -> np.ndarray:
    if not isinstance(doc, dict) or "values" not in doc:
        raise SchemaError("expected an object with 'values'", source=source)
    values = np.asarray(doc["values"], dtype=np.float64)
    if "shape" in doc:
        shape = tuple(doc["shape"])
        if int(np.prod(shape)) != values.size:
            raise SchemaError(f"{values.size} values do not fill shape {shape}", field="shape", source=source)
        values = values.reshape(shape)
    return values


def tensor_to_json(array) -> dict:
    a = np.asarray(array, dtype=np.float64)
    return {"shape": list(a.shape), "values": a.ravel().tolist()}
