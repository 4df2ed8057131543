"""Flat tensor serialization (`.tsr`).

Layout: one JSON header line {dtype, shape, name}, a newline, then the raw
array payload in little-endian byte order, row major.  Round trips are
bit-identical, which the artifact integrity hashes depend on.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

_DTYPES = {"float64": "<f8", "uint8": "|u1", "int64": "<i8"}
_CANONICAL = {np.dtype("<f8"): "float64", np.dtype("|u1"): "uint8", np.dtype("<i8"): "int64"}


def write_tensor(path, array: np.ndarray, name: str = "") -> None:
    # asarray(order="C") rather than ascontiguousarray: the latter would
    # silently promote 0-d arrays to 1-d and change the recorded shape
    array = np.asarray(array, order="C")
    if array.dtype not in _CANONICAL:
        raise ValueError(f"unsupported dtype {array.dtype}; use float64, uint8, or int64")
    header = {"dtype": _CANONICAL[array.dtype], "shape": list(array.shape), "name": name}
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes())


def read_tensor(path):
    """Returns (array, name)."""
    with open(path, "rb") as f:
        header_line = f.readline()
        payload = f.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValueError(f"{path}: malformed tensor header: {e}") from None
    dtype_tag = header.get("dtype")
    if dtype_tag not in _DTYPES:
        raise ValueError(f"{path}: unsupported dtype tag {dtype_tag!r}")
    shape = tuple(int(s) for s in header["shape"])
    dtype = np.dtype(_DTYPES[dtype_tag])
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if shape else dtype.itemsize
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    array = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    return array, str(header.get("name", ""))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_tensor_dir(dirpath, tensors: dict) -> None:
    """Write {name: array} as one .tsr file per entry."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    for name, arr in tensors.items():
        write_tensor(d / f"{name}.tsr", arr, name=name)


def read_tensor_dir(dirpath) -> dict:
    d = Path(dirpath)
    out = {}
    for p in sorted(d.glob("*.tsr")):
        arr, name = read_tensor(p)
        out[name or p.stem] = arr
    return out
