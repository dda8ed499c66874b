"""Little-endian binary dumps for fields, kernel tables and measures.

Layout: magic ``b"BHF1"``, a uint32 header length, a UTF-8 JSON header, then
the raw little-endian float64 payload (complex values interleaved re, im).
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"BHF1"


def dump_array(path, array: np.ndarray, kind: str, **meta) -> Path:
    arr = np.asarray(array)
    is_complex = np.iscomplexobj(arr)
    dtype = "complex128" if is_complex else "float64"
    header = dict(meta, kind=kind, shape=list(arr.shape), dtype=dtype)
    blob = json.dumps(header, sort_keys=True).encode()
    payload = np.ascontiguousarray(arr, dtype="<c16" if is_complex else "<f8").tobytes()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)
    return path


def load_array(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path} is not a field dump")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode())
        data = fh.read()
    dt = "<c16" if header["dtype"] == "complex128" else "<f8"
    arr = np.frombuffer(data, dtype=dt).reshape(header["shape"])
    return header, arr.astype(dt[1:])
