"""Minimal deterministic binary container: magic, version, JSON header, named arrays.

Layout (all integers little-endian)::

    magic (4 bytes) | version u32 | header_len u64 | header JSON (utf-8)
    then for each array, in the order listed in header["arrays"]:
        raw bytes, C order, dtype as declared ("<f8" or "<i8")

The header JSON is written with sorted keys so equal content gives equal bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


class BinaryFormatError(ValueError):
    pass


def pack(magic: bytes, version: int, meta: dict, arrays: list[tuple[str, np.ndarray]]) -> bytes:
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    specs, blobs = [], []
    for name, arr in arrays:
        arr = np.asarray(arr)
        code = "<f8" if arr.dtype.kind == "f" else "<i8"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
        specs.append({"name": name, "dtype": code, "shape": list(data.shape)})
        blobs.append(data.tobytes())
    header = json.dumps({"meta": meta, "arrays": specs}, sort_keys=True, ensure_ascii=False,
                        separators=(",", ":")).encode("utf-8")
    return b"".join([magic, struct.pack("<IQ", version, len(header)), header, *blobs])


def unpack(data: bytes, magic: bytes, version: int) -> tuple[dict, dict[str, np.ndarray]]:
    if len(data) < 16 or data[:4] != magic:
        raise BinaryFormatError(f"bad magic bytes; expected {magic!r}")
    found_version, header_len = struct.unpack_from("<IQ", data, 4)
    if found_version != version:
        raise BinaryFormatError(f"unsupported format version {found_version}; expected {version}")
    offset = 16
    if offset + header_len > len(data):
        raise BinaryFormatError("truncated header")
    try:
        header = json.loads(data[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BinaryFormatError(f"corrupt header: {exc}") from None
    offset += header_len
    arrays = {}
    for spec in header["arrays"]:
        dtype = _DTYPES.get(spec["dtype"])
        if dtype is None:
            raise BinaryFormatError(f"unknown dtype {spec['dtype']!r}")
        shape = tuple(spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if offset + nbytes > len(data):
            raise BinaryFormatError(f"truncated data for array {spec['name']!r}")
        arr = np.frombuffer(data, dtype=dtype, count=nbytes // dtype.itemsize, offset=offset)
        arrays[spec["name"]] = arr.reshape(shape).astype(dtype.newbyteorder("="))
        offset += nbytes
    if offset != len(data):
        raise BinaryFormatError(f"{len(data) - offset} trailing bytes")
    return header["meta"], arrays
