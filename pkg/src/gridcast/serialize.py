"""Binary container helpers shared by the model file formats.

Layout of one block: 4-byte ASCII magic, little-endian uint32 header length,
UTF-8 JSON header, then the raw bytes of each array in declaration order as
little-endian float64. The header's "shapes" entry pins the array layout, so
a write -> read round trip is bit-exact.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .errors import InputError


def pack_block(magic: str, header: dict, arrays: list[np.ndarray]) -> bytes:
    if len(magic) != 4:
        raise ValueError("magic must be 4 ASCII characters")
    header = dict(header)
    header["shapes"] = [list(np.asarray(a).shape) for a in arrays]
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(magic.encode("ascii"))
    buf.write(struct.pack("<I", len(head)))
    buf.write(head)
    for a in arrays:
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def unpack_block(data: bytes, magic: str) -> tuple[dict, list[np.ndarray]]:
    if data[:4] != magic.encode("ascii"):
        raise InputError(f"bad magic: expected {magic!r}, found {data[:4]!r}")
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    arrays = []
    off = 8 + hlen
    for shape in header["shapes"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        arr = np.frombuffer(data[off : off + nbytes], dtype="<f8").reshape(shape)
        arrays.append(arr.astype(np.float64))
        off += nbytes
    if off != len(data):
        raise InputError(f"trailing bytes in {magic} block: {len(data) - off}")
    return header, arrays


def write_block(path, magic: str, header: dict, arrays: list[np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(pack_block(magic, header, arrays))


def read_block(path, magic: str) -> tuple[dict, list[np.ndarray]]:
    with open(path, "rb") as f:
        return unpack_block(f.read(), magic)
