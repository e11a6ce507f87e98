"""The grid-series file format binding every pipeline stage together.

Layout: 4-byte magic "GSF1", little-endian uint32 header length, UTF-8 JSON
header with keys dims [T, m, n, p], dtype "f32", dt, var_names and the
optional height_m / norm records, then T*m*n*p little-endian float32 values,
time-major then row-major. Values are stored in single precision on disk and
promoted to double in memory; write -> read -> write is bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import InputError
from .grid import GridSeries, NormRecord

MAGIC = b"GSF1"


def gsf_bytes(series: GridSeries) -> bytes:
    t, m, n, p = series.shape
    header = {
        "dims": [t, m, n, p],
        "dtype": "f32",
        "dt": series.dt,
        "var_names": list(series.var_names),
    }
    if series.height_m is not None:
        header["height_m"] = series.height_m
    if series.norm is not None:
        header["norm"] = series.norm.to_dict()
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(series.values, dtype="<f4").tobytes()
    return MAGIC + struct.pack("<I", len(head)) + head + payload


def parse_gsf(data: bytes) -> GridSeries:
    if data[:4] != MAGIC:
        raise InputError(f"not a GSF file (magic {data[:4]!r})")
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    t, m, n, p = header["dims"]
    if header.get("dtype") != "f32":
        raise InputError(f"unsupported GSF dtype {header.get('dtype')!r}")
    expected = 4 * t * m * n * p
    payload = data[8 + hlen :]
    if len(payload) != expected:
        raise InputError(f"GSF payload is {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(t, m, n, p)
    norm = NormRecord.from_dict(header["norm"]) if "norm" in header else None
    return GridSeries(values, dt=header["dt"], var_names=header["var_names"],
                      height_m=header.get("height_m"), norm=norm)


def write_gsf(path, series: GridSeries) -> None:
    with open(path, "wb") as f:
        f.write(gsf_bytes(series))


def read_gsf(path) -> GridSeries:
    with open(path, "rb") as f:
        return parse_gsf(f.read())
