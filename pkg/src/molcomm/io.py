"""Binary container shared by model checkpoints, traces and datasets.

Layout (all integers little-endian)::

    offset  size  field
    0       4     magic, ASCII: b"MCNN" (model), b"MCTR" (trace), b"MCDS" (dataset)
    4       2     format version (uint16), currently 1
    6       2     reserved, zero
    8       4     header length H in bytes (uint32)
    12      H     UTF-8 JSON header
    12+H    ...   payload: concatenated arrays, little-endian float64 ("<f8")

The JSON header has a free-form ``meta`` object and an ``arrays`` list; each
entry is ``{"name", "shape", "offset", "count"}`` where ``offset`` counts
float64 values from the start of the payload.  Readers reject unknown magic
values and newer versions.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
MAGIC_MODEL = b"MCNN"
MAGIC_TRACE = b"MCTR"
MAGIC_DATASET = b"MCDS"
_PREFIX = struct.Struct("<4sHHI")


class ContainerError(ValueError):
    """File is not a readable container of the expected kind."""


def write_container(path, magic: bytes, meta: dict, arrays) -> Path:
    """Write ``arrays`` (iterable of (name, array)) plus ``meta`` to ``path``."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        blobs.append(arr.tobytes())
        offset += arr.size
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(magic, FORMAT_VERSION, 0, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    return path


def read_container(path, magic: bytes):
    """Return ``(meta, arrays)`` where arrays is an ordered dict name -> ndarray."""
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise ContainerError(f"{path}: truncated file")
    got, version, _, hlen = _PREFIX.unpack_from(raw)
    if got != magic:
        raise ContainerError(f"{path}: expected magic {magic!r}, found {got!r}")
    if version > FORMAT_VERSION:
        raise ContainerError(f"{path}: format version {version} is newer than supported {FORMAT_VERSION}")
    header = json.loads(raw[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    payload = np.frombuffer(raw, dtype="<f8", offset=_PREFIX.size + hlen)
    arrays = {}
    for e in header["arrays"]:
        chunk = payload[e["offset"]:e["offset"] + e["count"]]
        if chunk.size != e["count"]:
            raise ContainerError(f"{path}: payload truncated at array {e['name']!r}")
        arrays[e["name"]] = chunk.astype(np.float64).reshape(e["shape"])
    return header["meta"], arrays


def write_trace(path, trace) -> Path:
    meta = {"sample_rate": trace.sample_rate, "t0": trace.t0, **trace.meta}
    return write_container(path, MAGIC_TRACE, meta, [("samples", trace.samples)])


def read_trace(path):
    from .channel import WaveformTrace

    meta, arrays = read_container(path, MAGIC_TRACE)
    meta = dict(meta)
    fs = meta.pop("sample_rate")
    t0 = meta.pop("t0", 0.0)
    return WaveformTrace(fs, arrays["samples"], t0=t0, meta=meta)


def write_trace_jsonl(path, trace) -> Path:
    """Debug form: a header line, then one ``{"t": .., "ph": ..}`` line per sample."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(json.dumps({"sample_rate": trace.sample_rate, "t0": trace.t0, **trace.meta}) + "\n")
        for t, x in zip(trace.times, trace.samples):
            fh.write(json.dumps({"t": round(float(t), 9), "ph": float(x)}) + "\n")
    return path


def read_trace_jsonl(path):
    from .channel import WaveformTrace

    with open(path) as fh:
        meta = json.loads(fh.readline())
        samples = [json.loads(line)["ph"] for line in fh if line.strip()]
    fs = meta.pop("sample_rate")
    t0 = meta.pop("t0", 0.0)
    return WaveformTrace(fs, np.asarray(samples), t0=t0, meta=meta)
