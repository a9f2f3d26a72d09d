"""Single-file binary checkpoint format for named arrays.

Layout (all integers little-endian):

    bytes 0..7    magic b"NAVCKPT1"
    bytes 8..11   uint32 manifest length in bytes
    bytes 12..    manifest, UTF-8 JSON:
                      {"version": 1,
                       "meta": {...},
                       "arrays": [{"name", "shape", "dtype", "offset", "nbytes"}, ...]}
    afterwards    raw array bytes, row-major, little-endian, each at
                  `offset` relative to the end of the manifest

The same container stores policy parameters and Adam optimizer state; the
`meta` block distinguishes them. Byte-exact details in docs/checkpoint.md.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import CheckpointError

MAGIC = b"NAVCKPT1"
_ALLOWED_DTYPES = ("<f4", "<f8", "<i8")


def save_arrays(path, arrays, meta=None):
    """Write a dict of named ndarrays plus a JSON-able meta block."""
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<")
        if dtype.str not in _ALLOWED_DTYPES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for array {name!r}")
        raw = arr.astype(dtype, copy=False).tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": dtype.str,
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    manifest = json.dumps({"version": 1, "meta": meta or {}, "arrays": entries}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(manifest).to_bytes(4, "little"))
        f.write(manifest)
        for raw in blobs:
            f.write(raw)


def load_arrays(path):
    """Read a checkpoint back as (arrays dict, meta dict)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    mlen = int.from_bytes(blob[8:12], "little")
    try:
        manifest = json.loads(blob[12:12 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt manifest: {e}")
    if manifest.get("version") != 1:
        raise CheckpointError(f"{path}: unsupported version {manifest.get('version')}")
    data_start = 12 + mlen
    arrays = {}
    for entry in manifest["arrays"]:
        start = data_start + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(blob):
            raise CheckpointError(f"{path}: array {entry['name']!r} runs past end of file")
        arr = np.frombuffer(blob[start:end], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return arrays, manifest.get("meta", {})
