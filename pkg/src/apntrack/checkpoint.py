"""Versioned parameter checkpoints.

Layout: magic line, an 8-byte little-endian header length, a JSON header
with the model config and parameter index, then the raw float64
little-endian values back to back in row-major order.
"""

import json
import struct

import numpy as np

MAGIC = b"APNTRACK-CKPT-1\n"


def save_checkpoint(path, params, config=None):
    """Write named parameter arrays (dict name -> ndarray) plus a config dict."""
    names = list(params)
    header = {
        "config": config,
        "params": [{"name": n, "shape": list(np.asarray(params[n]).shape)} for n in names],
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint back as (params dict, config dict or None)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a {MAGIC.strip().decode()} checkpoint")
        (length,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(length).decode("utf-8"))
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated checkpoint at '{entry['name']}'")
            params[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return params, header.get("config")
