"""Deterministic parameter archive: a magic line, a JSON header with
sorted keys describing metadata and array layouts, then the raw array
bytes in header order. Byte-identical round trips by construction.
"""

import json

import numpy as np

MAGIC = b"COLDREC-CKPT-1\n"


def save(path, arrays, meta=None):
    names = sorted(arrays)
    header = {
        "meta": meta or {},
        "arrays": [{"name": n, "dtype": str(arrays[n].dtype),
                    "shape": list(arrays[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(blob).to_bytes(8, "little"))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(arrays[n]).tobytes())


def load(path):
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a parameter archive")
        size = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(size).decode())
        arrays = {}
        for spec in header["arrays"]:
            dt = np.dtype(spec["dtype"])
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            data = np.frombuffer(f.read(count * dt.itemsize), dtype=dt)
            arrays[spec["name"]] = data.reshape(spec["shape"]).copy()
    return arrays, header["meta"]
