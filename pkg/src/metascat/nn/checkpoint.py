"""Single-file checkpoint container.

Layout: a compact JSON manifest on the first line (tensor names, shapes,
dtype, architecture config, training step, collection names, plus
optional training-state extras), then the raw little-endian IEEE-754
payloads of every collection in manifest order. Collections are
shape-congruent (live weights, EMA shadow, optimizer moments), so the
tensor list is stored once.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(
    path: Path | str,
    step: int,
    config: dict,
    collections: dict[str, dict[str, np.ndarray]],
    extra: dict | None = None,
) -> Path:
    """Write collections of named tensors; all share one name/shape table."""
    if not collections:
        raise ValueError("need at least one tensor collection")
    names = None
    for cname, tensors in collections.items():
        keys = sorted(tensors)
        if names is None:
            names = keys
        elif keys != names:
            raise ValueError(f"collection {cname} has a different tensor set")
    first = next(iter(collections.values()))
    dtype = str(first[names[0]].dtype)
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype}")
    manifest = {
        "format": FORMAT_VERSION,
        "step": step,
        "config": config,
        "dtype": dtype,
        "collections": sorted(collections),
        "tensors": [
            {"name": n, "shape": list(first[n].shape)} for n in names
        ],
    }
    if extra:
        manifest["extra"] = extra
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wire = np.dtype(_DTYPES[dtype])
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest).encode("utf-8"))
        fh.write(b"\n")
        for cname in manifest["collections"]:
            tensors = collections[cname]
            for n in names:
                fh.write(np.ascontiguousarray(tensors[n], dtype=wire).tobytes())
    return path


def load_checkpoint(path: Path | str) -> tuple[dict, dict[str, dict[str, np.ndarray]]]:
    """Read a checkpoint; returns (manifest, {collection: {name: array}})."""
    with open(path, "rb") as fh:
        manifest = json.loads(fh.readline().decode("utf-8"))
        if manifest.get("format") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format in {path}")
        wire = np.dtype(_DTYPES[manifest["dtype"]])
        out: dict[str, dict[str, np.ndarray]] = {}
        for cname in manifest["collections"]:
            tensors = {}
            for entry in manifest["tensors"]:
                shape = tuple(entry["shape"])
                count = int(np.prod(shape)) if shape else 1
                buf = fh.read(count * wire.itemsize)
                if len(buf) != count * wire.itemsize:
                    raise ValueError(f"truncated checkpoint {path}")
                tensors[entry["name"]] = np.frombuffer(buf, dtype=wire).reshape(shape).astype(
                    manifest["dtype"]
                )
            out[cname] = tensors
        trailing = fh.read(1)
        if trailing:
            raise ValueError(f"trailing bytes in checkpoint {path}")
    return manifest, out
