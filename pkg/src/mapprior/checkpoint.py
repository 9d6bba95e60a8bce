"""Binary array container for checkpoints and encoded-feature files.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header,
then a data section of raw little-endian float64 values. The header holds the
RNG seed, a config echo, and a manifest of (name, shape, offset) per array;
offsets are relative to the data section start. Writing is deterministic:
identical contents produce identical bytes.
"""
from __future__ import annotations

import json
import struct
from typing import Optional

import numpy as np

from .autodiff import ParamStore
from .errors import DataError

MAGIC = b"MAPPRIOR"


def write_arrays(path: str, arrays: dict[str, np.ndarray], seed: int,
                 config: Optional[dict] = None) -> None:
    names = sorted(arrays)
    manifest = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
        manifest.append({"name": name, "shape": list(arr.shape),
                         "offset": offset})
        blob = arr.astype("<f8", copy=False).tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"seed": int(seed), "config": config or {},
                         "arrays": manifest}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_arrays(path: str) -> tuple[dict[str, np.ndarray], int, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DataError(f"{path}: not a mapprior array file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        data = fh.read()
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return arrays, int(header.get("seed", 0)), header.get("config", {})


def save_checkpoint(path: str, params: ParamStore,
                    config: Optional[dict] = None) -> None:
    write_arrays(path, {n: p.value for n, p in params.items()},
                 seed=params.seed, config=config)


def load_checkpoint(path: str,
                    expected_shapes: Optional[dict[str, tuple]] = None
                    ) -> tuple[ParamStore, dict]:
    """Load parameters; verifies shapes when expectations are given."""
    arrays, seed, config = read_arrays(path)
    if expected_shapes is not None:
        missing = sorted(set(expected_shapes) - set(arrays))
        extra = sorted(set(arrays) - set(expected_shapes))
        if missing or extra:
            raise DataError(f"{path}: parameter set mismatch "
                            f"(missing {missing}, unexpected {extra})")
        for name, shape in expected_shapes.items():
            if tuple(arrays[name].shape) != tuple(shape):
                raise DataError(f"{path}: parameter {name!r} has shape "
                                f"{arrays[name].shape}, expected {tuple(shape)}")
    store = ParamStore(seed=seed)
    for name in sorted(arrays):
        store.add(name, arrays[name])
    return store, config
