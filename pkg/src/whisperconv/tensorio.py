"""Binary tensor files and parameter checkpoints.

Tensor file layout: magic ``WFT1``, u32 rank, ``rank`` u64 dims, then
row-major little-endian float32 values.  A checkpoint is a directory with a
``manifest.json`` record and one tensor file per named parameter.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"WFT1"
MANIFEST_NAME = "manifest.json"


class TensorFormatError(ValueError):
    pass


def write_tensor(path, array) -> None:
    arr = np.ascontiguousarray(np.asarray(array, dtype="<f4"))
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic")
    (rank,) = struct.unpack_from("<I", data, 4)
    offset = 8 + 8 * rank
    if len(data) < offset:
        raise TensorFormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}Q", data, 8)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(data) != offset + 4 * count:
        raise TensorFormatError(f"{path}: payload size does not match dims {dims}")
    return np.frombuffer(data, dtype="<f4", offset=offset).reshape(dims).copy()


def save_checkpoint(directory, manifest: Mapping[str, Any], tensors: Mapping[str, np.ndarray]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = sorted(tensors)
    record = dict(manifest)
    record["parameters"] = names
    for name in names:
        write_tensor(directory / f"{name}.wft", tensors[name])
    (directory / MANIFEST_NAME).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def load_checkpoint(directory) -> tuple[dict, dict[str, np.ndarray]]:
    directory = Path(directory)
    path = directory / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"no checkpoint manifest at {path}")
    manifest = json.loads(path.read_text())
    tensors = {name: read_tensor(directory / f"{name}.wft") for name in manifest["parameters"]}
    return manifest, tensors
