"""Parameter checkpoints: JSON manifest + little-endian float32 blob.

The manifest lists parameter names, shapes, and byte offsets into the
companion .bin file. Round trips are bit-exact.
"""

import json
from pathlib import Path

import numpy as np

from cameranet.errors import ValidationError

FORMAT_VERSION = 1


def save_checkpoint(arrays, path, meta=None):
    """Write name -> float32 ndarray mapping to path.json / path.bin."""
    path = Path(path)
    entries = []
    blob = bytearray()
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape),
                        "offset": len(blob)})
        blob += arr.tobytes()
    manifest = {"version": FORMAT_VERSION, "dtype": "<f4",
                "params": entries, "meta": meta or {}}
    path.with_suffix(".bin").write_bytes(bytes(blob))
    path.with_suffix(".json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True))


def load_checkpoint(path):
    """Read a checkpoint; returns (name -> float32 ndarray, meta dict)."""
    path = Path(path)
    mpath = path.with_suffix(".json")
    bpath = path.with_suffix(".bin")
    if not mpath.exists():
        raise ValidationError(f"checkpoint manifest missing: {mpath}")
    if not bpath.exists():
        raise ValidationError(f"checkpoint blob missing: {bpath}")
    manifest = json.loads(mpath.read_text())
    if manifest.get("version") != FORMAT_VERSION:
        raise ValidationError(
            f"unsupported checkpoint version {manifest.get('version')}")
    blob = bpath.read_bytes()
    arrays = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        off = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        arrays[entry["name"]] = arr.reshape(shape).copy()
    return arrays, manifest.get("meta", {})
