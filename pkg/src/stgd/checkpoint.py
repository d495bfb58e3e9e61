"""
Checkpoint = JSON manifest + adjacent raw payload.

``model.json``::

    {"format": "stgd-checkpoint/1", "payload": "model.bin", "config": {...},
     "tensors": [{"name": "frozen/...", "group": "frozen", "shape": [...],
                  "offset": 0, "nbytes": ...}, ...]}

``model.bin`` holds every tensor as little-endian float64, row-major, at its offset.
"""

import json
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .errors import CheckpointError

FORMAT = "stgd-checkpoint/1"
_DTYPE = np.dtype("<f8")


def payload_path(manifest_path: Union[str, Path]) -> Path:
    return Path(manifest_path).with_suffix(".bin")


def save_checkpoint(path: Union[str, Path], arrays: Dict[str, np.ndarray], config: Optional[dict] = None,
                    meta: Optional[dict] = None) -> Path:
    path = Path(path)
    payload = payload_path(path)
    entries, offset = [], 0
    with open(payload, "wb") as fh:
        for name, arr in arrays.items():
            group = name.split("/", 1)[0]
            if group not in ("frozen", "trainable"):
                raise CheckpointError(f"tensor {name!r} is not under frozen/ or trainable/")
            raw = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
            fh.write(raw)
            entries.append({"name": name, "group": group, "shape": list(arr.shape),
                            "offset": offset, "nbytes": len(raw)})
            offset += len(raw)
    manifest = {"format": FORMAT, "payload": payload.name, "config": config or {}, "meta": meta or {},
                "tensors": entries}
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], dict]:
    """Returns ``(arrays, manifest)``."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint manifest {path} not found") from e
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: manifest is not valid JSON ({e})") from e
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unsupported format {manifest.get('format')!r}")
    payload = path.parent / manifest["payload"]
    try:
        blob = payload.read_bytes()
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint payload {payload} not found") from e
    arrays, seen, end = {}, set(), 0
    for ent in sorted(manifest["tensors"], key=lambda e: e["offset"]):
        name = ent["name"]
        if name in seen:
            raise CheckpointError(f"duplicate tensor name {name!r} in manifest")
        seen.add(name)
        n = int(np.prod(ent["shape"], dtype=np.int64)) * _DTYPE.itemsize
        if ent["nbytes"] != n or ent["offset"] < end or ent["offset"] + n > len(blob):
            raise CheckpointError(f"tensor {name!r}: bad offset/size in manifest")
        arrays[name] = np.frombuffer(blob, dtype=_DTYPE, count=n // 8, offset=ent["offset"]) \
            .reshape(ent["shape"]).astype(np.float64)
        end = ent["offset"] + n
    ordered = {e["name"]: arrays[e["name"]] for e in manifest["tensors"]}
    return ordered, manifest


def load_into(model, arrays: Dict[str, np.ndarray]):
    """Copy checkpoint arrays into ``model``'s tensors, checking names and shapes."""
    params = model.named_parameters()
    missing = [k for k in params if k not in arrays]
    if missing:
        raise CheckpointError(f"checkpoint lacks tensor {missing[0]!r}")
    extra = [k for k in arrays if k not in params]
    if extra:
        raise CheckpointError(f"checkpoint tensor {extra[0]!r} has no counterpart in the model")
    for k, t in params.items():
        if arrays[k].shape != t.shape:
            raise CheckpointError(f"tensor {k!r}: checkpoint shape {arrays[k].shape} != model shape {t.shape}")
    for k, t in params.items():
        t.data = np.array(arrays[k], dtype=np.float64)
