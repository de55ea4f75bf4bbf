"""Deterministic checkpoint container.

A zip archive (stored, fixed timestamps) holding `manifest.json` and one raw
little-endian blob per tensor under `tensors/`. The manifest records the format
version and a tagged JSON encoding of the state tree, so nested dicts with
integer keys, tuples and tensors come back with their original types. Saving
the same state twice gives identical bytes.
"""
from __future__ import annotations

import json
import zipfile
from pathlib import Path
from typing import Any

import numpy as np
import torch

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


def _encode(node: Any, tensors: dict[str, torch.Tensor]) -> Any:
    if isinstance(node, torch.Tensor):
        name = f"t{len(tensors):06d}"
        tensors[name] = node.detach().cpu().contiguous()
        return {"__tensor__": name}
    if isinstance(node, dict):
        return {"__dict__": [[k, _encode(v, tensors)] for k, v in node.items()]}
    if isinstance(node, tuple):
        return {"__tuple__": [_encode(v, tensors) for v in node]}
    if isinstance(node, list):
        return [_encode(v, tensors) for v in node]
    if node is None or isinstance(node, (bool, int, float, str)):
        return node
    raise CheckpointError(f"cannot store value of type {type(node).__name__}")


def _decode(node: Any, blobs: dict[str, torch.Tensor]) -> Any:
    if isinstance(node, list):
        return [_decode(v, blobs) for v in node]
    if isinstance(node, dict):
        if "__tensor__" in node:
            return blobs[node["__tensor__"]]
        if "__tuple__" in node:
            return tuple(_decode(v, blobs) for v in node["__tuple__"])
        return {k: _decode(v, blobs) for k, v in node["__dict__"]}
    return node


def _entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(state: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors: dict[str, torch.Tensor] = {}
    tree = _encode(state, tensors)
    index = {name: {"dtype": str(t.dtype).removeprefix("torch."), "shape": list(t.shape)}
             for name, t in tensors.items()}
    manifest = {"format_version": FORMAT_VERSION, "tensors": index, "state": tree}
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w") as archive:
        archive.writestr(_entry("manifest.json"), json.dumps(manifest, sort_keys=True))
        for name, tensor in tensors.items():
            array = tensor.numpy()
            archive.writestr(_entry(f"tensors/{name}"), array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes())
    tmp.replace(path)
    return path


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint {path} does not exist")
    try:
        with zipfile.ZipFile(path) as archive:
            manifest = json.loads(archive.read("manifest.json"))
            version = manifest.get("format_version")
            if version != FORMAT_VERSION:
                raise CheckpointError(f"{path}: unsupported checkpoint format version {version!r}")
            blobs = {}
            for name, meta in manifest["tensors"].items():
                dtype = np.dtype(meta["dtype"]).newbyteorder("<")
                array = np.frombuffer(archive.read(f"tensors/{name}"), dtype=dtype).reshape(meta["shape"])
                blobs[name] = torch.from_numpy(array.astype(array.dtype.newbyteorder("=")))
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: not a valid checkpoint ({exc})") from None
    return _decode(manifest["state"], blobs)
