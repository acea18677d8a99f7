"""Versioned weight checkpoints.

Layout: magic "GSCK" | version u32 | header length u32 | header JSON |
raw little-endian float32 arrays back to back, in header order. The header
lists canonical tensor names with shapes plus free-form run metadata.
Canonical names are the state-dict keys of the owning modules prefixed by
their role: ``backbone.*`` / ``head.*`` for the encoder, ``predictor.*``,
and ``bnneck.*`` for the supervised metric head when present.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointFormatError, CheckpointVersionMismatch

MAGIC = b"GSCK"
VERSION = 1


def _module_arrays(module: torch.nn.Module, prefix: str = "") -> dict[str, np.ndarray]:
    out = {}
    for name, tensor in module.state_dict().items():
        key = f"{prefix}{name}" if prefix else name
        out[key] = tensor.detach().cpu().numpy().astype("<f4")
    return out


def save_checkpoint(path, modules: dict[str, torch.nn.Module],
                    meta: dict | None = None):
    """Write named modules' weights to one file.

    ``modules`` maps a prefix (e.g. "predictor") to a module; an empty
    prefix keeps the module's own key names (used for the encoder, whose
    submodules are already named backbone/head).
    """
    arrays = {}
    for prefix, module in modules.items():
        pfx = f"{prefix}." if prefix else ""
        arrays.update(_module_arrays(module, pfx))
    names = sorted(arrays)
    header = {"version": VERSION,
              "meta": meta or {},
              "tensors": [{"name": n, "shape": list(arrays[n].shape)}
                          for n in names]}
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n]).tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return (meta, name -> float32 array)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointFormatError(f"{path}: bad checkpoint magic {magic!r}")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise CheckpointVersionMismatch(
                f"{path}: checkpoint version {version}, supported {VERSION}")
        header = json.loads(fh.read(hlen).decode())
        arrays = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(4 * count)
            if len(buf) != 4 * count:
                raise CheckpointFormatError(f"{path}: truncated tensor {spec['name']}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    return header.get("meta", {}), arrays


def load_into_module(module: torch.nn.Module, arrays: dict[str, np.ndarray],
                     prefix: str = ""):
    """Copy arrays into a module's state dict (restoring integer buffers)."""
    state = module.state_dict()
    pfx = f"{prefix}." if prefix else ""
    new_state = {}
    for name, tensor in state.items():
        key = pfx + name
        if key not in arrays:
            raise CheckpointFormatError(f"checkpoint misses tensor {key!r}")
        new_state[name] = torch.as_tensor(arrays[key]).to(tensor.dtype).reshape(tensor.shape)
    module.load_state_dict(new_state)
