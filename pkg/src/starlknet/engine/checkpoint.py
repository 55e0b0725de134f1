"""Flat binary checkpoints.

Layout: an 8-byte magic, a little-endian uint64 header length, a UTF-8 JSON
header, then the raw little-endian float32 payload of every entry in header
order.  The header records the engine version, the run's RNG seed, optional
caller metadata, and the name + shape of every parameter and buffer.
"""

import json

import numpy as np

from .tensor import Parameter, active_dtype

MAGIC = b"LKNTCKPT"


def _entry_array(item):
    # plain ndarray buffers also expose .data (a memoryview), so the
    # Parameter unwrap must be explicit
    return item.data if isinstance(item, Parameter) else np.asarray(item)


def _model_entries(model):
    entries = list(model.named_parameters())
    seen = {name for name, _ in entries}
    for name, buf in model.named_buffers():
        if name in seen:
            raise ValueError(f"duplicate state entry '{name}'")
        entries.append((name, buf))
    return entries


def save_checkpoint(path, model, seed, extra=None):
    from .. import __version__

    entries = _model_entries(model)
    header = {
        "engine_version": __version__,
        "seed": int(seed),
        "entries": [
            {"name": name, "shape": list(_entry_array(item).shape)}
            for name, item in entries
        ],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for _, item in entries:
            fh.write(np.ascontiguousarray(_entry_array(item), dtype="<f4").tobytes())
    return path


def load_checkpoint(path):
    """Read a checkpoint file into (header dict, {name: float32 array})."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        length = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(length).decode("utf-8"))
        arrays = {}
        for entry in header["entries"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise ValueError(f"{path}: truncated payload for '{entry['name']}'")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape)
    return header, arrays


def load_into_model(model, path):
    """Restore a model's parameters and buffers; mismatches name the field."""
    header, arrays = load_checkpoint(path)
    entries = _model_entries(model)
    stored = set(arrays)
    current = {name for name, _ in entries}
    missing = sorted(current - stored)
    if missing:
        raise ValueError(f"checkpoint {path} lacks entry '{missing[0]}'")
    surplus = sorted(stored - current)
    if surplus:
        raise ValueError(f"checkpoint {path} has unexpected entry '{surplus[0]}'")
    for name, item in entries:
        target = _entry_array(item)
        value = arrays[name]
        if tuple(target.shape) != tuple(value.shape):
            raise ValueError(
                f"checkpoint shape mismatch for '{name}': model has "
                f"{tuple(target.shape)}, file has {tuple(value.shape)}"
            )
        if isinstance(item, Parameter):
            item.data = value.astype(active_dtype())
            item.zero_grad()
        else:
            target[...] = value.astype(target.dtype)
    return header
