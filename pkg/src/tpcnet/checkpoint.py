"""Checkpoint files: a plain-text manifest followed by raw little-endian float32 buffers.

Layout::

    TPCNET-CKPT
    version 1
    step <int>
    config <json NetworkConfig>
    sha256 <hex digest of the payload>
    tensor <name> <d0xd1x...> <offset> <nbytes>
    ...
    end
    <payload>

Offsets are relative to the first payload byte.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .data import atomic_write_bytes
from .network import NetworkConfig, TPCNet

MAGIC = "TPCNET-CKPT"
VERSION = 1
_DTYPE = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


def _shape_str(shape) -> str:
    return "x".join(str(d) for d in shape) if len(shape) else "scalar"


def _parse_shape(s: str) -> tuple[int, ...]:
    return () if s == "scalar" else tuple(int(d) for d in s.split("x"))


def save_checkpoint(path, params, cfg: NetworkConfig, step: int) -> None:
    """``params`` is a model or a name -> tensor mapping."""
    if isinstance(params, torch.nn.Module):
        params = dict(params.named_parameters())
    chunks, entries, offset = [], [], 0
    for name, t in params.items():
        if any(c.isspace() for c in name):
            raise CheckpointError(f"parameter name {name!r} contains whitespace")
        buf = np.ascontiguousarray(t.detach().cpu().numpy().astype(_DTYPE, copy=False)).tobytes()
        entries.append(f"tensor {name} {_shape_str(tuple(t.shape))} {offset} {len(buf)}")
        chunks.append(buf)
        offset += len(buf)
    payload = b"".join(chunks)
    header = [
        MAGIC,
        f"version {VERSION}",
        f"step {int(step)}",
        f"config {json.dumps(cfg.to_dict(), sort_keys=True)}",
        f"sha256 {hashlib.sha256(payload).hexdigest()}",
        *entries,
        "end",
    ]
    atomic_write_bytes(path, ("\n".join(header) + "\n").encode("utf-8") + payload)


def _read_manifest(raw: bytes, path):
    lines, pos = [], 0
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise CheckpointError(f"{path}: truncated manifest")
        line = raw[pos:nl].decode("utf-8", errors="replace")
        pos = nl + 1
        lines.append(line)
        if line == "end":
            return lines, pos
        if len(lines) == 1 and line != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")


def load_checkpoint(path):
    """Return ``(params, cfg, step)`` with ``params`` an ordered name -> float32 tensor dict."""
    path = Path(path)
    raw = path.read_bytes()
    lines, start = _read_manifest(raw, path)
    meta, entries = {}, []
    for line in lines[1:-1]:
        key, _, rest = line.partition(" ")
        if key == "tensor":
            parts = rest.split(" ")
            if len(parts) != 4:
                raise CheckpointError(f"{path}: malformed tensor line {line!r}")
            name, shape, off, nbytes = parts
            entries.append((name, _parse_shape(shape), int(off), int(nbytes)))
        else:
            meta[key] = rest
    try:
        version = int(meta["version"])
        step = int(meta["step"])
        cfg = NetworkConfig.from_dict(json.loads(meta["config"]))
        digest = meta["sha256"]
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad manifest ({exc})") from exc
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
    payload = raw[start:]
    expected_len = sum(e[3] for e in entries)
    if len(payload) != expected_len:
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, manifest says {expected_len} (truncated?)")
    if hashlib.sha256(payload).hexdigest() != digest:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    params = {}
    for name, shape, off, nbytes in entries:
        count = int(np.prod(shape, dtype=np.int64))
        if count * _DTYPE.itemsize != nbytes:
            raise CheckpointError(f"{path}: {name} has shape {shape} but {nbytes} bytes")
        arr = np.frombuffer(payload, dtype=_DTYPE, count=count, offset=off).reshape(shape)
        params[name] = torch.from_numpy(arr.astype(np.float32))
    return params, cfg, step


def load_into(model: TPCNet, params: dict) -> TPCNet:
    own = dict(model.named_parameters())
    if list(own) != list(params):
        missing = sorted(set(own) - set(params))
        extra = sorted(set(params) - set(own))
        raise CheckpointError(f"parameter names differ from the model (missing {missing[:5]}, extra {extra[:5]})")
    with torch.no_grad():
        for name, p in own.items():
            if tuple(p.shape) != tuple(params[name].shape):
                raise CheckpointError(f"{name}: checkpoint shape {tuple(params[name].shape)} vs model {tuple(p.shape)}")
            p.copy_(params[name])
    return model


def load_model(path) -> tuple[TPCNet, int]:
    params, cfg, step = load_checkpoint(path)
    return load_into(TPCNet(cfg), params), step
