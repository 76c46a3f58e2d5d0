"""Binary checkpoint format for NetParams.

Layout (all integers little-endian)::

    magic        8 bytes  b"PDQPNET\\0"
    version      u32      1
    config_len   u64
    config       UTF-8 JSON, sorted keys, compact separators
    num_tensors  u32
    per tensor:  name_len u16, name UTF-8, ndim u8, shape ndim x u64
    blob         every tensor flattened in C order, f64 little-endian, in
                 directory order

The config block holds the NetConfig fields and ``direct_steps``. Writing the
same parameters twice gives byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .net import NetConfig, NetParams, param_shapes

MAGIC = b"PDQPNET\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _config_dict(params: NetParams) -> dict:
    c = params.config
    return {"layers": c.layers, "width": c.width, "mlp_hidden": c.mlp_hidden,
            "mlp_depth": c.mlp_depth, "direct_steps": bool(params.direct_steps)}


def to_bytes(params: NetParams) -> bytes:
    cfg = json.dumps(_config_dict(params), sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(cfg)), cfg, struct.pack("<I", len(params.tensors))]
    for name, arr in params.tensors.items():
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    parts.append(params.flat().astype("<f8").tobytes())
    return b"".join(parts)


def from_bytes(data: bytes) -> NetParams:
    try:
        if data[:8] != MAGIC:
            raise CheckpointError("not a checkpoint (bad magic)")
        version, cfg_len = struct.unpack_from("<IQ", data, 8)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 20
        cfg = json.loads(data[pos:pos + cfg_len].decode())
        pos += cfg_len
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        directory = []
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + nlen].decode()
            pos += nlen
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}Q", data, pos)
            pos += 8 * ndim
            directory.append((name, tuple(int(s) for s in shape)))
        total = sum(int(np.prod(s, dtype=np.int64)) for _, s in directory)
        blob = np.frombuffer(data, dtype="<f8", count=total, offset=pos)
        if pos + 8 * total != len(data):
            raise CheckpointError("trailing or missing bytes after the tensor blob")
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc

    config = NetConfig(cfg["layers"], cfg["width"], cfg["mlp_hidden"], cfg["mlp_depth"])
    expected = param_shapes(config)
    if [n for n, _ in directory] != list(expected):
        raise CheckpointError("tensor directory does not match the config")
    tensors, off = {}, 0
    for name, shape in directory:
        if shape != expected[name]:
            raise CheckpointError(f"{name}: shape {shape} does not match config {expected[name]}")
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = blob[off:off + size].astype(np.float64).reshape(shape)
        off += size
    return NetParams(config, tensors, bool(cfg.get("direct_steps", False)))


def save_checkpoint(params: NetParams, path) -> None:
    Path(path).write_bytes(to_bytes(params))


def load_checkpoint(path) -> NetParams:
    return from_bytes(Path(path).read_bytes())
