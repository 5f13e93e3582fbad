"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"SCGU"                 magic
    u32 version             currently 1
    u32 header_len
    header_len bytes        UTF-8 JSON: {"config": UNetConfig fields,
                            "arrays": [[name, shape], ...],
                            "adam": {lr, beta1, beta2, eps, t} | null}
    float32 LE data         every array of "arrays", C order, header order
    u32 crc32               zlib CRC32 of every preceding byte

Array order is: model parameters, batch-norm buffers, then (when an Adam
state is stored) ``adam.m.<name>`` and ``adam.v.<name>`` for every parameter.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .optim import AdamState
from .unet import UNetConfig, UNetModel

MAGIC = b"SCGU"
VERSION = 1


def checkpoint_bytes(model: UNetModel, state: AdamState | None = None) -> bytes:
    arrays = model.state_arrays()
    adam = None
    if state is not None:
        adam = {"lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
                "eps": state.eps, "t": state.t}
        for name in model.params:
            arrays[f"adam.m.{name}"] = state.m.get(name, np.zeros_like(model.params[name]))
        for name in model.params:
            arrays[f"adam.v.{name}"] = state.v.get(name, np.zeros_like(model.params[name]))
    header = {
        "config": model.config.to_dict(),
        "arrays": [[name, list(a.shape)] for name, a in arrays.items()],
        "adam": adam,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(hbytes)), hbytes]
    parts.extend(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays.values())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(model: UNetModel, state: AdamState | None, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(model, state))
    return path


def parse_checkpoint(blob: bytes) -> tuple[UNetModel, AdamState | None]:
    if len(blob) < 16:
        raise CheckpointError("checkpoint truncated")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) != crc:
        raise CheckpointError("checkpoint CRC mismatch (truncated or corrupted file)")
    try:
        header = json.loads(blob[12:12 + hlen].decode("utf-8"))
        config = UNetConfig(**header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    offset = 12 + hlen
    arrays = {}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        end = offset + 4 * n
        if end > len(blob) - 4:
            raise CheckpointError("checkpoint truncated")
        arrays[name] = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape).astype(np.float32)
        offset = end
    if offset != len(blob) - 4:
        raise CheckpointError("trailing bytes in checkpoint")
    probe = UNetModel.initialize(config, rng=0)
    try:
        params = {k: arrays[k] for k in probe.params}
        buffers = {k: arrays[k] for k in probe.buffers}
    except KeyError as exc:
        raise CheckpointError(f"checkpoint lacks array {exc}") from exc
    model = UNetModel(config, params, buffers, dtype=np.float32)
    state = None
    if header.get("adam") is not None:
        a = header["adam"]
        state = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], t=a["t"])
        state.m = {k: arrays[f"adam.m.{k}"].copy() for k in params}
        state.v = {k: arrays[f"adam.v.{k}"].copy() for k in params}
    return model, state


def load_checkpoint(path) -> tuple[UNetModel, AdamState | None]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return parse_checkpoint(blob)
