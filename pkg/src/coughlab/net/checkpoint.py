"""Versioned checkpoint container.

Layout::

    8s   magic  b"CLCKPT\\0\\0"
    u32  format version
    u32  header length N
    N    UTF-8 JSON header: network config, metadata, array manifest
    ...  arrays as little-endian float64, manifest order
    32s  SHA-256 over everything above
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointIntegrityError, CheckpointShapeError, CheckpointVersionError, ConfigError
from .params import NetworkConfig, NetworkParams, check_shapes

MAGIC = b"CLCKPT\x00\x00"
VERSION = 1
_PREFIX = struct.Struct("<8sII")
_DIGEST = 32


@dataclass
class Checkpoint:
    params: NetworkParams
    config: NetworkConfig
    meta: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __iter__(self):
        # allows ``params, cfg = load_checkpoint(path)``
        return iter((self.params, self.config))


def save_checkpoint(params: NetworkParams, cfg: NetworkConfig, path, meta: dict | None = None,
                    extra: dict | None = None) -> None:
    problems = check_shapes(params, cfg)
    if problems:
        raise ConfigError("parameters do not match config: " + "; ".join(problems))
    arrays = [("param", k, v) for k, v in params.arrays.items()]
    arrays += [("extra", k, np.asarray(v, dtype=np.float64)) for k, v in (extra or {}).items()]
    header = {
        "config": cfg.to_dict(),
        "meta": meta or {},
        "arrays": [{"group": g, "name": k, "shape": list(v.shape)} for g, k, v in arrays],
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = bytearray(_PREFIX.pack(MAGIC, VERSION, len(hbytes)))
    body += hbytes
    for _, _, v in arrays:
        body += np.ascontiguousarray(v, dtype="<f8").tobytes()
    body += hashlib.sha256(body).digest()
    Path(path).write_bytes(bytes(body))


def load_checkpoint(path) -> Checkpoint:
    buf = Path(path).read_bytes()
    if len(buf) < _PREFIX.size + _DIGEST:
        raise CheckpointIntegrityError(f"{path}: file too short to be a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise CheckpointIntegrityError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: unknown checkpoint version {version}")
    body, digest = buf[:-_DIGEST], buf[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointIntegrityError(f"{path}: checksum mismatch (truncated or corrupted)")

    pos = _PREFIX.size
    try:
        header = json.loads(body[pos : pos + hlen].decode("utf-8"))
        cfg = NetworkConfig(**header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointIntegrityError(f"{path}: unreadable header: {exc}") from exc
    pos += hlen

    params, extra = {}, {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) * 8
        if pos + n > len(body):
            raise CheckpointShapeError(f"{path}: array {spec['name']} overruns the payload")
        arr = np.frombuffer(body[pos : pos + n], dtype="<f8").reshape(shape).astype(np.float64)
        (params if spec["group"] == "param" else extra)[spec["name"]] = arr
        pos += n
    if pos != len(body):
        raise CheckpointShapeError(f"{path}: {len(body) - pos} unexplained trailing bytes")

    net_params = NetworkParams(params)
    problems = check_shapes(net_params, cfg)
    if problems:
        raise CheckpointShapeError(f"{path}: " + "; ".join(problems))
    return Checkpoint(net_params, cfg, header.get("meta", {}), extra)
