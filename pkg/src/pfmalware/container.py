"""Binary model container shared by the neural and baseline models.

Layout (little-endian)::

    magic           4 bytes ("PFC1" neural, "PFB1" baselines)
    format version  u32
    config length   u32, then that many bytes of UTF-8 "key=value" lines
    blocks, until end of file:
        name length u16, name (UTF-8)
        rank        u32, then rank x u32 dims
        data        prod(dims) x float32
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .exceptions import BadMagic, ShapeMismatch, VersionMismatch

FORMAT_VERSION = 1


def encode_config(config: dict) -> bytes:
    lines = []
    for key, value in config.items():
        value = str(value)
        if "=" in key or "\n" in key or "\n" in value:
            raise ValueError(f"config entry {key!r} cannot be stored as a key=value line")
        lines.append(f"{key}={value}")
    return ("\n".join(lines)).encode("utf-8")


def decode_config(raw: bytes) -> dict:
    config = {}
    for line in raw.decode("utf-8").splitlines():
        if line:
            key, _, value = line.partition("=")
            config[key] = value
    return config


def dumps(magic: bytes, config: dict, blocks: dict) -> bytes:
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    cfg = encode_config(config)
    parts = [magic, struct.pack("<II", FORMAT_VERSION, len(cfg)), cfg]
    for name, arr in blocks.items():
        arr = np.asarray(arr)
        data = np.ascontiguousarray(arr, dtype="<f4")
        if not np.array_equal(data, arr, equal_nan=True):
            raise ValueError(f"block {name!r} is not exactly representable as float32")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(data.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise ShapeMismatch(f"file truncated: need {n} bytes at offset {self.pos}, "
                                f"only {len(self.raw) - self.pos} left")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(raw: bytes, magic: bytes) -> tuple[dict, dict]:
    """Returns ``(config, blocks)``."""
    r = _Reader(bytes(raw))
    if len(raw) < 4 or r.take(4) != magic:
        raise BadMagic(f"expected magic {magic!r}, got {bytes(raw[:4])!r}")
    version, cfg_len = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"container format version {version}, expected {FORMAT_VERSION}")
    config = decode_config(r.take(cfg_len))
    blocks = {}
    while r.pos < len(r.raw):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<I")
        dims = r.unpack(f"<{rank}I")
        count = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(r.take(4 * count), dtype="<f4").astype(np.float32)
        blocks[name] = data.reshape(dims)
    return config, blocks


def write(path, magic: bytes, config: dict, blocks: dict) -> None:
    Path(path).write_bytes(dumps(magic, config, blocks))


def read(path, magic: bytes) -> tuple[dict, dict]:
    return loads(Path(path).read_bytes(), magic)


def check_shapes(blocks: dict, expected: dict) -> None:
    missing = set(expected) - set(blocks)
    if missing:
        raise ShapeMismatch(f"missing blocks: {sorted(missing)}")
    for name, shape in expected.items():
        if tuple(blocks[name].shape) != tuple(shape):
            raise ShapeMismatch(f"block {name!r} has shape {blocks[name].shape}, expected {shape}")
