"""Parameter checkpoints ("JPTW" binary) and the key=value model config block.

Layout, all integers u32 little-endian::

    b"JPTW" | version=1 | tensor count
    per tensor: name length | name (utf-8) | rank | dims... | f64 LE data
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagicError, FormatError, TruncatedFileError, VersionMismatchError

MAGIC = b"JPTW"
VERSION = 1


def encode_checkpoint(tensors):
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def decode_checkpoint(buf):
    buf = memoryview(buf)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise TruncatedFileError(f"checkpoint truncated while reading {what}", offset=pos)
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise BadMagicError("not a JPTW checkpoint: bad magic", offset=0)
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise VersionMismatchError(f"unsupported checkpoint version {version}", offset=4)
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = bytes(take(name_len, "name")).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        n = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(take(8 * n, f"data of {name}"), dtype="<f8")
        tensors[name] = data.astype(np.float64).reshape(dims)
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after last tensor", offset=pos)
    return tensors


def write_checkpoint(path, tensors):
    Path(path).write_bytes(encode_checkpoint(tensors))


def read_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())


def config_path(ckpt_path):
    p = Path(ckpt_path)
    return p.with_name(p.name + ".cfg")


def format_config(cfg):
    return "".join(f"{k}={v}\n" for k, v in cfg.items())


def parse_config(text):
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"config line {lineno} is not key=value: {line!r}")
        cfg[key.strip()] = value.strip()
    return cfg
