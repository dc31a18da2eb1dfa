"""CSI datasets and their on-disk formats.

A dataset holds raw (de-normalized) truncated angular-delay planes as float32
plus a split tag per sample. Normalization into [0, 1] is recomputed from the
raw values on load, so the stored planes alone determine every sample.

CSID layout (little-endian)::

    b"CSID" | u32 version=1 | u32 count | u32 planes=2 | u32 h | u32 w
    | u8 split tag x count | f32 data (sample, plane, row, col)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import ZERO_LEVEL, ChannelConfig, CsiMatrix, synth_raw_samples
from .errors import (BadMagicError, ConfigError, FormatError, TruncatedFileError,
                     VersionMismatchError)

MAGIC = b"CSID"
VERSION = 1
HEADER = struct.Struct("<4sIIIII")

TRAIN, VALIDATION, TEST = 0, 1, 2
SPLITS = {"train": TRAIN, "validation": VALIDATION, "test": TEST}

FLAT_SAMPLE = 2 * 32 * 32


@dataclass
class Dataset:
    raw: np.ndarray      # (N, 2, h, w) float32
    splits: np.ndarray   # (N,) uint8

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float32)
        self.splits = np.asarray(self.splits, dtype=np.uint8)
        if self.raw.ndim != 4 or self.raw.shape[1] != 2:
            raise ConfigError(f"raw planes must be (N, 2, h, w), got {self.raw.shape}")
        if self.splits.shape != (self.raw.shape[0],):
            raise ConfigError("need exactly one split tag per sample")
        if np.any(self.splits > TEST):
            raise ConfigError("split tags must be 0 (train), 1 (validation) or 2 (test)")

    def __len__(self):
        return self.raw.shape[0]

    @property
    def dims(self):
        return self.raw.shape[2], self.raw.shape[3]

    def indices(self, split):
        return np.flatnonzero(self.splits == _split_tag(split))

    def normalized(self, idx=None):
        """Normalized planes plus per-sample (offset, scale) for ``idx``."""
        raw = self.raw if idx is None else self.raw[idx]
        return normalize_batch(raw)

    def samples(self, split=None):
        idx = np.arange(len(self)) if split is None else self.indices(split)
        return [CsiMatrix.from_raw(self.raw[i]) for i in idx]


def _split_tag(split):
    if isinstance(split, str):
        try:
            return SPLITS[split]
        except KeyError:
            raise ConfigError(f"unknown split {split!r}; choose from {sorted(SPLITS)}") from None
    return int(split)


def normalize_batch(raw):
    """Vectorized :meth:`CsiMatrix.from_raw` over a leading sample axis."""
    raw = np.asarray(raw, dtype=np.float64)
    axes = tuple(range(1, raw.ndim))
    lo = raw.min(axis=axes)
    hi = raw.max(axis=axes)
    peak = np.abs(raw).max(axis=axes)
    flat = lo == hi
    offset = np.where(flat, lo - ZERO_LEVEL, -peak)
    scale = np.where(flat, 1.0, 2.0 * peak)
    shape = (-1,) + (1,) * len(axes)
    x = (raw - offset.reshape(shape)) / scale.reshape(shape)
    return x, offset, scale


def assign_splits(count, weights=(5, 1, 1)):
    """Contiguous train/validation/test tags in the given proportions."""
    total = sum(weights)
    n_train = count * weights[0] // total
    n_val = count * weights[1] // total
    tags = np.full(count, TEST, dtype=np.uint8)
    tags[:n_train] = TRAIN
    tags[n_train:n_train + n_val] = VALIDATION
    return tags


def synth_dataset(cfg=None, counts=(2000, 400, 400)):
    cfg = cfg or ChannelConfig()
    n_train, n_val, n_test = counts
    raw = synth_raw_samples(cfg, n_train + n_val + n_test).astype(np.float32)
    tags = np.concatenate([np.full(n, tag, dtype=np.uint8)
                           for n, tag in zip(counts, (TRAIN, VALIDATION, TEST))])
    return Dataset(raw, tags)


def encode_dataset(ds):
    n = len(ds)
    h, w = ds.dims
    head = HEADER.pack(MAGIC, VERSION, n, 2, h, w)
    return head + ds.splits.tobytes() + ds.raw.astype("<f4").tobytes()


def decode_dataset(buf):
    buf = memoryview(buf)
    if len(buf) < 4 or bytes(buf[:4]) != MAGIC:
        raise BadMagicError("not a CSID dataset: bad magic", offset=0)
    if len(buf) < HEADER.size:
        raise TruncatedFileError(f"header needs {HEADER.size} bytes, file has {len(buf)}",
                                 offset=len(buf))
    _, version, count, planes, h, w = HEADER.unpack(buf[:HEADER.size])
    if version != VERSION:
        raise VersionMismatchError(f"unsupported dataset version {version}", offset=4)
    if planes != 2:
        raise FormatError(f"expected 2 planes, header says {planes}", offset=12)
    pos = HEADER.size
    need = pos + count + count * planes * h * w * 4
    if len(buf) < need:
        raise TruncatedFileError(f"expected {need} bytes for {count} samples, file has {len(buf)}",
                                 offset=len(buf))
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after sample data", offset=need)
    tags = np.frombuffer(buf[pos:pos + count], dtype=np.uint8).copy()
    if np.any(tags > TEST):
        bad = int(np.flatnonzero(tags > TEST)[0])
        raise FormatError(f"invalid split tag {tags[bad]} for sample {bad}", offset=pos + bad)
    pos += count
    raw = np.frombuffer(buf[pos:need], dtype="<f4").astype(np.float32).reshape(count, planes, h, w)
    return Dataset(raw, tags)


def write_dataset(path, ds):
    Path(path).write_bytes(encode_dataset(ds))


def read_dataset(path):
    return decode_dataset(Path(path).read_bytes())


def import_flat_samples(path, count, split="auto"):
    """Read ``count`` samples of 2048 float32 LE values each.

    Each vector is plane-major: values [0, 1024) are the real plane and
    [1024, 2048) the imaginary plane, both row-major 32 x 32. ``split`` is a
    split name applied to every sample, or ``"auto"`` for a contiguous 5:1:1
    train/validation/test partition.
    """
    buf = Path(path).read_bytes()
    expected = count * FLAT_SAMPLE * 4
    if len(buf) != expected:
        raise FormatError(f"flat sample file has {len(buf)} bytes, expected {expected} "
                          f"for {count} samples of {FLAT_SAMPLE} float32 values")
    raw = np.frombuffer(buf, dtype="<f4").astype(np.float32).reshape(count, 2, 32, 32)
    if split == "auto":
        tags = assign_splits(count)
    else:
        tags = np.full(count, _split_tag(split), dtype=np.uint8)
    return Dataset(raw, tags)
