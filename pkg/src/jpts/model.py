"""Reference CSI autoencoder with a permutation head.

encoder: center at the zero level -> 3x3 conv (2->2) -> leaky ReLU -> flatten
         -> dense to the codeword (length v)
decoder: dense v -> 2*32*32 -> reshape -> 2 residual refine blocks
         (3x3 convs 2->8->16->2) -> sigmoid
head:    dense v -> n*n logits, used only while training

The codeword length follows v = eta * 2 * nt * nt.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import autodiff as ad
from .channel import ZERO_LEVEL
from .checkpoint import (config_path, format_config, parse_config, read_checkpoint,
                         write_checkpoint)
from .errors import ConfigError, FormatError, ShapeError
from .jigsaw import TileGrid, pad_to_grid

ARCH_VERSION = 1
SUPPORTED_ETAS = tuple(Fraction(1, d) for d in (4, 8, 16, 32, 64))
REFINE_CHANNELS = (2, 8, 16, 2)


def parse_eta(value):
    try:
        eta = Fraction(value).limit_denominator(1024) if not isinstance(value, str) \
            else Fraction(value.strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse compression ratio {value!r}") from None
    if eta not in SUPPORTED_ETAS:
        raise ConfigError(f"compression ratio {eta} not supported; "
                          f"choose from {', '.join(map(str, SUPPORTED_ETAS))}")
    return eta


def codeword_length(eta, nt=32):
    v = parse_eta(eta) * 2 * nt * nt
    if v.denominator != 1 or v < 1:
        raise ConfigError(f"eta={eta} gives a non-integer codeword length for nt={nt}")
    return int(v)


def _param_shapes(v, n, nt, side):
    shapes = {
        "enc.conv.w": (2, 2, 3, 3),
        "enc.conv.b": (2,),
        "enc.fc.w": (2 * side * side, v),
        "enc.fc.b": (v,),
        "dec.fc.w": (v, 2 * nt * nt),
        "dec.fc.b": (2 * nt * nt,),
    }
    for block in (1, 2):
        for i, (cin, cout) in enumerate(zip(REFINE_CHANNELS, REFINE_CHANNELS[1:]), 1):
            shapes[f"dec.refine{block}.conv{i}.w"] = (cout, cin, 3, 3)
            shapes[f"dec.refine{block}.conv{i}.b"] = (cout,)
    shapes["head.w"] = (v, n * n)
    shapes["head.b"] = (n * n,)
    return shapes


@dataclass
class ModelParams:
    eta: Fraction
    n: int = 4
    nt: int = 32
    seed: int = 0
    tensors: dict = field(default_factory=dict)

    @property
    def v(self):
        return codeword_length(self.eta, self.nt)

    @property
    def grid(self):
        return TileGrid(self.n, self.nt, self.nt)

    @property
    def input_side(self):
        """Encoder input side: the matrix padded to the tile grid."""
        return self.grid.padded_shape[0]

    def group(self, prefix):
        return {k: t for k, t in self.tensors.items() if k.startswith(prefix)}

    @property
    def encoder(self):
        return self.group("enc.")

    @property
    def decoder(self):
        return self.group("dec.")

    @property
    def head(self):
        return self.group("head.")

    def arrays(self):
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def config(self):
        return {"eta": str(self.eta), "v": self.v, "n": self.n,
                "arch-version": ARCH_VERSION, "seed": self.seed}

    def expected_shapes(self):
        return _param_shapes(self.v, self.n, self.nt, self.input_side)


def init_params(eta, n=4, seed=0, nt=32, rng=None):
    """Weights uniform in +-1/sqrt(fan_in), biases zero.

    Draws from ``rng`` when given, else from a generator seeded with ``seed``.
    """
    params = ModelParams(parse_eta(eta), n, nt, seed)
    rng = np.random.default_rng(seed) if rng is None else rng
    for name, shape in params.expected_shapes().items():
        if name.endswith(".b"):
            data = np.zeros(shape)
        else:
            fan_in = shape[0] if len(shape) == 2 else int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        params.tensors[name] = ad.parameter(data, name)
    return params


def _as_batch(x, ndim):
    single = x.ndim == ndim - 1
    return (x[None] if single else x), single


def encoder_input(x, params):
    """Pad to the encoder's grid with the zero level and center on it."""
    x = np.asarray(x, dtype=np.float64)
    x, _ = _as_batch(x, 4)
    if x.ndim != 4 or x.shape[1] != 2:
        raise ShapeError(f"encoder input must be (2, h, w) or (B, 2, h, w), got {x.shape}")
    x = pad_to_grid(x, params.grid, fill=ZERO_LEVEL)
    return x - ZERO_LEVEL


def encode(x, params):
    """Codeword tensor, shape (v,) for one sample or (B, v) for a batch."""
    single = np.ndim(x) == 3
    enc = params.encoder
    w = enc.get("enc.fc.w")
    if w is None or w.shape[1] != params.v:
        raise ConfigError(f"encoder is not configured for codeword length {params.v}")
    xc = ad.Tensor(encoder_input(x, params))
    h = ad.leaky_relu(ad.conv2d(xc, enc["enc.conv.w"], enc["enc.conv.b"]))
    h = ad.reshape(h, (h.shape[0], -1))
    c = ad.add(ad.matmul(h, w), enc["enc.fc.b"])
    return ad.reshape(c, (params.v,)) if single else c


def _codeword_batch(c, params):
    c = ad.as_tensor(c)
    single = c.data.ndim == 1
    if c.shape[-1] != params.v or c.data.ndim not in (1, 2):
        raise ShapeError(f"codeword must have length {params.v}, got shape {c.shape}")
    return (ad.reshape(c, (1, params.v)) if single else c), single


def _refine(h, t, block):
    p = f"dec.refine{block}."
    y = ad.leaky_relu(ad.conv2d(h, t[p + "conv1.w"], t[p + "conv1.b"]))
    y = ad.leaky_relu(ad.conv2d(y, t[p + "conv2.w"], t[p + "conv2.b"]))
    y = ad.conv2d(y, t[p + "conv3.w"], t[p + "conv3.b"])
    return ad.leaky_relu(ad.add(h, y))


def decode(c, params):
    """Reconstructed normalized planes in [0, 1]."""
    c, single = _codeword_batch(c, params)
    t = params.decoder
    h = ad.add(ad.matmul(c, t["dec.fc.w"]), t["dec.fc.b"])
    h = ad.reshape(h, (c.shape[0], 2, params.nt, params.nt))
    h = _refine(h, t, 1)
    h = _refine(h, t, 2)
    out = ad.sigmoid(h)
    return ad.reshape(out, out.shape[1:]) if single else out


def permutation_head(c, params):
    """n x n permutation logits (rows: original tile, columns: position)."""
    c, single = _codeword_batch(c, params)
    t = params.head
    j = ad.add(ad.matmul(c, t["head.w"]), t["head.b"])
    shape = (params.n, params.n) if single else (c.shape[0], params.n, params.n)
    return ad.reshape(j, shape)


def compress(x, params):
    """Deployed UE-side path: exactly v reals per sample, no head involved."""
    deployed = ModelParams(params.eta, params.n, params.nt, params.seed, dict(params.encoder))
    return encode(x, deployed).data.copy()


def reconstruct(x, params, batch_size=200):
    """decode(encode(x)) as a numpy array, evaluated in chunks."""
    x = np.asarray(x, dtype=np.float64)
    xb, single = _as_batch(x, 4)
    out = np.concatenate([decode(encode(xb[i:i + batch_size], params), params).data
                          for i in range(0, len(xb), batch_size)]) if len(xb) else \
        np.empty((0, 2, params.nt, params.nt))
    return out[0] if single else out


def save_model(path, params, extra=None):
    write_checkpoint(path, params.arrays())
    cfg = params.config()
    cfg.update(extra or {})
    config_path(path).write_text(format_config(cfg))


def load_model(path):
    """Load a checkpoint and its config block; returns (params, config dict)."""
    cfg_file = config_path(path)
    cfg = parse_config(cfg_file.read_text())
    try:
        params = ModelParams(parse_eta(cfg["eta"]), int(cfg["n"]), seed=int(cfg.get("seed", 0)))
        arch = int(cfg["arch-version"])
        v = int(cfg["v"])
    except KeyError as exc:
        raise ConfigError(f"model config lacks key {exc}") from None
    if arch != ARCH_VERSION:
        raise ConfigError(f"checkpoint architecture version {arch} != {ARCH_VERSION}")
    if v != params.v:
        raise ConfigError(f"config says v={v} but eta={params.eta} implies v={params.v}")
    arrays = read_checkpoint(path)
    expected = params.expected_shapes()
    if set(arrays) != set(expected):
        raise FormatError(f"checkpoint tensors {sorted(set(arrays) ^ set(expected))} "
                          "do not match the reference architecture")
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise FormatError(f"tensor {name} has shape {arrays[name].shape}, expected {shape}")
        params.tensors[name] = ad.parameter(arrays[name], name)
    return params, cfg
