"""Tile split/shuffle and permutation-prediction targets for the jigsaw task.

Tiles are numbered 1..n row-major over a sqrt(n) x sqrt(n) grid. A
permutation ``s`` says which original tile sits at each shuffled position:
position k (0-based) of the shuffled matrix holds tile ``s[k]``. When the
matrix side is not divisible by sqrt(n), padding is appended at the bottom
and right edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractError, ShapeError

SUPPORTED_TILE_COUNTS = (4, 9)


@dataclass(frozen=True)
class TileGrid:
    n: int
    height: int = 32
    width: int = 32

    def __post_init__(self):
        side = math.isqrt(self.n)
        if self.n < 1 or side * side != self.n:
            raise ConfigError(f"tile count must be a perfect square, got {self.n}")

    @property
    def side(self):
        return math.isqrt(self.n)

    @property
    def tile_height(self):
        return -(-self.height // self.side)

    @property
    def tile_width(self):
        return -(-self.width // self.side)

    @property
    def padded_shape(self):
        return self.tile_height * self.side, self.tile_width * self.side

    @property
    def pad(self):
        """Rows added at the bottom and columns added at the right."""
        ph, pw = self.padded_shape
        return ph - self.height, pw - self.width


def pad_to_grid(x, grid, fill=0.0):
    x = np.asarray(x)
    if x.shape[-2:] == grid.padded_shape:
        return x
    if x.shape[-2:] != (grid.height, grid.width):
        raise ShapeError(f"input {x.shape[-2:]} does not match grid {grid.height}x{grid.width}")
    ph, pw = grid.pad
    widths = [(0, 0)] * (x.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(x, widths, constant_values=fill)


def split_tiles(x, grid, fill=0.0):
    """Row-major list of the n tiles of ``x`` (..., H, W), padding with ``fill``."""
    xp = pad_to_grid(x, grid, fill)
    th, tw = grid.tile_height, grid.tile_width
    return [xp[..., r * th:(r + 1) * th, c * tw:(c + 1) * tw]
            for r in range(grid.side) for c in range(grid.side)]


def assemble(tiles, grid):
    """Place tiles row-major into the padded grid."""
    if len(tiles) != grid.n:
        raise ShapeError(f"need {grid.n} tiles, got {len(tiles)}")
    rows = [np.concatenate(tiles[r * grid.side:(r + 1) * grid.side], axis=-1)
            for r in range(grid.side)]
    return np.concatenate(rows, axis=-2)


def reassemble(tiles, grid):
    """Inverse of :func:`split_tiles`: assemble and crop the padding."""
    return assemble(tiles, grid)[..., :grid.height, :grid.width]


@dataclass(frozen=True)
class PermutationSpec:
    s: tuple  # 1-based original tile index at each shuffled position

    def __post_init__(self):
        s = tuple(int(v) for v in self.s)
        object.__setattr__(self, "s", s)
        if sorted(s) != list(range(1, len(s) + 1)):
            raise ContractError(f"not a permutation of 1..{len(s)}: {list(s)}")

    @property
    def n(self):
        return len(self.s)

    @property
    def targets(self):
        """0-based row index that is correct for each column."""
        return np.array(self.s) - 1

    @property
    def onehot(self):
        m = np.zeros((self.n, self.n), dtype=np.int64)
        m[self.targets, np.arange(self.n)] = 1
        return m

    def inverse(self):
        inv = [0] * self.n
        for pos, tile in enumerate(self.s, 1):
            inv[tile - 1] = pos
        return PermutationSpec(tuple(inv))

    @classmethod
    def identity(cls, n):
        return cls(tuple(range(1, n + 1)))


def shuffle_tiles(tiles, perm):
    """Shuffled (padded) matrix with tile ``perm.s[k]`` at position k."""
    if not isinstance(perm, PermutationSpec):
        perm = PermutationSpec(tuple(perm))
    if len(tiles) != perm.n:
        raise ContractError(f"{len(tiles)} tiles but permutation has {perm.n} entries")
    grid = _grid_for_tiles(tiles)
    return assemble([tiles[i - 1] for i in perm.s], grid)


def unshuffle(shuffled, perm, grid):
    """Recover the original tile list from a shuffled padded matrix."""
    placed = split_tiles(shuffled, TileGrid(grid.n, *grid.padded_shape))
    tiles = [None] * perm.n
    for pos, tile in enumerate(perm.s):
        tiles[tile - 1] = placed[pos]
    return tiles


def _grid_for_tiles(tiles):
    side = math.isqrt(len(tiles))
    th, tw = tiles[0].shape[-2:]
    return TileGrid(len(tiles), th * side, tw * side)


def shuffle_batch(x, perms, grid, fill=0.0):
    """Shuffle each sample of ``x`` (B, ..., H, W) by its own permutation."""
    xp = pad_to_grid(x, grid, fill)
    out = np.empty_like(xp)
    th, tw = grid.tile_height, grid.tile_width
    side = grid.side
    for b, perm in enumerate(perms):
        for pos, tile in enumerate(perm.s):
            r, c = divmod(pos, side)
            tr, tc = divmod(tile - 1, side)
            out[b, ..., r * th:(r + 1) * th, c * tw:(c + 1) * tw] = \
                xp[b, ..., tr * th:(tr + 1) * th, tc * tw:(tc + 1) * tw]
    return out


def sample_permutation(n, rng):
    if n not in SUPPORTED_TILE_COUNTS:
        raise ConfigError(f"tile count {n} not supported; choose from {SUPPORTED_TILE_COUNTS}")
    return PermutationSpec(tuple(int(v) + 1 for v in rng.permutation(n)))


def _logits(J):
    z = J.data if isinstance(J, ad.Tensor) else np.asarray(J, dtype=np.float64)
    if z.ndim < 2 or z.shape[-1] != z.shape[-2]:
        raise ShapeError(f"permutation logits must be (..., n, n), got {z.shape}")
    return z


def decode_permutation(J):
    """1-based argmax over rows of each column-softmaxed column.

    np.argmax returns the first maximum, so ties go to the lowest row index.
    """
    z = _logits(J)
    e = np.exp(z - z.max(axis=-2, keepdims=True))
    probs = e / e.sum(axis=-2, keepdims=True)
    return np.argmax(probs, axis=-2) + 1


def _target_array(s):
    if isinstance(s, PermutationSpec):
        return s.targets
    if len(s) and isinstance(s[0], PermutationSpec):
        return np.stack([p.targets for p in s])
    return np.asarray(s) - 1


def puzzle_loss(J, s):
    """Column-wise cross-entropy against the permutation, summed over columns.

    ``J`` is a Tensor of shape (n, n) or (B, n, n); ``s`` is a PermutationSpec
    or a list of them. Batched input is averaged over the batch.
    """
    return ad.column_cross_entropy(J, _target_array(s))


def puzzle_accuracy(J, s):
    decoded = decode_permutation(J)
    return float(np.mean(decoded == _target_array(s) + 1))
