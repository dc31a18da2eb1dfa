"""Synthetic sparse multipath CSI and the angular-delay transform.

The spatial-frequency channel of one user is a sum of paths, each a complex
gain times a delay phase ramp over subcarriers times a ULA steering vector
over antennas. A 2-D unitary DFT moves it to the angular-delay domain, where
only the first ``nt`` delay rows are kept.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ShapeError

ZERO_LEVEL = 0.5  # normalized value of a raw zero


@dataclass(frozen=True)
class ChannelConfig:
    """Parameters of the clustered multipath generator.

    ``delay_spread`` is the fraction of the ``nc`` delay taps that path delays
    are drawn from. ``pdp_decay`` is the e-folding length, in taps, of the
    exponential power-delay profile (``None`` for a flat profile).
    ``spacing`` is the antenna spacing in wavelengths.
    """

    nt: int = 32
    nc: int = 1024
    path_count: tuple = (8, 20)
    delay_spread: float = 1 / 32
    pdp_decay: float | None = 4.0
    spacing: float = 0.25
    anchor_first_arrival: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.nt < 1:
            raise ConfigError(f"nt must be >= 1, got {self.nt}")
        if self.nc < self.nt:
            raise ConfigError(f"nc ({self.nc}) must be >= nt ({self.nt}) for truncation")
        lo, hi = self.path_count
        if not 1 <= lo <= hi:
            raise ConfigError(f"path count range must satisfy 1 <= lo <= hi, got {self.path_count}")
        if not 0 < self.delay_spread <= 1:
            raise ConfigError(f"delay_spread must be in (0, 1], got {self.delay_spread}")
        if self.delay_taps < 1:
            raise ConfigError("delay_spread * nc must cover at least one tap")
        if self.pdp_decay is not None and self.pdp_decay <= 0:
            raise ConfigError(f"pdp_decay must be positive, got {self.pdp_decay}")
        if self.spacing <= 0:
            raise ConfigError(f"spacing must be positive, got {self.spacing}")

    @property
    def delay_taps(self):
        return int(self.delay_spread * self.nc)


PRESETS = {
    "indoor": ChannelConfig(),
    "outdoor": ChannelConfig(path_count=(3, 12), delay_spread=1 / 16, pdp_decay=8.0),
}


def preset(name, **overrides):
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(base, **overrides)


def multipath_channel(delays, angles, gains, nt=32, nc=1024, spacing=0.25):
    """Spatial-frequency channel ``H`` (nc x nt) for explicit path parameters.

    Row k is the conjugate transpose of the subcarrier-k channel vector, so a
    path with delay ``d`` taps lands in delay row ``d`` after the transform.
    """
    delays = np.asarray(delays, dtype=np.float64)
    angles = np.asarray(angles, dtype=np.float64)
    gains = np.asarray(gains, dtype=np.complex128)
    k = np.arange(nc)[:, None]
    m = np.arange(nt)[:, None]
    ramps = np.exp(-2j * np.pi * k * delays[None, :] / nc)            # nc x P
    steer = np.exp(-2j * np.pi * spacing * m * np.sin(angles)[None, :])  # nt x P
    h = (ramps * gains[None, :]) @ steer.T
    return h.conj()


def synth_spatial_channel(cfg, rng):
    """Draw random path parameters from ``cfg`` and build ``H``."""
    lo, hi = cfg.path_count
    count = int(rng.integers(lo, hi + 1))
    delays = rng.integers(0, cfg.delay_taps, size=count)
    if cfg.anchor_first_arrival:
        delays = delays - delays.min()
    angles = rng.uniform(-np.pi / 2, np.pi / 2, size=count)
    gains = (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / np.sqrt(2)
    if cfg.pdp_decay is not None:
        gains = gains * np.exp(-delays / (2.0 * cfg.pdp_decay))
    return multipath_channel(delays, angles, gains, cfg.nt, cfg.nc, cfg.spacing)


def to_angular_delay(H):
    """Unitary 2-D DFT: F_c @ H @ F_t^H."""
    H = np.asarray(H)
    if H.ndim != 2:
        raise ShapeError(f"expected an (nc, nt) matrix, got shape {H.shape}")
    return np.fft.ifft(np.fft.fft(H, axis=0, norm="ortho"), axis=1, norm="ortho")


def from_angular_delay(Hp):
    """Inverse of :func:`to_angular_delay`: F_c^H @ H' @ F_t."""
    Hp = np.asarray(Hp)
    if Hp.ndim != 2:
        raise ShapeError(f"expected an (nc, nt) matrix, got shape {Hp.shape}")
    return np.fft.fft(np.fft.ifft(Hp, axis=0, norm="ortho"), axis=1, norm="ortho")


@dataclass
class CsiMatrix:
    """Normalized real/imag planes of a truncated angular-delay matrix.

    ``raw = planes * scale + offset``. Zero maps to 0.5 and the largest
    magnitude to 0 or 1.
    """

    planes: np.ndarray
    offset: float
    scale: float

    @classmethod
    def from_raw(cls, raw):
        raw = np.asarray(raw, dtype=np.float64)
        lo, hi = raw.min(), raw.max()
        if lo == hi:
            # degenerate: the constant maps to the zero level
            offset, scale = lo - ZERO_LEVEL, 1.0
        else:
            peak = float(np.abs(raw).max())
            offset, scale = -peak, 2.0 * peak
        return cls((raw - offset) / scale, float(offset), float(scale))

    def denormalize(self):
        return self.planes * self.scale + self.offset

    def to_complex(self):
        raw = self.denormalize()
        return raw[0] + 1j * raw[1]


def truncate(Hp, nt):
    """Keep the first ``nt`` delay rows as a (2, nt, nt) real/imag array."""
    Hp = np.asarray(Hp)
    if Hp.ndim != 2 or Hp.shape[0] < nt or Hp.shape[1] != nt:
        raise ShapeError(f"cannot truncate {Hp.shape} to {nt} rows of width {nt}")
    kept = Hp[:nt]
    return np.stack([kept.real, kept.imag])


def truncate_and_normalize(Hp, nt):
    return CsiMatrix.from_raw(truncate(Hp, nt))


def retained_energy(Hp, nt):
    Hp = np.asarray(Hp)
    return float(np.sum(np.abs(Hp[:nt]) ** 2) / np.sum(np.abs(Hp) ** 2))


def synth_raw_samples(cfg, count):
    """Truncated angular-delay planes for ``count`` users, shape (count, 2, nt, nt).

    Sample i uses its own child stream of ``cfg.seed`` so samples can be
    generated independently and in any order.
    """
    streams = np.random.SeedSequence(cfg.seed).spawn(count)
    out = np.empty((count, 2, cfg.nt, cfg.nt))
    for i, ss in enumerate(streams):
        H = synth_spatial_channel(cfg, np.random.default_rng(ss))
        out[i] = truncate(to_angular_delay(H), cfg.nt)
    return out
