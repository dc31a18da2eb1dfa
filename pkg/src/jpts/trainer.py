"""Training loops for the baseline, jigsaw (jpts) and alternative objectives.

Reconstruction error is the per-sample squared Frobenius norm on normalized
planes, averaged over the batch. The jpts objective mixes it with the
permutation cross-entropy of the head applied to the shuffled input; the
alternative objective mixes it with the reconstruction error of the shuffled
input against the clean target.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .channel import ZERO_LEVEL
from .dataset import TRAIN, VALIDATION
from .errors import ConfigError, DivergenceError
from .jigsaw import PermutationSpec, puzzle_accuracy, puzzle_loss, sample_permutation, shuffle_batch
from .model import decode, encode, init_params, parse_eta, permutation_head
from .optim import AdamState, adam_step

STRATEGIES = ("baseline", "jpts", "alternative")
DIVERGENCE_LIMIT = 1e6
LOG_HEADER = ("epoch", "train_loss", "val_loss", "recon_term", "puzzle_term", "puzzle_acc",
              "seconds")

# order of the child seed streams spawned from cfg.seed
_STREAMS = ("init", "batches", "permutations", "eval")


@dataclass(frozen=True)
class TrainConfig:
    strategy: str = "jpts"
    alpha: float = 0.5
    eta: str = "1/16"
    n: int = 4
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    timing: bool = True  # False writes 0 seconds so logs are byte-reproducible

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        parse_eta(self.eta)
        if self.n not in (4, 9):
            raise ConfigError(f"tile count must be 4 or 9, got {self.n}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch size must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def weight(self):
        """Reconstruction weight actually applied (alpha is moot for baseline)."""
        return 1.0 if self.strategy == "baseline" else float(self.alpha)

    def optimizer(self):
        return AdamState(self.lr, self.beta1, self.beta2, self.eps)


def seed_streams(seed):
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(_STREAMS, children)}


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    recon_term: float
    puzzle_term: float
    puzzle_acc: float | None
    seconds: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def append(self, rec):
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise ConfigError("epochs in a log must be strictly increasing")
        self.records.append(rec)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(LOG_HEADER) + "\n")
        for r in self.records:
            row = [str(r.epoch)] + [_fmt(getattr(r, k)) for k in LOG_HEADER[1:]]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text):
        lines = text.splitlines()
        if not lines or tuple(lines[0].split(",")) != LOG_HEADER:
            raise ConfigError("not a training log: unexpected header")
        log = cls()
        for line in lines[1:]:
            if not line:
                continue
            vals = line.split(",")
            kw = {f.name: (int(v) if f.name == "epoch" else (float(v) if v else None))
                  for f, v in zip(fields(EpochRecord), vals)}
            log.append(EpochRecord(**kw))
        return log


def _fmt(x):
    return "" if x is None else repr(float(x))


def batch_iterator(indices, batch_size, rng):
    """One epoch: a seeded shuffle of ``indices`` cut into batches, short tail kept."""
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    order = np.asarray(indices)[rng.permutation(len(indices))]
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def reconstruction_error(pred, target):
    """Per-sample squared error summed over planes, averaged over the batch."""
    per_sample = int(np.prod(pred.shape[1:]))
    return ad.scale(ad.mse(pred, target), per_sample)


def _shuffled(x, perms, params):
    return shuffle_batch(x, perms, params.grid, fill=ZERO_LEVEL)


def _gradients(loss, params):
    grads = ad.backward(loss)
    return {name: grads.get(p.id, np.zeros_like(p.data)) for name, p in params.tensors.items()}


def baseline_objective(x, params, cfg=None, perms=None):
    """Plain reconstruction objective. Returns (loss tensor, terms)."""
    rec = reconstruction_error(decode(encode(x, params), params), x)
    return rec, {"recon": rec.item(), "puzzle": 0.0, "acc": None}


def jpts_objective(x, params, cfg, perms):
    """alpha * reconstruction(x) + (1 - alpha) * puzzle_loss(head(encode(shuffled x)))."""
    a = cfg.weight
    rec = reconstruction_error(decode(encode(x, params), params), x)
    logits = permutation_head(encode(_shuffled(x, perms, params), params), params)
    pz = puzzle_loss(logits, perms)
    loss = ad.add(ad.scale(rec, a), ad.scale(pz, 1.0 - a))
    return loss, {"recon": rec.item(), "puzzle": pz.item(),
                  "acc": puzzle_accuracy(logits, perms)}


def alternative_objective(x, params, cfg, perms):
    """alpha * reconstruction(x) + (1 - alpha) * reconstruction of x from its shuffle."""
    a = cfg.weight
    rec = reconstruction_error(decode(encode(x, params), params), x)
    rec_s = reconstruction_error(decode(encode(_shuffled(x, perms, params), params), params), x)
    loss = ad.add(ad.scale(rec, a), ad.scale(rec_s, 1.0 - a))
    return loss, {"recon": rec.item(), "puzzle": rec_s.item(), "acc": None}


OBJECTIVES = {"baseline": baseline_objective, "jpts": jpts_objective,
              "alternative": alternative_objective}


def _step(objective, x, params, cfg, perms):
    loss, terms = objective(x, params, cfg, perms)
    return loss.item(), _gradients(loss, params), terms


def baseline_step(x, params, cfg=None):
    """Returns (loss, grads by parameter name, terms)."""
    return _step(baseline_objective, x, params, cfg, None)


def jpts_step(x, params, cfg, perms):
    return _step(jpts_objective, x, params, cfg, perms)


def alternative_step(x, params, cfg, perms):
    return _step(alternative_objective, x, params, cfg, perms)


def training_step(x, params, cfg, perm_rng):
    """Dispatch on strategy, drawing one fresh permutation per sample."""
    perms = None
    if cfg.strategy != "baseline":
        perms = [sample_permutation(cfg.n, perm_rng) for _ in range(len(x))]
    return _step(OBJECTIVES[cfg.strategy], x, params, cfg, perms)


def validation_loss(x, params, batch_size=200):
    total = 0.0
    for start in range(0, len(x), batch_size):
        xb = x[start:start + batch_size]
        total += reconstruction_error(decode(encode(xb, params), params), xb).item() * len(xb)
    return total / len(x)


def train(dataset, cfg, clock=time.perf_counter, progress=None):
    """Train a fresh model on ``dataset``; returns (params, TrainLog).

    ``progress`` is called with each finished EpochRecord.
    """
    train_idx = np.flatnonzero(dataset.splits == TRAIN)
    val_idx = np.flatnonzero(dataset.splits == VALIDATION)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ConfigError("dataset needs nonempty train and validation splits "
                          f"(have {len(train_idx)} train, {len(val_idx)} validation)")
    if cfg.batch_size > len(train_idx):
        raise ConfigError(f"batch size {cfg.batch_size} exceeds {len(train_idx)} training samples")
    if dataset.dims != (32, 32):
        raise ConfigError(f"model expects 32x32 planes, dataset has {dataset.dims}")

    rngs = seed_streams(cfg.seed)
    params = init_params(cfg.eta, cfg.n, seed=cfg.seed, rng=rngs["init"])
    state = cfg.optimizer()
    x_all, _, _ = dataset.normalized()
    x_val = x_all[val_idx]
    log = TrainLog()

    for epoch in range(1, cfg.epochs + 1):
        t0 = clock() if cfg.timing else 0.0
        sums = {"loss": 0.0, "recon": 0.0, "puzzle": 0.0, "acc": 0.0}
        for b, idx in enumerate(batch_iterator(train_idx, cfg.batch_size, rngs["batches"])):
            loss, grads, terms = training_step(x_all[idx], params, cfg, rngs["permutations"])
            if not math.isfinite(loss) or loss > DIVERGENCE_LIMIT:
                raise DivergenceError(f"loss {loss!r} at epoch {epoch}, batch {b}", log=log)
            adam_step(params.tensors, grads, state)
            k = len(idx)
            sums["loss"] += loss * k
            sums["recon"] += terms["recon"] * k
            sums["puzzle"] += terms["puzzle"] * k
            sums["acc"] += (terms["acc"] or 0.0) * k
        m = len(train_idx)
        val = validation_loss(x_val, params)
        if not math.isfinite(val) or val > DIVERGENCE_LIMIT:
            raise DivergenceError(f"validation loss {val!r} at epoch {epoch}", log=log)
        rec = EpochRecord(
            epoch=epoch,
            train_loss=sums["loss"] / m,
            val_loss=val,
            recon_term=sums["recon"] / m,
            puzzle_term=sums["puzzle"] / m,
            puzzle_acc=sums["acc"] / m if cfg.strategy == "jpts" else None,
            seconds=clock() - t0 if cfg.timing else 0.0,
        )
        log.append(rec)
        if progress is not None:
            progress(rec)
    return params, log


def fixed_permutations(s, count):
    """``count`` copies of one permutation, for steps with a fixed shuffle."""
    p = s if isinstance(s, PermutationSpec) else PermutationSpec(tuple(s))
    return [p] * count
