"""NMSE evaluation, alpha sweeps and strategy comparisons."""

from __future__ import annotations

import io
import math
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ZERO_LEVEL, CsiMatrix
from .errors import ConfigError, ContractError
from .jigsaw import puzzle_accuracy, sample_permutation, shuffle_batch
from .model import encode, permutation_head, reconstruct
from .trainer import seed_streams, train

EXACT = "exact"
REPORT_HEADER = ("strategy", "eta", "alpha", "n", "seed", "nmse_db", "puzzle_acc", "sample_count")


def _raw(x):
    if isinstance(x, CsiMatrix):
        return x.denormalize()
    return np.asarray(x)


def nmse_db(originals, reconstructions):
    """10*log10 of the mean per-sample ratio ||H - H_hat||^2 / ||H||^2.

    Inputs are sequences of raw-scale samples (arrays of any shape, real or
    complex, or CsiMatrix objects which are de-normalized first). Returns
    -inf when every reconstruction is exact.
    """
    if len(originals) != len(reconstructions):
        raise ContractError(f"{len(originals)} originals but {len(reconstructions)} reconstructions")
    if len(originals) == 0:
        raise ContractError("nmse_db needs at least one sample")
    ratios = np.empty(len(originals))
    for i, (h, hh) in enumerate(zip(originals, reconstructions)):
        h, hh = _raw(h), _raw(hh)
        if h.shape != hh.shape:
            raise ContractError(f"sample {i}: shape {h.shape} vs reconstruction {hh.shape}")
        power = np.sum(np.abs(h) ** 2)
        if power == 0:
            raise ContractError(f"sample {i} is all zeros; NMSE is undefined")
        ratios[i] = np.sum(np.abs(h - hh) ** 2) / power
    mean = ratios.mean()
    return -math.inf if mean == 0 else 10.0 * math.log10(mean)


@dataclass
class ReportRow:
    strategy: str
    eta: str
    alpha: float
    n: int
    seed: int
    nmse_db: float
    puzzle_acc: float | None
    sample_count: int


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    logs: list = field(default_factory=list)  # training logs, not serialized

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        return isinstance(other, EvalReport) and self.rows == other.rows

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(REPORT_HEADER) + "\n")
        for r in self.rows:
            nm = EXACT if r.nmse_db == -math.inf else repr(float(r.nmse_db))
            acc = "" if r.puzzle_acc is None else repr(float(r.puzzle_acc))
            buf.write(f"{r.strategy},{r.eta},{float(r.alpha)!r},{r.n},{r.seed},{nm},{acc},"
                      f"{r.sample_count}\n")
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text):
        lines = text.splitlines()
        if not lines or tuple(lines[0].split(",")) != REPORT_HEADER:
            raise ConfigError("not an evaluation report: unexpected header")
        rows = []
        for line in lines[1:]:
            if not line:
                continue
            s, eta, alpha, n, seed, nm, acc, count = line.split(",")
            rows.append(ReportRow(s, eta, float(alpha), int(n), int(seed),
                                  -math.inf if nm == EXACT else float(nm),
                                  float(acc) if acc else None, int(count)))
        return cls(rows)


def evaluate(params, dataset, split="test", strategy="jpts", alpha=0.5, seed=0):
    """Reconstruction NMSE (raw scale) over one split, plus puzzle accuracy
    on freshly shuffled inputs when the model was trained with the head."""
    if dataset.dims != (params.nt, params.nt):
        raise ConfigError(f"model expects {params.nt}x{params.nt} planes, "
                          f"dataset has {dataset.dims[0]}x{dataset.dims[1]}")
    idx = dataset.indices(split)
    if len(idx) == 0:
        raise ConfigError(f"split {split!r} is empty")
    x, offset, scale = dataset.normalized(idx)
    xr = reconstruct(x, params)
    shape = (-1, 1, 1, 1)
    raw_hat = xr * scale.reshape(shape) + offset.reshape(shape)
    score = nmse_db(dataset.raw[idx].astype(np.float64), raw_hat)
    acc = None
    if strategy == "jpts":
        rng = seed_streams(seed)["eval"]
        perms = [sample_permutation(params.n, rng) for _ in range(len(idx))]
        accs = []
        for start in range(0, len(idx), 200):
            chunk = perms[start:start + 200]
            xs = shuffle_batch(x[start:start + 200], chunk, params.grid, fill=ZERO_LEVEL)
            accs.append(puzzle_accuracy(permutation_head(encode(xs, params), params), chunk)
                        * len(chunk))
        acc = float(sum(accs) / len(idx))
    return ReportRow(strategy, str(params.eta), float(alpha), params.n, int(seed), score, acc,
                     len(idx))


def alpha_seed(seed, alpha):
    """Per-alpha seed: ``seed`` XOR crc32 of the alpha's repr string."""
    return int(seed) ^ zlib.crc32(repr(float(alpha)).encode("ascii"))


def train_and_evaluate(dataset, cfg, split="test", progress=None):
    params, log = train(dataset, cfg, progress=progress)
    row = evaluate(params, dataset, split, cfg.strategy,
                   1.0 if cfg.strategy == "baseline" else cfg.alpha, cfg.seed)
    return row, log, params


def sweep_alpha(dataset, base, alphas, split="test", progress=None):
    """Train and evaluate once per alpha; rows sorted by alpha."""
    alphas = sorted(float(a) for a in alphas)
    if not alphas:
        raise ConfigError("alpha sweep needs at least one value")
    bad = [a for a in alphas if not 0.0 <= a <= 1.0]
    if bad:
        raise ConfigError(f"alphas must lie in [0, 1], got {bad}")
    report = EvalReport()
    for a in alphas:
        cfg = replace(base, alpha=a, seed=alpha_seed(base.seed, a))
        row, log, _ = train_and_evaluate(dataset, cfg, split, progress)
        report.rows.append(row)
        report.logs.append(log)
    return report


def compare_strategies(dataset, cfg, seeds=None, split="test", progress=None):
    """Train baseline, alternative and jpts with matched seeds and data."""
    report = EvalReport()
    for seed in seeds if seeds is not None else [cfg.seed]:
        for strategy in ("baseline", "alternative", "jpts"):
            run = replace(cfg, strategy=strategy, seed=int(seed))
            row, log, _ = train_and_evaluate(dataset, run, split, progress)
            report.rows.append(row)
            report.logs.append(log)
    return report


def summarize(report):
    """Mean and spread of NMSE per strategy across the report's seeds."""
    out = {}
    for strategy in dict.fromkeys(r.strategy for r in report.rows):
        vals = np.array([r.nmse_db for r in report.rows if r.strategy == strategy])
        out[strategy] = {"mean": float(vals.mean()), "std": float(vals.std()),
                         "seeds": len(vals)}
    return out


def parse_alpha_range(text):
    """``start:stop:step`` (inclusive stop) or a comma list of alphas."""
    try:
        if ":" not in text:
            return [float(a) for a in text.split(",") if a.strip()]
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"alpha range must be start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise ConfigError(f"empty alpha range {text!r}")
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]

