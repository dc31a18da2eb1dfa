import numpy as np
import pytest

from jpts import trainer as T
from jpts.dataset import Dataset
from jpts.errors import ConfigError, DivergenceError
from jpts.jigsaw import PermutationSpec, sample_permutation, shuffle_batch
from jpts.model import decode, encode, init_params, permutation_head
from jpts.trainer import (EpochRecord, TrainConfig, TrainLog, alternative_step, baseline_step,
                          batch_iterator, fixed_permutations, jpts_step, train)


@pytest.fixture
def batch(rng):
    return rng.uniform(size=(3, 2, 32, 32))


@pytest.fixture
def params():
    return init_params("1/64", n=4, seed=5)


def group_norm(grads, prefix):
    return sum(float(np.sum(g * g)) for k, g in grads.items() if k.startswith(prefix))


def direct_recon(x, params):
    """Independent recomputation: fresh forward pass, numpy reduction."""
    xr = decode(encode(x, params), params).data
    return float(np.sum((xr - x) ** 2) / len(x))


def direct_puzzle(x, params, perms):
    xs = shuffle_batch(x, perms, params.grid, 0.5)
    J = permutation_head(encode(xs, params), params).data
    total = 0.0
    for b, s in enumerate(perms):
        for i, si in enumerate(s.s):
            col = J[b, :, i]
            m = col.max()
            total -= col[si - 1] - m - np.log(np.exp(col - m).sum())
    return total / len(perms)


def perms_for(rng, count, n=4):
    return [sample_permutation(n, rng) for _ in range(count)]


def test_batches_4_4_2(rng):
    sizes = [len(b) for b in batch_iterator(np.arange(10), 4, rng)]
    assert sizes == [4, 4, 2]


def test_batches_seeded_and_complete():
    idx = np.arange(3, 40, 3)
    a = list(batch_iterator(idx, 5, np.random.default_rng(1)))
    b = list(batch_iterator(idx, 5, np.random.default_rng(1)))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert sorted(np.concatenate(a).tolist()) == idx.tolist()


def test_batch_size_positive(rng):
    with pytest.raises(ConfigError):
        list(batch_iterator(np.arange(3), 0, rng))


def test_jpts_alpha_one_is_baseline(batch, params, rng):
    perms = perms_for(rng, 3)
    lj, gj, _ = jpts_step(batch, params, TrainConfig(alpha=1.0), perms)
    lb, gb, _ = baseline_step(batch, params)
    assert abs(lj - lb) <= 1e-12
    assert abs(lb - direct_recon(batch, params)) <= 1e-12 * lb
    assert group_norm(gj, "head.") == 0.0
    for k in gb:
        if not k.startswith("head."):
            np.testing.assert_allclose(gj[k], gb[k], rtol=0, atol=1e-12)


def test_jpts_alpha_zero_is_puzzle(batch, params, rng):
    perms = perms_for(rng, 3)
    loss, grads, terms = jpts_step(batch, params, TrainConfig(alpha=0.0), perms)
    assert abs(loss - direct_puzzle(batch, params, perms)) <= 1e-12
    assert group_norm(grads, "dec.") == 0.0
    assert group_norm(grads, "enc.") > 0 and group_norm(grads, "head.") > 0


def test_jpts_half_is_average(batch, params, rng):
    perms = perms_for(rng, 3)
    loss, _, terms = jpts_step(batch, params, TrainConfig(alpha=0.5), perms)
    rec, pz = direct_recon(batch, params), direct_puzzle(batch, params, perms)
    assert abs(loss - 0.5 * (rec + pz)) <= 1e-12
    assert abs(terms["recon"] - rec) <= 1e-12 and abs(terms["puzzle"] - pz) <= 1e-12


def test_alternative_limits(batch, params, rng):
    perms = perms_for(rng, 3)
    lb = baseline_step(batch, params)[0]
    cfg1 = TrainConfig(strategy="alternative", alpha=1.0)
    la, ga, _ = alternative_step(batch, params, cfg1, perms)
    assert abs(la - lb) <= 1e-12
    assert group_norm(ga, "head.") == 0.0
    ident = fixed_permutations(PermutationSpec.identity(4), 3)
    for a in (0.0, 0.3, 0.5):
        cfg = TrainConfig(strategy="alternative", alpha=a)
        assert abs(alternative_step(batch, params, cfg, ident)[0] - lb) <= 1e-12


def test_alternative_half_two_passes(batch, params):
    perms = fixed_permutations((3, 1, 4, 2), 3)
    cfg = TrainConfig(strategy="alternative", alpha=0.5)
    loss = alternative_step(batch, params, cfg, perms)[0]
    xs = shuffle_batch(batch, perms, params.grid, 0.5)
    xr = decode(encode(xs, params), params).data
    shuffled_term = float(np.sum((xr - batch) ** 2) / len(batch))
    assert abs(loss - 0.5 * (direct_recon(batch, params) + shuffled_term)) <= 1e-12


def test_alternative_n9_uses_padded_shuffle(rng):
    p = init_params("1/64", n=9, seed=1)
    x = rng.uniform(size=(2, 2, 32, 32))
    cfg = TrainConfig(strategy="alternative", alpha=0.5, n=9)
    loss, grads, _ = alternative_step(x, p, cfg, perms_for(rng, 2, 9))
    assert np.isfinite(loss) and group_norm(grads, "head.") == 0.0


@pytest.mark.parametrize("kw", [dict(alpha=1.5), dict(alpha=-0.1), dict(strategy="mixup"),
                                dict(eta="1/2"), dict(n=16), dict(epochs=0), dict(batch_size=0),
                                dict(seed=-1)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_baseline_ignores_alpha():
    assert TrainConfig(strategy="baseline", alpha=0.2).weight == 1.0


def test_train_log_and_epochs(small_dataset):
    cfg = TrainConfig(epochs=3, batch_size=16, eta="1/64", timing=False)
    params, log = train(small_dataset, cfg)
    assert log.column("epoch") == [1, 2, 3]
    for r in log.records:
        assert all(np.isfinite([r.train_loss, r.val_loss, r.recon_term, r.puzzle_term]))
        assert 0 <= r.puzzle_acc <= 1 and r.seconds == 0.0
    assert params.v == 32


def test_train_deterministic(small_dataset):
    cfg = TrainConfig(strategy="alternative", epochs=2, batch_size=16, eta="1/64", timing=False,
                      seed=99)
    p1, l1 = train(small_dataset, cfg)
    p2, l2 = train(small_dataset, cfg)
    assert l1.to_csv() == l2.to_csv()
    assert all(p1.tensors[k].data.tobytes() == p2.tensors[k].data.tobytes() for k in p1.tensors)


def test_jpts_alpha_one_training_equals_baseline(small_dataset):
    base = TrainConfig(strategy="baseline", epochs=2, batch_size=16, eta="1/64", timing=False)
    jp = TrainConfig(strategy="jpts", alpha=1.0, epochs=2, batch_size=16, eta="1/64",
                     timing=False)
    pb, lb = train(small_dataset, base)
    pj, lj = train(small_dataset, jp)
    assert lb.column("train_loss") == lj.column("train_loss")
    assert all(pb.tensors[k].data.tobytes() == pj.tensors[k].data.tobytes() for k in pb.tensors)


def test_empty_split_rejected(small_dataset):
    only_train = Dataset(small_dataset.raw, np.zeros(len(small_dataset)))
    with pytest.raises(ConfigError, match="validation"):
        train(only_train, TrainConfig(epochs=1))


def test_batch_larger_than_train_rejected(small_dataset):
    with pytest.raises(ConfigError):
        train(small_dataset, TrainConfig(epochs=1, batch_size=41))


def test_divergence_aborts_with_log(small_dataset, monkeypatch):
    real = T.training_step
    calls = {"n": 0}

    def exploding(x, params, cfg, rng):
        calls["n"] += 1
        loss, grads, terms = real(x, params, cfg, rng)
        return (2e6 if calls["n"] > 3 else loss), grads, terms

    monkeypatch.setattr(T, "training_step", exploding)
    with pytest.raises(DivergenceError, match="epoch 2, batch 0") as e:
        train(small_dataset, TrainConfig(epochs=5, batch_size=14, eta="1/64", timing=False))
    assert len(e.value.log) == 1


def test_log_csv_format(tmp_path):
    log = TrainLog()
    log.append(EpochRecord(1, 2.5, 1.25, 0.5, 4.0, 0.75, 1.5))
    log.append(EpochRecord(2, 2.0, 1.0, 0.25, 3.0, None, 0.0))
    log.write(tmp_path / "log.csv")
    raw = (tmp_path / "log.csv").read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,recon_term,puzzle_term,puzzle_acc,seconds"
    assert lines[2] == "2,2.0,1.0,0.25,3.0,,0.0"
    assert TrainLog.from_csv(raw.decode()) == log


def test_log_epochs_increase():
    log = TrainLog([EpochRecord(2, 1, 1, 1, 0, None, 0)])
    with pytest.raises(ConfigError):
        log.append(EpochRecord(2, 1, 1, 1, 0, None, 0))


@pytest.mark.parametrize("strategy", ["baseline", "alternative"])
def test_training_progress(strategy):
    """Reduced-size version of the 50-epoch progress check (the jpts run lives in
    the acceptance suite)."""
    from jpts.dataset import synth_dataset
    ds = synth_dataset(counts=(320, 64, 0))
    cfg = TrainConfig(strategy=strategy, alpha=0.5, epochs=50, batch_size=32, timing=False)
    _, log = train(ds, cfg)
    assert log.records[-1].train_loss < 0.5 * log.records[0].train_loss


@pytest.mark.parametrize("strategy", ["baseline", "jpts", "alternative"])
def test_objective_gradients_full_model(strategy):
    # the full model has thousands of leaky-ReLU units, so a smaller step keeps
    # probes away from kinks
    from gradcheck import check_gradients, network_case
    loss_fn, params = network_case(strategy, np.random.default_rng(21))
    _, failures, _ = check_gradients(loss_fn, params, probes=100, seed=3, step=1e-6)
    assert not failures
