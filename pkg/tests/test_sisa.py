import numpy as np
import pytest

from fairunlearn.data import DeletionRequest, SynthConfig, synth_generate
from fairunlearn.errors import DataError
from fairunlearn.fairloss import LossConfig
from fairunlearn.sisa import shard_assignment, sisa_train, sisa_train_on_shards, sisa_unlearn

CFG = LossConfig(lam=1e-2)


@pytest.fixture(scope="module")
def ds():
    return synth_generate(SynthConfig(n=200, d=4, seed=0))


def test_shards_partition_and_balance():
    shards = shard_assignment(103, 5, seed=1)
    allidx = np.concatenate(shards)
    assert np.array_equal(np.sort(allidx), np.arange(103))
    assert {len(s) for s in shards} == {20, 21}
    assert all(np.array_equal(a, b) for a, b in zip(shards, shard_assignment(103, 5, seed=1)))


def test_untouched_shards_reuse_models(ds):
    ens = sisa_train(ds, 5, CFG, seed=0)
    target = ens.shards[2][:3]
    out = sisa_unlearn(ens, ds, DeletionRequest.from_indices(ds, target))
    for k in (0, 1, 3, 4):
        assert out.models[k] is ens.models[k]
    assert out.models[2] is not ens.models[2]
    assert len(out.shards[2]) == len(ens.shards[2]) - 3


def test_exact_against_scratch(ds):
    rng = np.random.default_rng(0)
    ens = sisa_train(ds, 4, CFG, seed=3)
    req = DeletionRequest.from_indices(ds, rng.choice(ds.n, 15, replace=False))
    out = sisa_unlearn(ens, ds, req)
    kept = [np.setdiff1d(s, req.indices) for s in ens.shards]
    scratch = sisa_train_on_shards(ds, kept, CFG)
    for a, b in zip(out.models, scratch.models):
        assert np.array_equal(a.theta, b.theta)
    assert np.array_equal(out.predict(ds.X), scratch.predict(ds.X))


def test_emptied_shard_dropped(ds):
    ens = sisa_train(ds, 4, CFG, seed=0)
    out = sisa_unlearn(ens, ds, DeletionRequest.from_indices(ds, ens.shards[0]))
    assert out.n_shards == 3


def test_shard_count_limits(ds):
    with pytest.raises(DataError):
        sisa_train(ds, 51, CFG)
    with pytest.raises(DataError):
        sisa_train(ds, 0, CFG)


def test_sisa_uses_bce():
    ds = synth_generate(SynthConfig(n=80, d=3, seed=1))
    ens = sisa_train(ds, 2, LossConfig(lam=0.1, gamma=5.0))
    assert ens.loss.gamma == 0
    p = ens.predict_proba(ds.X)
    assert p.shape == (80,) and np.all((p > 0) & (p < 1))
