"""Sharded ensemble baseline: exact unlearning by retraining affected shards."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset, DeletionRequest
from .errors import DataError
from .fairloss import LossConfig
from .trainer import Model, TrainConfig, bce_config, train

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SisaEnsemble:
    """``shards[k]`` holds indices into the original training set."""

    shards: tuple[np.ndarray, ...]
    models: tuple[Model, ...]
    loss: LossConfig

    @property
    def n_shards(self) -> int:
        return len(self.shards)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.mean([expit(X @ m.theta) for m in self.models], axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int8)


def shard_assignment(n: int, n_shards: int, seed: int) -> tuple[np.ndarray, ...]:
    """Balanced seeded partition: a random permutation dealt round-robin."""
    perm = np.random.default_rng(seed).permutation(n)
    return tuple(np.sort(perm[k::n_shards]) for k in range(n_shards))


def _train_shard(ds: Dataset, idx: np.ndarray, cfg: LossConfig, tc: TrainConfig) -> Model:
    return train(ds.subset(idx), cfg, None, tc)


def sisa_train_on_shards(ds: Dataset, shards, cfg: LossConfig, tc: TrainConfig | None = None) -> SisaEnsemble:
    cfg = bce_config(cfg)
    tc = tc or TrainConfig()
    shards = tuple(np.asarray(s, dtype=np.intp) for s in shards)
    if any(s.size == 0 for s in shards):
        raise DataError("SISA shard is empty")
    models = tuple(_train_shard(ds, s, cfg, tc) for s in shards)
    return SisaEnsemble(shards=shards, models=models, loss=cfg)


def sisa_train(ds: Dataset, n_shards: int, cfg: LossConfig, tc: TrainConfig | None = None,
               seed: int = 0) -> SisaEnsemble:
    """Train one BCE model per shard. Needs n_shards <= n / 4."""
    if n_shards < 1 or n_shards > ds.n / 4:
        raise DataError(f"shard count {n_shards} must lie in [1, n/4] for n={ds.n}")
    return sisa_train_on_shards(ds, shard_assignment(ds.n, n_shards, seed), cfg, tc)


def sisa_unlearn(ens: SisaEnsemble, ds: Dataset, req: DeletionRequest,
                 tc: TrainConfig | None = None) -> SisaEnsemble:
    """Retrain only shards that lose points; untouched shard models are reused as-is.

    Shards emptied by the request are dropped from the ensemble.
    """
    tc = tc or TrainConfig()
    if req.m == 0:
        return ens
    removed = req.indices
    shards, models = [], []
    for k, (idx, model) in enumerate(zip(ens.shards, ens.models)):
        hit = np.isin(idx, removed)
        if not hit.any():
            shards.append(idx)
            models.append(model)
            continue
        left = idx[~hit]
        if left.size == 0:
            logger.info("SISA shard %d emptied by request; dropping it", k)
            continue
        shards.append(left)
        models.append(_train_shard(ds, left, ens.loss, tc))
    if not models:
        raise DataError("request removed every SISA shard")
    return SisaEnsemble(shards=tuple(shards), models=tuple(models), loss=ens.loss)
