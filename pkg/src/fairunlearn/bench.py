"""Experiment grids: scenario x fraction x method with seeded repeats.

Rows are plain dataclasses; ``emit`` writes them as CSV or JSON lines with
per-cell mean/std aggregates appended. Timing columns are only written when
asked for, since wall-clock values are the one non-reproducible output.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import certify as cert
from . import metrics
from .data import (Dataset, DeletionRequest, SchemaConfig, SynthConfig, load_csv, preprocess,
                   sample_deletions, split, synth_generate)
from .errors import ConfigError, FairUnlearnError
from .fairloss import LossConfig
from .sisa import SisaEnsemble, sisa_train, sisa_unlearn
from .trainer import Model, TrainConfig, bce_config, retrain_without, sample_noise, train
from .unlearner import UnlearnCache, build_cache, unlearn, unlearn_bce

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METHODS = ("full_bce", "full_fair", "retrain_bce", "retrain_fair", "newton_bce", "fair_unlearn", "sisa")
SCENARIOS = ("random", "minority", "majority")
DEFAULT_FRACTIONS = (0.01, 0.05, 0.10, 0.15, 0.20)
MINORITY_CAP = 0.10


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthConfig | None = None
    csv: str | None = None
    schema: SchemaConfig | None = None
    add_bias: bool = True
    methods: tuple[str, ...] = METHODS
    scenarios: tuple[str, ...] = ("random",)
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    repeats: int = 5
    lam: float = 1e-3
    gamma: float = 1.0
    notion: str = "equalized_odds"
    sigma: float = 1.0
    delta: float = 1e-4
    test_fraction: float = 0.2
    sisa_shards: int = 5
    seed: int = 0
    workers: int = 1
    record_timings: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if (self.synth is None) == (self.csv is None):
            raise ConfigError("experiment needs exactly one of 'synth' or 'csv'")
        if self.csv is not None and self.schema is None:
            raise ConfigError("csv source needs a schema")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigError(f"unknown methods: {sorted(bad)}")
        bad = set(self.scenarios) - set(SCENARIOS)
        if bad:
            raise ConfigError(f"unknown scenarios: {sorted(bad)}")
        if self.repeats < 1 or self.workers < 1:
            raise ConfigError("repeats and workers must be >= 1")
        if any(not 0 <= f < 1 for f in self.fractions):
            raise ConfigError("fractions must lie in [0, 1)")

    @property
    def fair_loss(self) -> LossConfig:
        return LossConfig(lam=self.lam, gamma=self.gamma, notion=self.notion)

    @property
    def bce_loss(self) -> LossConfig:
        return bce_config(self.fair_loss)

    def load_dataset(self) -> Dataset:
        if self.synth is not None:
            return synth_generate(self.synth)
        ds, _ = preprocess(load_csv(self.csv, self.schema), self.schema, add_bias=self.add_bias)
        return ds

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in ("synth", "schema", "train")}
        out["methods"] = list(self.methods)
        out["scenarios"] = list(self.scenarios)
        out["fractions"] = list(self.fractions)
        out["train"] = self.train.to_dict()
        if self.synth is not None:
            out["synth"] = asdict(self.synth)
        if self.schema is not None:
            out["schema"] = self.schema.to_dict()
        return {k: v for k, v in out.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown experiment keys: {sorted(extra)}")
        if "synth" in d:
            d["synth"] = SynthConfig.from_dict(d["synth"])
        if "schema" in d:
            d["schema"] = SchemaConfig.from_dict(d["schema"])
        if "train" in d:
            d["train"] = TrainConfig(**d["train"])
        for key in ("methods", "scenarios", "fractions"):
            if key in d:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class ResultRow:
    method: str
    scenario: str
    fraction: float
    repeat: int
    seed: int
    status: str = "ok"
    m: int | None = None
    m_a: int | None = None
    m_b: int | None = None
    accuracy: float | None = None
    aeod: float | None = None
    dempar: float | None = None
    eqopp: float | None = None
    subgroup_acc_diff: float | None = None
    residual_norm: float | None = None
    eps_prime_worstcase: float | None = None
    eps_prime_data_dependent: float | None = None
    eps_prime: float | None = None
    epsilon: float | None = None
    time_train: float | None = None
    time_precompute: float | None = None
    time_unlearn: float | None = None
    time_retrain: float | None = None

    @property
    def key(self) -> tuple:
        return (self.scenario, self.fraction, METHODS.index(self.method), self.repeat)


METRIC_FIELDS = ("accuracy", "aeod", "dempar", "eqopp", "subgroup_acc_diff", "residual_norm",
                 "eps_prime_worstcase", "eps_prime_data_dependent", "eps_prime", "epsilon")
TIME_FIELDS = ("time_train", "time_precompute", "time_unlearn", "time_retrain")


def columns(include_timings: bool = False) -> list[str]:
    cols = ["kind"] + [f.name for f in fields(ResultRow)]
    if not include_timings:
        cols = [c for c in cols if c not in TIME_FIELDS]
    return cols


def derive_seed(*keys: int) -> int:
    """Independent 32-bit seed for a tuple of integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass
class _Base:
    """Per-repeat shared state: split, base models, caches, SISA ensemble."""

    repeat: int
    seed: int
    train: Dataset
    test: Dataset
    models: dict = field(default_factory=dict)
    caches: dict = field(default_factory=dict)
    times: dict = field(default_factory=dict)
    sisa: SisaEnsemble | None = None
    error: str | None = None


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def _prepare(cfg: ExperimentConfig, ds: Dataset, r: int) -> _Base:
    seed = derive_seed(cfg.seed, r)
    tr, te = split(ds, cfg.test_fraction, derive_seed(seed, 0), notion=cfg.notion)
    base = _Base(repeat=r, seed=seed, train=tr, test=te)
    want = set(cfg.methods)
    for name, loss, key in (("bce", cfg.bce_loss, 1), ("fair", cfg.fair_loss, 2)):
        if name == "bce" and not want & {"full_bce", "retrain_bce", "newton_bce"}:
            continue
        if name == "fair" and not want & {"full_fair", "retrain_fair", "fair_unlearn"}:
            continue
        noise = sample_noise(tr.d, cfg.sigma, derive_seed(seed, key))
        base.models[name], base.times[name] = _timed(train, tr, loss, noise, cfg.train)
        base.caches[name], base.times[name + "_cache"] = _timed(build_cache, base.models[name], tr)
    if "sisa" in want:
        base.sisa, base.times["sisa"] = _timed(
            sisa_train, tr, cfg.sisa_shards, cfg.bce_loss, cfg.train, derive_seed(seed, 3))
    return base


def _metrics_into(row: ResultRow, theta, test: Dataset, pred=None) -> None:
    for k, v in metrics.report(theta, test, pred).items():
        setattr(row, k, v)


def _certify_into(row: ResultRow, u, tr: Dataset, model: Model, cache: UnlearnCache, cfg: ExperimentConfig):
    certificate = cert.certify(u, tr, model.theta, cfg.sigma, cfg.delta, cache)
    row.residual_norm = u.residual_norm
    row.eps_prime_worstcase = certificate.eps_prime_worstcase
    row.eps_prime_data_dependent = certificate.eps_prime_data_dependent
    row.eps_prime = certificate.eps_prime
    row.epsilon = certificate.epsilon


def _run_cell(cfg: ExperimentConfig, base: _Base, scenario: str, fi: int, fraction: float) -> list[ResultRow]:
    si = SCENARIOS.index(scenario)
    cell_seed = derive_seed(base.seed, 10 + si, fi)
    rows = []

    def new(method: str) -> ResultRow:
        return ResultRow(method=method, scenario=scenario, fraction=fraction, repeat=base.repeat, seed=cell_seed)

    if scenario == "minority" and fraction > MINORITY_CAP:
        return [replace(new(mth), status=f"skipped: minority fraction capped at {MINORITY_CAP}")
                for mth in cfg.methods]
    try:
        req = sample_deletions(base.train, scenario, fraction, cell_seed)
    except FairUnlearnError as exc:
        return [replace(new(mth), status=f"skipped: {exc}") for mth in cfg.methods]

    tr, te = base.train, base.test
    for method in cfg.methods:
        row = new(method)
        row.m, row.m_a, row.m_b = req.m, req.m_a, req.m_b
        try:
            if method in ("full_bce", "full_fair"):
                name = method.split("_")[1]
                _metrics_into(row, base.models[name].theta, te)
                row.time_train = base.times[name]
            elif method in ("retrain_bce", "retrain_fair"):
                loss = cfg.bce_loss if method == "retrain_bce" else cfg.fair_loss
                # same noise draw as the base model: a coupling of the two
                # randomized trainings, so rows compare approximation error
                key = 1 if method == "retrain_bce" else 2
                m2, row.time_retrain = _timed(retrain_without, tr, req, loss, cfg.sigma,
                                              derive_seed(base.seed, key), cfg.train)
                _metrics_into(row, m2.theta, te)
            elif method in ("newton_bce", "fair_unlearn"):
                name = "bce" if method == "newton_bce" else "fair"
                model, cache = base.models[name], base.caches[name]
                fn = unlearn_bce if method == "newton_bce" else unlearn
                u, row.time_unlearn = _timed(fn, model, tr, req, cache)
                row.time_precompute = base.times[name + "_cache"]
                row.time_train = base.times[name]
                _metrics_into(row, u.theta, te)
                try:
                    _certify_into(row, u, tr, model, cache, cfg)
                except FairUnlearnError as exc:
                    row.residual_norm = u.residual_norm
                    row.status = f"ok (uncertified: {exc})"
            elif method == "sisa":
                ens, row.time_unlearn = _timed(sisa_unlearn, base.sisa, tr, req, cfg.train)
                row.time_train = base.times["sisa"]
                _metrics_into(row, None, te, pred=ens.predict(te.X))
        except FairUnlearnError as exc:
            row = replace(new(method), m=req.m, m_a=req.m_a, m_b=req.m_b, status=f"skipped: {exc}")
        rows.append(row)
    return rows


def run_experiment(cfg: ExperimentConfig, ds: Dataset | None = None) -> list[ResultRow]:
    """Run every (repeat, scenario, fraction, method) cell; rows sorted by key."""
    ds = cfg.load_dataset() if ds is None else ds
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        bases = list(pool.map(lambda r: _prepare(cfg, ds, r), range(cfg.repeats)))
        jobs = [(b, sc, fi, fr) for b in bases for sc in cfg.scenarios for fi, fr in enumerate(cfg.fractions)]
        results = pool.map(lambda j: _run_cell(cfg, *j), jobs)
        rows = [row for chunk in results for row in chunk]
    return sorted(rows, key=lambda r: r.key)


# ---------------------------------------------------------------------------
# Leakage and timing tables
# ---------------------------------------------------------------------------


def leakage_sweep(ds: Dataset, cfg: LossConfig, sigmas, delta: float = 1e-4, m: int = 100,
                  seed: int = 0, test: Dataset | None = None, tc: TrainConfig | None = None) -> list[dict]:
    """Noise level vs certified epsilon and accuracy for one random removal of m points.

    The same standard-normal draw is scaled by each sigma, and the same
    request is used throughout, so rows differ only in the noise scale.
    """
    m = min(m, ds.n // 10)
    req = DeletionRequest.from_indices(
        ds, np.random.default_rng(derive_seed(seed, 1)).choice(ds.n, size=m, replace=False), "random")
    test = ds if test is None else test
    rows = []
    for sigma in sigmas:
        noise = sample_noise(ds.d, sigma, derive_seed(seed, 2))
        model = train(ds, cfg, noise, tc)
        cache = build_cache(model, ds)
        u = unlearn(model, ds, req, cache)
        c = cert.certify(u, ds, model.theta, sigma, delta, cache)
        rows.append({"sigma": float(sigma), "delta": delta, "m": m, "eps_prime": c.eps_prime,
                     "binding": c.binding, "epsilon": c.epsilon, "residual_norm": u.residual_norm,
                     "accuracy": metrics.accuracy(u.theta, test)})
    return rows


def timing(ds: Dataset, cfg: LossConfig, sizes, repeats: int = 5, seed: int = 0,
           sigma: float = 1.0, tc: TrainConfig | None = None) -> list[dict]:
    """Median wall times of cache build, unlearning and retraining per request size."""
    model = train(ds, cfg, sample_noise(ds.d, sigma, derive_seed(seed, 0)), tc)
    t_cache = float(np.median([_timed(build_cache, model, ds)[1] for _ in range(repeats)]))
    cache = build_cache(model, ds)
    out = []
    for m in sizes:
        idx = np.random.default_rng(derive_seed(seed, 1, m)).choice(ds.n, size=m, replace=False)
        req = DeletionRequest.from_indices(ds, idx, "random")
        t_un = float(np.median([_timed(unlearn, model, ds, req, cache)[1] for _ in range(repeats)]))
        t_re = float(np.median([
            _timed(retrain_without, ds, req, cfg, sigma, derive_seed(seed, 2, m), tc)[1]
            for _ in range(repeats)]))
        out.append({"m": int(m), "time_precompute": t_cache, "time_unlearn": t_un,
                    "time_retrain": t_re, "speedup": t_re / t_un if t_un > 0 else math.inf})
    return out


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def aggregate(rows: list[ResultRow]) -> list[dict]:
    """Mean and (population) std of every metric over repeats, per (method, scenario, fraction)."""
    groups: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        if r.status.startswith("ok"):
            groups.setdefault((r.scenario, r.fraction, METHODS.index(r.method)), []).append(r)
    out = []
    for key in sorted(groups):
        grp = groups[key]
        for stat, fn in (("mean", np.mean), ("std", np.std)):
            rec = {"kind": stat, "method": grp[0].method, "scenario": grp[0].scenario,
                   "fraction": grp[0].fraction, "repeat": len(grp), "status": "ok"}
            for f in METRIC_FIELDS + TIME_FIELDS:
                vals = [getattr(r, f) for r in grp if getattr(r, f) is not None]
                rec[f] = float(fn(vals)) if vals and len(vals) == len(grp) else None
            out.append(rec)
    return out


def _records(rows: list[ResultRow]) -> list[dict]:
    return [{"kind": "row", **asdict(r)} for r in rows] + aggregate(rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit(rows: list[ResultRow], fmt: str, path: str | Path | None = None,
         include_timings: bool = False) -> str:
    """Serialize rows (plus aggregates) to CSV or JSON lines; returns the text.

    The first line is a schema-version header; column order is ``columns()``.
    """
    cols = columns(include_timings)
    recs = _records(rows)
    buf = io.StringIO()
    if fmt == "csv":
        buf.write(f"# fairunlearn-results v{SCHEMA_VERSION}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for rec in recs:
            w.writerow([_fmt(rec.get(c)) for c in cols])
    elif fmt == "jsonl":
        buf.write(json.dumps({"schema_version": SCHEMA_VERSION, "columns": cols}) + "\n")
        for rec in recs:
            buf.write(json.dumps({c: rec.get(c) for c in cols}, allow_nan=False) + "\n")
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    text = buf.getvalue()
    if path is not None:
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc.strerror}") from None
    return text


def read_csv(path_or_text: str | Path) -> list[dict]:
    """Parse an emitted CSV back into dicts of strings (empty cells become None)."""
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return [{k: (v if v != "" else None) for k, v in rec.items()} for rec in csv.DictReader(lines)]
