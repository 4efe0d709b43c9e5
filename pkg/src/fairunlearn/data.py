"""Tabular ingestion, normalization, splitting, synthetic data and deletion requests.

Groups are stored as integers: 0 for group ``a`` and 1 for group ``b``.
Labels are stored as integers in {0, 1}. Every training matrix produced here
satisfies ``max_i ||x_i||_2 <= 1``.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import DataError, InfeasibleRequestError

logger = logging.getLogger(__name__)

GROUP_NAMES = ("a", "b")
SCENARIOS = ("random", "minority", "majority")


# ---------------------------------------------------------------------------
# Raw tables and schemas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SchemaConfig:
    """How to turn CSV columns into (features, label, group).

    ``label_positive`` lists the literals mapped to 1. If ``label_negative``
    is given, only those literals map to 0 and anything else is an error;
    otherwise every non-positive literal maps to 0. Groups work the same
    way with ``group_a`` / ``group_b``.
    """

    features: tuple[str, ...]
    label: str
    label_positive: tuple[str, ...]
    group: str
    group_a: tuple[str, ...]
    label_negative: tuple[str, ...] | None = None
    group_b: tuple[str, ...] | None = None
    categorical: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> SchemaConfig:
        def tup(v):
            if v is None:
                return None
            if isinstance(v, (str, int, float)):
                return (str(v),)
            return tuple(str(x) for x in v)

        try:
            return cls(
                features=tup(d["features"]),
                label=str(d["label"]),
                label_positive=tup(d["label_positive"]),
                group=str(d["group"]),
                group_a=tup(d["group_a"]),
                label_negative=tup(d.get("label_negative")),
                group_b=tup(d.get("group_b")),
                categorical=tup(d.get("categorical", ())) or (),
            )
        except KeyError as exc:
            raise DataError(f"schema is missing key {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        out = {
            "features": list(self.features),
            "categorical": list(self.categorical),
            "label": self.label,
            "label_positive": list(self.label_positive),
            "group": self.group,
            "group_a": list(self.group_a),
        }
        if self.label_negative is not None:
            out["label_negative"] = list(self.label_negative)
        if self.group_b is not None:
            out["group_b"] = list(self.group_b)
        return out

    def kind(self, column: str) -> str:
        return "categorical" if column in self.categorical else "numeric"

    def map_label(self, value: str) -> int:
        if value in self.label_positive:
            return 1
        if self.label_negative is None or value in self.label_negative:
            return 0
        raise DataError(f"unmappable label value {value!r} in column {self.label!r}")

    def map_group(self, value: str) -> int:
        if value in self.group_a:
            return 0
        if self.group_b is None or value in self.group_b:
            return 1
        raise DataError(f"unmappable group value {value!r} in column {self.group!r}")


@dataclass(frozen=True)
class RawTable:
    rows: tuple[dict, ...]
    columns: tuple[tuple[str, str], ...]  # (name, kind)
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.rows)


def load_csv(path: str | Path, schema: SchemaConfig) -> RawTable:
    """Parse a headed UTF-8 CSV file, dropping rows with empty required cells."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise DataError(f"{path}: missing header row")
        required = list(schema.features) + [schema.label, schema.group]
        for col in required:
            if col not in header:
                raise DataError(f"column not found: {col!r}")
        rows = []
        dropped = 0
        for rec in reader:
            vals = {c: (rec.get(c) or "").strip() for c in required}
            if any(v == "" for v in vals.values()):
                dropped += 1
                continue
            # validate mappings eagerly so bad files fail at load time
            schema.map_label(vals[schema.label])
            schema.map_group(vals[schema.group])
            rows.append(vals)
    if dropped:
        logger.info("%s: dropped %d rows with missing values", path, dropped)
    columns = tuple((c, schema.kind(c)) for c in required)
    return RawTable(rows=tuple(rows), columns=columns, dropped=dropped)


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """Normalized design matrix with binary labels and binary groups.

    ``counts[g, y]`` and ``sums[g, y]`` hold the number of rows and the
    feature sum of rows with group ``g`` and label ``y``.
    """

    X: np.ndarray
    y: np.ndarray
    s: np.ndarray
    counts: np.ndarray = field(repr=False)
    sums: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, X, y, s) -> Dataset:
        X = np.array(X, dtype=float, ndmin=2, copy=True)
        y = np.asarray(y).astype(np.int8).ravel()
        s = np.asarray(s).astype(np.int8).ravel()
        if X.shape[0] != y.shape[0] or y.shape != s.shape:
            raise DataError(f"shape mismatch: X {X.shape}, y {y.shape}, s {s.shape}")
        if not (np.isin(y, (0, 1)).all() and np.isin(s, (0, 1)).all()):
            raise DataError("labels and groups must be 0/1 coded")
        counts, sums = cell_stats(X, y, s)
        for a in (X, y, s, counts, sums):
            a.setflags(write=False)
        return cls(X=X, y=y, s=s, counts=counts, sums=sums)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_a(self) -> int:
        return int(self.counts[0].sum())

    @property
    def n_b(self) -> int:
        return int(self.counts[1].sum())

    @property
    def group_a(self) -> np.ndarray:
        return np.flatnonzero(self.s == 0)

    @property
    def group_b(self) -> np.ndarray:
        return np.flatnonzero(self.s == 1)

    @property
    def max_norm(self) -> float:
        if self.n == 0:
            return 0.0
        return float(np.sqrt(np.einsum("ij,ij->i", self.X, self.X)).max())

    @cached_property
    def fingerprint(self) -> str:
        # arrays are read-only, so the digest can be computed once
        h = hashlib.sha256()
        h.update(np.array(self.X.shape, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.X, dtype="<f8").tobytes())
        h.update(self.y.tobytes())
        h.update(self.s.tobytes())
        return h.hexdigest()

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset.from_arrays(self.X[idx], self.y[idx], self.s[idx])

    def remove(self, idx) -> Dataset:
        keep = np.ones(self.n, dtype=bool)
        keep[np.asarray(idx, dtype=np.intp)] = False
        return Dataset.from_arrays(self.X[keep], self.y[keep], self.s[keep])

    def check(self) -> None:
        """Re-verify the stored invariants; raises DataError on violation."""
        counts, sums = cell_stats(self.X, self.y, self.s)
        if not np.array_equal(counts, self.counts) or not np.array_equal(sums, self.sums):
            raise DataError("cached group/label statistics are stale")
        if self.max_norm > 1.0:
            raise DataError(f"row norm {self.max_norm!r} exceeds 1")


def cell_stats(X: np.ndarray, y: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    counts = np.zeros((2, 2), dtype=np.int64)
    sums = np.zeros((2, 2, X.shape[1]))
    for g in (0, 1):
        for lab in (0, 1):
            mask = (s == g) & (y == lab)
            counts[g, lab] = int(mask.sum())
            sums[g, lab] = X[mask].sum(axis=0)
    return counts, sums


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PreprocessStats:
    """Training-split transform: one-hot, z-score, optional bias, norm scale."""

    feature_names: tuple[str, ...]  # encoded columns kept, in order
    sources: tuple[tuple[str, str | None], ...]  # (column, category or None)
    mean: np.ndarray
    std: np.ndarray
    scale: float
    bias: bool

    @property
    def d(self) -> int:
        return len(self.feature_names) + int(self.bias)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "sources": [list(s) for s in self.sources],
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "scale": float(self.scale),
            "bias": bool(self.bias),
        }

    @classmethod
    def from_dict(cls, d: dict) -> PreprocessStats:
        return cls(
            feature_names=tuple(d["feature_names"]),
            sources=tuple((c, v) for c, v in d["sources"]),
            mean=np.asarray(d["mean"], dtype=float),
            std=np.asarray(d["std"], dtype=float),
            scale=float(d["scale"]),
            bias=bool(d["bias"]),
        )


def _encode(table: RawTable, schema: SchemaConfig, sources) -> np.ndarray:
    out = np.zeros((len(table), len(sources)))
    for i, row in enumerate(table.rows):
        for j, (col, cat) in enumerate(sources):
            v = row[col]
            if cat is None:
                try:
                    out[i, j] = float(v)
                except ValueError:
                    raise DataError(f"non-numeric value {v!r} in column {col!r}") from None
            else:
                out[i, j] = 1.0 if v == cat else 0.0
    return out


def _labels_groups(table: RawTable, schema: SchemaConfig):
    y = np.array([schema.map_label(r[schema.label]) for r in table.rows], dtype=np.int8)
    s = np.array([schema.map_group(r[schema.group]) for r in table.rows], dtype=np.int8)
    return y, s


def _unit_scale(Z: np.ndarray) -> float:
    """Smallest float scale with every row of ``Z / scale`` inside the unit ball."""
    norms = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    scale = float(norms.max())
    if not scale > 0:
        raise DataError("all feature rows are zero after preprocessing")
    while np.sqrt(np.einsum("ij,ij->i", Z / scale, Z / scale)).max() > 1.0:
        scale = float(np.nextafter(scale, np.inf))
    return scale


def _fit_transform(Z: np.ndarray, names, sources, bias: bool):
    mean = Z.mean(axis=0)
    std = Z.std(axis=0)
    keep = std > 0
    for name in np.asarray(names)[~keep]:
        logger.warning("dropping zero-variance feature %r", str(name))
    numeric = np.array([src[1] is None for src in sources], dtype=bool)
    # one-hot columns are kept as 0/1 indicators
    mean = np.where(numeric, mean, 0.0)[keep]
    std = np.where(numeric, std, 1.0)[keep]
    names = tuple(np.asarray(names, dtype=object)[keep])
    sources = tuple(src for src, k in zip(sources, keep) if k)
    Zs = (Z[:, keep] - mean) / std
    if bias:
        Zs = np.hstack([Zs, np.ones((Zs.shape[0], 1))])
    scale = _unit_scale(Zs)
    return PreprocessStats(names, sources, mean, std, scale, bias), keep


def preprocess(table: RawTable, schema: SchemaConfig, add_bias: bool = True) -> tuple[Dataset, PreprocessStats]:
    """Fit the training transform on ``table`` and apply it.

    Numeric columns are z-scored, categorical columns one-hot encoded
    (categories sorted), zero-variance columns dropped, a constant bias
    column optionally appended, and finally every row is divided by the
    largest row norm.
    """
    y, s = _labels_groups(table, schema)
    for g, name in enumerate(GROUP_NAMES):
        if int((s == g).sum()) < 2:
            raise DataError(f"group {name} empty" if not (s == g).any() else f"group {name} has fewer than 2 rows")
    for lab in (0, 1):
        if not (y == lab).any():
            raise DataError(f"label {lab} absent")
    sources: list[tuple[str, str | None]] = []
    names: list[str] = []
    for col in schema.features:
        if schema.kind(col) == "categorical":
            cats = sorted({r[col] for r in table.rows})
            sources += [(col, c) for c in cats]
            names += [f"{col}={c}" for c in cats]
        else:
            sources.append((col, None))
            names.append(col)
    Z = _encode(table, schema, sources)
    stats, _ = _fit_transform(Z, names, sources, add_bias)
    return apply_stats(table, stats, schema), stats


def apply_stats(table: RawTable, stats: PreprocessStats, schema: SchemaConfig) -> Dataset:
    """Transform a table with fitted statistics. Rows are not clipped to unit norm."""
    if len(table) == 0:
        return Dataset.from_arrays(np.zeros((0, stats.d)), [], [])
    for col, _ in stats.sources:
        if col not in table.rows[0]:
            raise DataError(f"column not found: {col!r}")
    Z = _encode(table, schema, stats.sources)
    if Z.shape[1] != len(stats.mean):
        raise DataError(f"dimension mismatch: table gives {Z.shape[1]} features, stats expect {len(stats.mean)}")
    X = _standardize(Z, stats)
    y, s = _labels_groups(table, schema)
    return Dataset.from_arrays(X, y, s)


def _standardize(Z: np.ndarray, stats: PreprocessStats) -> np.ndarray:
    X = (Z - stats.mean) / stats.std
    if stats.bias:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    return X / stats.scale


def normalize_arrays(Z: np.ndarray, add_bias: bool = True) -> tuple[np.ndarray, PreprocessStats]:
    """The preprocess transform for an already-numeric matrix."""
    names = [f"x{j}" for j in range(Z.shape[1])]
    sources = [(n, None) for n in names]
    stats, keep = _fit_transform(Z, names, sources, add_bias)
    return _standardize(Z[:, keep], stats), stats


# ---------------------------------------------------------------------------
# Splits and deletion requests
# ---------------------------------------------------------------------------


def split(ds: Dataset, test_fraction: float, seed: int, notion: str | None = None) -> tuple[Dataset, Dataset]:
    """Seeded uniform train/test partition.

    The train part must keep both groups and both labels. With
    ``notion="equality_of_opportunity"`` it must also keep positives in
    both groups; with ``notion="equalized_odds"`` all four group/label
    cells.
    """
    if not 0 < test_fraction < 1:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    n_test = int(np.floor(test_fraction * ds.n + 0.5))
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    train = ds.subset(train_idx)
    c = train.counts
    required = {(g, lab) for g in (0, 1) for lab in (0, 1)} if notion == "equalized_odds" else set()
    if notion == "equality_of_opportunity":
        required = {(0, 1), (1, 1)}
    for g in (0, 1):
        if c[g].sum() == 0:
            raise DataError(f"split leaves group {GROUP_NAMES[g]} empty in train")
    for lab in (0, 1):
        if c[:, lab].sum() == 0:
            raise DataError(f"split leaves label {lab} empty in train")
    for g, lab in sorted(required):
        if c[g, lab] == 0:
            raise DataError(f"split empties cell (group {GROUP_NAMES[g]}, y={lab}) in train")
    return train, ds.subset(test_idx)


@dataclass(frozen=True, eq=False)
class DeletionRequest:
    indices: np.ndarray
    m_a: int
    m_b: int
    scenario: str = "random"

    @property
    def m(self) -> int:
        return int(self.indices.size)

    @classmethod
    def from_indices(cls, ds: Dataset, indices: Sequence[int], scenario: str = "explicit") -> DeletionRequest:
        idx = np.unique(np.asarray(indices, dtype=np.intp))
        if idx.size and (idx[0] < 0 or idx[-1] >= ds.n):
            raise DataError(f"deletion index out of range [0, {ds.n})")
        idx.setflags(write=False)
        s = ds.s[idx]
        return cls(indices=idx, m_a=int((s == 0).sum()), m_b=int((s == 1).sum()), scenario=scenario)

    def to_dict(self) -> dict:
        return {"indices": [int(i) for i in self.indices], "m": self.m, "m_a": self.m_a,
                "m_b": self.m_b, "scenario": self.scenario}


def minority_group(ds: Dataset) -> int:
    return 0 if ds.n_a <= ds.n_b else 1


def sample_deletions(ds: Dataset, scenario: str, fraction: float, seed: int) -> DeletionRequest:
    """Draw ``round(fraction * n)`` training indices to delete.

    ``random`` draws from all rows; ``minority``/``majority`` draw only from
    the smaller/larger group (ties make ``a`` the minority). Every group
    must keep at least two rows.
    """
    if scenario not in SCENARIOS:
        raise DataError(f"unknown scenario {scenario!r}")
    if not 0 <= fraction < 1:
        raise DataError(f"fraction must lie in [0, 1), got {fraction}")
    m = int(np.floor(fraction * ds.n + 0.5))
    rng = np.random.default_rng(seed)
    if scenario == "random":
        pool = np.arange(ds.n)
    else:
        g = minority_group(ds)
        if scenario == "majority":
            g = 1 - g
        pool = np.flatnonzero(ds.s == g)
    if m > pool.size:
        raise InfeasibleRequestError(f"cannot delete {m} rows from a pool of {pool.size}")
    idx = rng.choice(pool, size=m, replace=False) if m else np.array([], dtype=np.intp)
    req = DeletionRequest.from_indices(ds, idx, scenario=scenario)
    for g, removed in ((0, req.m_a), (1, req.m_b)):
        left = int(ds.counts[g].sum()) - removed
        if left < 2:
            raise InfeasibleRequestError(
                f"deleting {removed} rows leaves group {GROUP_NAMES[g]} with {left} member(s)")
    return req


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic biased classification problem.

    Group ``a`` is drawn with probability ``p_a``. Features are Gaussian
    with standard deviation ``feature_scale``; group ``a`` is shifted by
    ``+mean_shift/2`` and group ``b`` by ``-mean_shift/2`` along the first
    coordinate. Labels are Bernoulli(sigmoid(w.x + offset_g)) for a hidden
    ``w`` of norm ``weight_scale``.
    """

    n: int
    d: int
    p_a: float = 0.5
    offset_a: float = 0.0
    offset_b: float = 0.0
    mean_shift: float = 0.0
    feature_scale: float = 1.0
    weight_scale: float = 2.0
    add_bias: bool = True
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> SynthConfig:
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise DataError(f"unknown synth keys: {sorted(extra)}")
        return cls(**d)


def synth_raw(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Unnormalized draw: (Z, y, s, hidden weights)."""
    if cfg.n < 8 or cfg.d < 1 or not 0 < cfg.p_a < 1:
        raise DataError(f"degenerate synth config: n={cfg.n}, d={cfg.d}, p_a={cfg.p_a}")
    rng = np.random.default_rng(cfg.seed)
    s = (rng.random(cfg.n) >= cfg.p_a).astype(np.int8)  # 0 = a with prob p_a
    for g in (0, 1):
        if int((s == g).sum()) < 2:
            raise DataError(f"n={cfg.n} too small: group {GROUP_NAMES[g]} has fewer than 2 rows")
    Z = rng.normal(0.0, cfg.feature_scale, size=(cfg.n, cfg.d))
    Z[:, 0] += np.where(s == 0, 0.5, -0.5) * cfg.mean_shift
    w = rng.normal(size=cfg.d)
    w *= cfg.weight_scale / np.linalg.norm(w)
    logits = Z @ w + np.where(s == 0, cfg.offset_a, cfg.offset_b)
    y = (rng.random(cfg.n) < expit(logits)).astype(np.int8)
    return Z, y, s, w


def synth_generate(cfg: SynthConfig) -> Dataset:
    Z, y, s, _ = synth_raw(cfg)
    X, _ = normalize_arrays(Z, add_bias=cfg.add_bias)
    return Dataset.from_arrays(X, y, s)


def write_csv(path: str | Path, Z: np.ndarray, y: np.ndarray, s: np.ndarray) -> SchemaConfig:
    """Write a numeric table with columns x0..x{d-1}, label, group."""
    names = [f"x{j}" for j in range(Z.shape[1])]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["label", "group"])
        for row, lab, g in zip(Z, y, s):
            w.writerow([repr(float(v)) for v in row] + [int(lab), GROUP_NAMES[g]])
    return SchemaConfig(features=tuple(names), label="label", label_positive=("1",),
                        label_negative=("0",), group="group", group_a=("a",), group_b=("b",))
