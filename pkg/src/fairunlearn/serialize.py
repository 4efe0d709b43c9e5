"""Versioned JSON files for models, unlearned models, certificates and configs.

Model file layout (``format = "fairunlearn-model"``, ``version = 1``)::

    theta        list of floats (Python repr, so values round-trip exactly)
    loss         LossConfig fields
    noise        {"sigma", "seed", "b"}
    fingerprint  sha256 of the training Dataset
    diagnostics  {"grad_norm", "iterations"}
    preprocess   PreprocessStats fields, or null for array-built data
    source       {"csv", "schema", "add_bias"}: how to rebuild the training set

Unlearned files (``fairunlearn-unlearned``) carry theta, step, delta, the
request and both residual norms, plus the source model's preprocess/source
blocks so they can be evaluated on their own. Certificates
(``fairunlearn-certificate``) are ``Certificate.to_dict()`` plus the header.
Every file is written with sorted keys and no timestamps.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .data import PreprocessStats, SchemaConfig
from .errors import ConfigError
from .fairloss import LossConfig
from .trainer import Model, NoiseVector

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

FORMAT_VERSION = 1


def _ro(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    arr.setflags(write=False)
    return arr


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: str | Path, obj: dict) -> None:
    try:
        Path(path).write_text(dumps(obj), encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from None


def read_tree(path: str | Path) -> dict:
    """Load a TOML or JSON key/value tree (chosen by suffix, TOML otherwise)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        if path.suffix == ".json":
            return json.loads(raw.decode("utf-8"))
        return tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot write {type(v).__name__} to TOML")


def write_flat_toml(path: str | Path, tree: dict) -> None:
    """Write a flat table of scalars and lists (enough for a schema file)."""
    lines = [f"{k} = {_toml_value(v)}" for k, v in tree.items() if v is not None]
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from None


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _header(kind: str) -> dict:
    return {"format": f"fairunlearn-{kind}", "version": FORMAT_VERSION}


def _check_header(obj: dict, kind: str, path) -> None:
    if obj.get("format") != f"fairunlearn-{kind}":
        raise ConfigError(f"{path} is not a {kind} file (format={obj.get('format')!r})")
    if obj.get("version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported {kind} file version {obj.get('version')!r}")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None


def model_to_dict(model: Model, stats: PreprocessStats | None = None, source: dict | None = None) -> dict:
    return {
        **_header("model"),
        "theta": [float(v) for v in model.theta],
        "loss": model.loss.to_dict(),
        "noise": {"sigma": model.noise.sigma, "seed": model.noise.seed, "b": [float(v) for v in model.noise.b]},
        "fingerprint": model.fingerprint,
        "diagnostics": {"grad_norm": model.grad_norm, "iterations": model.iterations},
        "preprocess": stats.to_dict() if stats is not None else None,
        "source": source,
    }


def save_model(path, model: Model, stats: PreprocessStats | None = None, source: dict | None = None) -> None:
    write_json(path, model_to_dict(model, stats, source))


def load_model(path) -> tuple[Model, PreprocessStats | None, dict | None]:
    obj = _read_json(path)
    _check_header(obj, "model", path)
    try:
        nz = obj["noise"]
        model = Model(
            theta=_ro(obj["theta"]),
            loss=LossConfig.from_dict(obj["loss"]),
            noise=NoiseVector(b=_ro(nz["b"]), sigma=float(nz["sigma"]), seed=nz["seed"]),
            fingerprint=obj["fingerprint"],
            grad_norm=float(obj["diagnostics"]["grad_norm"]),
            iterations=int(obj["diagnostics"]["iterations"]),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed model file ({exc})") from None
    stats = PreprocessStats.from_dict(obj["preprocess"]) if obj.get("preprocess") else None
    return model, stats, obj.get("source")


def save_unlearned(path, u, stats: PreprocessStats | None = None, source: dict | None = None) -> None:
    write_json(path, {
        **_header("unlearned"),
        "theta": [float(v) for v in u.theta],
        "step": [float(v) for v in u.step],
        "delta": [float(v) for v in u.delta],
        "residual_norm": u.residual_norm,
        "residual_norm_clean": u.residual_norm_clean,
        "request": u.request.to_dict(),
        "loss": u.loss.to_dict(),
        "source_fingerprint": u.source_fingerprint,
        "preprocess": stats.to_dict() if stats is not None else None,
        "source": source,
    })


def load_unlearned(path) -> dict:
    """Raw dict of an unlearned file with array fields converted to numpy."""
    obj = _read_json(path)
    _check_header(obj, "unlearned", path)
    for key in ("theta", "step", "delta"):
        obj[key] = _ro(obj[key])
    obj["loss"] = LossConfig.from_dict(obj["loss"])
    if obj.get("preprocess"):
        obj["preprocess"] = PreprocessStats.from_dict(obj["preprocess"])
    return obj


def load_any_theta(path) -> tuple[np.ndarray, PreprocessStats | None, dict | None]:
    """theta, preprocess stats and source block from a model or unlearned file."""
    obj = _read_json(path)
    fmt = obj.get("format")
    if fmt == "fairunlearn-model":
        model, stats, source = load_model(path)
        return model.theta, stats, source
    if fmt == "fairunlearn-unlearned":
        u = load_unlearned(path)
        return u["theta"], u.get("preprocess"), u.get("source")
    raise ConfigError(f"{path} is neither a model nor an unlearned file")


def save_certificate(path, cert_dict: dict) -> None:
    write_json(path, {**_header("certificate"), **cert_dict})


def schema_from_source(source: dict | None) -> SchemaConfig | None:
    if not source or not source.get("schema"):
        return None
    return SchemaConfig.from_dict(source["schema"])
