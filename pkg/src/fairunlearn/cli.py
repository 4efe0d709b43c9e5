"""Command-line interface: ``fairunlearn <command> [options]``.

Commands
--------
synth    write a synthetic biased dataset (optionally with a held-out part) as CSV
         plus a TOML schema file
train    fit a model on a CSV described by a config file
unlearn  remove rows from a trained model and certify the result
certify  recompute the certificate for an unlearned model
eval     accuracy and fairness gaps of a model on a test CSV (JSON on stdout)
bench    run an experiment grid and write a CSV or JSON-lines result table

Every command that writes ``--out PATH`` also writes ``PATH.manifest.json``
holding the command, the resolved config, seeds, input and output sha256
digests and tool versions. Nothing time-dependent is recorded, so equal
inputs give byte-identical files.

Exit codes: 0 success, 2 config or data error, 3 infeasible request,
4 training did not converge.

Train config (TOML; JSON also accepted by ``.json`` suffix)::

    preset = "compas"          # optional: compas | adult | hsls loss defaults
    seed = 0
    sigma = 1.0
    [data]
    csv = "train.csv"          # relative paths resolve against the config file
    schema = "schema.toml"     # path, or an inline [data.schema] table
    add_bias = true
    [loss]                     # LossConfig: lam, gamma, notion, psi, g
    lam = 1e-4
    gamma = 10.0
    [train]                    # TrainConfig: tol, max_iter, shrink, armijo

Schema keys: features, categorical, label, label_positive, label_negative,
group, group_a, group_b (the last two are lists of literals; group a is the
one coded 0).

Bench config: the ExperimentConfig fields at top level (methods, scenarios,
fractions, repeats, lam, gamma, notion, sigma, delta, test_fraction,
sisa_shards, seed, workers, record_timings), plus either a ``[synth]`` table
(SynthConfig fields) or ``csv`` with a ``schema`` path or table.

Model files are JSON whatever their extension; see ``fairunlearn.serialize``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__, bench, certify, metrics, serialize
from .data import (DeletionRequest, SchemaConfig, SynthConfig, apply_stats, load_csv, preprocess,
                   sample_deletions, synth_raw, write_csv)
from .errors import ConfigError, FairUnlearnError, InfeasibleRequestError
from .fairloss import LossConfig
from .trainer import TrainConfig, sample_noise, train
from .unlearner import build_cache, unlearn

logger = logging.getLogger("fairunlearn")

PRESETS = {
    "compas": {"lam": 1e-4, "gamma": 10.0},
    "adult": {"lam": 1e-4, "gamma": 1.0},
    "hsls": {"lam": 1e-2, "gamma": 10.0},
}
DEFAULT_PRESET = "compas"
DEFAULT_SIGMA = 1.0
DEFAULT_DELTA = 1e-4


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else base / path


def _schema(value, base: Path) -> SchemaConfig:
    if isinstance(value, dict):
        return SchemaConfig.from_dict(value)
    if isinstance(value, str):
        return SchemaConfig.from_dict(serialize.read_tree(_resolve(base, value)))
    raise ConfigError("schema must be a path or a table")


def _loss_from_tree(tree: dict) -> LossConfig:
    preset = tree.get("preset", DEFAULT_PRESET)
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    loss = {**PRESETS[preset], **tree.get("loss", {})}
    extra = set(loss) - {"lam", "gamma", "notion", "psi", "g"}
    if extra:
        raise ConfigError(f"unknown loss keys: {sorted(extra)}")
    return LossConfig.from_dict(loss)


def _train_config(tree: dict) -> TrainConfig:
    try:
        return TrainConfig(**tree.get("train", {}))
    except TypeError as exc:
        raise ConfigError(f"bad [train] table: {exc}") from None


def _manifest(out: Path, command: str, config: dict, seeds: dict, inputs: list, outputs: list) -> None:
    data = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": {str(p): serialize.file_sha256(p) for p in inputs},
        "outputs": {str(p): serialize.file_sha256(p) for p in outputs},
        "tool": {"name": "fairunlearn", "version": __version__,
                 "numpy": np.__version__, "scipy": scipy.__version__},
    }
    serialize.write_json(Path(str(out) + ".manifest.json"), data)


def _load_training_set(source: dict, override_csv: str | None = None):
    """Rebuild the training Dataset and its preprocess stats from a source block."""
    if not source or "csv" not in source:
        raise ConfigError("model has no recorded data source; pass --data and --schema")
    schema = SchemaConfig.from_dict(source["schema"])
    path = Path(override_csv) if override_csv else Path(source["csv"])
    ds, stats = preprocess(load_csv(path, schema), schema, add_bias=source.get("add_bias", True))
    return ds, stats, path


def _read_indices(path: Path) -> list[int]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{path}: indices must be integers ({exc})") from None


def _certificate_dict(u, ds, theta_trained, sigma, delta, cache) -> dict:
    try:
        return certify.certify(u, ds, theta_trained, sigma, delta, cache).to_dict()
    except InfeasibleRequestError as exc:
        # sigma = 0: the bounds are still informative, epsilon is not finite
        req = u.request
        wc = certify.worstcase_bound(ds.n, req.m, req.m_a, req.m_b, ds.n_a, ds.n_b, u.loss.lam,
                                     u.loss.psi, u.loss.g, float(np.linalg.norm(theta_trained)))
        dd = certify.data_dependent_bound(ds.remove(req.indices) if req.m else ds, u.step, u.loss.psi)
        print(f"warning: {exc}", file=sys.stderr)
        return {"eps_prime": min(wc, dd), "eps_prime_worstcase": wc, "eps_prime_data_dependent": dd,
                "binding": "data_dependent" if dd < wc else "worstcase", "sigma": sigma,
                "delta": delta, "k": certify.noise_multiplier(delta), "epsilon": None,
                "m": req.m, "m_a": req.m_a, "m_b": req.m_b, "n": ds.n, "n_a": ds.n_a, "n_b": ds.n_b}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    tree = serialize.read_tree(args.config) if args.config else {}
    tree = dict(tree.get("synth", tree))
    for key in ("n", "d", "seed"):
        if getattr(args, key) is not None:
            tree[key] = getattr(args, key)
    tree.setdefault("n", 1000)
    tree.setdefault("d", 5)
    test_n = int(args.test_n or tree.pop("test_n", 0) or 0)
    cfg = SynthConfig.from_dict(tree)
    out = Path(args.out or "synth.csv")
    # one draw, so the held-out rows share the hidden weights
    Z, y, s, _ = synth_raw(replace(cfg, n=cfg.n + test_n))
    schema = write_csv(out, Z[:cfg.n], y[:cfg.n], s[:cfg.n])
    schema_path = out.with_suffix(".schema.toml")
    serialize.write_flat_toml(schema_path, schema.to_dict())
    outputs = [out, schema_path]
    if test_n:
        test_path = out.with_suffix(".test.csv")
        write_csv(test_path, Z[cfg.n:], y[cfg.n:], s[cfg.n:])
        outputs.append(test_path)
    _manifest(out, "synth", {"synth": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}, "test_n": test_n},
              {"seed": cfg.seed}, [args.config] if args.config else [], outputs)
    print(f"wrote {cfg.n} rows to {out}" + (f", {test_n} to {outputs[-1]}" if test_n else "") + f"; schema {schema_path}")
    return 0


def cmd_train(args) -> int:
    if not args.config:
        raise ConfigError("train needs --config")
    cfg_path = Path(args.config)
    tree = serialize.read_tree(cfg_path)
    base = cfg_path.parent
    data = tree.get("data")
    if not data or "csv" not in data or "schema" not in data:
        raise ConfigError("config needs a [data] table with 'csv' and 'schema'")
    csv_path = _resolve(base, data["csv"])
    schema = _schema(data["schema"], base)
    add_bias = bool(data.get("add_bias", True))
    loss = _loss_from_tree(tree)
    tc = _train_config(tree)
    seed = int(args.seed if args.seed is not None else tree.get("seed", 0))
    sigma = float(args.sigma if args.sigma is not None else tree.get("sigma", DEFAULT_SIGMA))

    ds, stats = preprocess(load_csv(csv_path, schema), schema, add_bias=add_bias)
    noise_seed = bench.derive_seed(seed, 1)
    model = train(ds, loss, sample_noise(ds.d, sigma, noise_seed), replace(tc, seed=seed))
    source = {"csv": str(csv_path.resolve()), "schema": schema.to_dict(), "add_bias": add_bias}
    out = Path(args.out or "model.json")
    serialize.save_model(out, model, stats, source)
    inputs = [cfg_path, csv_path] + ([_resolve(base, data["schema"])] if isinstance(data["schema"], str) else [])
    _manifest(out, "train", {"loss": loss.to_dict(), "train": tc.to_dict(), "sigma": sigma, "data": source},
              {"seed": seed, "noise_seed": noise_seed}, inputs, [out])
    kind = "fair" if loss.gamma > 0 else "BCE"
    print(f"trained {kind} model: n={ds.n}, d={ds.d}, {model.iterations} Newton iterations, "
          f"||grad||={model.grad_norm:.3e}; wrote {out}")
    return 0


def cmd_unlearn(args) -> int:
    if not args.model:
        raise ConfigError("unlearn needs --model")
    model, stats, source = serialize.load_model(args.model)
    ds, _, data_path = _load_training_set(source, args.data)
    if ds.fingerprint != model.fingerprint:
        raise ConfigError("training data does not match the model fingerprint")
    seed = int(args.seed if args.seed is not None else 0)
    if args.indices:
        req = DeletionRequest.from_indices(ds, _read_indices(Path(args.indices)))
        seeds = {}
    else:
        if args.scenario is None or args.fraction is None:
            raise ConfigError("give --indices FILE or both --scenario and --fraction")
        req = sample_deletions(ds, args.scenario, args.fraction, seed)
        seeds = {"seed": seed}
    delta = float(args.delta if args.delta is not None else DEFAULT_DELTA)
    cache = build_cache(model, ds)
    u = unlearn(model, ds, req, cache)
    cert = _certificate_dict(u, ds, model.theta, model.noise.sigma, delta, cache)

    out = Path(args.out or "unlearned.json")
    cert_path = out.with_suffix(".cert.json")
    serialize.save_unlearned(out, u, stats, source)
    serialize.save_certificate(cert_path, cert)
    inputs = [Path(args.model), data_path] + ([Path(args.indices)] if args.indices else [])
    _manifest(out, "unlearn", {"request": req.to_dict(), "delta": delta, "loss": u.loss.to_dict()},
              seeds, inputs, [out, cert_path])
    eps = cert["epsilon"]
    print(f"removed {req.m} rows ({req.m_a} from a, {req.m_b} from b); residual {u.residual_norm:.3e}; "
          f"eps'={cert['eps_prime']:.4g} ({cert['binding']}); "
          f"epsilon={'n/a' if eps is None else format(eps, '.4g')}; wrote {out} and {cert_path}")
    return 0


def cmd_certify(args) -> int:
    if not args.model or not args.unlearned:
        raise ConfigError("certify needs --model and --unlearned")
    model, _, source = serialize.load_model(args.model)
    uobj = serialize.load_unlearned(args.unlearned)
    if uobj["source_fingerprint"] != model.fingerprint:
        raise ConfigError("unlearned file was not produced from this model")
    ds, _, data_path = _load_training_set(source, args.data)
    if ds.fingerprint != model.fingerprint:
        raise ConfigError("training data does not match the model fingerprint")
    req = DeletionRequest.from_indices(ds, uobj["request"]["indices"], uobj["request"]["scenario"])
    delta = float(args.delta if args.delta is not None else DEFAULT_DELTA)
    cache = build_cache(model, ds)
    u = unlearn(model, ds, req, cache, uobj["loss"])
    if not np.array_equal(u.theta, uobj["theta"]):
        raise ConfigError("recomputed unlearned parameters differ from the file")
    cert = _certificate_dict(u, ds, model.theta, model.noise.sigma, delta, cache)
    out = Path(args.out or "certificate.json")
    serialize.save_certificate(out, cert)
    _manifest(out, "certify", {"delta": delta}, {}, [Path(args.model), Path(args.unlearned), data_path], [out])
    print(serialize.dumps(cert), end="")
    return 0


def cmd_eval(args) -> int:
    if not args.model or not args.test:
        raise ConfigError("eval needs --model and --test")
    theta, stats, source = serialize.load_any_theta(args.model)
    if stats is None:
        raise ConfigError("model file has no preprocessing statistics")
    schema = _schema(args.schema, Path(".")) if args.schema else serialize.schema_from_source(source)
    if schema is None:
        raise ConfigError("no schema: pass --schema")
    test = apply_stats(load_csv(args.test, schema), stats, schema)
    rep = metrics.report(theta, test)
    text = serialize.dumps(rep)
    if args.out:
        out = Path(args.out)
        out.write_text(text, encoding="utf-8")
        _manifest(out, "eval", {"schema": schema.to_dict()}, {}, [Path(args.model), Path(args.test)], [out])
    print(text, end="")
    return 0


def cmd_bench(args) -> int:
    if not args.config:
        raise ConfigError("bench needs --config")
    cfg_path = Path(args.config)
    tree = dict(serialize.read_tree(cfg_path))
    base = cfg_path.parent
    if "csv" in tree:
        tree["csv"] = str(_resolve(base, tree["csv"]))
        if isinstance(tree.get("schema"), str):
            tree["schema"] = serialize.read_tree(_resolve(base, tree["schema"]))
    for key in ("seed", "sigma", "delta"):
        if getattr(args, key) is not None:
            tree[key] = getattr(args, key)
    if args.scenario is not None:
        tree["scenarios"] = [args.scenario]
    if args.fraction is not None:
        tree["fractions"] = [args.fraction]
    cfg = bench.ExperimentConfig.from_dict(tree)
    out = Path(args.out or "results.csv")
    fmt = args.format or ("jsonl" if out.suffix == ".jsonl" else "csv")
    rows = bench.run_experiment(cfg)
    bench.emit(rows, fmt, out, include_timings=cfg.record_timings)
    inputs = [cfg_path] + ([Path(cfg.csv)] if cfg.csv else [])
    _manifest(out, "bench", cfg.to_dict(), {"seed": cfg.seed}, inputs, [out])
    skipped = sum(not r.status.startswith("ok") for r in rows)
    print(f"{len(rows)} rows ({skipped} skipped) -> {out}")
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "unlearn": cmd_unlearn,
            "certify": cmd_certify, "eval": cmd_eval, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairunlearn", description="Certified unlearning for fair logistic models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *flags):
        sp.add_argument("--out", help="output path")
        if "config" in flags:
            sp.add_argument("--config", help="TOML (or .json) config file")
        if "seed" in flags:
            sp.add_argument("--seed", type=int)
        if "sigma" in flags:
            sp.add_argument("--sigma", type=float, help="noise standard deviation")
        if "delta" in flags:
            sp.add_argument("--delta", type=float, help=f"certificate delta (default {DEFAULT_DELTA})")
        if "request" in flags:
            sp.add_argument("--scenario", choices=bench.SCENARIOS)
            sp.add_argument("--fraction", type=float)
        return sp

    sp = common(sub.add_parser("synth", help="write a synthetic dataset"), "config", "seed")
    sp.add_argument("--n", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--test-n", type=int, help="also write this many held-out rows to OUT.test.csv")

    common(sub.add_parser("train", help="train a model"), "config", "seed", "sigma")

    sp = common(sub.add_parser("unlearn", help="remove rows and certify"), "seed", "delta", "request")
    sp.add_argument("--model", help="trained model file")
    sp.add_argument("--indices", help="file of row indices to remove (whitespace or comma separated)")
    sp.add_argument("--data", help="training CSV, if moved since training")

    sp = common(sub.add_parser("certify", help="recompute a certificate"), "delta")
    sp.add_argument("--model")
    sp.add_argument("--unlearned")
    sp.add_argument("--data", help="training CSV, if moved since training")

    sp = common(sub.add_parser("eval", help="metrics on a test CSV"))
    sp.add_argument("--model", help="model or unlearned file")
    sp.add_argument("--test", help="test CSV")
    sp.add_argument("--schema", help="schema file (defaults to the one recorded in the model)")

    sp = common(sub.add_parser("bench", help="run an experiment grid"), "config", "seed", "sigma", "delta", "request")
    sp.add_argument("--format", choices=("csv", "jsonl"))
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FairUnlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
