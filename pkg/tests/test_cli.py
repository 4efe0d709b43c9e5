import json
import subprocess
import sys

import pytest

from fairunlearn.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run("synth", "--n", 600, "--d", 4, "--seed", 7, "--test-n", 200, "--out", "train.csv") == 0
    assert run("synth", "--n", 200, "--d", 4, "--seed", 8, "--out", "test.csv") == 0
    (tmp_path / "c.toml").write_text(
        'seed = 1\nsigma = 0.5\n[data]\ncsv = "train.csv"\nschema = "train.schema.toml"\n'
        "[loss]\nlam = 1e-3\ngamma = 1.0\n")
    return tmp_path


def test_synth_writes_loadable_csv(workdir):
    from fairunlearn.data import SchemaConfig, load_csv
    from fairunlearn.serialize import read_tree
    schema = SchemaConfig.from_dict(read_tree(workdir / "train.schema.toml"))
    assert len(load_csv(workdir / "train.csv", schema)) == 600
    assert (workdir / "train.csv.manifest.json").exists()


def test_train_unlearn_certify_eval(workdir, capsys):
    assert run("train", "--config", "c.toml", "--out", "m.bin") == 0
    man = json.loads((workdir / "m.bin.manifest.json").read_text())
    assert man["command"] == "train" and "m.bin" in man["outputs"]
    assert run("unlearn", "--model", "m.bin", "--scenario", "random", "--fraction", 0.05,
               "--seed", 2, "--out", "u.json") == 0
    cert = json.loads((workdir / "u.cert.json").read_text())
    assert cert["m"] == 30
    assert cert["eps_prime"] == min(cert["eps_prime_worstcase"], cert["eps_prime_data_dependent"])
    assert run("certify", "--model", "m.bin", "--unlearned", "u.json", "--out", "c2.json") == 0
    again = json.loads((workdir / "c2.json").read_text())
    assert again == cert
    capsys.readouterr()
    assert run("eval", "--model", "u.json", "--test", "test.csv", "--schema", "test.schema.toml") == 0
    rep = json.loads(capsys.readouterr().out)
    assert set(rep) == {"accuracy", "aeod", "dempar", "eqopp", "subgroup_acc_diff"}
    assert run("eval", "--model", "u.json", "--test", "train.test.csv") == 0
    assert json.loads(capsys.readouterr().out)["accuracy"] > 0.6


def test_outputs_byte_identical(workdir):
    for tag in ("a", "b"):
        assert run("train", "--config", "c.toml", "--out", f"m{tag}.json") == 0
        assert run("unlearn", "--model", f"m{tag}.json", "--scenario", "minority", "--fraction", 0.02,
                   "--out", f"u{tag}.json") == 0
    assert (workdir / "ma.json").read_bytes() == (workdir / "mb.json").read_bytes()
    assert (workdir / "ua.json").read_bytes() == (workdir / "ub.json").read_bytes()
    assert (workdir / "ua.cert.json").read_bytes() == (workdir / "ub.cert.json").read_bytes()


def test_gamma_zero_gives_bce(workdir):
    (workdir / "b.toml").write_text((workdir / "c.toml").read_text().replace("gamma = 1.0", "gamma = 0.0"))
    assert run("train", "--config", "b.toml", "--out", "m.json") == 0
    assert json.loads((workdir / "m.json").read_text())["loss"]["gamma"] == 0.0


def test_missing_label_column_exit_2(workdir, capsys):
    schema = (workdir / "train.schema.toml").read_text().replace('label = "label"', 'label = "two_year_recid"')
    (workdir / "bad.schema.toml").write_text(schema)
    (workdir / "bad.toml").write_text((workdir / "c.toml").read_text().replace("train.schema.toml", "bad.schema.toml"))
    assert run("train", "--config", "bad.toml", "--out", "m.json") == 2
    assert "two_year_recid" in capsys.readouterr().err


def test_group_emptying_request_exit_3(workdir):
    assert run("train", "--config", "c.toml", "--out", "m.json") == 0
    rows = (workdir / "train.csv").read_text().splitlines()[1:]
    idx = [str(i) for i, line in enumerate(rows) if line.endswith(",b")]
    (workdir / "idx.txt").write_text("\n".join(idx))
    assert run("unlearn", "--model", "m.json", "--indices", "idx.txt", "--out", "u.json") == 3


def test_empty_request_is_identity(workdir):
    assert run("train", "--config", "c.toml", "--out", "m.json") == 0
    (workdir / "none.txt").write_text("")
    assert run("unlearn", "--model", "m.json", "--indices", "none.txt", "--out", "u.json") == 0
    m = json.loads((workdir / "m.json").read_text())
    u = json.loads((workdir / "u.json").read_text())
    assert u["theta"] == m["theta"]
    assert json.loads((workdir / "u.cert.json").read_text())["epsilon"] == 0.0


def test_non_convergence_exit_4(workdir):
    text = (workdir / "c.toml").read_text() + "[train]\nmax_iter = 1\ntol = 1e-15\n"
    (workdir / "slow.toml").write_text(text)
    assert run("train", "--config", "slow.toml", "--out", "m.json") == 4


def test_fingerprint_mismatch_exit_2(workdir):
    assert run("train", "--config", "c.toml", "--out", "m.json") == 0
    assert run("unlearn", "--model", "m.json", "--data", "test.csv", "--scenario", "random",
               "--fraction", 0.01, "--out", "u.json") == 2


def test_bench_twice_identical(workdir):
    (workdir / "exp.toml").write_text(
        "repeats = 2\nfractions = [0.01, 0.05]\nscenarios = [\"random\", \"majority\"]\nsigma = 0.1\n"
        "lam = 1e-3\ngamma = 1.0\n[synth]\nn = 400\nd = 4\np_a = 0.3\nmean_shift = 2.0\noffset_a = 1.0\n")
    assert run("bench", "--config", "exp.toml", "--out", "r1.csv") == 0
    assert run("bench", "--config", "exp.toml", "--out", "r2.csv") == 0
    assert (workdir / "r1.csv").read_bytes() == (workdir / "r2.csv").read_bytes()
    assert run("bench", "--config", "exp.toml", "--out", "r.jsonl", "--scenario", "random") == 0
    assert (workdir / "r.jsonl").read_text().startswith('{"schema_version"')


def test_bad_config_exit_2(workdir):
    (workdir / "broken.toml").write_text("this is = = not toml")
    assert run("train", "--config", "broken.toml") == 2
    assert run("bench", "--config", "missing.toml") == 2


def test_module_entry_point(workdir):
    proc = subprocess.run([sys.executable, "-m", "fairunlearn", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "fairunlearn" in proc.stdout
