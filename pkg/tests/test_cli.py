import json

import pytest

from chlab.cli import main


@pytest.fixture
def root(tmp_path, monkeypatch):
    out = tmp_path / "runs"
    monkeypatch.setenv("CHLAB_OUTPUT_ROOT", str(out))
    return out


def _cfg(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_list(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 17
    assert lines[0].startswith("profile-identities")


def test_run_pass(tmp_path, root, capsys):
    assert main(["run", str(_cfg(tmp_path, "experiment: liouville-potential\n"))]) == 0
    out = capsys.readouterr().out
    assert "PASS linops.liouville_rational" in out
    assert (root / "liouville-potential-seed0" / "report.json").is_file()


def test_run_fail(tmp_path, root, capsys):
    cfg = _cfg(tmp_path, "experiment: profile-identities\ngrid: {n: 128, length: 80.0}\n")
    assert main(["run", str(cfg)]) == 1
    assert "FAIL soliton.stationary_residual" in capsys.readouterr().out


def test_config_errors(tmp_path, root, capsys):
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2
    assert main(["run", str(_cfg(tmp_path, "experiment: [unclosed\n", "bad.yaml"))]) == 2
    capsys.readouterr()
    cfg = _cfg(tmp_path, "experiment: profile-identities\nphysics: {c: 1.5, omega: 1.0}\n")
    assert main(["run", str(cfg)]) == 2
    err = json.loads(capsys.readouterr().err)["error"]
    assert err["type"] == "config"
    assert "c ≤ 2ω" in err["message"]


def test_unknown_experiment_suggestions(tmp_path, root, capsys):
    assert main(["run", str(_cfg(tmp_path, "experiment: liouville\n"))]) == 2
    err = json.loads(capsys.readouterr().err)["error"]
    assert "liouville-potential" in err["suggestions"]


def test_runtime_error(tmp_path, root, capsys):
    cfg = _cfg(tmp_path, "experiment: profile-identities\ngrid: {n: 256, length: 10.0}\n")
    assert main(["run", str(cfg)]) == 3
    err = json.loads(capsys.readouterr().err)["error"]
    assert err["type"] == "runtime" and err["exception"] == "InvalidParameter"
    assert (root / "profile-identities-seed0" / "error.json").is_file()


def test_rerun_is_byte_identical(tmp_path, root):
    cfg = _cfg(tmp_path, "experiment: operator-algebra\nseed: 3\noutput: a\n")
    assert main(["run", str(cfg)]) == 0
    first = (root / "a" / "commutators.csv").read_bytes()
    assert main(["run", str(cfg)]) == 0
    assert (root / "a" / "commutators.csv").read_bytes() == first


def test_seeded_run_is_reproducible(tmp_path, root):
    for name in ("a", "b"):
        cfg = _cfg(tmp_path, f"experiment: semigroup-decay\nseed: 5\noutput: {name}\n", f"{name}.yaml")
        assert main(["run", str(cfg)]) == 0
    assert (root / "a" / "decay.csv").read_bytes() == (root / "b" / "decay.csv").read_bytes()


def test_export(tmp_path, root):
    cfg = _cfg(tmp_path, "experiment: liouville-potential\n")
    assert main(["run", str(cfg)]) == 0
    run = root / "liouville-potential-seed0"
    assert main(["export", str(run), "--to", str(tmp_path / "exp")]) == 0
    manifest = (tmp_path / "exp" / "manifest.csv").read_text().splitlines()
    assert manifest[0] == "file,sha256,verified,rows"
    assert manifest[1].startswith("potential.csv,") and manifest[1].endswith(",1,401")
    text = (tmp_path / "exp" / "assertions.csv").read_text().splitlines()
    assert text[0] == "id,measured,comparator,tolerance,passed"
    assert len(text) == 3


def test_export_detects_tampering(tmp_path, root):
    cfg = _cfg(tmp_path, "experiment: liouville-potential\n")
    assert main(["run", str(cfg)]) == 0
    run = root / "liouville-potential-seed0"
    (run / "potential.csv").write_text("z,V\n0,0\n")
    assert main(["export", str(run)]) == 3
    assert main(["export", str(tmp_path / "nowhere")]) == 2
