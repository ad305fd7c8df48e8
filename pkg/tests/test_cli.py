import json
import shutil
import subprocess

import pytest

from ch2wave.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_classify_peaked_limit(capsys):
    code, out, _ = run(capsys, "classify", "--sigma", "2", "--A", "0+", "--c", "2")
    assert code == 0
    assert out.startswith('{"class":"Peaked","crest":1.0,')


def test_classify_small_A_is_cusped(capsys):
    # at A = 1e-9 the peaked speed is 2*A1 < 2, so c = 2 lies just inside the cusped region
    code, out, _ = run(capsys, "classify", "--sigma", "2", "--A", "1e-9", "--c", "2")
    data = json.loads(out)
    assert code == 0 and data["class"] == "Cusped" and data["crest"] == 1.0


def test_classify_nowave(capsys):
    code, out, _ = run(capsys, "classify", "--sigma", "0", "--A", "1e-9", "--c", "0.5")
    assert code == 0 and json.loads(out)["class"] == "NoWave"


def test_domain_error_exit(capsys):
    code, _, err = run(capsys, "classify", "--sigma", "0", "--A", "-1", "--c", "0.5")
    assert code == 1
    assert json.loads(err)["error"] == "DomainError"
    code, _, err = run(capsys, "profile", "--sigma", "0", "--A", "0.1", "--c", "0.5")
    assert code == 1


def test_missing_config_exit(capsys, tmp_path):
    code, _, err = run(capsys, "evolve", "--config", str(tmp_path / "missing.json"))
    assert code == 3
    payload = json.loads(err)
    assert payload["exit_code"] == 3 and "missing.json" in payload["message"]


def test_bad_config_exit(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sigma": 0, "A": 0.1, "L": 20, "N": 100}))
    code, _, err = run(capsys, "evolve", "--config", str(cfg))
    assert code == 1 and json.loads(err)["error"] == "ConfigurationError"


def test_blowup_exit(capsys, tmp_path):
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps({"sigma": 2, "A": 0.1, "L": 20, "N": 512, "T": 1, "blowup_threshold": 6,
                               "initial": {"type": "odd-gaussian", "amplitude": 3, "eta_amp": -1}}))
    code, out, err = run(capsys, "evolve", "--config", str(cfg), "--output-dir", str(tmp_path / "o"))
    assert code == 2 and json.loads(out)["blowup_flag"]
    assert (tmp_path / "o" / "run.csv").exists()
    # the same run is fine when regularity is not required
    data = json.loads(cfg.read_text())
    data["require_regular"] = False
    cfg.write_text(json.dumps(data))
    code, _, _ = run(capsys, "evolve", "--config", str(cfg), "--output-dir", str(tmp_path / "o"))
    assert code == 0


def test_flags_override_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sigma": 0, "A": 0.1, "c": 0.5}))
    code, out, _ = run(capsys, "classify", "--config", str(cfg), "--c", "1.5")
    assert code == 0 and json.loads(out)["class"] == "Smooth"


def test_dry_run_computes_nothing(capsys, tmp_path):
    out_dir = tmp_path / "never"
    for cmd in ("stability", "atlas", "sigma0-global", "breaking-probe"):
        code, out, _ = run(capsys, cmd, "--dry-run", "--output-dir", str(out_dir))
        assert code == 0 and "kind" in json.loads(out)
    code, out, _ = run(capsys, "spectrum", "--sigma", "0.5", "--A", "0.1", "--c", "1.5", "--dry-run")
    assert json.loads(out)["N"] == 2048
    cfg = tmp_path / "r.json"
    cfg.write_text(json.dumps({"sigma": 0.5, "A": 0.1, "N": 512,
                               "initial": {"type": "solitary", "c": 1.5}}))
    code, out, _ = run(capsys, "evolve", "--config", str(cfg), "--dry-run")
    assert code == 0 and json.loads(out)["dt"] > 0
    assert not out_dir.exists()


def test_profile_spectrum_dc_outputs(capsys, tmp_path):
    args = ("--sigma", "0.5", "--A", "0.1", "--c", "1.5", "--output-dir", str(tmp_path))
    assert run(capsys, "profile", *args, "--n-points", "1024")[0] == 0
    code, out, _ = run(capsys, "spectrum", *args, "--n-points", "1024")
    assert code == 0 and json.loads(out)["n_negative"] == 1
    code, out, _ = run(capsys, "dc-scan", *args)
    assert code == 0 and json.loads(out)["d_second_integral"] > 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"profile.csv", "profile.json", "profile.svg", "spectrum.json", "dc_point.json"} <= names
    assert not any(n.startswith(".") for n in names)


def test_experiment_config(capsys, tmp_path):
    cfg = tmp_path / "atlas.json"
    cfg.write_text(json.dumps({"sigma": [0.5, 2.0], "A": [0.1], "c": {"linspace": [-3, 3, 13]},
                               "output": {"stem": "mini"}}))
    code, out, _ = run(capsys, "atlas", "--config", str(cfg), "--output-dir", str(tmp_path))
    assert code == 0 and json.loads(out)["boundaries_ok"]
    assert (tmp_path / "mini.csv").read_text().startswith("sigma,A,c,branch,class,crest_value")


@pytest.mark.skipif(shutil.which("ch2wave") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["ch2wave", "classify", "--sigma", "0.5", "--A", "0+", "--c", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    data = json.loads(proc.stdout)
    assert data["class"] == "Smooth" and data["crest"] == 1.0
