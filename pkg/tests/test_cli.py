import json
import math
import subprocess
import sys

import pytest

from dephasimeter import cli
from dephasimeter.errors import ConfigError

CONFIGS = {
    "kappa": {"spectrum": {"kind": "lorentzian", "variance": 1.0, "rate": 1.0}, "times": [0.1, 1.0, 10.0]},
    "evolve": {"state": {"kind": "css", "N": 4, "theta": 1.0}, "encoding": {"b": 0.3, "t": 0.5},
               "kappa": 0.05},
    "qfi": {"state": {"kind": "phi", "N": 8}, "encoding": {"b": 0.0, "t": 0.5},
            "spectrum": {"kind": "flat", "level": 1.0}, "T": 2.0},
    "sweep": {"state": "css", "decay": {"mode": "zeno", "kappa0": 1.0, "omega_c": 1.0},
              "lo_exp": 4, "hi_exp": 9, "per_octave": 2},
    "table1": {"N": [64, 128, 256, 512]},
    "ratio-mc": {"nu": 1000, "replications": 50},
    "wigner": {"J": 32, "family": "ku", "theta": 0.6, "kappa_t": 0.001, "n": 33},
}


def write_config(tmp_path, command, params, **top):
    path = tmp_path / f"{command}.json"
    path.write_text(json.dumps({"command": command, "parameters": params, **top}))
    return str(path)


@pytest.mark.parametrize("command", sorted(CONFIGS))
def test_every_command_runs_and_writes_manifest(tmp_path, command):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, command, CONFIGS[command])
    assert cli.main([command, "--config", cfg, "--output", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == command
    for name in manifest["outputs"]:
        assert (out / name).exists()
    for csv in out.glob("*.csv"):
        assert (out / (csv.stem + ".legend.txt")).exists()
        assert b"\r" not in csv.read_bytes()


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, "ratio-mc", CONFIGS["ratio-mc"], seed=5)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["ratio-mc", "--config", cfg, "--output", str(a)]) == 0
    assert cli.main(["ratio-mc", "--config", cfg, "--output", str(b)]) == 0
    for f in a.iterdir():
        if f.name != "manifest.json":
            assert f.read_bytes() == (b / f.name).read_bytes()
    c = tmp_path / "c"
    assert cli.main(["ratio-mc", "--config", cfg, "--output", str(c), "--seed", "6"]) == 0
    assert (a / "bias.csv").read_bytes() != (c / "bias.csv").read_bytes()


def test_malformed_config_exits_2_without_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    params = dict(CONFIGS["kappa"], bogus=1)
    cfg = write_config(tmp_path, "kappa", params)
    assert cli.main(["kappa", "--config", cfg, "--output", str(out)]) == 2
    assert "bogus" in capsys.readouterr().err
    assert not out.exists()
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["kappa", "--config", str(bad), "--output", str(out)]) == 2
    assert not out.exists()


def test_domain_failure_exits_1_without_outputs(tmp_path):
    out = tmp_path / "out"
    params = {"state": {"kind": "phi", "N": 5}, "encoding": {"t": 0.5}, "kappa": 0.0}
    cfg = write_config(tmp_path, "evolve", params)
    assert cli.main(["evolve", "--config", cfg, "--output", str(out)]) == 1
    assert not out.exists()


def test_overrides_and_bare_parameter_file(tmp_path):
    out = tmp_path / "out"
    bare = tmp_path / "bare.json"
    bare.write_text(json.dumps(CONFIGS["kappa"]))
    assert cli.main(["kappa", "--spec", str(bare), "--output", str(out),
                     "--set", "spectrum.rate=2.0"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["parameters"]["spectrum"]["rate"] == 2.0
    with pytest.raises(ConfigError):
        cli.resolve("kappa", {"parameters": CONFIGS["kappa"]}, overrides=["times=[1, 2]"])
    with pytest.raises(ConfigError):
        cli.resolve("kappa", {"parameters": CONFIGS["kappa"]}, overrides=["novalue"])


def test_worker_env_var_overrides_config(monkeypatch):
    monkeypatch.setenv("DEPHASIMETER_WORKERS", "3")
    cfg, _ = cli.resolve("kappa", {"parameters": CONFIGS["kappa"], "workers": 1})
    assert cfg.workers == 3
    monkeypatch.setenv("DEPHASIMETER_WORKERS", "0")
    with pytest.raises(ConfigError):
        cli.resolve("kappa", {"parameters": CONFIGS["kappa"]})
    monkeypatch.setenv("DEPHASIMETER_WORKERS", "many")
    with pytest.raises(ConfigError):
        cli.resolve("kappa", {"parameters": CONFIGS["kappa"]})


def test_float_format_has_17_significant_digits():
    assert cli.format_float(0.1) == "0.10000000000000001"
    assert float(cli.format_float(math.pi)) == math.pi
    header, *rows = cli.write_csv(["a", "b"], [[1, 0.1]], {"a": "x", "b": "y"})[0].split("\n")
    assert header == "a,b"
    assert rows[0] == "1,0.10000000000000001"


def test_kappa_csv_matches_library(tmp_path):
    from dephasimeter.noise import NoiseSpectrum, kappa_of_t

    out = tmp_path / "out"
    cfg = write_config(tmp_path, "kappa", CONFIGS["kappa"])
    assert cli.main(["kappa", "--config", cfg, "--output", str(out)]) == 0
    lines = (out / "kappa.csv").read_text().strip().split("\n")
    spec = NoiseSpectrum.lorentzian(1.0, 1.0)
    for line, t in zip(lines[1:], CONFIGS["kappa"]["times"]):
        assert float(line.split(",")[1]) == kappa_of_t(spec, t)


def test_console_entry_point(tmp_path):
    cfg = write_config(tmp_path, "kappa", CONFIGS["kappa"])
    proc = subprocess.run([sys.executable, "-m", "dephasimeter", "kappa", "--config", cfg,
                           "--output", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
