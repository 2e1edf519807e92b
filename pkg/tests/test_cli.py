import json
import os
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from smoothfix.artifacts import load_schema, sha256_file
from smoothfix.cli import EXIT_CONFIG, main
from smoothfix.config import ConfigError, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SPLIT_AUDIT = """\
command = "audit"
seed = 5

[model]
kind = "deterministic-split"
T = [0.5, 0.5]

[params]
depth = 6
replicas = 40
chunk_size = 7
"""

KAC_VERIFY = """\
command = "verify"
seed = 1

[model]
kind = "kac"
beta = 1.0

[stable]
alpha = 2.0
regime = "gaussian"
gaussian_matrix = [[2.0]]

[params]
n_samples = 5000
tree_depth = 2
grid_points = 21
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(tmp_path, text, *extra, out="out"):
    out_dir = tmp_path / out
    code = main(["--config", write(tmp_path, text), "--out", str(out_dir), *extra])
    return code, out_dir


def manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text())


def test_audit_run_writes_valid_artifacts(tmp_path):
    code, out = run(tmp_path, SPLIT_AUDIT)
    assert code == 0
    man = manifest(out)
    jsonschema.validate(man, load_schema("manifest"))
    jsonschema.validate(json.loads((out / "result.json").read_text()), load_schema("result"))
    assert [a["path"] for a in man["artifacts"]] == ["audit.csv", "result.json"]
    for a in man["artifacts"]:
        assert sha256_file(out / a["path"]) == a["sha256"]
    assert man["config"]["params"]["depth"] == 6
    lines = (out / "audit.csv").read_text().splitlines()
    assert lines[0] == "n,W_mean,W_sd,Z_mean,Z_sd,absZ_mean,Z_rms" and len(lines) == 8


def test_identical_seeds_give_identical_bytes(tmp_path):
    _, a = run(tmp_path, KAC_VERIFY, out="a")
    _, b = run(tmp_path, KAC_VERIFY, out="b")
    for name in ("residual.csv", "result.json", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    _, c = run(tmp_path, KAC_VERIFY, "--seed", "2", out="c")
    assert (a / "residual.csv").read_bytes() != (c / "residual.csv").read_bytes()


def test_worker_count_does_not_change_output(tmp_path, monkeypatch):
    _, a = run(tmp_path, SPLIT_AUDIT, "--workers", "1", out="a")
    monkeypatch.setenv("SMOOTHFIX_WORKERS", "3")
    _, b = run(tmp_path, SPLIT_AUDIT, out="b")
    assert manifest(b)["workers"] == 3
    assert (a / "audit.csv").read_bytes() == (b / "audit.csv").read_bytes()


def test_construct_is_worker_independent(tmp_path):
    text = KAC_VERIFY.replace('command = "verify"', 'command = "construct"').replace(
        "n_samples = 5000\n", "size = 300\nchunk_size = 100\n").replace("grid_points = 21\n", "")
    _, a = run(tmp_path, text, "--workers", "1", out="a")
    _, b = run(tmp_path, text, "--workers", "2", out="b")
    assert (a / "samples.csv").read_bytes() == (b / "samples.csv").read_bytes()
    assert (a / "samples.csv").read_text().splitlines()[0] == "x_1,W,Z,Wstar_1,truncated"


def test_verify_exit_codes(tmp_path):
    assert run(tmp_path, KAC_VERIFY, out="ok")[0] == 0
    normal_kac2 = KAC_VERIFY.replace('kind = "kac"\nbeta = 1.0', 'kind = "inelastic-kac"\nbeta = 2.0')
    normal_kac2 = normal_kac2.split("[stable]")[0] + '[params]\ncandidate = "normal"\nn_samples = 20000\n'
    code, out = run(tmp_path, normal_kac2, out="bad")
    assert code == 1 and manifest(out)["status"] == "fail"


def test_truncation_exit_code(tmp_path):
    text = """\
command = "simulate-tree"
seed = 3
[model]
kind = "deterministic-split"
T = [0.5, 0.5]
[params]
depth = 8
node_cap = 10
"""
    code, out = run(tmp_path, text)
    assert code == 2 and manifest(out)["status"] == "truncated"
    assert (out / "tree.csv").read_text().splitlines()[1].startswith("0,root,0,")


def test_alpha_solve_reports_alpha(tmp_path):
    text = 'command = "alpha-solve"\nseed = 0\n[model]\nkind = "inelastic-kac"\nbeta = 2.0\n'
    code, out = run(tmp_path, text)
    summary = json.loads((out / "result.json").read_text())["summary"]
    assert code == 0 and abs(summary["alpha"] - 1.0) < 1e-6
    assert summary["case"] == "CaseIII"


def test_assumptions_and_kinetic_commands(tmp_path):
    text = 'command = "assumptions"\nseed = 0\n[model]\nkind = "kac"\nbeta = 1.0\n' \
           '[params]\nn_samples = 5000\n'
    code, out = run(tmp_path, text, out="a")
    assert code in (0, 2) and (out / "assumptions.csv").exists()
    text = 'command = "kinetic"\nseed = 0\n[model]\nkind = "kac"\nbeta = 1.0\n' \
           '[params]\ntimes = [0.5, 1.0, 2.0]\nn_samples = 2000\n'
    code, out = run(tmp_path, text, out="k")
    assert code == 0 and len((out / "kinetic.csv").read_text().splitlines()) == 4


def test_user_sampler_model(tmp_path):
    text = 'command = "simulate-tree"\nseed = 0\n[model]\nkind = "sampler"\n' \
           'callable = "samplers:two_and_quarter"\n[params]\ndepth = 2\nalpha = 1.0\n'
    code, out = run(tmp_path, text)
    assert code == 0
    assert len((out / "tree.csv").read_text().splitlines()) == 1 + 7


def test_typo_is_reported_with_its_line(tmp_path, capsys):
    text = 'command = "kinetic"\nseed = 0\n\n[model]\nkind = "kac"\nbetta = 1.0\n'
    code, _ = run(tmp_path, text)
    err = capsys.readouterr().err
    assert code == EXIT_CONFIG
    assert "cfg.toml:6:" in err and "betta" in err


def test_other_config_errors(tmp_path, capsys):
    assert run(tmp_path, "command = \n")[0] == EXIT_CONFIG
    assert "TOML" in capsys.readouterr().err
    no_seed = 'command = "alpha-solve"\n[model]\nkind = "kac"\n'
    assert run(tmp_path, no_seed)[0] == EXIT_CONFIG
    assert run(tmp_path, no_seed, "--seed", str(2 ** 64))[0] == EXIT_CONFIG
    assert run(tmp_path, no_seed, "--seed", "4")[0] == 0
    bad_regime = KAC_VERIFY.replace("alpha = 2.0\nregime = \"gaussian\"", "alpha = 1.5\nregime = \"skewed\"")
    bad_regime = bad_regime.replace("gaussian_matrix = [[2.0]]", "sigma = {atoms = [[1.0]], weights = [1.0]}")
    assert run(tmp_path, bad_regime)[0] == EXIT_CONFIG
    assert "not allowed here" in capsys.readouterr().err
    with pytest.raises(ConfigError) as info:
        parse_config('command = "audit"\n[model]\nkind = "nope"\n', "x.toml")
    assert info.value.line == 3


def test_shipped_configs_pass(tmp_path):
    for cfg in sorted(CONFIGS.glob("*.toml")):
        out = tmp_path / cfg.stem
        assert main(["--config", str(cfg), "--out", str(out)]) == 0, cfg.name
        jsonschema.validate(manifest(out), load_schema("manifest"))


def test_console_script(tmp_path):
    cfg = write(tmp_path, SPLIT_AUDIT)
    env = dict(os.environ, PYTHONPATH=os.pathsep.join(sys.path))
    proc = subprocess.run([sys.executable, "-m", "smoothfix.cli", "--config", cfg,
                           "--out", str(tmp_path / "o")], capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert "audit: pass" in proc.stdout
