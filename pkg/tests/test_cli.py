from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from tasepmix.cli import (
    EXIT_CHECK,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_RUNTIME,
    OUTPUT_ROOT_ENV,
    ConfigError,
    RunConfig,
    format_value,
    main,
    parse_config,
    read_table,
    render_svg,
    sha256,
)

# one small configuration per subcommand
SMALL = {
    "simulate": {"N": 8, "k": 3, "horizon": 4.0, "samples": 5, "replicas": 2},
    "mix-exact": {"N": 6, "k": 2, "epsilon": [0.25, 0.5]},
    "coalesce": {"N_list": [8, 16], "replicas": 12},
    "lpp-stats": {"n_list": [10, 20], "replicas": 20, "x_grid": [0.0, 1.0]},
    "tf-scaling": {"n_list": [10, 20], "replicas": 10},
    "agreement": {"n": 20, "k_list": [4, 40], "replicas": 10},
    "gamma-tv": {"M_list": [10], "delta_list": [0.0, 0.01]},
    "geodesic-coalesce": {"N": 16, "k": 4, "theta_list": [1.0], "replicas": 4},
    "bridge-check": {"replicas": 3, "samples": 10, "law_replicas": 200},
}


def write_config(tmp_path: Path, sub: str, **extra) -> Path:
    cfg = {"subcommand": sub, "seed": 1, **SMALL[sub], **extra}
    path = tmp_path / f"{sub}.json"
    path.write_text(json.dumps(cfg))
    return path


def test_minimal_config_is_valid():
    cfg = RunConfig.from_dict({"subcommand": "mix-exact", "N": 8, "k": 4, "epsilon": [0.25], "seed": 1})
    assert cfg.params == {"N": 8, "k": 4, "epsilon": [0.25], "tol": 1e-7}
    assert cfg.seed == 1


def test_config_round_trip():
    cfg = RunConfig.from_dict({"subcommand": "coalesce", "N_list": [8, 16], "seed": 3, "tolerance": {"slope_min": 1.0}})
    again = RunConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg


@pytest.mark.parametrize(
    "raw, key",
    [
        ({"subcommand": "mix-exact", "N": 8, "k": 8}, "k"),
        ({"subcommand": "mix-exact", "N": 8, "k": 2, "colour": 1}, "colour"),
        ({"subcommand": "mix-exact", "N": "8", "k": 2}, "N"),
        ({"subcommand": "mix-exact", "k": 2}, "N"),
        ({"N": 8}, "subcommand"),
        ({"subcommand": "dance"}, "subcommand"),
        ({"subcommand": "gamma-tv", "M_list": [1], "delta_list": [1.5]}, "delta_list"),
        ({"subcommand": "gamma-tv", "M_list": [1], "delta_list": [0.1], "tolerance": {"nope": 1}}, "tolerance.nope"),
        ({"subcommand": "mix-exact", "N": 8, "k": 2, "epsilon": [True]}, "epsilon[0]"),
    ],
)
def test_config_errors_name_the_key(raw, key):
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict(raw)
    assert str(err.value).startswith(key)


def test_k_constraint_message():
    with pytest.raises(ConfigError, match="1 <= k <= N - 1"):
        RunConfig.from_dict({"subcommand": "mix-exact", "N": 5, "k": 7})


def test_flags_override_file(tmp_path):
    path = write_config(tmp_path, "mix-exact")
    cfg, _ = parse_config(["--config", str(path), "--seed", "7", "-p", "N=7", "--tolerance", "symmetry=1e-3"])
    assert cfg.seed == 7
    assert cfg.params["N"] == 7
    assert cfg.tolerance["symmetry"] == 1e-3


def test_subcommand_flag_must_match_file(tmp_path):
    path = write_config(tmp_path, "mix-exact")
    with pytest.raises(ConfigError):
        parse_config(["gamma-tv", "--config", str(path)])


def test_format_value_round_trips_floats():
    for v in (0.1, 1 / 3, 1e-300, 12345.678901234567):
        assert float(format_value(v)) == v
    assert format_value(3) == "3"
    assert format_value(True) == "true"


def test_mix_exact_single_row(tmp_path):
    out = tmp_path / "mix"
    code = main(["mix-exact", "-p", "N=3", "-p", "k=1", "-p", "epsilon=[0.25]", "--out", str(out)])
    assert code == EXIT_OK
    schema, cols, rows = read_table((out / "mixing.csv").read_text())
    assert schema == "tasepmix.mix-exact/1"
    assert cols == ["epsilon", "t_mix"]
    assert len(rows) == 1 and float(rows[0][0]) == 0.25


def test_gamma_tv_zero_row(tmp_path):
    out = tmp_path / "g"
    assert main(["--config", str(write_config(tmp_path, "gamma-tv")), "--out", str(out)]) == EXIT_OK
    _, cols, rows = read_table((out / "gamma_tv.csv").read_text())
    zero = [r for r in rows if float(r[cols.index("delta")]) == 0.0]
    assert zero and float(zero[0][cols.index("tv")]) == 0.0


@pytest.mark.parametrize("sub", sorted(SMALL))
def test_every_subcommand_is_deterministic(tmp_path, sub):
    path = write_config(tmp_path, sub)
    digests = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert main(["--config", str(path), "--out", str(out)]) == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "ok" and manifest["valid"]
        for name, digest in manifest["files"].items():
            assert sha256((out / name).read_bytes()) == digest
        csvs = sorted(p.name for p in out.glob("*.csv"))
        assert csvs
        digests.append({n: (out / n).read_bytes() for n in csvs})
    assert digests[0] == digests[1]


def test_threads_give_identical_csv(tmp_path):
    path = write_config(tmp_path, "coalesce")
    main(["--config", str(path), "--out", str(tmp_path / "a")])
    main(["--config", str(path), "--out", str(tmp_path / "b"), "--threads", "3"])
    assert (tmp_path / "a" / "coalescence.csv").read_bytes() == (tmp_path / "b" / "coalescence.csv").read_bytes()


def test_svg_is_deterministic(tmp_path):
    path = write_config(tmp_path, "gamma-tv")
    main(["--config", str(path), "--out", str(tmp_path / "a"), "--plot"])
    main(["--config", str(path), "--out", str(tmp_path / "b"), "--plot"])
    a = (tmp_path / "a" / "gamma_tv.svg").read_bytes()
    assert a == (tmp_path / "b" / "gamma_tv.svg").read_bytes()
    assert render_svg((tmp_path / "a" / "gamma_tv.csv").read_text(), "delta", "tv").encode() == a


def test_output_root_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    assert main(["--config", str(write_config(tmp_path, "gamma-tv")), "--out", "rel"]) == EXIT_OK
    assert (tmp_path / "root" / "rel" / "gamma_tv.csv").exists()


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"subcommand": "mix-exact", "N": 4, "k": 9}))
    assert main(["--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["status"] == "config-error" and record["message"].startswith("k")
    assert main(["--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_runtime_failure_marks_manifest(tmp_path, capsys):
    out = tmp_path / "fail"
    # a zero cap censors every run, which the coalescence experiment refuses
    code = main(["coalesce", "-p", "N_list=[8]", "-p", "cap_factor=0.0001", "--replicas", "5", "--out", str(out)])
    assert code == EXIT_RUNTIME
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "failed" and manifest["valid"] is False
    assert manifest["error"]["error"] == "CensoringError"
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["status"] == "failed"


def test_self_test_exit_code(tmp_path):
    path = write_config(tmp_path, "gamma-tv")
    assert main(["--config", str(path), "--out", str(tmp_path / "a"), "--self-test"]) == EXIT_OK
    code = main(["--config", str(path), "--out", str(tmp_path / "b"), "--self-test", "--tolerance", "constant=0.0"])
    assert code == EXIT_CHECK
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["status"] == "check-failed"


def test_console_entry_point(tmp_path):
    out = tmp_path / "cli"
    proc = subprocess.run(
        [sys.executable, "-m", "tasepmix.cli", "gamma-tv", "-p", "M_list=[5]", "-p", "delta_list=[0.1]", "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "gamma_tv.csv").exists()
