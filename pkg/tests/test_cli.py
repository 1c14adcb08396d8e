import json

import numpy as np
import pytest

from frontspeed.artifacts import read_csv, verify_manifest, write_csv
from frontspeed.cli import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_RUN_ERROR, main
from frontspeed.config import ConfigError, RunConfig, load, parse


def manifest(path):
    return json.loads((path / "manifest.json").read_text())


def test_config_parse_and_dump_roundtrip():
    text = """
    # tilted cubic
    potential = tilted_cubic
    param.beta = 0.3
    n = 2001   # coarser
    shooting = false
    """
    cfg = parse(text)
    assert cfg.params == {"beta": 0.3}
    assert cfg.n == 2001 and cfg.shooting is False
    again = parse(cfg.dumps())
    assert again.to_record() | {"out": cfg.out} == cfg.to_record()


def test_config_tuple_parameter():
    assert parse("param.plateau = -2, -1.5").params["plateau"] == (-2.0, -1.5)


@pytest.mark.parametrize("text", ["bogus = 1", "n = many", "shooting = perhaps", "just words"])
def test_config_rejects_bad_lines(text):
    with pytest.raises(ConfigError):
        parse(text)


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(t_min=1.0).validate()
    with pytest.raises(ConfigError):
        RunConfig(scan_min=0.2).validate()
    with pytest.raises(ConfigError):
        load("/no/such/config.txt")


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 3)) * 10.0 ** rng.integers(-300, 300, size=(50, 3))
    path = write_csv(tmp_path / "x.csv", ["a", "b", "c"], x)
    header, back = read_csv(path)
    assert header == ["a", "b", "c"]
    assert np.all(np.abs(back - x) <= 1e-15 * np.abs(x))


def test_solve_end_to_end(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--set", "param.beta=0.25", "--out", str(out)]) == EXIT_OK
    man = manifest(out)
    assert man["status"] == "ok"
    assert man["results"]["speed"]["c_star"] == pytest.approx(0.3536, abs=1e-4)
    assert set(man["checksums"]) >= {"profile.csv", "speed.json", "audit.json", "bisection.csv"}
    assert verify_manifest(out) == []
    (out / "profile.csv").unlink()
    assert verify_manifest(out) == ["missing: profile.csv"]


def test_missing_potential_file_is_config_error(tmp_path):
    out = tmp_path / "bad"
    assert main(["solve", "--potential-file", str(tmp_path / "nope.csv"), "--out", str(out)]) == EXIT_CONFIG_ERROR
    assert not out.exists()


def test_rerun_is_bitwise_identical(tmp_path):
    args = ["solve", "--c", "0.3", "--n", "2001"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert manifest(tmp_path / "a")["checksums"] == manifest(tmp_path / "b")["checksums"]


def test_scan_has_one_sign_change(tmp_path):
    out = tmp_path / "scan"
    c = 0.3535326154779106
    assert main(["scan", "--scan-min", str(0.9 * c), "--scan-max", str(1.1 * c), "--out", str(out)]) == EXIT_OK
    assert manifest(out)["results"]["scan"]["sign_changes"] == 1
    header, rows = read_csv(out / "scan.csv")
    assert header == ["c", "m", "m_tol", "in_D"] and rows.shape == (21, 4)


def test_scan_needs_range(tmp_path):
    assert main(["scan", "--out", str(tmp_path / "s")]) == EXIT_CONFIG_ERROR


def test_oracle_triangle(tmp_path):
    out = tmp_path / "o"
    assert main(["oracle", "--triangle", "true", "--out", str(out)]) == EXIT_OK
    res = manifest(out)["results"]["oracle"]
    assert res["shooting_speed"] == pytest.approx(np.sqrt(2) * 0.25, abs=1e-6)
    assert res["triangle"]["pass"] is True


def test_oracle_short_domain_reports_partial_front(tmp_path):
    out = tmp_path / "o"
    assert main(["oracle", "--shooting", "false", "--pde-X", "20", "--out", str(out)]) == EXIT_RUN_ERROR
    man = manifest(out)
    assert man["status"] == "error" and "domain too short" in man["error"]["message"]
    _, front = read_csv(out / "front.csv")
    assert front.shape[0] > 1
    assert "front.csv" in man["checksums"]


def test_audit_command(tmp_path):
    out = tmp_path / "a"
    assert main(["audit", "--potential", "plateau", "--out", str(out)]) == EXIT_OK
    assert manifest(out)["results"]["audit_status"] == "inconclusive"


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("potential = tilted_cubic\nparam.beta = 0.4\nc = 0.1\nn = 2001\n")
    out = tmp_path / "r"
    assert main(["solve", "--config", str(cfg), "--c", "0.2", "--out", str(out)]) == EXIT_OK
    man = manifest(out)
    assert man["config"]["c"] == 0.2
    assert man["results"]["minimize"]["energy"] > 0
