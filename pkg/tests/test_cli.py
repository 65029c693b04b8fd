import json
import math

import pytest

from coulomb_lab import __version__
from coulomb_lab.cli import config_hash, resolve, run
from coulomb_lab.zfunc import ORDER_N_COEFF

W_TRI = -4.150412807678964


def outputs(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def manifest(path):
    return json.loads((path / "manifest.json").read_text())


def test_zcheck(tmp_path, capsys):
    assert run(["zcheck", "--n-max", "2000", "--out", str(tmp_path)]) == 0
    man = manifest(tmp_path)
    assert man["command"] == "zcheck" and man["version"] == __version__ and man["config"]["seed"] == 0
    assert man["wall_time_s"] >= 0
    csv_name, json_name = man["outputs"]
    lines = (tmp_path / csv_name).read_text().splitlines()
    assert lines[0] == "n,logZ_exact,logZ_asymptotic,residual,residual_over_logn" and len(lines) == 2001
    fit = json.loads((tmp_path / json_name).read_text())["order_n_coefficient_fit"]
    assert fit == pytest.approx(ORDER_N_COEFF, abs=1e-2)
    assert json.loads(capsys.readouterr().out)["name"] == csv_name[:-4]


def test_wper_triangular(tmp_path):
    assert run(["wper", "--lattice", "triangular", "--tol", "1e-8", "--out", str(tmp_path)]) == 0
    man = manifest(tmp_path)
    rec = json.loads((tmp_path / man["outputs"][0]).read_text())
    assert rec["W"] == pytest.approx(W_TRI, abs=1e-7)
    assert 0 < rec["err"] <= 1e-8
    assert man["summary"]["W"] == rec["W"]


def test_fekete_deterministic(tmp_path):
    args = ["fekete", "--n", "40", "--potential", "quadratic", "--multistarts", "3", "--seed", "7"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    a, b = outputs(tmp_path / "a"), outputs(tmp_path / "b")
    assert set(a) == set(b)
    for name in a:
        if not name.endswith("manifest.json"):
            assert a[name] == b[name]


def test_rerun_from_manifest(tmp_path):
    assert run(["ginibre", "--n", "12", "--draws", "3", "--seed", "5", "--out", str(tmp_path / "a")]) == 0
    first = manifest(tmp_path / "a")
    assert run(["ginibre", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    name = first["outputs"][0]
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 5, "beta": 4.0}))
    r = resolve("sample", {"n": 5, "beta": 4.0}, {"beta": "2.5"})
    assert r["n"] == 5 and r["beta"] == 2.5 and r["seed"] == 0
    assert run(["sample", "--config", str(cfg), "--beta", "3", "--sweeps", "30", "--burn-in", "5",
                "--out", str(tmp_path / "o")]) == 0
    man = manifest(tmp_path / "o")
    assert man["config"]["beta"] == 3.0 and man["config"]["n"] == 5
    assert any(o.endswith("run_manifest.json") for o in man["outputs"])


def test_names_follow_config_hash(tmp_path):
    assert run(["zcheck", "--ns", "10,20,30", "--out", str(tmp_path)]) == 0
    man = manifest(tmp_path)
    cfg = dict(man["config"])
    cfg.pop("command")
    assert man["outputs"][0] == f"zcheck-{config_hash('zcheck', cfg)}.csv"


@pytest.mark.parametrize("argv,key", [
    (["fekete"], "n"),
    (["fekete", "--n", "ten"], "n"),
    (["wper", "--lattice", "hexagon"], "lattice"),
    (["wper", "--lattice", "tau", "--tau", "0.1,-1"], "tau"),
    (["sample", "--n", "4", "--beta", "-1"], "sample"),
    (["energy", "--potential", "cubic"], "potential"),
    (["equilibrium", "--solver", "grid", "--h", "0.3"], "h"),
])
def test_config_errors_exit_2(argv, key, tmp_path, capsys):
    assert run(argv + ["--out", str(tmp_path)]) == 2
    assert repr(key) in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 5, "temperature": 1.0}))
    assert run(["fekete", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "'temperature'" in capsys.readouterr().err


def test_numerical_failure_exit_3(tmp_path, capsys):
    assert run(["equilibrium", "--potential", "quadratic", "--coeffs", "0,1e14", "--out", str(tmp_path)]) == 3
    assert "NoSupportError" in capsys.readouterr().err
    assert run(["equilibrium", "--solver", "grid", "--half-width", "1", "--h", "0.0625",
                "--out", str(tmp_path)]) == 3
    assert "DomainTooSmallError" in capsys.readouterr().err


def test_energy_and_discrepancy(tmp_path):
    assert run(["energy", "--n", "25", "--potential", "quartic", "--seed", "3", "--out", str(tmp_path)]) == 0
    man = manifest(tmp_path)
    assert man["summary"]["residual"] <= 1e-8
    pts = next(p for p in tmp_path.iterdir() if p.name.endswith(".points.csv"))
    assert run(["discrepancy", "--input", str(pts), "--R", "1.5", "--potential", "quartic",
                "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / manifest(tmp_path)["outputs"][1]).read_text())
    assert doc["moment"] >= 0 and doc["R"] == 1.5


def test_equilibrium_radial(tmp_path):
    assert run(["equilibrium", "--potential", "quartic", "--out", str(tmp_path)]) == 0
    assert manifest(tmp_path)["summary"]["R_star"] == pytest.approx(0.5**0.25, abs=1e-12)


def test_scan_lattice_small(tmp_path):
    assert run(["scan-lattice", "--nx", "5", "--ny", "5", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / manifest(tmp_path)["outputs"][1]).read_text())
    assert doc["argmin"] == pytest.approx([0.5, math.sqrt(3) / 2], abs=1e-12)
