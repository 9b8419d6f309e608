import csv
import io
import json

import numpy as np
import pytest

from opsym import cli
from opsym import matcore as mc
from opsym import opspace as osp
from opsym import symnorm as sn
from opsym import trilinear as tl
from opsym.fnspace import gram_kernel


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run_cli(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def kernel_file(tmp_path, name, K):
    return write(tmp_path / name, K.to_json())


def scalar_kernel(rows):
    return {"omega": len(rows), "n": 1, "blocks": [[mc.matrix_to_json(np.array([[v]])) for v in r] for r in rows]}


def test_header_carries_version_and_config_hash(capsys):
    rep = run_json(capsys, "gamma-curve", "--t", "0.5", "--seed", "3", "--truncation", "1")
    assert rep["version"] == cli.__version__
    cfg = cli.RunConfig(seed=3, truncation=1)
    assert rep["config_hash"] == cfg.config_hash()
    assert rep["config"]["seed"] == 3


def test_gamma_curve_values_and_gap_flag(capsys):
    rep = run_json(capsys, "gamma-curve", "--t", "0.1", "0.99", "--truncation", "2")
    by_t = {s["t"]: s for s in rep["summary"]}
    assert by_t[0.1]["lower"] == pytest.approx(0.55, abs=1e-3)
    assert by_t[0.1]["gap"]
    assert by_t[0.99]["upper"] == pytest.approx(0.995, abs=1e-3)
    assert by_t[0.99]["upper"] < 1
    assert all(s["haagerup"] == pytest.approx(1.0, abs=1e-9) for s in rep["summary"])
    assert sorted({(r["t"], r["k"]) for r in rep["rows"]}) == [(0.1, 1), (0.1, 2), (0.99, 1), (0.99, 2)]


def test_gamma_curve_csv_columns(capsys):
    code, out, _ = run_cli(capsys, "gamma-curve", "--t", "0.2", "--truncation", "2", "--out", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["t", "k", "lower", "estimate"]
    assert [int(r["k"]) for r in rows] == [1, 2]
    assert float(rows[0]["lower"]) == pytest.approx(0.6, abs=1e-3)


def test_gamma_curve_empty_list(capsys):
    code, out, _ = run_cli(capsys, "gamma-curve", "--out", "csv")
    assert code == 0
    assert out.strip() == "t,k,lower,estimate"
    rep = run_json(capsys, "gamma-curve")
    assert rep["rows"] == [] and rep["summary"] == []


@pytest.mark.parametrize("t", ["0", "1", "1.5", "-0.2"])
def test_gamma_curve_bad_range(capsys, t):
    code, _, err = run_cli(capsys, "gamma-curve", "--t", t)
    assert code == 2
    assert "BadRange" in err


def test_gamma_curve_budget_truncates(capsys):
    rep = run_json(capsys, "gamma-curve", "--t", "0.1", "0.2", "0.3", "--budget-ms", "1", "--truncation", "1")
    assert rep["truncated"]
    assert len(rep["summary"]) < 3


def test_kernel_check_gram_kernel_is_positive(capsys, tmp_path):
    rng = np.random.default_rng(0)
    K = gram_kernel(mc.random_complex(rng, 2, 3, 2))
    rep = run_json(capsys, "kernel-check", kernel_file(tmp_path, "g.json", K))
    assert rep["positive"] is True
    assert "witness_value" not in rep


def test_kernel_check_refutes_and_witness_replays(capsys, tmp_path):
    path = write(tmp_path / "k.json", scalar_kernel([[1, 2], [2, 1]]))
    wit = tmp_path / "w.json"
    rep = run_json(capsys, "kernel-check", path, "--witness", str(wit))
    assert rep["positive"] is False
    # eigenvalues of [[1, 2], [2, 1]] are 3 and -1
    assert rep["min_eig"] == pytest.approx(-1.0, abs=1e-12)
    assert rep["witness_value"] < 0
    ok, value = cli.replay_refutation(json.loads(wit.read_text()))
    assert ok
    assert value == pytest.approx(rep["witness_value"], abs=1e-9)


def test_kernel_check_malformed_json_reports_line(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"omega": 2,\n "n": 1,\n "blocks": [[1, 2]\n')
    code, _, err = run_cli(capsys, "kernel-check", str(p))
    assert code == 2
    assert "ParseError" in err and "line" in err


def test_kernel_check_non_hermitian(capsys, tmp_path):
    path = write(tmp_path / "nh.json", scalar_kernel([[1, 2], [0, 1]]))
    code, _, err = run_cli(capsys, "kernel-check", path)
    assert code == 2 and "NotHermitian" in err


@pytest.mark.parametrize("name,expected", [("D3", True), ("M4x2", True), ("C3", False), ("C2", False)])
def test_dims_builtins(capsys, name, expected):
    rep = run_json(capsys, "dims", "--builtin", name)
    assert rep["input"] == name
    assert rep["not_operator_system"] is expected
    if name.startswith("C"):
        assert rep["tro_collapse"]["passed"]


def test_dims_space_file(capsys, tmp_path):
    path = write(tmp_path / "d2.json", osp.diagonal_space(2).to_json())
    rep = run_json(capsys, "dims", path)
    assert rep["not_operator_system"] is True


def test_dims_needs_exactly_one_input(capsys, tmp_path):
    code, _, err = run_cli(capsys, "dims")
    assert code == 2 and "ParseError" in err


def test_gns_multiplication_form_writes_files(capsys, tmp_path):
    M2 = osp.full_algebra(2)
    path = write(tmp_path / "f.json", tl.multiplication_form(M2).to_json())
    out = tmp_path / "fac"
    rep = run_json(capsys, "gns", path, "--outdir", str(out))
    assert rep["residual"] <= 1e-8
    assert rep["cb_identity_ok"]
    for f in ("phi.json", "psi.json", "gram.json"):
        assert json.loads((out / f).read_text())


def test_gns_zero_form(capsys, tmp_path):
    M2 = osp.full_algebra(2)
    path = write(tmp_path / "z.json", tl.zero_form(M2, M2, 2).to_json())
    out = tmp_path / "fac"
    rep = run_json(capsys, "gns", path, "--outdir", str(out))
    assert rep["K_dim"] == 0
    assert (out / "gram.json").exists()


def test_gns_rejects_non_positive_form(capsys, tmp_path):
    M2 = osp.full_algebra(2)
    path = write(tmp_path / "n.json", tl.multiplication_form(M2).scale(-1).to_json())
    code, _, err = run_cli(capsys, "gns", path)
    assert code == 2 and "NotPositive" in err


def test_norms_on_elementary_tensor(capsys, tmp_path):
    M2 = osp.full_algebra(2)
    u = sn.elementary_es(M2, np.eye(2), np.eye(2))
    rep = run_json(capsys, "norms", write(tmp_path / "u.json", u.to_json()))
    assert rep["sym"]["lower"] <= 1 + 1e-9
    assert rep["haagerup_upper"] == pytest.approx(1.0, abs=1e-9)


def test_tro_verify(capsys):
    rep = run_json(capsys, "tro-verify", "--M", "C2", "--S", "M2", "--samples", "10")
    assert rep["passed"]
    code, _, err = run_cli(capsys, "tro-verify", "--M", "C2", "--S", "D2", "--samples", "2")
    assert code == 2 and "ModuleConditionFailed" in err


def test_dual_check(capsys):
    rep = run_json(capsys, "dual-check", "--spaces", "C", "R2", "--samples", "10")
    by = {e["space"]: e for e in rep["spaces"]}
    assert all(e["pairing_full_rank"] and e["transfer_ok"] for e in by.values())
    assert by["R2"]["iota_gap"]["gap"] > 0


def test_balanced_demo(capsys):
    rep = run_json(capsys, "balanced-demo")
    assert rep["collapse"]
    assert rep["balanced"]["upper"] <= 1e-9
    assert rep["unbalanced"]["lower"] >= 0.25


def test_output_flag_and_determinism(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert cli.main(["balanced-demo", "--seed", "5", "--output", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c1 = run_cli(capsys, "gamma-curve", "--t", "0.3", "--truncation", "2", "--out", "csv")[1]
    c2 = run_cli(capsys, "gamma-curve", "--t", "0.3", "--truncation", "2", "--out", "csv")[1]
    assert c1 == c2


def test_csv_for_other_reports_is_key_value(capsys):
    code, out, _ = run_cli(capsys, "dims", "--builtin", "D2", "--out", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["key", "value"]
    assert dict(rows[1:])["not_operator_system"] == "True"
