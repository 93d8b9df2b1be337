import json

import pytest

from fedsov.cli import main
from fedsov.fl_sim import ToyModel


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--clients", "10", "--wm-bits", "256", "--seed", "1", "--out-dir", str(out)]) == 0
    return out


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_boundary(capsys):
    code, out, _ = run(capsys, ["boundary", "--n", "2048", "--pa-log2", "-128"])
    row = json.loads(out)
    assert code == 0 and row["err_n"] == 365
    assert row["r_n"] == pytest.approx(0.8217, abs=0.002)
    code, out, _ = run(capsys, ["boundary", "--n", "1024", "2048", "--format", "csv"])
    lines = out.splitlines()
    assert code == 0 and len(lines) == 3 and "err_n" in lines[0]


def test_simulate_is_deterministic(sim_dir, tmp_path, capsys):
    again = tmp_path / "again"
    code, _, _ = run(capsys, ["simulate", "--clients", "10", "--wm-bits", "256", "--seed", "1", "--out-dir", str(again)])
    assert code == 0
    assert (again / "metrics.csv").read_bytes() == (sim_dir / "metrics.csv").read_bytes()
    for name in ("config.json", "model.bin", "model.json", "pp.json", "watermark.json", "embedding.json", "keys/pk_con.bin"):
        assert (sim_dir / name).exists(), name


def test_verify_honest_then_replay(sim_dir, tmp_path, capsys):
    tdir = tmp_path / "t"
    code, out, _ = run(capsys, ["verify", "--run-dir", str(sim_dir), "--client", "3", "--transcripts", str(tdir)])
    assert code == 0 and json.loads(out)["verdict"] == "owner_verified"
    code, out, _ = run(capsys, ["verify", "--run-dir", str(sim_dir), "--client", "3", "--signer", "replay",
                                "--transcripts", str(tdir)])
    assert code == 2 and json.loads(out)["verdict"] == "signature_failed"
    code, out, _ = run(capsys, ["report", "--run-dir", str(sim_dir), "--transcripts", str(tdir)])
    rows = json.loads(out)
    assert code == 0 and rows[0]["kind"] == "run"
    assert [r["recheck_matches"] for r in rows[1:]] == [True, True]


def test_verify_tampered_model(sim_dir, tmp_path, capsys):
    model = ToyModel.load(sim_dir)
    model.params["gamma"] = -model.params["gamma"]
    model.save(tmp_path)
    code, out, _ = run(capsys, ["verify", "--run-dir", str(sim_dir), "--model-dir", str(tmp_path),
                                "--out-dir", str(tmp_path)])
    assert code == 2 and json.loads(out)["verdict"] == "watermark_check_failed"


def test_keygen_wmgen_embed_extract(sim_dir, tmp_path, capsys):
    assert run(capsys, ["keygen", "--count", "3", "--curve", "desk_toy", "--out-dir", str(tmp_path)])[0] == 0
    code, out, _ = run(capsys, ["wmgen", "--pk-con", str(tmp_path / "keys" / "pk_con.bin"), "--n", "64",
                                "--out-dir", str(tmp_path)])
    assert code == 0 and json.loads(out)["n"] == 64
    code, out, _ = run(capsys, ["embed", "--watermark", str(tmp_path / "watermark.json"), "--omega", "128",
                                "--out-dir", str(tmp_path)])
    assert code == 0 and json.loads(out)["rate"] == 1.0
    code, out, _ = run(capsys, ["extract", "--model-dir", str(sim_dir), "--embedding", str(sim_dir / "embedding.json"),
                                "--watermark", str(sim_dir / "watermark.json")])
    assert code == 0 and json.loads(out)["detection_rate"] == 1.0


def test_attack_commands(sim_dir, tmp_path, capsys):
    code, out, _ = run(capsys, ["attack", "--kind", "game", "--repetitions", "2000"])
    assert code == 0 and json.loads(out)["success_rate"] <= json.loads(out)["bound"]
    code, out, _ = run(capsys, ["attack", "--kind", "prune", "--run-dir", str(sim_dir), "--sweep", "0.1", "0.5",
                                "--out-dir", str(tmp_path)])
    assert code == 0 and len(json.loads(out)) == 2
    assert (tmp_path / "sweep_prune.csv").exists()
    code, out, _ = run(capsys, ["attack", "--kind", "ambiguity", "--run-dir", str(sim_dir), "--out-dir", str(tmp_path)])
    rep = json.loads(out)
    assert code == 0 and rep["succeeded"] and rep["fedsov_verdict"] == "signature_failed"


def test_setup(tmp_path, capsys):
    code, out, _ = run(capsys, ["setup", "--n", "1024", "--curve", "desk_toy", "--out-dir", str(tmp_path)])
    assert code == 0 and json.loads(out)["err_n"] == 153
    assert json.loads((tmp_path / "pp.json").read_text())["group"]["curve_id"] == "desk_toy"


@pytest.mark.parametrize(
    "argv",
    [["boundary"], ["nonsense"], ["boundary", "--n", "abc"], ["attack", "--kind", "prune"], ["boundary", "--n", "64"]],
)
def test_errors_exit_1_with_json(capsys, argv):
    code, _, err = run(capsys, argv)
    assert code == 1
    assert "error" in json.loads(err.strip().splitlines()[-1])
