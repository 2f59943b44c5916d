import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from autocal.cli import EXIT_DEPENDENCY, EXIT_USAGE, main
from autocal.store import STORE_ENV, RecordStore


@pytest.fixture(autouse=True)
def _no_store_override(monkeypatch):
    monkeypatch.delenv(STORE_ENV, raising=False)


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipeline")
    code = main(["pipeline", "--seed", "7", "--out", str(out)])
    return code, out


def _csv_rows(path: Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_xyfit_before_finetune_is_dependency_error(tmp_path, capsys):
    assert main(["xyfit", "--seed", "1", "--out", str(tmp_path)]) == EXIT_DEPENDENCY
    err = capsys.readouterr().err
    assert "dependency error" in err and "autocal" in err


def test_bad_arguments_exit_usage(tmp_path, capsys):
    assert main(["finetune", "--out", str(tmp_path)]) == EXIT_USAGE
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 1, "autorabi": {"budget": -3}}))
    assert main(["autorabi", "--config", str(cfg)]) == EXIT_USAGE
    assert main(["rb", "--seed", "1", "--channel", "ideal", "--inject", "bogus=1", "--out", str(tmp_path)]) == EXIT_USAGE


@pytest.mark.parametrize("qubits", [[0], [0, 1]])
def test_rb_injected_depolarizing_matches_oracle(tmp_path, capsys, qubits):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 3, "qubits": qubits, "out_dir": str(tmp_path / "out")}))
    code = main(["rb", "--config", str(cfg), "--channel", "ideal", "--inject", "depolarizing=0.01"])
    assert code == 0
    results = json.loads(capsys.readouterr().out)["rb"]["results"]
    for key in ("SRB_1q", "SRB_2q")[: len(qubits)]:
        d = 2 ** int(key[-2])
        r = results[key]
        assert abs(r["clifford_infidelity"] - (d - 1) / d * 0.01) <= 3 * r["clifford_infidelity_se"]


def test_store_path_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(STORE_ENV, str(tmp_path / "elsewhere.jsonl"))
    assert main(["rb", "--seed", "2", "--channel", "ideal", "--out", str(tmp_path / "out")]) == 0
    assert RecordStore(tmp_path / "elsewhere.jsonl").latest("rb-ideal") is not None
    assert not (tmp_path / "out" / "records.jsonl").exists()


def test_pipeline_records_all_stages(pipeline_run):
    code, out = pipeline_run
    assert code == 0
    store = RecordStore(out / "records.jsonl")
    pair = store.latest("q0-q1")
    assert set(pair.payload["stages"]) == {"autorabi", "finetune", "crsweep", "xyfit", "rb"}
    for q in ("q0", "q1"):
        assert {"autorabi", "finetune"} <= set(store.latest(q).payload["stages"])
    assert pair.payload["xyfit"]["verification_residual"] < 0.03


def test_every_csv_has_header_and_matches_json_twin(pipeline_run):
    _, out = pipeline_run
    csvs = sorted(out.rglob("*.csv"))
    assert len(csvs) >= 10
    cnot = json.loads((out / "xyfit" / "cnot.json").read_text())
    for path in csvs:
        rows = _csv_rows(path)
        header, body = rows[0], rows[1:]
        assert header and all(not _is_number(h) for h in header)
        assert all(len(r) == len(header) for r in body)
        twin = path.with_suffix(".json")
        if path.parent.name == "rb":
            n = len(json.loads(twin.read_text())["points"])
        elif path.parent.name == "finetune":
            n = len(json.loads(twin.read_text())["amplitudes"])
        elif path.name == "cr_sweep.csv":
            d = json.loads(twin.read_text())
            n = len(d["coarse"]["amplitudes"]) + len(d["fine"]["amplitudes"])
        elif path.name == "loss_curve.csv":
            n = len((path.parent / "evaluations.jsonl").read_text().splitlines())
        elif path.name.startswith("xy_pass"):
            n = len(cnot["curves"][int(path.stem.removeprefix("xy_pass"))]["phi"])
        else:
            raise AssertionError(f"no JSON twin known for {path}")
        assert len(body) == n, path


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "autocal.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("autocal ")
