import json
import subprocess
import sys
import time

import pytest

from beamsim.cli import main
from beamsim.diversity import table_one_csv, table_one
from beamsim.precoder import load_precoder


def test_table1(capsys):
    assert main(["table1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 12 and "delta_max" in out[0]
    assert main(["table1", "--csv"]) == 0
    assert capsys.readouterr().out == table_one_csv(table_one())


def test_table1_as_subprocess_is_fast():
    t0 = time.perf_counter()
    res = subprocess.run([sys.executable, "-m", "beamsim.cli", "table1"], capture_output=True, text=True)
    assert res.returncode == 0
    assert len(res.stdout.splitlines()) == 12
    assert time.perf_counter() - t0 < 5


@pytest.mark.parametrize("criterion", ["phi1", "phi2", "phi3"])
def test_design(tmp_path, capsys, criterion):
    out = tmp_path / f"{criterion}.json"
    assert main(["design", "--criterion", criterion, "--streams", "2", "--qam", "2", "--out", str(out)]) == 0
    p = load_precoder(out)
    assert p.s == 2 and p.criterion == criterion and p.objective > 0


def test_run_and_slope(tmp_path, capsys):
    pre = tmp_path / "p.json"
    main(["design", "--criterion", "phi1", "--streams", "2", "--out", str(pre), "--starts", "8"])
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "scheme": "FPMB", "m_rx": 2, "n_tx": 2, "s": 2, "qam_m": 2, "precoder_path": "p.json",
        "snr_db": [0, 5, 10], "seed": 1, "min_bit_errors": 50,
    }))
    assert main(["run", "--config", str(cfg), "--workers", "1", "--seed", "5"]) == 0
    res = tmp_path / "cfg.csv"
    assert len(res.read_text().splitlines()) == 4
    assert json.loads(res.with_suffix(".json").read_text())["metadata"]["seed"] == 5
    capsys.readouterr()
    assert main(["slope", "--input", str(res), "--window", "0,10"]) == 0
    assert float(capsys.readouterr().out) > 0


def test_errors_exit_with_status_2(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scheme": "SB", "m_rx": 1, "n_tx": 1, "snr_db": [0]}))
    assert main(["run", "--config", str(cfg)]) == 2
    assert "qam_m" in capsys.readouterr().err
    res = tmp_path / "r.csv"
    res.write_text("snr_db,bit_errors,bits,ber,trials\n0.0,0,10,0.0,5\n")
    assert main(["slope", "--input", str(res)]) == 2
    assert main(["slope", "--input", str(res), "--window", "zero"]) == 2
