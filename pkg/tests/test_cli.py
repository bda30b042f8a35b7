import json
import subprocess
import sys

import numpy as np
import pytest

from heataco.cli import main
from heataco.heatmap import Heatmap, save_heatmap_dense
from heataco.instance import format_coords, format_reference_tour, random_uniform_instance


@pytest.fixture
def case(tmp_path):
    inst = random_uniform_instance(20, 0)
    ip = tmp_path / "u20.txt"
    ip.write_text(format_coords(inst))
    hp = tmp_path / "h20.bin"
    a = np.random.default_rng(0).random((20, 20))
    save_heatmap_dense(hp, Heatmap((a + a.T) / 2))
    rp = tmp_path / "r20.tour"
    rp.write_text(format_reference_tour(np.arange(20)))
    return ip, hp, rp


FAST = ["--ants", "4", "--iterations", "10"]


def test_decode(case, tmp_path, capsys):
    ip, hp, rp = case
    out = tmp_path / "best.tour"
    trace = tmp_path / "t.jsonl"
    code = main(["decode", "--instance", str(ip), "--heatmap", str(hp), "--ref", str(rp), "--out", str(out),
                 "--trace", str(trace), "--local-search", "two_opt", *FAST])
    assert code == 0
    assert "length=" in capsys.readouterr().out
    assert len(out.read_text().split()) >= 20
    assert len(trace.read_text().splitlines()) == 10


def test_bench_and_sweep(case, tmp_path, capsys):
    ip, hp, rp = case
    assert main(["bench", "--instance", str(ip), "--heatmap", str(hp), "--ref", str(rp), "--seeds", "0-2",
                 "--out-dir", str(tmp_path / "b"), *FAST]) == 0
    assert (tmp_path / "b" / "report.csv").exists()
    assert main(["sweep-gamma", "--instance", str(ip), "--heatmap", str(hp), "--seeds", "0",
                 "--grid", "0.5,1", "--out-dir", str(tmp_path / "s"), *FAST]) == 0
    assert (tmp_path / "s" / "gamma_grid.csv").exists()
    assert main(["bench", "--decoder", "mmas", "--instance", str(ip), "--seeds", "0", *FAST]) == 0


def test_diagnose_and_select(case, tmp_path, capsys):
    ip, hp, rp = case
    assert main(["diagnose", "--instance", str(ip), "--heatmap", str(hp), "--ref", str(rp),
                 "--out", str(tmp_path / "d.jsonl")]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["coverage"] == 1.0
    assert main(["diagnose", "--instance", str(ip), "--heatmap", str(hp), "--ref", str(rp), "--topk", "3"]) == 0
    capsys.readouterr()
    assert main(["select-gamma", "--instance", str(ip), "--heatmap", str(hp)]) == 0
    sel = json.loads(capsys.readouterr().out)
    assert sel["gamma"] in (0.1, 0.5, 1.0, 2.0)
    assert sel["target"] == 8.0


def test_convergence_verb(case, tmp_path, monkeypatch, capsys):
    ip, hp, rp = case
    monkeypatch.chdir(tmp_path)
    for seed in (0, 1):
        main(["decode", "--instance", str(ip), "--heatmap", str(hp), "--seed", str(seed),
              "--trace", f"h_{seed}.jsonl", *FAST])
        main(["decode", "--instance", str(ip), "--decoder", "mmas", "--seed", str(seed),
              "--trace", f"m_{seed}.jsonl", *FAST])
    assert main(["convergence", "--method", "heataco=h_*.jsonl", "--method", "mmas=m_*.jsonl",
                 "--out", "conv.json"]) == 0
    data = json.loads((tmp_path / "conv.json").read_text())
    assert set(data["methods"]) == {"heataco", "mmas"}
    assert len(data["t"]) == 10
    assert main(["convergence", "--method", "none=nothing_*.jsonl", "--out", "x.json"]) == 2


def test_exit_codes(case, tmp_path, capsys):
    ip, hp, rp = case
    assert main(["decode", "--instance", str(tmp_path / "missing.txt"), *FAST]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("0 0\n1 x\n2 2\n")
    assert main(["decode", "--instance", str(bad), *FAST]) == 2
    assert main(["decode", "--instance", str(ip), "--heatmap", str(hp), "--decoder", "mmas", "--gamma", "1",
                 *FAST]) == 0  # the mmas decoder drops the heatmap and forces gamma to 0
    assert main(["bench", "--instance", str(ip), "--decoder", "heataco", "--seeds", "0", *FAST]) == 2
    small = tmp_path / "h5.bin"
    save_heatmap_dense(small, Heatmap.uniform(5))
    assert main(["decode", "--instance", str(ip), "--heatmap", str(small), *FAST]) == 2
    assert "error" in capsys.readouterr().err


def test_exit_code_infeasible(case, monkeypatch):
    import heataco.cli as cli
    from heataco.harness import InfeasibleTour

    ip, hp, rp = case

    def boom(cfg):
        raise InfeasibleTour("u20 seed 0: duplicate 1 / missing 2")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert main(["bench", "--instance", str(ip), "--heatmap", str(hp), "--seeds", "0", *FAST]) == 1


def test_module_entry_point(case):
    ip, hp, rp = case
    proc = subprocess.run([sys.executable, "-m", "heataco.cli", "decode", "--instance", str(ip), "--decoder",
                           "mmas", *FAST], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("length=")
