from __future__ import annotations

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from densmv.cli import run

SMALL = """
seed = 3
[scheme]
n = 8
N = 4000
[drift]
name = burgers_clamp
[ic]
family = gaussian
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL)
    return p


def manifest(out):
    return json.loads((Path(out) / "manifest.json").read_text())


def test_simulate_outputs(cfg, tmp_path):
    out = tmp_path / "sim"
    assert run(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    m = manifest(out)
    assert m["seed"] == 3 and m["command"] == "simulate"
    for rel in m["outputs"]:
        assert (out / rel).exists()
    assert "results.csv" in m["outputs"]
    assert any(r.startswith("densities/") for r in m["outputs"])
    assert any(r.startswith("plots/") and r.endswith(".png") for r in m["outputs"])
    assert "wall_clock_s" in m and "numpy" in m["versions"]


def test_seed_flag_overrides_config(cfg, tmp_path):
    run(["simulate", "--config", str(cfg), "--seed", "11", "--out", str(tmp_path / "o")])
    assert manifest(tmp_path / "o")["seed"] == 11


def test_malformed_key_exit_2(cfg, tmp_path, capsys):
    code = run(["simulate", "--config", str(cfg), "--set", "scheme.bogus=1", "--out", str(tmp_path / "o")])
    assert code == 2
    assert "scheme.bogus" in capsys.readouterr().err


def test_bad_config_line_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("[scheme]\nn = eight\n")
    assert run(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "scheme.n" in err and "line 2" in err


def test_unknown_model_exit_2(cfg, tmp_path, capsys):
    assert run(["simulate", "--config", str(cfg), "--set", "drift.name=warp", "--out", str(tmp_path / "o")]) == 2
    assert "drift.name" in capsys.readouterr().err


def test_unknown_command_exit_2():
    with pytest.raises(SystemExit) as info:
        run(["teleport"])
    assert info.value.code == 2


def test_assumptions_unsaturated_exit_1(tmp_path):
    out = tmp_path / "a"
    code = run(["assumptions", "--set", "drift.name=mean_field_unsaturated", "--set", "assumptions.x_radius=100", "--out", str(out)])
    assert code == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["checks"]["A1"] is False
    assert summary["report"]["pass_A1"] is False


def test_assumptions_builtin_pass(tmp_path):
    assert run(["assumptions", "--set", "drift.name=mixed", "--out", str(tmp_path / "a")]) == 0


def test_simulate_unverified_drift_exit_1(cfg, tmp_path):
    assert run(["simulate", "--config", str(cfg), "--set", "drift.name=mean_field_unsaturated", "--out", str(tmp_path / "o")]) == 1


def test_fp_solve(cfg, tmp_path):
    out = tmp_path / "fp"
    assert run(["fp-solve", "--config", str(cfg), "--set", "fp.h=0.02", "--out", str(out)]) == 0
    assert (out / "densities" / "fp_trajectory.csv").exists()


def test_fp_domain_abort_exit_3(cfg, tmp_path):
    code = run(["fp-solve", "--config", str(cfg), "--set", "fp.h=0.05", "--set", "fp.margin=0.5", "--out", str(tmp_path / "fp")])
    assert code == 3


def test_fp_cfl_violation_exit_2(cfg, tmp_path, capsys):
    assert run(["fp-solve", "--config", str(cfg), "--set", "fp.h=0.01", "--set", "fp.dt=0.1", "--out", str(tmp_path / "fp")]) == 2
    assert "fp.dt" in capsys.readouterr().err


def test_duhamel_check(cfg, tmp_path):
    out = tmp_path / "d"
    code = run(["duhamel-check", "--config", str(cfg), "--set", "duhamel.nodes=16", "--set", "duhamel.points=41", "--out", str(out)])
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["max_ratio"] <= 3


def test_converge_reference_abort_exit_3(cfg, tmp_path):
    code = run(["converge", "--config", str(cfg), "--set", "converge.ns=8,16,32", "--set", "converge.seeds=0,1",
                "--set", "converge.fp_h=0.25", "--set", "scheme.N=50000", "--out", str(tmp_path / "c")])
    assert code == 3
    s = json.loads((tmp_path / "c" / "summary.json").read_text())
    assert "budget" in s


def test_converge_outputs(cfg, tmp_path):
    out = tmp_path / "c"
    run(["converge", "--config", str(cfg), "--set", "converge.ns=8,16,32", "--set", "converge.seeds=0,1,2",
         "--set", "converge.fp_h=0.01", "--set", "output.plots=false", "--out", str(out)])
    s = json.loads((out / "summary.json").read_text())
    assert {"slope", "half_width"} <= set(s["fit"])
    assert set(s["checks"]) == {"slope", "half_width", "monotone"}
    assert (out / "plots" / "rate.csv").exists() and not (out / "plots" / "rate.png").exists()


def test_regularity(cfg, tmp_path):
    out = tmp_path / "r"
    run(["regularity", "--config", str(cfg), "--set", "regularity.ns=16,32", "--out", str(out)])
    s = json.loads((out / "summary.json").read_text())
    assert set(s["per_n"]) == {"16", "32"}
    assert "holder_spread" in s["checks"]


def _results(out):
    files = sorted(p for p in Path(out).rglob("*") if p.is_file() and p.suffix in (".csv", ".json") and p.name != "manifest.json")
    return {str(p.relative_to(out)): p.read_bytes() for p in files}


def test_byte_identical_across_worker_counts(cfg, tmp_path):
    env = dict(os.environ, NUMBA_NUM_THREADS="4")
    outs = []
    for workers in (1, 4):
        out = tmp_path / f"w{workers}"
        subprocess.run(
            [sys.executable, "-m", "densmv.cli", "simulate", "--config", str(cfg), "--workers", str(workers), "--out", str(out)],
            check=True, env=env, capture_output=True,
        )
        outs.append(_results(out))
    assert outs[0] == outs[1]
    assert len(outs[0]) > 3


@pytest.mark.parametrize("path", sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.cfg")), ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    from densmv.config import load_config

    cfg = load_config(path)
    assert cfg.get("drift.name")
