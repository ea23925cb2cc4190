import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

import vigmap
from vigmap.archspace import parse_genome, plan_for
from vigmap.cli import main
from vigmap.config import load_config
from vigmap.evo import ObjectiveVector, dominates
from vigmap.ioe import brute_force_oracle
from vigmap.ooe import SENSES

CONFIGS = Path(vigmap.__file__).parent / "configs"
TOY_GENOME = "ops=M-G;d=2,3;ffn=0,0;pre=0,0;w=192,192"
A3 = "ops=S-G-S-G;d=2,2,2,2;ffn=1,1,1,1;pre=1,0,0,0;w=192,192,192,192"


def records(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_gen_profile_is_deterministic_and_refuses_overwrite(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen-profile", "--preset", "xavier-like", "--seed", "7", "--out", str(a)]) == 0
    assert main(["gen-profile", "--preset", "xavier-like", "--seed", "7", "--out", str(b)]) == 0
    for name in ("platform.toml", "costs.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert main(["gen-profile", "--preset", "xavier-like", "--out", str(a)]) == 2
    assert "overwrite" in capsys.readouterr().err
    assert main(["gen-profile", "--preset", "xavier-like", "--out", str(a), "--force"]) == 0


def test_gen_profile_maestro_and_unknown_preset(tmp_path, capsys):
    assert main(["gen-profile", "--preset", "maestro-3cu", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "platform.toml").read_text()
    for cu in ("dsa-k", "dsa-y", "dsa-d"):
        assert f'"{cu}"' in text
    assert main(["gen-profile", "--preset", "tpu", "--out", str(tmp_path / "x")]) == 2
    assert "xavier-like" in capsys.readouterr().err


def test_generated_profile_drives_a_config(tmp_path):
    main(["gen-profile", "--preset", "maestro-3cu", "--seed", "2", "--out", str(tmp_path)])
    cfg = tmp_path / "run.toml"
    cfg.write_text('[archspace]\nbackbone = "pyramid"\nschedule = "pyramid-synthetic"\n'
                   '[platform]\nplatform_file = "platform.toml"\ncost_table = "costs.csv"\n')
    assert main(["validate", "-c", str(cfg)]) == 0


def test_validate_and_bad_config(tmp_path, capsys):
    assert main(["validate", "-c", str(CONFIGS / "xavier.toml")]) == 0
    bad = tmp_path / "bad.toml"
    bad.write_text("[ioe]\npopsize = 4\n")
    assert main(["validate", "-c", str(bad)]) == 2
    assert "popsize" in capsys.readouterr().err
    assert main(["validate", "-c", str(tmp_path / "none.toml")]) == 2


def test_validate_reports_missing_cost_entries(tmp_path, capsys):
    main(["gen-profile", "--preset", "xavier-like", "--out", str(tmp_path)])
    costs = tmp_path / "costs.csv"
    lines = costs.read_text().splitlines()
    costs.write_text("\n".join(ln for ln in lines if not ln.startswith("grapher,0,M")) + "\n")
    cfg = tmp_path / "run.toml"
    cfg.write_text('[platform]\nplatform_file = "platform.toml"\ncost_table = "costs.csv"\n')
    assert main(["validate", "-c", str(cfg)]) == 2
    assert "misses" in capsys.readouterr().err


def test_malformed_genome_reports_column(tmp_path, capsys):
    bad = "ops=G-M-G-G;d=4,4,4,4;ffn=1,0,2,1;pre=0,0,0,0;w=192,192,96,320"
    code = main(["map", "-c", str(CONFIGS / "quick.toml"), "--genome", bad,
                 "--out", str(tmp_path)])
    assert code == 2
    assert "column 31" in capsys.readouterr().err


def test_map_on_fixture_and_report(tmp_path, capsys):
    out = tmp_path / "map"
    assert main(["map", "-c", str(CONFIGS / "agx_c100.toml"), "--genome", A3,
                 "--out", str(out)]) == 0
    best = {r["label"]: r for r in records(out / "ioe_best.csv")}
    assert round(float(best["standalone:gpu"]["latency_ms"]), 2) == 13.42
    assert round(float(best["standalone:dla"]["energy_mj"]), 2) == 121.74
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == {"ioe_pareto.csv", "ioe_best.csv"}
    assert main(["report", str(out)]) == 0
    shown = capsys.readouterr().out
    assert "Standalone references" in shown and "D | " in shown
    assert main(["map", "-c", str(CONFIGS / "agx_c100.toml"), "--genome", A3,
                 "--out", str(out)]) == 2


def test_map_front_is_not_dominated_by_oracle(tmp_path):
    cfg_path = CONFIGS / "toy.toml"
    assert main(["map", "-c", str(cfg_path), "--genome", TOY_GENOME, "--out",
                 str(tmp_path / "m")]) == 0
    assert main(["oracle", "-c", str(cfg_path), "--genome", TOY_GENOME, "--out",
                 str(tmp_path / "o")]) == 0
    ours = [(float(r["latency_ms"]), float(r["energy_mj"])) for r in records(tmp_path / "m" / "ioe_pareto.csv")]
    exact = [(float(r["latency_ms"]), float(r["energy_mj"])) for r in records(tmp_path / "o" / "oracle_pareto.csv")]
    for p in ours:
        assert not any(q[0] < p[0] - 1e-5 and q[1] < p[1] - 1e-5 for q in exact)


def test_oracle_budget_refusal_and_infeasible(tmp_path, capsys):
    cfg = str(CONFIGS / "toy.toml")
    assert main(["oracle", "-c", cfg, "--genome", TOY_GENOME, "--budget", "10",
                 "--out", str(tmp_path / "a")]) == 4
    assert "budget" in capsys.readouterr().err
    assert main(["map", "-c", cfg, "--genome", TOY_GENOME, "--constraint", "latency=0.001",
                 "--out", str(tmp_path / "b")]) == 3
    assert main(["oracle", "-c", cfg, "--genome", TOY_GENOME, "--constraint", "latency=0.001",
                 "--out", str(tmp_path / "c")]) == 3
    assert main(["map", "-c", cfg, "--genome", TOY_GENOME, "--constraint", "speed=1",
                 "--out", str(tmp_path / "d")]) == 2


def test_search_matches_exhaustive_toy_run(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["search", "-c", str(CONFIGS / "toy.toml"), "--out", str(out)]) == 0
    cfg = load_config(CONFIGS / "toy.toml")
    pts = []
    for g in cfg.space.genomes():
        orc = brute_force_oracle(plan_for(g, cfg.space), cfg.table, cfg.platform)
        pts.append((cfg.accuracy(g), orc.best.latency, orc.best.energy))
    want = sorted(p for p in pts if not any(
        dominates(ObjectiveVector(q, SENSES), ObjectiveVector(p, SENSES)) for q in pts))
    got = sorted((float(r["accuracy"]), float(r["latency_ms"]), float(r["energy_mj"]))
                 for r in records(out / "pareto.csv"))
    assert len(got) == len(want)
    for g, w in zip(got, want):
        assert g == pytest.approx(w, abs=1e-5)
    assert main(["report", str(out)]) == 0
    shown = capsys.readouterr().out
    assert "Pareto composition" in shown and "all_generations" in shown


def test_search_latency_increase_constraint(tmp_path):
    out = tmp_path / "s"
    assert main(["search", "-c", str(CONFIGS / "toy.toml"), "--constraint",
                 "latency-increase=0.05", "--set", "ooe.generations=2", "--out", str(out)]) == 0
    cfg = load_config(CONFIGS / "toy.toml")
    for r in records(out / "pareto.csv"):
        plan = plan_for(parse_genome(r["genome"]), cfg.space)
        best_standalone = min(
            sum(cfg.table.lookup(u, cu, cfg.platform.default_dvfs).comp_latency for u in plan.units)
            for cu in cfg.platform.cu_ids)
        assert float(r["latency_ms"]) < 1.05 * best_standalone + 1e-5


def test_search_zero_generations(tmp_path):
    out = tmp_path / "s"
    assert main(["search", "-c", str(CONFIGS / "toy.toml"), "--set", "ooe.generations=0",
                 "--out", str(out)]) == 0
    assert [r["generation"] for r in records(out / "hv_trace.csv")] == ["0"]


def test_search_is_deterministic_across_threads(tmp_path):
    cfg = str(CONFIGS / "toy.toml")
    main(["search", "-c", cfg, "--seed", "3", "--threads", "1", "--out", str(tmp_path / "a")])
    main(["search", "-c", cfg, "--seed", "3", "--threads", "4", "--out", str(tmp_path / "b")])
    for name in ("pareto.csv", "hv_trace.csv", "composition.csv", "scatter.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_report_rejects_non_run_dir(tmp_path):
    assert main(["report", str(tmp_path)]) == 2


def test_threads_must_be_positive(tmp_path):
    assert main(["search", "-c", str(CONFIGS / "toy.toml"), "--threads", "0",
                 "--out", str(tmp_path)]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "vigmap.cli", "validate", "-c",
                           str(CONFIGS / "toy.toml")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "config OK" in proc.stdout
