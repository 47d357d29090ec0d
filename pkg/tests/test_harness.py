import csv
import json
import math
from dataclasses import dataclass

import numpy as np
import pytest

from esnrl.errors import ConfigError, DivergenceError, NumericalError
from esnrl.harness import cli
from esnrl.harness.config import ExperimentConfig, load_config
from esnrl.harness.pipeline import (
    oracle_summary,
    run_experiment,
    run_offline_one_step,
    sign_test,
    sweep,
)
from esnrl.harness.report import REPORT_FILES, ExperimentReport, emit_report, histogram_table, load_report

SMALL_ORACLE = {"horizon": 20.0, "quad_points": 64, "simulation_steps": 2000}


def bee_doc(**extra):
    doc = {"env": "bee", "seed": 0, "train_steps": 200,
           "reservoir": {"kind": "standard", "n": 40}, "oracle": SMALL_ORACLE}
    doc.update(extra)
    return doc


def mm_doc(**extra):
    doc = {"env": "market_maker", "seed": 0, "train_steps": 300,
           "reservoir": {"kind": "standard", "n": 40}, "oracle": SMALL_ORACLE}
    doc.update(extra)
    return doc


def online_doc(**extra):
    doc = mm_doc(mode="online", train_steps=500, candidates={"count": 10})
    doc.update(extra)
    return doc


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestConfig:
    def test_defaults_filled(self):
        cfg = ExperimentConfig.from_dict({"env": "bee"}, seed=3)
        assert cfg["gamma"] == 0.5 and cfg["lambda"] == 1e-9 and cfg["train_steps"] == 2000
        assert cfg["eval_steps"] == 2000 and cfg.seed == 3
        assert cfg["bee"]["omega"] == pytest.approx(2 * math.pi / 50)
        mm = ExperimentConfig.from_dict({"env": "market_maker"})
        assert mm["gamma"] == pytest.approx(math.exp(-1)) and mm["candidates"]["distribution"] == "normal"

    @pytest.mark.parametrize("doc", [
        {"env": "moon"},
        {"env": "bee", "gamma": 1.0},
        {"env": "bee", "lambda": -1.0},
        {"env": "bee", "bogus": 1},
        {"env": "bee", "reservoir": {"kind": "standard", "n": 0}},
        {"env": "bee", "reservoir": {"kind": "structured", "N": 3}},
        {"env": "bee", "bee": {"c": 1.5}},
        {"env": "bee", "candidates": {"distribution": "normal"}},
        {"env": "market_maker", "online": {"gamma_eff": 1.5}},
        {"env": "bee", "train_steps": 10, "washout": 9},
        {"env": "bee", "seed": -1},
    ])
    def test_invalid(self, doc):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(doc)

    def test_missing_seed(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"env": "bee"}).seed

    def test_structured_replaces_standard(self):
        cfg = ExperimentConfig.from_dict(
            {"env": "bee", "reservoir": {"kind": "structured", "N": 3, "T0": 1, "R": 1.0, "M_T0": 1.0}})
        assert set(cfg["reservoir"]) == {"kind", "N", "T0", "R", "M_T0"}
        assert cfg.structured_spec.n == 2 * (2 * 2 + 3)

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(bad)
        bad.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_config(bad)

    def test_shipped_configs_validate(self):
        for name in ("bee", "market_maker", "market_maker_online"):
            load_config(f"configs/{name}.json")


class TestReport:
    def test_rejects_non_finite(self):
        with pytest.raises(NumericalError):
            ExperimentReport({"a": {"b": [1.0, math.nan]}})
        with pytest.raises(NumericalError):
            ExperimentReport({"x": np.float64(np.inf)})

    def test_roundtrip(self, tmp_path):
        rep = ExperimentReport({"a": np.arange(3), "b": True, "c": {"d": np.float32(0.5)}})
        emit_report(rep, tmp_path)
        assert load_report(tmp_path) == {"a": [0, 1, 2], "b": True, "c": {"d": 0.5}}

    def test_histogram_mass(self):
        samples = np.random.default_rng(0).normal(size=1000)
        t = histogram_table(samples, 20, -5, 5, {"ref": lambda x: np.exp(-x * x / 2) / math.sqrt(2 * math.pi)})
        mass = np.array([r[3] for r in t.rows])
        dens = np.array([r[4] for r in t.rows])
        assert mass.sum() == pytest.approx(1.0)
        assert (dens * 0.5).sum() == pytest.approx(1.0)
        assert t.columns[-1] == "ref"

    def test_empty_histogram(self):
        t = histogram_table([], 4, 0, 1)
        assert all(r[3] == 0.0 for r in t.rows)


class TestSignTest:
    def test_all_wins(self):
        assert sign_test(np.ones(10)) == pytest.approx(0.5**10)

    def test_ties_dropped(self):
        assert sign_test([0.0, 0.0]) == 1.0
        assert sign_test([1.0, 0.0, -1.0]) == pytest.approx(0.75)


class TestOfflineRun:
    def test_bee_report_contents(self, tmp_path):
        rep = run_experiment(ExperimentConfig.from_dict(bee_doc()))
        for key in ("config", "config_hash", "version", "backend", "seed", "phases", "oracle",
                    "diagnostics", "comparison", "wall_clock_s"):
            assert key in rep.data
        assert rep["phases"]["initial"]["steps"] == 200
        assert rep["oracle"]["available"] and 0.0 <= rep["oracle"]["average_nectar"] <= 2.0
        paths = emit_report(rep, tmp_path)
        assert sorted(p.rsplit("/", 1)[1] for p in paths) == sorted(REPORT_FILES)
        with open(tmp_path / "histogram.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert sum(float(r["mass"]) for r in rows) == pytest.approx(1.0)

    def test_deterministic(self):
        a = run_experiment(ExperimentConfig.from_dict(mm_doc())).without_timing()
        b = run_experiment(ExperimentConfig.from_dict(mm_doc())).without_timing()
        assert a == b

    def test_seed_changes_result(self):
        a = run_experiment(ExperimentConfig.from_dict(bee_doc(seed=1)))
        b = run_experiment(ExperimentConfig.from_dict(bee_doc(seed=2)))
        assert a["phases"]["initial"]["mean_reward"] != b["phases"]["initial"]["mean_reward"]

    def test_mm_comparison_and_oracle_parity(self):
        cfg = ExperimentConfig.from_dict(mm_doc())
        rep = run_experiment(cfg)
        assert rep["oracle"] == json.loads(json.dumps(oracle_summary(cfg)))
        comp = rep["comparison"]
        assert "scatter_slope" in comp and "deviation_flagged" in comp
        assert comp["slope_target"] == pytest.approx(-1.3282428668744273)
        assert rep["oracle"]["p"] == pytest.approx(1.3282428668744273)

    def test_stub_env_ties_choose_first_candidate(self):
        # zero rewards and zero discount give a zero readout, so every candidate ties
        @dataclass(frozen=True)
        class StubConfig:
            name: str = "stub"

        class StubEnv:
            env_id = "stub"
            obs_dim = 1
            action_dim = 1
            config = StubConfig()
            latent = 0.0

            def observe(self):
                return np.zeros(1)

            def step(self, action):
                return 0.0

        def builder(cfg, noise):
            return StubEnv(), lambda o, r: r.generator.uniform(-1, 1), \
                lambda r: r.generator.uniform(-1, 1, (5, 1))

        cfg = ExperimentConfig.from_dict(bee_doc(gamma=0.0, train_steps=50))
        rep = run_offline_one_step(cfg, env_builder=builder)
        assert rep["phases"]["improved"]["first_candidate_fraction"] == 1.0
        assert rep["phases"]["fit"]["readout_norm"] == 0.0
        assert rep["oracle"]["available"] is False


class TestOnlineRun:
    def test_tiny_step_size_barely_moves(self):
        rep = run_experiment(ExperimentConfig.from_dict(online_doc(online={"a": 1e-9})))
        assert rep["online"]["total_drift"] <= 1e-4

    def test_deterministic(self):
        a = run_experiment(ExperimentConfig.from_dict(online_doc()))
        b = run_experiment(ExperimentConfig.from_dict(online_doc()))
        assert a.without_timing() == b.without_timing()
        assert a["online"]["w_trajectory_hash"] == b["online"]["w_trajectory_hash"]

    def test_checkpoints(self):
        rep = run_experiment(ExperimentConfig.from_dict(online_doc()))
        steps = [c["step"] for c in rep["online"]["checkpoints"]]
        assert steps == [0, 10, 100, 500]
        assert rep["online"]["checkpoints"][0]["w_norm"] == 0.0

    def test_divergence(self):
        cfg = ExperimentConfig.from_dict(online_doc(online={"a": 1e3, "b": 0.0, "guard": 1e-3}))
        with pytest.raises(DivergenceError) as info:
            run_experiment(cfg)
        assert info.value.partial["updates"] >= 1


class TestSweep:
    def test_serial(self, tmp_path):
        summary = sweep(ExperimentConfig.from_dict(bee_doc()), 3, tmp_path, workers=1)
        assert summary["seeds"] == [0, 1, 2] and len(summary["runs"]) == 3
        assert 0.0 <= summary["sign_test_pvalue"] <= 1.0
        assert (tmp_path / "seed_2" / "report.json").exists()

    def test_parallel_matches_serial(self):
        cfg = ExperimentConfig.from_dict(bee_doc())
        assert sweep(cfg, 2, workers=2)["runs"] == sweep(cfg, 2, workers=1)["runs"]


class TestCli:
    def test_run(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli.main(["run", "--config", write_config(tmp_path, bee_doc()), "--seed", "4",
                         "--out", str(out)])
        assert code == 0
        assert load_report(out)["seed"] == 4
        for name in REPORT_FILES:
            assert (out / name).exists()

    def test_config_error_exit(self, tmp_path, capsys):
        path = write_config(tmp_path, {"env": "bee", "gamma": 2.0})
        assert cli.main(["run", "--config", path, "--seed", "0", "--out", str(tmp_path)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_divergence_exit(self, tmp_path, capsys):
        doc = online_doc(online={"a": 1e3, "b": 0.0, "guard": 1e-3})
        code = cli.main(["run", "--config", write_config(tmp_path, doc), "--seed", "0",
                         "--out", str(tmp_path / "o")])
        assert code == 2
        assert "numerical error" in capsys.readouterr().err

    def test_validate(self, tmp_path, capsys):
        assert cli.main(["validate", "--config", write_config(tmp_path, {"env": "bee"})]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["train_steps"] == 2000

    def test_oracle(self, tmp_path, capsys):
        assert cli.main(["oracle", "--env", "mm", "--config", write_config(tmp_path, mm_doc())]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["p"] == pytest.approx(1.3282428668744273)

    def test_sweep(self, tmp_path, capsys):
        out = tmp_path / "sw"
        code = cli.main(["sweep", "--config", write_config(tmp_path, bee_doc()), "--seeds", "2",
                         "--out", str(out), "--workers", "1"])
        assert code == 0
        assert json.loads((out / "summary.json").read_text())["seeds"] == [0, 1]

    def test_bad_seed_argument(self, tmp_path):
        with pytest.raises(SystemExit):
            cli.main(["run", "--config", "x", "--seed", "-3", "--out", str(tmp_path)])
