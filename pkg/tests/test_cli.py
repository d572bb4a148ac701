import json

import numpy as np
import pytest

from splitsense import load_matched_csv, write_matched_csv
from splitsense.cli import main

from conftest import make_dataset


@pytest.fixture
def dataset_csv(tmp_path, rng):
    d = make_dataset(rng, 30, 5, shift=0.7)
    path = tmp_path / "pairs.csv"
    write_matched_csv(d, path)
    return str(path)


def run_optimize(dataset_csv, out_dir, *extra):
    return main(
        [
            "optimize",
            "--input", dataset_csv,
            "--gamma", "1,1.5",
            "--replications", "20",
            "--grid-step", "0.2",
            "--eta", "0.2",
            "--seed", "7",
            "--out", str(out_dir),
            *extra,
        ]
    )


class TestOptimize:
    def test_writes_curves_and_summary(self, dataset_csv, tmp_path):
        out = tmp_path / "opt"
        assert run_optimize(dataset_csv, out) == 0
        for name in ("power_curve_gamma1.csv", "power_curve_gamma1.5.csv", "summary.json"):
            assert (out / name).exists(), name
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["gammas"]) == {"1", "1.5"}
        entry = summary["gammas"]["1"]
        assert 0.0 < entry["zeta_star"] < 1.0
        assert entry["zeta_star"] in entry["near_optimal"]

    def test_curve_csv_sorted_unique(self, dataset_csv, tmp_path):
        out = tmp_path / "opt"
        run_optimize(dataset_csv, out)
        lines = (out / "power_curve_gamma1.csv").read_text().strip().splitlines()
        assert lines[0] == "zeta,power"
        zetas = [float(line.split(",")[0]) for line in lines[1:]]
        assert zetas == sorted(set(zetas))

    def test_rerun_byte_identical(self, dataset_csv, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run_optimize(dataset_csv, out1)
        run_optimize(dataset_csv, out2)
        for name in ("power_curve_gamma1.csv", "power_curve_gamma1.5.csv", "summary.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_threads_do_not_change_bytes(self, dataset_csv, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run_optimize(dataset_csv, out1, "--threads", "1")
        run_optimize(dataset_csv, out2, "--threads", "3")
        for name in ("power_curve_gamma1.csv", "summary.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_missing_input_exits_2(self, tmp_path, capsys):
        code = main(["optimize", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "FileNotFoundError"

    def test_invalid_gamma_exits_3(self, dataset_csv, tmp_path, capsys):
        code = main(
            ["optimize", "--input", dataset_csv, "--gamma", "0.5", "--out", str(tmp_path),
             "--replications", "2", "--eta", "0.2"]
        )
        assert code == 3
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "InvalidGammaError"


class TestPowerCurve:
    def test_writes_curves_without_summary(self, dataset_csv, tmp_path):
        out = tmp_path / "pc"
        code = main(
            ["power-curve", "--input", dataset_csv, "--gamma", "1", "--replications", "10",
             "--grid-step", "0.25", "--eta", "0.2", "--out", str(out)]
        )
        assert code == 0
        assert (out / "power_curve_gamma1.csv").exists()
        assert not (out / "summary.json").exists()


class TestAnalyze:
    def test_reports_and_matrix(self, dataset_csv, tmp_path):
        out = tmp_path / "an"
        code = main(
            ["analyze", "--input", dataset_csv, "--gamma", "1,1.25,1.5", "--zeta", "0.6",
             "--method", "fdr", "--seed", "5", "--out", str(out)]
        )
        assert code == 0
        for g in ("1", "1.25", "1.5"):
            report = json.loads((out / f"report_gamma{g}.json").read_text())
            assert set(report["rejected"]) <= set(report["selected"])
        lines = (out / "rejections.csv").read_text().strip().splitlines()
        assert lines[0] == "outcome,gamma_1,gamma_1.25,gamma_1.5"
        assert len(lines) == 6
        # shared split seed makes rejections shrink as gamma grows
        for line in lines[1:]:
            flags = [int(v) for v in line.split(",")[1:]]
            assert flags == sorted(flags, reverse=True)

    def test_zeta_from_summary(self, dataset_csv, tmp_path):
        opt_out = tmp_path / "opt"
        run_optimize(dataset_csv, opt_out)
        out = tmp_path / "an"
        code = main(
            ["analyze", "--input", dataset_csv, "--gamma", "1,1.5",
             "--from-summary", str(opt_out / "summary.json"), "--seed", "5", "--out", str(out)]
        )
        assert code == 0
        summary = json.loads((opt_out / "summary.json").read_text())
        report = json.loads((out / "report_gamma1.5.json").read_text())
        assert report["zeta"] == summary["gammas"]["1.5"]["zeta_star"]
        assert report["method"] == summary["method"]

    def test_summary_missing_gamma_exits_3(self, dataset_csv, tmp_path, capsys):
        opt_out = tmp_path / "opt"
        run_optimize(dataset_csv, opt_out)
        code = main(
            ["analyze", "--input", dataset_csv, "--gamma", "2",
             "--from-summary", str(opt_out / "summary.json"), "--out", str(tmp_path / "an")]
        )
        assert code == 3
        assert "gamma=2" in json.loads(capsys.readouterr().err)["message"]

    def test_needs_zeta_or_summary(self, dataset_csv, tmp_path):
        assert main(["analyze", "--input", dataset_csv, "--out", str(tmp_path / "x")]) == 3

    def test_weak_data_rejects_nothing(self, tmp_path, rng):
        d = make_dataset(rng, 20, 4)  # no signal
        path = tmp_path / "noise.csv"
        write_matched_csv(d, path)
        out = tmp_path / "an"
        code = main(
            ["analyze", "--input", str(path), "--gamma", "3", "--zeta", "0.5",
             "--method", "fwer", "--out", str(out)]
        )
        assert code == 0
        lines = (out / "rejections.csv").read_text().strip().splitlines()
        assert all(line.endswith(",0") for line in lines[1:])


class TestSimulate:
    def test_emits_loadable_dataset(self, tmp_path):
        out = tmp_path / "sim"
        code = main(
            ["simulate", "--n-units", "400", "--n-outcomes", "10", "--pairs", "50",
             "--gamma", "1.5", "--seed", "9", "--out", str(out)]
        )
        assert code == 0
        d = load_matched_csv(out / "dataset.csv")
        assert (d.n_pairs, d.n_outcomes, d.n_covariates) == (50, 10, 5)
        truth = json.loads((out / "truth.json").read_text())
        assert len(truth["affected_outcomes"]) == 1
        assert truth["gamma"] == 1.5

    def test_deterministic(self, tmp_path):
        args = ["simulate", "--n-units", "300", "--pairs", "40", "--seed", "4"]
        main(args + ["--out", str(tmp_path / "a")])
        main(args + ["--out", str(tmp_path / "b")])
        assert (tmp_path / "a/dataset.csv").read_bytes() == (tmp_path / "b/dataset.csv").read_bytes()


class TestBench:
    def test_scenario_to_results(self, tmp_path):
        scenario = {
            "gammas": [1.0],
            "pair_counts": [30],
            "n_outcomes": 8,
            "replications": 3,
            "methods": ["bonferroni", "fdr"],
            "n_units": 300,
            "grid_step": 0.2,
            "seed": 2,
        }
        cfg = tmp_path / "scenario.json"
        cfg.write_text(json.dumps(scenario))
        out = tmp_path / "bench"
        assert main(["bench", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "results.csv").read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2 methods
        assert not (out / "results.csv.partial").exists()

    def test_requires_config(self, tmp_path, capsys):
        with pytest.raises(SystemExit):
            main(["bench", "--out", str(tmp_path)])


class TestConfigFile:
    def test_flags_beat_config_beat_defaults(self, dataset_csv, tmp_path):
        cfg = tmp_path / "opts.json"
        cfg.write_text(json.dumps({"replications": 5, "eta": 0.2, "grid_step": 0.25, "seed": 3}))
        out = tmp_path / "opt"
        code = main(
            ["optimize", "--input", dataset_csv, "--config", str(cfg),
             "--replications", "8", "--out", str(out)]
        )
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["replications"] == 8  # flag wins
        assert summary["eta"] == 0.2  # config wins over default
        assert summary["grid_step"] == 0.25

    def test_unknown_config_key_exits_3(self, dataset_csv, tmp_path, capsys):
        cfg = tmp_path / "opts.json"
        cfg.write_text(json.dumps({"replication": 5}))
        code = main(["optimize", "--input", dataset_csv, "--config", str(cfg), "--out", str(tmp_path)])
        assert code == 3
