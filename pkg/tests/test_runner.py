import json

import pytest
import yaml

from fedsa_sim.cli import main
from fedsa_sim.config import parse_config_dict
from fedsa_sim.runner import run_centralized, run_experiment, run_sweep

from conftest import desk_doc


def small_doc(tmp_path, **overrides):
    doc = desk_doc(output=str(tmp_path / "runs"))
    doc["data"]["synthetic"].update({"n_samples": 600})
    doc["federation"] = {"n_participants": 8, "subset_size": 3}
    doc["fedsa"] = {"epochs": 2}
    doc["fedavg"] = {"tau": 3, "eta0": 0.1, "rounds": 4}
    doc.update(overrides)
    return doc


class TestRunExperiment:
    def test_fedsa_round_budget(self, tmp_path):
        doc = small_doc(tmp_path)
        doc["fedsa"]["epochs"] = 5
        result = run_experiment(parse_config_dict(doc))
        lines = (result.run_dir / "records.jsonl").read_text().splitlines()
        assert len(lines) == 11  # 1 + 2 * epochs

    def test_fedavg_round_budget(self, tmp_path):
        doc = small_doc(tmp_path, driver="fedavg")
        doc["fedavg"]["rounds"] = 8
        result = run_experiment(parse_config_dict(doc))
        lines = (result.run_dir / "records.jsonl").read_text().splitlines()
        assert len(lines) == 8

    def test_record_stream_is_ordered_and_parseable(self, tmp_path):
        result = run_experiment(parse_config_dict(small_doc(tmp_path)))
        rounds = []
        for line in (result.run_dir / "records.jsonl").read_text().splitlines():
            payload = json.loads(line)
            rounds.append(payload["round_index"])
            assert 0.0 <= payload["accuracy"] <= 1.0
        assert rounds == sorted(rounds)
        assert len(set(rounds)) == len(rounds)

    def test_repeated_runs_are_byte_identical_in_fresh_dirs(self, tmp_path):
        doc = small_doc(tmp_path)
        a = run_experiment(parse_config_dict(doc))
        b = run_experiment(parse_config_dict(doc))
        assert a.run_dir != b.run_dir
        assert (a.run_dir / "records.jsonl").read_bytes() == (
            b.run_dir / "records.jsonl"
        ).read_bytes()

    def test_run_directory_contents(self, tmp_path):
        result = run_experiment(parse_config_dict(small_doc(tmp_path)))
        names = {p.name for p in result.run_dir.iterdir()}
        assert {"config_echo.yaml", "records.jsonl", "summary.json"} <= names
        echo = yaml.safe_load((result.run_dir / "config_echo.yaml").read_text())
        assert echo["driver"] == "fedsa"
        assert echo["applied_defaults"]
        summary = json.loads((result.run_dir / "summary.json").read_text())
        for key in ("best_round", "total_rounds", "wall_time_sec", "final", "split_mode"):
            assert key in summary

    def test_summary_reports_best_round_and_solution(self, tmp_path):
        result = run_experiment(parse_config_dict(small_doc(tmp_path)))
        losses = [r.loss for r in result.records]
        assert result.summary["best_loss"] == min(losses)
        assert result.summary["best_solution"]["tau"] >= 1


class TestCentralized:
    def test_block_count_matches_round_budget(self, tmp_path):
        doc = small_doc(tmp_path, driver="centralized")
        records = run_centralized(parse_config_dict(doc))
        assert len(records) == 4
        assert all(r.phase == "centralized" for r in records)

    def test_zero_eta_gives_flat_metrics(self, tmp_path):
        doc = small_doc(tmp_path, driver="centralized")
        doc["fedavg"]["eta0"] = 0.0
        records = run_centralized(parse_config_dict(doc))
        assert len({r.loss for r in records}) == 1
        assert len({r.accuracy for r in records}) == 1

    def test_final_loss_beats_federated_baseline(self, tmp_path):
        # regression fixture frozen from the pinned pair of runs (seed 42,
        # data seed 7): centralized 0.0084 vs federated baseline 0.3538
        doc = desk_doc(output=str(tmp_path / "runs"))
        central = run_experiment(parse_config_dict(doc, driver="centralized"))
        fedavg = run_experiment(parse_config_dict(doc, driver="fedavg"))
        central_loss = central.records[-1].loss
        fedavg_loss = fedavg.records[-1].loss
        assert central_loss <= fedavg_loss
        assert central_loss == pytest.approx(0.0084, abs=2e-3)
        assert fedavg_loss == pytest.approx(0.3538, abs=2e-3)


class TestSweep:
    def test_grid_runs_and_summarizes(self, tmp_path):
        doc = small_doc(tmp_path)
        doc["sweep"] = {"t_init": [0.1, 0.4], "alpha": [0.05, 0.9], "seeds": [3]}
        result = run_sweep(parse_config_dict(doc))
        assert len(result.summary["cells"]) == 4
        assert (result.sweep_dir / "sweep_summary.json").is_file()
        for cell in result.summary["cells"]:
            assert len(cell["final_accuracies"]) == 1
            assert 0.0 <= cell["mean_accuracy"] <= 1.0
        assert result.summary["spread_of_cell_means"] >= 0.0

    def test_sweep_without_section_rejected(self, tmp_path):
        from fedsa_sim.config import ConfigError

        with pytest.raises(ConfigError, match="sweep"):
            run_sweep(parse_config_dict(small_doc(tmp_path)))


class TestCli:
    def write(self, tmp_path, doc):
        path = tmp_path / "exp.yaml"
        path.write_text(yaml.safe_dump(doc))
        return path

    def test_run_exit_zero(self, tmp_path, capsys):
        path = self.write(tmp_path, small_doc(tmp_path))
        assert main(["run", str(path)]) == 0
        out = capsys.readouterr().out
        assert "run directory:" in out
        assert "final_accuracy=" in out

    def test_driver_and_seed_overrides(self, tmp_path, capsys):
        path = self.write(tmp_path, small_doc(tmp_path))
        assert main(["run", str(path), "--driver", "fedavg", "--seed", "8"]) == 0

    def test_config_error_exits_one(self, tmp_path, capsys):
        doc = small_doc(tmp_path)
        doc["federation"]["subset_size"] = 99
        path = self.write(tmp_path, doc)
        assert main(["run", str(path)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_data_error_exits_two(self, tmp_path, capsys):
        doc = small_doc(tmp_path)
        doc["data"] = {"csv": {"path": str(tmp_path / "missing.csv"), "label_column": "Label"}}
        path = self.write(tmp_path, doc)
        assert main(["run", str(path)]) == 2
        assert "data error" in capsys.readouterr().err

    def test_sweep_command(self, tmp_path, capsys):
        doc = small_doc(tmp_path)
        doc["sweep"] = {"t_init": [0.4], "alpha": [0.05], "seeds": [3, 4]}
        path = self.write(tmp_path, doc)
        assert main(["sweep", str(path)]) == 0
        assert "sweep directory:" in capsys.readouterr().out
