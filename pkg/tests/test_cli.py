import json

from evofuzzy.cli import main
from evofuzzy.datagen import csv_dims, load_csv
from evofuzzy.evaluate import read_metrics


def run_cli(*args):
    return main(list(args))


class TestGen:
    def test_writes_sea_csv(self, tmp_path):
        out = tmp_path / "sea.csv"
        assert run_cli("gen", "sea", "--n", "500", "--seed", "1", "--out", str(out)) == 0
        assert csv_dims(out) == (3, 2)
        assert sum(1 for _ in load_csv(out)) == 500

    def test_writes_hyperplane_csv(self, tmp_path):
        out = tmp_path / "hyp.csv"
        code = run_cli(
            "gen", "hyperplane", "--n", "400", "--d", "5",
            "--drift-start", "200", "--out", str(out),
        )
        assert code == 0
        assert csv_dims(out) == (5, 2)

    def test_stdout_default(self, capsys):
        assert run_cli("gen", "sea", "--n", "3") == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "x1,x2,x3,class"
        assert len(lines) == 4


class TestRun:
    def test_holdout_on_generated_stream(self, tmp_path, capsys):
        metrics_path = tmp_path / "m.jsonl"
        code = run_cli(
            "run", "--gen", "sea", "--n", "2000", "--stamps", "4",
            "--train", "250", "--test", "250", "--seed", "3",
            "--metrics", str(metrics_path),
        )
        assert code == 0
        records, summary = read_metrics(metrics_path)
        assert len(records) == 4
        assert "cr=" in capsys.readouterr().out

    def test_holdout_on_csv_file(self, tmp_path):
        data = tmp_path / "sea.csv"
        run_cli("gen", "sea", "--n", "1000", "--seed", "2", "--out", str(data))
        metrics_path = tmp_path / "m.jsonl"
        code = run_cli(
            "run", "--data", str(data), "--stamps", "2", "--train", "250",
            "--test", "250", "--metrics", str(metrics_path),
        )
        assert code == 0
        _, summary = read_metrics(metrics_path)
        assert 0.0 <= summary["cr"] <= 1.0

    def test_cv_mode(self, tmp_path):
        data = tmp_path / "sea.csv"
        run_cli("gen", "sea", "--n", "300", "--seed", "4", "--out", str(data))
        metrics_path = tmp_path / "m.jsonl"
        code = run_cli(
            "run", "--data", str(data), "--mode", "cv", "--folds", "3",
            "--chunk", "50", "--metrics", str(metrics_path),
        )
        assert code == 0
        records, _ = read_metrics(metrics_path)
        assert len(records) == 3

    def test_config_error_exit_code(self):
        assert run_cli("run", "--gen", "sea", "--n", "600", "--stamps", "1", "--p", "1.5") == 2

    def test_data_error_exit_code(self, tmp_path):
        assert run_cli("run", "--data", str(tmp_path / "missing.csv")) == 3

    def test_exhausted_stream_is_data_error(self):
        assert (
            run_cli("run", "--gen", "sea", "--n", "400", "--stamps", "2",
                    "--train", "250", "--test", "250")
            == 3
        )

    def test_config_file_supplies_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"stamps": 2, "train": 200, "test": 100, "n": 600}))
        metrics_path = tmp_path / "m.jsonl"
        code = run_cli(
            "run", "--gen", "sea", "--seed", "5",
            "--config", str(cfg), "--metrics", str(metrics_path),
        )
        assert code == 0
        records, _ = read_metrics(metrics_path)
        assert len(records) == 2

    def test_flags_override_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"stamps": 9, "train": 200, "test": 100, "n": 600}))
        metrics_path = tmp_path / "m.jsonl"
        code = run_cli(
            "run", "--gen", "sea", "--config", str(cfg),
            "--stamps", "2", "--metrics", str(metrics_path),
        )
        assert code == 0
        records, _ = read_metrics(metrics_path)
        assert len(records) == 2

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus_knob": 1}))
        assert run_cli("run", "--gen", "sea", "--config", str(cfg)) == 2


class TestReport:
    def test_summary_and_table(self, tmp_path, capsys):
        metrics_path = tmp_path / "m.jsonl"
        run_cli(
            "run", "--gen", "sea", "--n", "1000", "--stamps", "2",
            "--train", "250", "--test", "250", "--metrics", str(metrics_path),
        )
        capsys.readouterr()
        assert run_cli("report", "--metrics", str(metrics_path)) == 0
        table = capsys.readouterr().out
        assert "summary:" in table
        assert run_cli("report", "--metrics", str(metrics_path), "--summary") == 0
        summary = capsys.readouterr().out
        assert "cr:" in summary

    def test_missing_metrics_file(self, tmp_path):
        assert run_cli("report", "--metrics", str(tmp_path / "nope.jsonl")) == 3
