"""CLI commands, strict config validation, manifests, and exit codes."""

import json

import pytest

from activesvdd.cli import (
    EXIT_DATA,
    EXIT_OK,
    EXIT_USAGE,
    ConfigError,
    load_config,
    main,
    manifest_to_metrics,
    parse_config,
)
from activesvdd.evaluation import aggregate, read_report


def fast_config(**overrides):
    doc = {
        "synth": {"n": 60, "dim": 3, "ratio": 0.2, "seed": 0},
        "model": {"widths": [8, 4]},
        "loop": {"stages": 2},
        "train": {"pretrain_epochs": 2, "finetune_epochs": 2},
        "seeds": [0],
    }
    doc.update(overrides)
    return doc


def write_config(tmp_path, doc, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc), encoding="utf-8")
    return p


class TestParseConfig:
    def test_minimal_synth(self):
        parsed = parse_config({"synth": {"n": 100, "dim": 2, "ratio": 0.1}})
        assert parsed.synth["n"] == 100
        assert parsed.loop.objective == "oc"
        assert parsed.loop.strategy == "ab"
        assert parsed.loop.ssl_method == "nce"
        assert parsed.seeds == [0]

    def test_dataset_form(self):
        parsed = parse_config(
            {"dataset": {"path": "x.csv", "label_column": "label"}}
        )
        assert parsed.dataset["path"] == "x.csv"
        assert parsed.synth is None

    def test_requires_exactly_one_source(self):
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config({})
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config(
                {
                    "synth": {"n": 1, "dim": 1, "ratio": 0.1},
                    "dataset": {"path": "x", "label_column": "y"},
                }
            )

    def test_unknown_top_key_rejected(self):
        with pytest.raises(ConfigError, match="'tyop'"):
            parse_config({"synth": {"n": 9, "dim": 1, "ratio": 0.2}, "tyop": 1})

    def test_unknown_section_key_rejected(self):
        with pytest.raises(ConfigError, match="'objectiv'.*'model'"):
            parse_config(
                {
                    "synth": {"n": 9, "dim": 1, "ratio": 0.2},
                    "model": {"objectiv": "oc"},
                }
            )

    def test_db_with_oc_rejected(self):
        with pytest.raises(ConfigError, match="soft-boundary"):
            parse_config(
                {
                    "synth": {"n": 9, "dim": 1, "ratio": 0.2},
                    "query": {"strategy": "db"},
                }
            )

    def test_seeds_must_be_nonempty_ints(self):
        with pytest.raises(ConfigError, match="seeds"):
            parse_config({"synth": {"n": 9, "dim": 1, "ratio": 0.2}, "seeds": []})
        with pytest.raises(ConfigError, match="seeds"):
            parse_config(
                {"synth": {"n": 9, "dim": 1, "ratio": 0.2}, "seeds": ["x"]}
            )

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "missing.json")

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(p)


class TestSynthCommand:
    def test_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "d.csv"
        code = main(
            ["synth", "--n", "50", "--dim", "2", "--ratio", "0.1", "--out", str(out)]
        )
        assert code == EXIT_OK
        assert out.exists()
        assert "50 rows" in capsys.readouterr().out

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["synth", "--n", "30", "--dim", "2", "--ratio", "0.1", "--seed", "4"]
        assert main(args + ["--out", str(a)]) == EXIT_OK
        assert main(args + ["--out", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_bad_ratio_is_data_error(self, tmp_path, capsys):
        code = main(
            [
                "synth", "--n", "50", "--dim", "2", "--ratio", "0.9",
                "--out", str(tmp_path / "d.csv"),
            ]
        )
        assert code == EXIT_DATA
        assert "data error" in capsys.readouterr().err


class TestRunCommand:
    def test_end_to_end_outputs(self, tmp_path, capsys):
        cfg = write_config(tmp_path, fast_config())
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["format_version"] == 1
        assert manifest["dataset"]["n"] == 60
        assert manifest["budget"] == 6
        assert len(manifest["runs"]) == 1
        assert len(manifest["runs"][0]["stages"]) == 3
        rows = read_report(out / "report.csv")
        assert len(rows) == 3
        json_rows = read_report(out / "report.json")
        assert [r["stage"] for r in json_rows] == [0, 1, 2]

    def test_manifest_bytes_deterministic(self, tmp_path):
        cfg = write_config(tmp_path, fast_config())
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["run", "--config", str(cfg), "--out", str(out1)]) == EXIT_OK
        assert main(["run", "--config", str(cfg), "--out", str(out2)]) == EXIT_OK
        assert (out1 / "manifest.json").read_bytes() == (out2 / "manifest.json").read_bytes()
        assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = write_config(tmp_path, fast_config(query={"strategy": "db"}))
        code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == EXIT_USAGE
        assert "config error" in capsys.readouterr().err

    def test_missing_csv_exit_code(self, tmp_path, capsys):
        doc = {
            "dataset": {"path": str(tmp_path / "gone.csv"), "label_column": "label"},
            "model": {"widths": [4]},
            "train": {"pretrain_epochs": 1, "finetune_epochs": 1},
        }
        cfg = write_config(tmp_path, doc)
        code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == EXIT_DATA
        assert "data error" in capsys.readouterr().err

    def test_csv_dataset_round(self, tmp_path):
        data = tmp_path / "d.csv"
        assert (
            main(
                [
                    "synth", "--n", "60", "--dim", "3", "--ratio", "0.2",
                    "--out", str(data),
                ]
            )
            == EXIT_OK
        )
        doc = fast_config()
        del doc["synth"]
        doc["dataset"] = {"path": str(data), "label_column": "label"}
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["dataset"]["name"] == "d"


class TestReportCommand:
    def prepare_runs(self, tmp_path, seeds=(0, 1)):
        cfg = write_config(tmp_path, fast_config(seeds=list(seeds)))
        out = tmp_path / "runs" / "exp1"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        return tmp_path / "runs"

    def test_aggregates_manifests(self, tmp_path):
        runs = self.prepare_runs(tmp_path)
        out = tmp_path / "agg"
        assert main(["report", "--runs", str(runs), "--out", str(out)]) == EXIT_OK
        rows = read_report(out / "report.csv")
        assert all(r["n_runs"] == 2 for r in rows)

    def test_report_matches_direct_aggregation(self, tmp_path):
        runs = self.prepare_runs(tmp_path)
        out = tmp_path / "agg"
        assert main(["report", "--runs", str(runs), "--out", str(out)]) == EXIT_OK
        manifest = json.loads((runs / "exp1" / "manifest.json").read_text())
        direct = aggregate(manifest_to_metrics(manifest))
        via_cli = read_report(out / "report.json")
        assert via_cli == direct

    def test_across_datasets_flag(self, tmp_path):
        runs = self.prepare_runs(tmp_path)
        out = tmp_path / "agg"
        code = main(
            ["report", "--runs", str(runs), "--out", str(out), "--across-datasets"]
        )
        assert code == EXIT_OK
        rows = read_report(out / "report.csv")
        assert any(r["dataset"] == "ALL" for r in rows)

    def test_empty_runs_dir_is_data_error(self, tmp_path, capsys):
        empty = tmp_path / "runs"
        empty.mkdir()
        code = main(["report", "--runs", str(empty), "--out", str(tmp_path / "agg")])
        assert code == EXIT_DATA


class TestUsage:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == EXIT_USAGE
        assert "usage error" in capsys.readouterr().err

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_missing_required_flag(self, capsys):
        assert main(["synth", "--n", "10"]) == EXIT_USAGE
