"""Command line entry points and exit codes."""

import json
import os

import pytest

from localrec.cli import main

FAST = ["--set", "walks.length=10", "--set", "walks.per_node=2",
        "--set", "embedding.dim=8", "--set", "embedding.window=3",
        "--set", "embedding.negatives=2", "--set", "embedding.epochs=1"]


def data_args(path):
    return ["--set", "dataset.path=%s" % path]


class TestSynthAndIngest:

    def test_synth_then_ingest_round_trip(self, tmp_path, capsys):
        d = tmp_path / "synth"
        code = main(["synth", "--out", str(d), "--users", "30",
                     "--items", "40", "--interactions", "700",
                     "--groups", "2", "--seed", "5"])
        assert code == 0
        assert "30 users" in capsys.readouterr().out

        assert main(["ingest"] + data_args(d)) == 0
        out = capsys.readouterr().out
        assert "users=30 items=40 interactions=700" in out

    def test_config_file_supplies_path(self, small_dataset_dir, tmp_path,
                                       capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("dataset.path = %s\n" % small_dataset_dir)
        assert main(["ingest", "--config", str(cfg)]) == 0
        assert "users=60" in capsys.readouterr().out


class TestStageCommands:

    def test_cluster_writes_artifacts(self, small_dataset_dir, tmp_path,
                                      capsys):
        out = tmp_path / "art"
        code = main(["cluster", "--out-dir", str(out)]
                    + data_args(small_dataset_dir) + FAST)
        assert code == 0
        for name in ("users.tsv", "items.tsv", "user_projection.tsv",
                     "user_embedding.txt", "user_clusters.tsv",
                     "user_density.csv", "item_clusters.tsv"):
            assert (out / name).exists(), name
        assert "clusters:" in capsys.readouterr().out

    def test_pipeline_writes_recommendations(self, small_dataset_dir,
                                             tmp_path, capsys):
        out = tmp_path / "art"
        code = main(["pipeline", "--out-dir", str(out)]
                    + data_args(small_dataset_dir) + FAST
                    + ["--set", "recommend.n=5"])
        assert code == 0
        assert "recommendations" in capsys.readouterr().out
        with open(out / "recommendations.csv") as fh:
            assert fh.readline().startswith("user_id,rank")


class TestEvaluate:

    def test_reports_written(self, small_dataset_dir, tmp_path, capsys):
        jout = tmp_path / "report.json"
        cout = tmp_path / "report.csv"
        code = main(["evaluate", "--json", str(jout), "--csv", str(cout),
                     "--set", "model=original",
                     "--set", "recommend.base=popular",
                     "--set", "eval.folds=2", "--set", "eval.n_values=5"]
                    + data_args(small_dataset_dir))
        assert code == 0
        assert "model=original" in capsys.readouterr().out
        with open(jout) as fh:
            report = json.load(fh)
        assert list(report["cutoffs"]) == ["5"]
        lines = cout.read_text().splitlines()
        assert lines[0].startswith("model,fold,n,")
        assert len(lines) == 3  # 2 folds x 1 cutoff


class TestExitCodes:

    def test_usage_errors(self, capsys):
        assert main([]) == 2
        assert main(["no-such-command"]) == 2
        assert main(["--help"]) == 0
        capsys.readouterr()

    def test_config_errors(self, capsys):
        assert main(["ingest", "--set", "bogus.key=1"]) == 2
        assert main(["ingest", "--set", "seed"]) == 2
        assert main(["ingest", "--set", "recommend.base=svd"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_ingest_errors(self, tmp_path, capsys):
        missing = tmp_path / "nowhere"
        assert main(["ingest"] + data_args(missing)) == 3

        bad = tmp_path / "bad.csv"
        bad.write_text("u1,i1\n")
        assert main(["ingest", "--set", "dataset.format=table"]
                    + data_args(bad)) == 3
        assert "ingest error" in capsys.readouterr().err

    def test_count_mismatch_is_ingest_error(self, small_dataset_dir, capsys):
        code = main(["ingest", "--set", "dataset.expected_users=9"]
                    + data_args(small_dataset_dir))
        assert code == 3
        assert "expected 9" in capsys.readouterr().err

    def test_stage_failure_exit_code(self, tmp_path, capsys):
        # one user cannot support a co-interaction projection downstream
        p = tmp_path / "tiny.csv"
        p.write_text("u1,i1,5\nu1,i2,4\n")
        code = main(["pipeline", "--out-dir", str(tmp_path / "out"),
                     "--set", "dataset.format=table"]
                    + data_args(p) + FAST)
        assert code == 4
        assert capsys.readouterr().err.strip()
