"""
Tests for the command line
"""

import pandas as pd
import pytest

from bgn.bench import BENCH_COLUMNS
from bgn.checkpoint import load_checkpoint
from bgn.gmn import GMN_COLUMNS
from bgn.graph import NODES_FILE, load_graph, load_split
from bgn_cli import main
from commands.base import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, CommandResult, default_registry

MODEL_FLAGS = ["--heads", "2", "--d-head", "4"]


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "data"
    code = main(
        [
            "synth", "--out", str(out), "--nodes", "80", "--features", "20", "--classes", "2",
            "--per-class", "5", "--n-val", "10", "--n-test", "20", "--seed", "1",
        ]
    )  # fmt: skip
    assert code == EXIT_OK
    return out


class TestRegistry:
    """Test command registration and results"""

    def test_all_commands_registered(self):
        """Every subcommand is reachable"""
        registry = default_registry()
        for name in ("train", "bench", "gmn", "convert", "synth"):
            assert registry.get_command(name) is not None
        assert registry.get_command("deploy") is None

    def test_result_to_dict(self):
        """Empty fields are left out"""
        assert CommandResult(success=True).to_dict() == {"success": True, "exit_code": EXIT_OK}
        failed = CommandResult(success=False, error="boom", exit_code=EXIT_FAILURE).to_dict()
        assert failed["error"] == "boom"

    def test_unknown_flag(self):
        """Unknown flags are usage errors"""
        with pytest.raises(SystemExit) as info:
            main(["train", "--epochz", "3"])
        assert info.value.code == EXIT_USAGE

    def test_missing_subcommand(self):
        """A subcommand is required"""
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == EXIT_USAGE


class TestSynthAndTrain:
    """Test fixture writing and training"""

    def test_synth_writes_graph_and_split(self, synth_dir):
        """The fixture reloads with its split"""
        graph = load_graph(synth_dir, normalize=False)
        assert graph.n_nodes == 80
        split = load_split(synth_dir, graph)
        assert (split.train_ids.size, split.val_ids.size, split.test_ids.size) == (10, 10, 20)

    def test_train_writes_outputs(self, synth_dir, tmp_path, capsys):
        """Checkpoint, history and resolved config land in --out"""
        out = tmp_path / "runs"
        code = main(["train", "--data", str(synth_dir), "--out", str(out), "--epochs", "3", "--level", "wec", *MODEL_FLAGS])
        assert code == EXIT_OK
        model = load_checkpoint(out / "model-wec.bgnm")
        assert model.config.level.value == "wec"
        assert len(pd.read_csv(out / "history-wec.csv")) == 3
        assert "level=wec" in (out / "train-wec.env").read_text(encoding="utf-8")
        assert "test accuracy (wec)" in capsys.readouterr().out

    def test_config_file_supplies_flags(self, synth_dir, tmp_path):
        """Values from --config apply when the flag is absent"""
        config = tmp_path / "run.env"
        config.write_text(f"data={synth_dir}\nepochs=2\nheads=1\nd_head=4\nlevel=we\n", encoding="utf-8")
        out = tmp_path / "runs"
        assert main(["train", "--config", str(config), "--out", str(out)]) == EXIT_OK
        assert len(pd.read_csv(out / "history-we.csv")) == 2

    def test_repeated_runs(self, synth_dir, tmp_path):
        """--runs writes one checkpoint per seed"""
        out = tmp_path / "runs"
        assert main(["train", "--data", str(synth_dir), "--out", str(out), "--epochs", "1", "--runs", "2", *MODEL_FLAGS]) == 0
        assert (out / "model-none-seed0.bgnm").exists()
        assert (out / "model-none-seed1.bgnm").exists()

    def test_missing_data(self, tmp_path, capsys):
        """Training without --data fails with status 1"""
        assert main(["train", "--out", str(tmp_path)]) == EXIT_FAILURE
        assert "--data" in capsys.readouterr().err

    def test_reinforce_at_level_none(self, synth_dir, tmp_path):
        """Invalid flag combinations fail with status 1"""
        code = main(["train", "--data", str(synth_dir), "--out", str(tmp_path), "--estimator", "reinforce"])
        assert code == EXIT_FAILURE


class TestBench:
    """Test the benchmark command"""

    def test_trained_and_random_levels(self, synth_dir, tmp_path):
        """A trained level and a random-init level give two rows"""
        out = tmp_path / "runs"
        assert main(["train", "--data", str(synth_dir), "--out", str(out), "--epochs", "2", "--level", "wec", *MODEL_FLAGS]) == 0
        code = main(
            [
                "bench", "--data", str(synth_dir), "--out", str(out), "--levels", "none,wec",
                "--trials", "1", "--warmup", "0", "--random-init", *MODEL_FLAGS,
            ]
        )  # fmt: skip
        assert code == EXIT_OK
        frame = pd.read_csv(out / "bench.csv")
        assert list(frame.columns) == BENCH_COLUMNS
        assert frame["level"].tolist() == ["none", "wec"]
        assert bool(frame["low_confidence"].all())

    def test_missing_checkpoint(self, synth_dir, tmp_path):
        """Without checkpoints or --random-init the command fails"""
        code = main(["bench", "--data", str(synth_dir), "--out", str(tmp_path), "--levels", "we"])
        assert code == EXIT_FAILURE

    def test_explicit_checkpoints(self, synth_dir, tmp_path):
        """--checkpoints benchmarks the named files"""
        out = tmp_path / "runs"
        assert main(["train", "--data", str(synth_dir), "--out", str(out), "--epochs", "1", *MODEL_FLAGS]) == 0
        code = main(
            ["bench", "--data", str(synth_dir), "--out", str(out), "--trials", "1", "--checkpoints", str(out / "model-none.bgnm")]
        )
        assert code == EXIT_OK
        assert pd.read_csv(out / "bench.csv")["level"].tolist() == ["none"]


class TestGmn:
    """Test the graph matching command"""

    def test_small_study(self, tmp_path):
        """A tiny study writes one row per mode"""
        code = main(
            [
                "gmn", "--out", str(tmp_path), "--nodes", "8", "--p", "0.3", "--pairs", "4", "--triplets", "4",
                "--steps", "1", "--batch", "2", "--node-dim", "4", "--graph-dim", "8",
            ]
        )  # fmt: skip
        assert code == EXIT_OK
        frame = pd.read_csv(tmp_path / "gmn.csv")
        assert list(frame.columns) == GMN_COLUMNS
        assert frame["mode"].tolist() == ["binary", "reference"]

    def test_kp_not_below_kn(self, tmp_path):
        """kp >= kn fails with status 1"""
        assert main(["gmn", "--out", str(tmp_path), "--kp", "2", "--kn", "2"]) == EXIT_FAILURE

    def test_infeasible_substitution(self, tmp_path):
        """Two nodes cannot take two substitutions"""
        assert main(["gmn", "--out", str(tmp_path), "--nodes", "2", "--p", "0.9", "--steps", "1"]) == EXIT_FAILURE


class TestConvert:
    """Test LINQS conversion"""

    def test_convert(self, tmp_path):
        """The dump becomes nodes.tsv and edges.tsv"""
        content = tmp_path / "toy.content"
        cites = tmp_path / "toy.cites"
        content.write_text("p1 1 0 A\np2 0 1 B\n", encoding="utf-8")
        cites.write_text("p1 p2\n", encoding="utf-8")
        out = tmp_path / "converted"
        assert main(["convert", "--content", str(content), "--cites", str(cites), "--out", str(out)]) == EXIT_OK
        assert (out / NODES_FILE).exists()
        assert load_graph(out).n_edges == 1

    def test_missing_content(self, tmp_path):
        """A missing input file fails with status 1"""
        code = main(["convert", "--content", str(tmp_path / "nope"), "--cites", str(tmp_path / "nope"), "--out", str(tmp_path)])
        assert code == EXIT_FAILURE
