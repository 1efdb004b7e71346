"""Integration tests for the command-line interface."""
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from scripts.blpnet import cli
from src.core.imaging.image import write_pgm
from src.core.imaging.synthetic import render_glyph
from src.core.nn.architectures import PROSE_CONV_CHANNELS, build_ocr_spec
from src.core.nn.network import check_params
from src.core.nn.weights_io import load_weights


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def workspace(tmp_path: Path, runner: CliRunner) -> Path:
    """Demo models, six frames and a small plate set written by the CLI."""
    result = runner.invoke(cli, ["fixtures", "--out", str(tmp_path / "demo"), "--frames", "6", "--per-count", "1"])
    assert result.exit_code == 0, result.output
    return tmp_path / "demo"


@pytest.mark.integration
class TestCli:
    """Test commands and their exit codes."""

    def test_fixtures_layout(self, workspace: Path) -> None:
        """Test the fixture command writes models, frames and plates."""
        assert (workspace / "models" / "config.yaml").exists()
        assert len(list((workspace / "frames").glob("*.pgm"))) == 6
        assert (workspace / "plates" / "plates.csv").exists()

    def test_detect_deterministic(self, workspace: Path, runner: CliRunner, tmp_path: Path) -> None:
        """Test two deterministic runs write identical JSON lines."""
        outputs = []
        for name in ("a.jsonl", "b.jsonl"):
            out = tmp_path / name
            result = runner.invoke(
                cli,
                [
                    "detect", str(workspace / "frames"),
                    "--config", str(workspace / "models" / "config.yaml"),
                    "--deterministic", "--out", str(out),
                ],
            )
            assert result.exit_code == 0, result.output
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]
        assert len(outputs[0].splitlines()) == 6

    def test_detect_to_stdout(self, workspace: Path, runner: CliRunner) -> None:
        """Test results go to stdout without --out."""
        result = runner.invoke(
            cli,
            ["detect", str(workspace / "frames"), "--config", str(workspace / "models" / "config.yaml"), "--sequential"],
        )
        assert result.exit_code == 0, result.output
        assert result.output.count('"frame":') == 6

    def test_detect_missing_source(self, workspace: Path, runner: CliRunner, tmp_path: Path) -> None:
        """Test a missing frame source exits with the data error code."""
        result = runner.invoke(
            cli, ["detect", str(tmp_path / "absent"), "--config", str(workspace / "models" / "config.yaml")]
        )
        assert result.exit_code == 2
        assert "Error:" in result.output

    def test_detect_missing_config(self, workspace: Path, runner: CliRunner, tmp_path: Path) -> None:
        """Test a missing config exits with the configuration error code."""
        result = runner.invoke(cli, ["detect", str(workspace / "frames"), "--config", str(tmp_path / "none.yaml")])
        assert result.exit_code == 1
        assert "does not exist" in result.output

    def test_detect_missing_weights(self, workspace: Path, runner: CliRunner) -> None:
        """Test a config naming absent weights is a configuration error."""
        (workspace / "models" / "ocr_net.blpw").unlink()
        result = runner.invoke(
            cli, ["detect", str(workspace / "frames"), "--config", str(workspace / "models" / "config.yaml")]
        )
        assert result.exit_code == 1

    def test_benchmark(self, workspace: Path, runner: CliRunner, tmp_path: Path) -> None:
        """Test the benchmark table and CSV export."""
        export = tmp_path / "bench.csv"
        result = runner.invoke(
            cli,
            [
                "benchmark", "--fixtures", str(workspace / "plates"),
                "--config", str(workspace / "models" / "config.yaml"),
                "--export", str(export),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "Segmentation model" in result.output
        assert export.exists()

    def test_benchmark_missing_fixtures(self, workspace: Path, runner: CliRunner, tmp_path: Path) -> None:
        """Test a missing fixture set is a data error."""
        result = runner.invoke(
            cli, ["benchmark", "--fixtures", str(tmp_path), "--config", str(workspace / "models" / "config.yaml")]
        )
        assert result.exit_code == 2

    def test_param_report(self, runner: CliRunner) -> None:
        """Test the parameter report prints both networks."""
        result = runner.invoke(cli, ["param-report"])
        assert result.exit_code == 0, result.output
        assert "Computed" in result.output
        result = runner.invoke(cli, ["param-report", "--spec", "nope"])
        assert result.exit_code == 2

    def test_train_ocr(self, workspace: Path, runner: CliRunner, tmp_path: Path) -> None:
        """Test training on a labelled folder corpus writes usable weights."""
        rng = np.random.default_rng(0)
        for label, class_index in (("A", 0), ("B", 2)):
            for n in range(5):
                write_pgm(tmp_path / "corpus" / label / f"{n}.pgm", render_glyph(class_index, 16, rng))
        out = tmp_path / "trained" / "ocr.blpw"
        result = runner.invoke(
            cli,
            [
                "train-ocr", "--data", str(tmp_path / "corpus"),
                "--config", str(workspace / "models" / "config.yaml"),
                "--out", str(out), "--epochs", "2", "--batch-size", "4", "--no-augment",
            ],
        )
        assert result.exit_code == 0, result.output
        assert "Validation accuracy" in result.output
        check_params(build_ocr_spec(16, 60, PROSE_CONV_CHANNELS), load_weights(out))
        assert out.with_suffix(".history.csv").exists()
        assert out.with_suffix(".labels.txt").read_text(encoding="utf-8").split() == ["A", "B"]

    def test_train_ocr_unknown_label(self, workspace: Path, runner: CliRunner, tmp_path: Path) -> None:
        """Test corpus labels outside the class map are a data error."""
        write_pgm(tmp_path / "corpus" / "ZZ" / "0.pgm", np.zeros((16, 16)))
        result = runner.invoke(
            cli,
            [
                "train-ocr", "--data", str(tmp_path / "corpus"),
                "--config", str(workspace / "models" / "config.yaml"),
                "--out", str(tmp_path / "ocr.blpw"),
            ],
        )
        assert result.exit_code == 2
