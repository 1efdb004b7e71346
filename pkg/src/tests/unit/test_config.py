"""Unit tests for settings, pipeline config loading, logging and helpers."""
import json
import logging
from pathlib import Path

import numpy as np
import pytest
import yaml

from src.utils import logger as logger_module
from src.utils.config import PipelineConfig, Settings, load_pipeline_config
from src.utils.helpers import StageTimer, chunk_list, make_rng, safe_divide
from src.utils.logger import CustomJsonFormatter, get_logger, setup_logging
from src.utils.validators import ConfigError

SHIPPED_CONFIG = Path(__file__).resolve().parents[3] / "config" / "config.yaml"


def _write_config(directory: Path, **pipeline) -> Path:
    path = directory / "config.yaml"
    path.write_text(yaml.safe_dump({"pipeline": pipeline}), encoding="utf-8")
    return path


@pytest.fixture
def model_files(tmp_path: Path) -> dict:
    """Placeholder model files next to a config."""
    names = dict(
        vehicle_head_path="vehicle.blpw",
        plate_head_path="plate.blpw",
        ocr_net_path="ocr.blpw",
        class_map_path="classes.txt",
    )
    for name in names.values():
        (tmp_path / name).write_bytes(b"")
    return names


@pytest.mark.unit
class TestSettings:
    """Test environment settings."""

    def test_env_override(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test variables are read case-insensitively and normalized."""
        monkeypatch.setenv("log_level", "debug")
        monkeypatch.setenv("SEED", "7")
        settings = Settings(_env_file=None)
        assert settings.LOG_LEVEL == "DEBUG"
        assert settings.SEED == 7
        assert not settings.DETERMINISTIC


@pytest.mark.unit
class TestLoadPipelineConfig:
    """Test YAML pipeline configuration."""

    def test_shipped_config_parses(self) -> None:
        """Test the repository config is valid without its model files."""
        config = load_pipeline_config(SHIPPED_CONFIG, check_files=False)
        assert config.ocr_input_size == 64
        assert config.ocr_conv_channels == (16, 32, 64, 128, 256)
        assert config.class_map_path == SHIPPED_CONFIG.parent / "class_map.txt"
        assert config.max_retries == 3

    def test_relative_paths_resolved(self, tmp_path: Path, model_files: dict) -> None:
        """Test paths resolve against the config's directory."""
        config = load_pipeline_config(_write_config(tmp_path, **model_files, ocr_conv_channels="8, 16"))
        assert config.vehicle_head_path == tmp_path / "vehicle.blpw"
        assert config.word_map_path is None
        assert config.ocr_conv_channels == (8, 16)

    def test_top_level_section(self, tmp_path: Path, model_files: dict) -> None:
        """Test a file without the pipeline key is read as the section."""
        path = tmp_path / "flat.yaml"
        path.write_text(yaml.safe_dump(model_files), encoding="utf-8")
        assert load_pipeline_config(path).provider == "intensity"

    def test_missing_and_malformed(self, tmp_path: Path) -> None:
        """Test unreadable files are configuration errors."""
        with pytest.raises(ConfigError, match="does not exist"):
            load_pipeline_config(tmp_path / "absent.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("pipeline: [unclosed", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid YAML"):
            load_pipeline_config(bad)

    def test_invalid_values(self, tmp_path: Path, model_files: dict) -> None:
        """Test out-of-range settings are reported."""
        with pytest.raises(ConfigError, match="Invalid pipeline config"):
            load_pipeline_config(_write_config(tmp_path, **model_files, vehicle_threshold=1.5))
        with pytest.raises(ConfigError, match="Invalid pipeline config"):
            load_pipeline_config(_write_config(tmp_path, **model_files, provider="resnet"))

    def test_missing_model_file(self, tmp_path: Path, model_files: dict) -> None:
        """Test referenced files must exist."""
        (tmp_path / "ocr.blpw").unlink()
        with pytest.raises(ConfigError, match="ocr_net_path"):
            load_pipeline_config(_write_config(tmp_path, **model_files))

    def test_file_provider_needs_directory(self, tmp_path: Path, model_files: dict) -> None:
        """Test the file provider requires an existing feature directory."""
        with pytest.raises(ConfigError, match="feature_dir"):
            load_pipeline_config(_write_config(tmp_path, **model_files, provider="file"))
        (tmp_path / "features").mkdir()
        config = load_pipeline_config(_write_config(tmp_path, **model_files, provider="file", feature_dir="features"))
        assert config.feature_dir == tmp_path / "features"

    def test_defaults(self) -> None:
        """Test the model defaults."""
        config = PipelineConfig(
            vehicle_head_path="v", plate_head_path="p", ocr_net_path="o", class_map_path="c"
        )
        assert config.min_chars == 4
        assert config.fista_lambda == pytest.approx(2e-3)
        assert config.pipelined and not config.deterministic


@pytest.mark.unit
class TestLogging:
    """Test logger setup."""

    def test_named_loggers(self) -> None:
        """Test module loggers hang under the package logger."""
        assert get_logger("src.core.ocr").name == "blpnet.src.core.ocr"

    def test_setup_writes_files(self, tmp_path: Path, mocker) -> None:
        """Test console and file handlers are installed."""
        mocker.patch.object(logger_module.settings, "LOG_DIR", str(tmp_path / "logs"))
        root = setup_logging("warning")
        try:
            assert root.level == logging.WARNING
            assert len(root.handlers) == 3
            get_logger("test").error("disk full", extra={"frame_id": 3, "stage": "plate"})
            for handler in root.handlers:
                handler.flush()
            record = json.loads((tmp_path / "logs" / "error.log").read_text(encoding="utf-8").splitlines()[-1])
            assert record["message"] == "disk full"
            assert record["frame_id"] == 3 and record["stage"] == "plate"
            assert record["level"] == "ERROR"
        finally:
            for handler in root.handlers:
                handler.close()
            root.handlers.clear()

    def test_json_formatter_fields(self) -> None:
        """Test the formatter adds level and logger names."""
        record = logging.LogRecord("blpnet.x", logging.INFO, __file__, 1, "hello", None, None)
        payload = json.loads(CustomJsonFormatter("%(message)s").format(record))
        assert payload["level"] == "INFO"
        assert payload["logger"] == "blpnet.x"
        assert "frame_id" not in payload


@pytest.mark.unit
class TestHelpers:
    """Test small utilities."""

    def test_make_rng(self) -> None:
        """Test explicit seeds are reproducible."""
        assert make_rng(3).random() == np.random.default_rng(3).random()

    def test_chunk_list(self) -> None:
        """Test the tail chunk may be short."""
        assert chunk_list([1, 2, 3, 4, 5], 2) == [[1, 2], [3, 4], [5]]
        assert chunk_list([], 3) == []

    def test_safe_divide(self) -> None:
        """Test zero and NaN denominators give the default."""
        assert safe_divide(6, 3) == 2
        assert safe_divide(1, 0) == 0.0
        assert safe_divide(1, float("nan"), default=-1.0) == -1.0

    def test_stage_timer_accumulates(self) -> None:
        """Test repeated stages share one entry."""
        timer = StageTimer()
        with timer.stage("segment"):
            pass
        first = timer.timings_ms["segment"]
        with timer.stage("segment"):
            pass
        with timer.stage("classify"):
            pass
        assert set(timer.timings_ms) == {"segment", "classify"}
        assert timer.timings_ms["segment"] >= first >= 0.0
