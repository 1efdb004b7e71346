"""Integration tests for the plate fixture set and the OCR benchmark."""
import importlib
from pathlib import Path

import pandas as pd
import pytest

from src.core.pipeline.benchmark import REPORT_COLUMNS, BenchmarkReport, benchmark, position_hits
from src.core.pipeline.fixtures import PLATE_INDEX, load_plate_fixtures, write_plate_fixtures
from src.core.pipeline.models import ModelBundle
from src.core.segmentation.level_sets import SegmentationModel
from src.utils.validators import DataError


@pytest.fixture
def plate_dir(tmp_path: Path) -> Path:
    write_plate_fixtures(tmp_path / "plates", counts=(4, 5), per_count=2, seed=0)
    return tmp_path / "plates"


@pytest.mark.integration
class TestPlateFixtures:
    """Test writing and reading plate sets."""

    def test_round_trip(self, plate_dir: Path) -> None:
        """Test fixtures come back with their class lists."""
        fixtures = load_plate_fixtures(plate_dir)
        assert [f.char_count for f in fixtures] == [4, 4, 5, 5]
        assert fixtures[2].classes[:4] == fixtures[0].classes
        assert fixtures[0].name == "plate_4_00.pgm"

    def test_invalid_sets(self, tmp_path: Path) -> None:
        """Test missing indexes, bad columns and impossible counts."""
        with pytest.raises(DataError, match="No fixture index"):
            load_plate_fixtures(tmp_path)
        (tmp_path / PLATE_INDEX).write_text("name,count\nx.pgm,4\n", encoding="utf-8")
        with pytest.raises(DataError, match="lacks columns"):
            load_plate_fixtures(tmp_path)
        with pytest.raises(DataError, match="characters"):
            write_plate_fixtures(tmp_path / "big", counts=(99,))


@pytest.mark.integration
class TestBenchmark:
    """Test the per-model accuracy table."""

    def test_position_hits(self) -> None:
        """Test missing characters count as misses."""
        assert position_hits([1, 2, 3, 4], [1, 9, 3]) == 2
        assert position_hits([1, 2], []) == 0

    def test_report_matches_recount(self, plate_dir: Path, demo_models: ModelBundle) -> None:
        """Test the table agrees with an independent recount of the records."""
        report = benchmark(demo_models, load_plate_fixtures(plate_dir))
        records = report.records
        assert len(records) == 8
        assert set(records["model"]) == {"CV", "RSF"}

        for row in records.itertuples(index=False):
            truth = [int(c) for c in row.truth.split()]
            predicted = [int(c) for c in str(row.predicted).split()] if isinstance(row.predicted, str) else []
            assert row.hits == sum(t == p for t, p in zip(truth, predicted))

        table = report.table()
        assert list(table.columns) == REPORT_COLUMNS
        assert len(table) == 4
        for row in table.itertuples(index=False):
            group = records[(records["model"] == row.model) & (records["char_count"] == row.char_count)]
            expected = 100.0 * group["hits"].sum() / (len(group) * row.char_count)
            assert row.accuracy_pct == pytest.approx(expected)
            assert row.plates == 2
        cv4 = table[(table["model"] == "CV") & (table["char_count"] == 4)].iloc[0]
        assert cv4.reference_accuracy_pct == 90.0

    def test_models_forced(self, plate_dir: Path, demo_models: ModelBundle, mocker) -> None:
        """Test each pass forces its segmentation model."""
        # The package re-exports benchmark(), which shadows the submodule for
        # mock's getattr-based target lookup on Python 3.10.
        reader = mocker.patch.object(
            importlib.import_module("src.core.pipeline.benchmark"), "recognize_plate"
        )
        reader.return_value.recognitions = []
        benchmark(demo_models, load_plate_fixtures(plate_dir), (SegmentationModel.RSF,))
        forced = {call.args[4].segment.force_model for call in reader.call_args_list}
        assert forced == {SegmentationModel.RSF}
        assert reader.call_count == 4

    def test_render_and_export(self, plate_dir: Path, demo_models: ModelBundle, tmp_path: Path) -> None:
        """Test the grid rendering and the CSV export."""
        report = benchmark(demo_models, load_plate_fixtures(plate_dir), (SegmentationModel.CV,))
        text = report.render()
        assert "Segmentation model" in text and "context only" in text
        path = report.to_csv(tmp_path / "out" / "bench.csv")
        assert list(pd.read_csv(path).columns) == REPORT_COLUMNS

    def test_empty_fixture_set(self, demo_models: ModelBundle) -> None:
        """Test an empty set yields an empty report."""
        report = benchmark(demo_models, [])
        assert report.empty
        assert report.table().empty
        assert report.render() == "No fixtures benchmarked."
        assert isinstance(report, BenchmarkReport)
