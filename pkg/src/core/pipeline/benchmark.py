"""OCR accuracy and timing per segmentation model and character count."""
import time
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import pandas as pd
from tabulate import tabulate

from src.core.ocr.recognizer import recognize_plate
from src.core.pipeline.fixtures import PlateFixture
from src.core.pipeline.models import ModelBundle
from src.core.segmentation.level_sets import SegmentationModel
from src.utils.logger import get_logger

logger = get_logger(__name__)

RECORD_COLUMNS = ["model", "file", "char_count", "truth", "predicted", "hits", "seconds"]
REPORT_COLUMNS = ["model", "char_count", "plates", "accuracy_pct", "seconds", "reference_accuracy_pct", "reference_seconds"]

# Reference figures (different hardware and data); shown beside
# measured values, never compared against them.
REFERENCE_TABLE: Dict[Tuple[str, int], Tuple[float, float]] = {
    ("CV", 4): (90.0, 0.302),
    ("CV", 5): (83.0, 0.395),
    ("CV", 6): (81.0, 0.432),
    ("CV", 8): (80.0, 0.502),
    ("RSF", 4): (95.0, 0.256),
    ("RSF", 5): (93.0, 0.312),
    ("RSF", 6): (90.0, 0.333),
    ("RSF", 8): (89.0, 0.398),
}
REFERENCE_VEHICLE_VAL_MSE = 0.0152


def position_hits(truth: Sequence[int], predicted: Sequence[int]) -> int:
    """Characters read correctly at their position; missing ones are misses."""
    return sum(1 for t, p in zip(truth, predicted) if t == p)


class BenchmarkReport:
    """Per-plate records and the aggregated model x character-count table."""

    def __init__(self, records: pd.DataFrame):
        self.records = records

    @property
    def empty(self) -> bool:
        return self.records.empty

    def table(self) -> pd.DataFrame:
        if self.records.empty:
            return pd.DataFrame(columns=REPORT_COLUMNS)
        grouped = self.records.groupby(["model", "char_count"], sort=True)
        table = grouped.agg(
            plates=("file", "count"),
            hits=("hits", "sum"),
            chars=("char_count", "sum"),
            seconds=("seconds", "mean"),
        ).reset_index()
        table["accuracy_pct"] = 100.0 * table["hits"] / table["chars"]
        reference = [REFERENCE_TABLE.get((m, int(c)), (float("nan"), float("nan"))) for m, c in zip(table["model"], table["char_count"])]
        table["reference_accuracy_pct"] = [r[0] for r in reference]
        table["reference_seconds"] = [r[1] for r in reference]
        return table[REPORT_COLUMNS]

    def render(self) -> str:
        table = self.table()
        if table.empty:
            return "No fixtures benchmarked."
        rows = [
            [
                row.model,
                row.char_count,
                row.plates,
                f"{row.accuracy_pct:.1f}",
                f"{row.seconds:.3f}",
                f"{row.reference_accuracy_pct:.0f}",
                f"{row.reference_seconds:.3f}",
            ]
            for row in table.itertuples(index=False)
        ]
        headers = ["Segmentation model", "Characters", "Plates", "Accuracy (%)", "Time (s)", "Ref. accuracy (%)", "Ref. time (s)"]
        body = tabulate(rows, headers=headers, tablefmt="grid")
        return (
            f"{body}\nReference columns and the vehicle validation MSE of "
            f"{REFERENCE_VEHICLE_VAL_MSE} are reference figures for context only."
        )

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.table().to_csv(path, index=False)
        return path


def benchmark(
    models: ModelBundle,
    fixtures: List[PlateFixture],
    segmentation_models: Sequence[SegmentationModel] = (SegmentationModel.CV, SegmentationModel.RSF),
) -> BenchmarkReport:
    """Read every fixture plate once per segmentation model.

    Args:
        models: Model bundle (only the OCR parts are used)
        fixtures: Plates with known classes
        segmentation_models: Models to force, one report row group each

    Returns:
        BenchmarkReport (empty for an empty fixture set)
    """
    rows: List[dict] = []
    for model in segmentation_models:
        segment = models.recognizer_config.segment.model_copy(update={"force_model": model})
        config = models.recognizer_config.model_copy(update={"segment": segment})
        for fixture in fixtures:
            start = time.perf_counter()
            reading = recognize_plate(fixture.image, models.ocr_net, models.classes, models.table, config)
            seconds = time.perf_counter() - start
            predicted = [r.class_index for r in reading.recognitions]
            rows.append(
                {
                    "model": model.value,
                    "file": fixture.name,
                    "char_count": fixture.char_count,
                    "truth": " ".join(str(c) for c in fixture.classes),
                    "predicted": " ".join(str(c) for c in predicted),
                    "hits": position_hits(fixture.classes, predicted),
                    "seconds": seconds,
                }
            )
        logger.info(f"Benchmarked {len(fixtures)} plates with {model.value}")
    return BenchmarkReport(pd.DataFrame(rows, columns=RECORD_COLUMNS))

