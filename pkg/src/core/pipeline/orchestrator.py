"""Frame-by-frame cascade: vehicle, plate, then the plate reader."""
import json
import queue
import re
import threading
import time
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, TextIO, Tuple, Union

import numpy as np
from tabulate import tabulate

from src.core.detection.heads import BBox, Detection, DetectorStage, crop, detect
from src.core.imaging.image import GrayImage, decode_image, split_netpbm_stream
from src.core.ocr.recognizer import PlateReading, recognize_plate
from src.core.pipeline.models import ModelBundle
from src.utils.helpers import StageTimer, safe_divide
from src.utils.logger import get_logger
from src.utils.validators import BLPnetError, DataError, FrameDecodeError

logger = get_logger(__name__)

FRAME_SUFFIXES = (".pgm", ".ppm", ".pnm", ".png")
STAGES = ("decode", "vehicle", "plate", "ocr", "total")

_DONE = object()


class Frame:
    """Encoded frame bytes tagged with their sequence id."""

    def __init__(self, frame_id: int, data: bytes, source: Optional[Path] = None):
        self.frame_id = frame_id
        self.data = data
        self.source = source

    def decode(self) -> GrayImage:
        return decode_image(self.data, self.source)


class FrameResult:
    """Everything the cascade produced for one frame.

    ``plate_bbox`` is expressed in frame coordinates; ``plate.bbox`` keeps
    the head's output relative to the vehicle crop.
    """

    def __init__(self, frame_id: int):
        self.frame_id = frame_id
        self.vehicle: Optional[Detection] = None
        self.plate: Optional[Detection] = None
        self.plate_bbox: Optional[BBox] = None
        self.reading: Optional[PlateReading] = None
        self.timings_ms: Dict[str, float] = {}
        self.error: Optional[str] = None

    def to_dict(self, deterministic: bool = False) -> dict:
        """JSON-lines record; timings are zeroed in deterministic mode."""
        reading = self.reading
        return {
            "frame": self.frame_id,
            "vehicle_bbox": self.vehicle.bbox.to_list() if self.vehicle else None,
            "plate_bbox": self.plate_bbox.to_list() if self.plate_bbox else None,
            "chars": [r.to_dict() for r in reading.recognitions] if reading else [],
            "plate_string": reading.plate_string if reading else "",
            "timings_ms": {
                stage: 0.0 if deterministic else round(self.timings_ms.get(stage, 0.0), 3) for stage in STAGES
            },
            "error": self.error,
        }

    def to_json(self, deterministic: bool = False) -> str:
        return json.dumps(self.to_dict(deterministic), sort_keys=True, ensure_ascii=False)

    def __repr__(self) -> str:
        text = self.reading.plate_string if self.reading else None
        return f"FrameResult({self.frame_id}, vehicle={self.vehicle is not None}, plate={self.plate is not None}, text={text!r})"


class TimingStats:
    """Per-stage latency summary and end-to-end throughput of a run."""

    def __init__(self, frames: int, elapsed_s: float, stages: Dict[str, Dict[str, float]]):
        self.frames = frames
        self.elapsed_s = elapsed_s
        self.stages = stages

    @property
    def fps_defined(self) -> bool:
        return self.frames > 0 and self.elapsed_s > 0

    @property
    def fps(self) -> Optional[float]:
        return self.frames / self.elapsed_s if self.fps_defined else None

    @classmethod
    def from_results(cls, results: List[FrameResult], elapsed_s: float) -> "TimingStats":
        stages = {}
        for stage in STAGES:
            values = np.array([r.timings_ms.get(stage, 0.0) for r in results], dtype=np.float64)
            stages[stage] = {
                "mean_ms": float(values.mean()) if values.size else 0.0,
                "p95_ms": float(np.percentile(values, 95)) if values.size else 0.0,
            }
        return cls(len(results), elapsed_s, stages)

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "elapsed_s": self.elapsed_s,
            "fps": self.fps,
            "fps_defined": self.fps_defined,
            "stages": self.stages,
        }

    def render(self) -> str:
        rows = [[stage, f"{v['mean_ms']:.2f}", f"{v['p95_ms']:.2f}"] for stage, v in self.stages.items()]
        fps = f"{self.fps:.2f}" if self.fps_defined else "undefined"
        table = tabulate(rows, headers=["Stage", "Mean (ms)", "P95 (ms)"], tablefmt="grid")
        return f"{table}\nFrames: {self.frames}  Elapsed: {self.elapsed_s:.3f} s  FPS: {fps}"


# ---------------------------------------------------------------------------
# Sources


def _frame_number(path: Path) -> Optional[int]:
    match = re.search(r"(\d+)$", path.stem)
    return int(match.group(1)) if match else None


def iter_frames(source: Union[str, Path]) -> Iterator[Frame]:
    """Frames of a directory of numbered images or of a raw concatenated-frame file.

    Directory entries are ordered by the trailing number of their file stem
    (name as tie-break). Frame ids are those numbers when every file is
    numbered, else the position in that order. Stream frames are numbered
    from 0.

    Raises:
        DataError: If the source does not exist or a stream header is malformed
    """
    source = Path(source)
    if not source.exists():
        raise DataError(f"Frame source '{source}' does not exist")

    if source.is_file():
        try:
            chunks = split_netpbm_stream(source.read_bytes())
        except FrameDecodeError as e:
            raise DataError(f"Cannot split frame stream '{source}': {e}") from e
        for index, chunk in enumerate(chunks):
            yield Frame(index, chunk, source)
        return

    files = [p for p in source.iterdir() if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES]
    numbers = {p: _frame_number(p) for p in files}
    files.sort(key=lambda p: (numbers[p] is None, numbers[p] or 0, p.name))
    numbered = all(n is not None for n in numbers.values())
    for index, path in enumerate(files):
        try:
            data = path.read_bytes()
        except OSError as e:
            logger.warning(f"Cannot read frame '{path}': {e}")
            data = b""
        yield Frame(numbers[path] if numbered else index, data, path)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Stages


def _frame_bbox(plate: BBox, vehicle_bounds: Tuple[int, int, int, int], shape: Tuple[int, int]) -> BBox:
    """Map a box relative to the vehicle crop into frame coordinates."""
    y0, x0, y1, x1 = vehicle_bounds
    height, width = shape
    return BBox(
        min((x0 + plate.x_min * (x1 - x0)) / width, 1.0),
        min((y0 + plate.y_min * (y1 - y0)) / height, 1.0),
        min((x0 + plate.x_max * (x1 - x0)) / width, 1.0),
        min((y0 + plate.y_max * (y1 - y0)) / height, 1.0),
    )


def _record_error(result: FrameResult, stage: str, error: BLPnetError) -> None:
    result.error = f"{type(error).__name__}: {error}"
    logger.warning(f"Frame {result.frame_id} failed at {stage}: {error}", extra={"frame_id": result.frame_id, "stage": stage})


def detect_stage(frame: Union[Frame, GrayImage], models: ModelBundle, frame_id: int = 0) -> Tuple[FrameResult, Optional[GrayImage]]:
    """Decode and run both detectors; the plate head only ever sees the vehicle crop.

    Returns:
        The partial result and the plate crop (None when the cascade stopped)
    """
    if isinstance(frame, Frame):
        frame_id = frame.frame_id
    result = FrameResult(frame_id)
    timer = StageTimer()
    stage = "decode"
    plate_crop = None
    with timer.stage("total"):
        try:
            with timer.stage("decode"):
                image = frame.decode() if isinstance(frame, Frame) else frame

            stage = "vehicle"
            with timer.stage("vehicle"):
                result.vehicle = detect(
                    image, models.vehicle_provider, models.vehicle_head, models.vehicle_threshold, DetectorStage.VEHICLE
                )
            if result.vehicle is not None:
                stage = "plate"
                with timer.stage("plate"):
                    vehicle_crop = crop(image, result.vehicle.bbox)
                    plate = detect(
                        vehicle_crop, models.plate_provider, models.plate_head, models.plate_threshold, DetectorStage.PLATE
                    )
                    if plate is not None:
                        plate_crop = crop(vehicle_crop, plate.bbox)
                        result.plate = plate
                        result.plate_bbox = _frame_bbox(
                            plate.bbox, result.vehicle.bbox.pixel_bounds(image.height, image.width), image.shape
                        )
        except BLPnetError as e:
            _record_error(result, stage, e)
            plate_crop = None
    result.timings_ms.update(timer.timings_ms)
    return result, plate_crop


def recognize_stage(result: FrameResult, plate_crop: Optional[GrayImage], models: ModelBundle) -> FrameResult:
    """Read the plate crop, if the detectors produced one."""
    if plate_crop is None:
        return result
    timer = StageTimer()
    with timer.stage("total"), timer.stage("ocr"):
        try:
            result.reading = recognize_plate(plate_crop, models.ocr_net, models.classes, models.table, models.recognizer_config)
        except BLPnetError as e:
            _record_error(result, "ocr", e)
    result.timings_ms["ocr"] = timer.timings_ms["ocr"]
    result.timings_ms["total"] = result.timings_ms.get("total", 0.0) + timer.timings_ms["total"]
    return result


def _finish(result: FrameResult) -> FrameResult:
    # total is the wall time spent inside both stages, so it bounds the sum of the stage spans
    result.timings_ms.setdefault("total", 0.0)
    return result


def process_frame(frame: Union[Frame, GrayImage], models: ModelBundle, frame_id: int = 0) -> FrameResult:
    """Run the whole cascade on one frame.

    A stage that finds nothing skips the rest. Decode and model failures are
    recorded on the result rather than raised.

    Args:
        frame: Encoded frame or an already decoded image
        models: Loaded model bundle
        frame_id: Id for a decoded image (encoded frames carry their own)

    Returns:
        FrameResult
    """
    result, plate_crop = detect_stage(frame, models, frame_id)
    return _finish(recognize_stage(result, plate_crop, models))


# ---------------------------------------------------------------------------
# Streams


class StreamRun:
    """Iterates the FrameResults of a source; ``stats`` is set once exhausted.

    In pipelined mode a detector thread decodes and detects frames ahead of
    the reader, handing plate crops over a bounded queue; results come out
    in frame order and equal those of the sequential mode.
    """

    def __init__(
        self,
        source: Union[str, Path],
        models: ModelBundle,
        pipelined: bool = True,
        queue_depth: int = 4,
    ):
        self.source = Path(source)
        self.models = models
        self.pipelined = pipelined
        self.queue_depth = max(1, queue_depth)
        self.results: List[FrameResult] = []
        self.stats: Optional[TimingStats] = None
        if not self.source.exists():
            raise DataError(f"Frame source '{self.source}' does not exist")

    def _sequential(self) -> Iterator[FrameResult]:
        for frame in iter_frames(self.source):
            yield process_frame(frame, self.models)

    def _pipelined(self) -> Iterator[FrameResult]:
        handoff: "queue.Queue" = queue.Queue(maxsize=self.queue_depth)
        stop = threading.Event()

        def offer(item: object) -> bool:
            while not stop.is_set():
                try:
                    handoff.put(item, timeout=0.1)
                    return True
                except queue.Full:
                    continue
            return False

        def run_detector() -> None:
            try:
                for frame in iter_frames(self.source):
                    if not offer(detect_stage(frame, self.models)):
                        return
                offer(_DONE)
            except Exception as e:  # surfaced in the reader
                offer(e)

        worker = threading.Thread(target=run_detector, name="CascadeDetector", daemon=True)
        worker.start()
        try:
            while True:
                item = handoff.get()
                if item is _DONE:
                    return
                if isinstance(item, Exception):
                    raise item
                result, plate_crop = item
                yield _finish(recognize_stage(result, plate_crop, self.models))
        finally:
            stop.set()
            worker.join(timeout=1.0)

    def __iter__(self) -> Iterator[FrameResult]:
        mode = "pipelined" if self.pipelined else "sequential"
        logger.info(f"Stream started: {self.source} ({mode}, queue depth {self.queue_depth})")
        start = time.perf_counter()
        frames = self._pipelined() if self.pipelined else self._sequential()
        for result in frames:
            self.results.append(result)
            yield result
        self.stats = TimingStats.from_results(self.results, time.perf_counter() - start)
        fps = f"{self.stats.fps:.2f}" if self.stats.fps_defined else "undefined"
        plates = sum(1 for r in self.results if r.plate is not None)
        logger.info(f"Stream finished: {self.stats.frames} frames, {plates} plates, fps {fps}")


def run_stream(
    source: Union[str, Path],
    models: ModelBundle,
    pipelined: bool = True,
    queue_depth: int = 4,
) -> StreamRun:
    """Process a frame source in order.

    Raises:
        DataError: If the source path does not exist
    """
    return StreamRun(source, models, pipelined, queue_depth)


def write_jsonl(results: Iterable[FrameResult], out: TextIO, deterministic: bool = False) -> int:
    """Write one JSON object per result; returns the number of lines."""
    count = 0
    for result in results:
        out.write(result.to_json(deterministic) + "\n")
        count += 1
    return count


def detection_rate(results: List[FrameResult]) -> float:
    """Share of frames with a plate detection."""
    return safe_divide(sum(1 for r in results if r.plate is not None), len(results))
