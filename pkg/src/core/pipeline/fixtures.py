"""On-disk fixtures: demo model files, benchmark plate sets and frame streams."""
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from src.core.detection.heads import DetectorHead, handcrafted_params
from src.core.imaging.image import GrayImage, encode_pgm, read_image, write_pgm
from src.core.imaging.synthetic import SceneTruth, plate_classes, render_frame, render_plate
from src.core.nn.architectures import PROSE_CONV_CHANNELS, build_ocr_spec
from src.core.nn.network import ParameterStore, check_params, init_params
from src.core.nn.weights_io import save_weights
from src.core.ocr.classes import CharClassSet
from src.utils.helpers import make_rng
from src.utils.logger import get_logger
from src.utils.validators import DataError

logger = get_logger(__name__)

PLATE_INDEX = "plates.csv"
FRAME_INDEX = "frames.csv"
BENCHMARK_COUNTS = (4, 5, 6, 8)

DEMO_WORD_MAP = [
    "# key<TAB>word; keys of several labels are space-separated",
    "D M\tDHAKA METRO",
    "C T\tCHATTOGRAM",
    "K H A\tKHULNA",
]


class PlateFixture:
    """A rendered plate and the classes it shows, in reading order."""

    def __init__(self, image: GrayImage, classes: List[int], name: str = ""):
        self.image = image
        self.classes = classes
        self.name = name

    @property
    def char_count(self) -> int:
        return len(self.classes)


def write_demo_models(
    directory: Union[str, Path],
    seed: int = 0,
    ocr_params: Optional[ParameterStore] = None,
    ocr_input_size: int = 16,
    ocr_conv_channels: Sequence[int] = PROSE_CONV_CHANNELS,
) -> Path:
    """Write weight files, class map, word map and a ``config.yaml`` using them.

    The heads get the hand-set weights that pair with the intensity-band
    providers; the OCR net is Glorot-initialized from ``seed`` unless
    ``ocr_params`` (e.g. from ``train-ocr``) are given.

    Returns:
        Path of the written config.yaml
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    classes = CharClassSet.default()

    for name in ("vehicle_head", "plate_head"):
        DetectorHead(8, params=handcrafted_params(8)).save(directory / f"{name}.blpw")

    spec = build_ocr_spec(ocr_input_size, len(classes), tuple(ocr_conv_channels))
    params = ocr_params if ocr_params is not None else init_params(spec, make_rng(seed))
    check_params(spec, params)
    save_weights(params, directory / "ocr_net.blpw")

    classes.save(directory / "class_map.txt")
    (directory / "word_map.tsv").write_text("\n".join(DEMO_WORD_MAP) + "\n", encoding="utf-8")

    config = {
        "pipeline": {
            "vehicle_head_path": "vehicle_head.blpw",
            "plate_head_path": "plate_head.blpw",
            "ocr_net_path": "ocr_net.blpw",
            "class_map_path": "class_map.txt",
            "word_map_path": "word_map.tsv",
            "provider": "intensity",
            "ocr_input_size": ocr_input_size,
            "ocr_conv_channels": list(ocr_conv_channels),
            "seed": seed,
        }
    }
    path = directory / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    logger.info(f"Wrote demo models to {directory}")
    return path


def write_plate_fixtures(
    directory: Union[str, Path],
    counts: Sequence[int] = BENCHMARK_COUNTS,
    per_count: int = 3,
    seed: int = 0,
    noise: float = 0.01,
) -> pd.DataFrame:
    """Render ``per_count`` plates for each character count.

    A plate of ``n`` characters shows the first ``n`` middle-bar classes, so
    the sets are nested prefixes; copies differ by seeded sensor noise.

    Returns:
        The index written to ``plates.csv`` (file, classes, char_count)
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed)
    available = len(plate_classes())
    rows = []
    for count in counts:
        if not 1 <= count <= available:
            raise DataError(f"Plates hold 1..{available} characters, got {count}")
        classes = plate_classes(count)
        card = render_plate(classes)
        for copy in range(per_count):
            pixels = card.image.pixels + rng.normal(0.0, noise, size=card.image.shape)
            name = f"plate_{count}_{copy:02d}.pgm"
            write_pgm(directory / name, np.clip(pixels, 0.0, 1.0))
            rows.append({"file": name, "classes": " ".join(str(c) for c in classes), "char_count": count})

    index = pd.DataFrame(rows, columns=["file", "classes", "char_count"])
    index.to_csv(directory / PLATE_INDEX, index=False)
    logger.info(f"Wrote {len(index)} plate fixtures to {directory}")
    return index


def load_plate_fixtures(directory: Union[str, Path]) -> List[PlateFixture]:
    """Read a plate fixture set written by :func:`write_plate_fixtures`.

    Raises:
        DataError: If the directory or its index is missing or malformed
    """
    directory = Path(directory)
    index_path = directory / PLATE_INDEX
    if not index_path.exists():
        raise DataError(f"No fixture index '{index_path}'")
    try:
        index = pd.read_csv(index_path, dtype={"file": str, "classes": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"Malformed fixture index '{index_path}': {e}") from e
    missing = {"file", "classes"} - set(index.columns)
    if missing:
        raise DataError(f"Fixture index '{index_path}' lacks columns {sorted(missing)}")

    fixtures = []
    for row in index.itertuples(index=False):
        try:
            classes = [int(c) for c in str(row.classes).split()]
        except ValueError as e:
            raise DataError(f"Bad class list for '{row.file}': {e}") from e
        fixtures.append(PlateFixture(read_image(directory / row.file), classes, row.file))
    return fixtures


def render_stream(
    count: int = 200,
    seed: int = 0,
    plate_rate: float = 0.5,
    char_counts: Sequence[int] = (4, 5),
    size: Tuple[int, int] = (240, 320),
) -> List[Tuple[GrayImage, SceneTruth]]:
    """A mixed sequence of empty roads and vehicles carrying plates."""
    rng = make_rng(seed)
    pool = plate_classes()
    frames = []
    for _ in range(count):
        classes = None
        if rng.random() < plate_rate:
            n = int(rng.choice(list(char_counts)))
            classes = [int(c) for c in rng.choice(pool, size=n, replace=False)]
        frames.append(render_frame(classes, rng, size))
    return frames


def _truth_row(frame_id: int, truth: SceneTruth) -> dict:
    return {
        "frame": frame_id,
        "has_vehicle": truth.has_vehicle,
        "classes": " ".join(str(c) for c in truth.classes),
        "vehicle_bbox": " ".join(f"{v:.6f}" for v in truth.vehicle_bbox) if truth.vehicle_bbox else "",
    }


def write_frames(directory: Union[str, Path], count: int = 200, seed: int = 0, **options: object) -> pd.DataFrame:
    """Write a numbered PGM frame directory plus its ``frames.csv`` truth."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for frame_id, (image, truth) in enumerate(render_stream(count, seed, **options)):  # type: ignore[arg-type]
        write_pgm(directory / f"frame_{frame_id:04d}.pgm", image)
        rows.append(_truth_row(frame_id, truth))
    index = pd.DataFrame(rows, columns=["frame", "has_vehicle", "classes", "vehicle_bbox"])
    index.to_csv(directory / FRAME_INDEX, index=False)
    logger.info(f"Wrote {count} frames to {directory}")
    return index


def write_frame_stream(path: Union[str, Path], count: int = 20, seed: int = 0, **options: object) -> Path:
    """Write frames back to back as one raw P5 stream file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frames = render_stream(count, seed, **options)  # type: ignore[arg-type]
    path.write_bytes(b"".join(encode_pgm(image.pixels) for image, _ in frames))
    return path
