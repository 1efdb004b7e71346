"""Glyph corpora, dataset splits, label encoding and the prefetching batch loader."""
import queue
import threading
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.imaging.image import read_image, resize
from src.core.imaging.synthetic import render_glyph
from src.core.training.augment import AugmentConfig, augment_batch
from src.utils.helpers import make_rng
from src.utils.logger import get_logger
from src.utils.validators import ConfigError, DataError, ValidationError, validate_ratios

logger = get_logger(__name__)

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm", ".png")


class LabelEncoder:
    """Bijection between label strings and class indices (sorted label order)."""

    def __init__(self, labels: Sequence[str]):
        self.classes: List[str] = sorted({str(label) for label in labels})
        self._index: Dict[str, int] = {label: i for i, label in enumerate(self.classes)}

    def __len__(self) -> int:
        return len(self.classes)

    def encode(self, labels: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self._index[str(label)] for label in labels], dtype=np.int64)
        except KeyError as e:
            raise DataError(f"Label {e} was not seen when the encoder was built") from e

    def decode(self, indices: Sequence[int]) -> List[str]:
        return [self.classes[int(i)] for i in indices]

    def save(self, path: Union[str, Path]) -> Path:
        """Write one label per line; line number is the class index."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.classes) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LabelEncoder":
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise ConfigError(f"Cannot read label file '{path}': {e}") from e
        encoder = cls([line for line in lines if line.strip()])
        if encoder.classes != [line for line in lines if line.strip()]:
            raise ConfigError(f"Label file '{path}' is not in sorted, unique order")
        return encoder


class GlyphDataset:
    """Images ``[n, h, w, 1]`` in [0, 1] with integer class labels."""

    def __init__(self, images: np.ndarray, labels: np.ndarray, label_names: Optional[List[str]] = None):
        images = np.asarray(images, dtype=np.float32)
        labels = np.asarray(labels, dtype=np.int64)
        if images.ndim != 4 or images.shape[-1] != 1:
            raise ValidationError(f"Dataset images must be [n, h, w, 1], got {images.shape}")
        if len(images) != len(labels):
            raise ValidationError(f"{len(images)} images but {len(labels)} labels")
        self.images = images
        self.labels = labels
        self.label_names = label_names

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return tuple(self.images.shape[1:])

    @property
    def num_classes(self) -> int:
        if self.label_names is not None:
            return len(self.label_names)
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, indices: np.ndarray) -> "GlyphDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return GlyphDataset(self.images[indices], self.labels[indices], self.label_names)


class DatasetSplit:
    """Disjoint train / validation / test index sets plus the label encoder."""

    def __init__(
        self,
        train: np.ndarray,
        validation: np.ndarray,
        test: np.ndarray,
        encoder: Optional[LabelEncoder] = None,
    ):
        self.train = train
        self.validation = validation
        self.test = test
        self.encoder = encoder

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)

    def parts(self) -> List[np.ndarray]:
        return [self.train, self.validation, self.test]


def _partition_sizes(total: int, ratios: Sequence[float]) -> List[int]:
    """Largest-remainder rounding of ``total * ratios``."""
    exact = [total * r for r in ratios]
    sizes = [int(np.floor(e + 1e-9)) for e in exact]
    order = sorted(range(len(ratios)), key=lambda i: exact[i] - sizes[i], reverse=True)
    for i in order[: total - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split(
    corpus: Union[int, Sequence[object]],
    ratios: Sequence[float] = (0.8, 0.2),
    seed: int = 42,
    labels: Optional[Sequence[str]] = None,
) -> DatasetSplit:
    """Shuffle with a seed, then partition into up to three parts.

    Args:
        corpus: Item count or the items themselves
        ratios: One to three fractions summing to 1 (train, validation, test)
        seed: Shuffle seed
        labels: Optional labels to build the encoder from

    Returns:
        DatasetSplit; every part size is within 1 of its exact share

    Raises:
        DataError: If the corpus is empty
        ValidationError: If the ratios are invalid
    """
    total = corpus if isinstance(corpus, int) else len(corpus)
    if total <= 0:
        raise DataError("Cannot split an empty corpus")
    if not 1 <= len(ratios) <= 3:
        raise ValidationError(f"Expected 1-3 split ratios, got {len(ratios)}")
    validate_ratios(ratios)

    order = make_rng(seed).permutation(total)
    sizes = _partition_sizes(total, ratios)
    bounds = np.cumsum([0] + sizes)
    parts = [order[bounds[i]:bounds[i + 1]] for i in range(len(sizes))]
    while len(parts) < 3:
        parts.append(np.array([], dtype=np.int64))
    encoder = LabelEncoder(labels) if labels is not None else None
    logger.debug(f"Split {total} items into {sizes}")
    return DatasetSplit(parts[0], parts[1], parts[2], encoder)


def synthetic_glyph_corpus(
    num_classes: int,
    per_class: int,
    size: int = 64,
    seed: int = 0,
    class_offset: int = 0,
) -> GlyphDataset:
    """Jittered procedural glyphs, ``per_class`` samples of each class.

    Args:
        num_classes: Number of glyph classes
        per_class: Samples per class
        size: Square crop size
        seed: Jitter seed
        class_offset: First glyph class to render (labels still start at 0)

    Returns:
        GlyphDataset ordered class by class
    """
    rng = make_rng(seed)
    images = np.empty((num_classes * per_class, size, size, 1), dtype=np.float32)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    for n, label in enumerate(labels):
        images[n, :, :, 0] = render_glyph(int(label) + class_offset, size, rng)
    return GlyphDataset(images, labels, [str(i + class_offset) for i in range(num_classes)])


def load_pgm_corpus(directory: Union[str, Path], size: int = 64) -> Tuple[GlyphDataset, LabelEncoder]:
    """Load ``<directory>/<label>/*.pgm`` (PPM/PNG too), resizing to ``size``.

    Raises:
        DataError: If the directory is missing or holds no images
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"Corpus directory '{directory}' does not exist")

    files: List[Tuple[str, Path]] = []
    for label_dir in sorted(p for p in directory.iterdir() if p.is_dir()):
        files += [(label_dir.name, f) for f in sorted(label_dir.iterdir()) if f.suffix.lower() in IMAGE_SUFFIXES]
    if not files:
        raise DataError(f"No labelled images under '{directory}'")

    encoder = LabelEncoder([label for label, _ in files])
    images = np.empty((len(files), size, size, 1), dtype=np.float32)
    for n, (_, path) in enumerate(files):
        images[n, :, :, 0] = resize(read_image(path).pixels, (size, size))
    labels = encoder.encode([label for label, _ in files])
    logger.info(f"Loaded {len(files)} images in {len(encoder)} classes from {directory}")
    return GlyphDataset(images, labels, encoder.classes), encoder


_DONE = object()


class PrefetchLoader:
    """Produces shuffled, augmented mini-batches on a worker thread.

    Batches flow through a bounded queue so at most ``depth`` of them wait
    ahead of the consumer. All randomness comes from one generator owned by
    the worker, so the batch stream is the same as a sequential run.
    """

    def __init__(
        self,
        dataset: GlyphDataset,
        batch_size: int,
        rng: np.random.Generator,
        augment_config: Optional[AugmentConfig] = None,
        shuffle: bool = True,
        depth: int = 4,
    ):
        if batch_size < 1 or depth < 1:
            raise ValidationError(f"batch_size ({batch_size}) and depth ({depth}) must be >= 1")
        self.dataset = dataset
        self.batch_size = batch_size
        self.rng = rng
        self.augment_config = augment_config
        self.shuffle = shuffle
        self.depth = depth

    def __len__(self) -> int:
        return -(-len(self.dataset) // self.batch_size)

    def _batches(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        order = self.rng.permutation(len(self.dataset)) if self.shuffle else np.arange(len(self.dataset))
        for start in range(0, len(order), self.batch_size):
            index = order[start:start + self.batch_size]
            images = self.dataset.images[index]
            if self.augment_config is not None:
                images = augment_batch(images, self.augment_config, self.rng)
            yield images, self.dataset.labels[index]

    def __iter__(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        buffer: "queue.Queue" = queue.Queue(maxsize=self.depth)
        stop = threading.Event()

        def offer(item: object) -> bool:
            while not stop.is_set():
                try:
                    buffer.put(item, timeout=0.1)
                    return True
                except queue.Full:
                    continue
            return False

        def produce() -> None:
            try:
                for batch in self._batches():
                    if not offer(batch):
                        return
                offer(_DONE)
            except Exception as e:  # surfaced in the consumer
                offer(e)

        worker = threading.Thread(target=produce, name="PrefetchLoader", daemon=True)
        worker.start()
        try:
            while True:
                item = buffer.get()
                if item is _DONE:
                    return
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            stop.set()
            worker.join(timeout=1.0)
