"""Binary tensor container for weights and precomputed features.

Layout (little-endian)::

    "BLPW" | u32 version | u32 layer_count
    per tensor: u16 name_len | name (UTF-8) | u8 rank | u32 dims[rank] | f32 values

Weight files hold two tensors per parametric layer, weights first, then
bias, both named after the layer. Feature files hold one layer of a single
tensor named "features".
"""
import struct
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from src.core.nn.network import ParameterStore
from src.utils.logger import get_logger
from src.utils.validators import (
    BadMagicError,
    DimensionOverflowError,
    TruncatedFileError,
    VersionMismatchError,
    WeightFormatError,
)

logger = get_logger(__name__)

MAGIC = b"BLPW"
VERSION = 1
MAX_RANK = 8
MAX_ELEMENTS = 2 ** 31 - 1
WEIGHT_TENSORS_PER_LAYER = 2
FEATURES_NAME = "features"

Record = Tuple[str, np.ndarray]


def encode_records(records: List[Record], tensors_per_layer: int = WEIGHT_TENSORS_PER_LAYER) -> bytes:
    """Serialize named tensors into the container format.

    Args:
        records: Tensors in file order
        tensors_per_layer: Tensors making up one layer of the header's count

    Raises:
        WeightFormatError: If the tensors do not group into whole layers
        DimensionOverflowError: If a tensor's rank or size cannot be represented
    """
    if len(records) % tensors_per_layer != 0:
        raise WeightFormatError(f"{len(records)} tensors do not form whole layers of {tensors_per_layer}")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", VERSION, len(records) // tensors_per_layer)
    for name, tensor in records:
        name_bytes = name.encode("utf-8")
        if len(name_bytes) > 0xFFFF:
            raise WeightFormatError(f"Tensor name '{name[:32]}...' is too long")
        array = np.ascontiguousarray(tensor, dtype="<f4")
        if array.ndim > MAX_RANK or array.size > MAX_ELEMENTS:
            raise DimensionOverflowError(f"Tensor '{name}' with shape {array.shape} cannot be stored")
        out += struct.pack("<H", len(name_bytes))
        out += name_bytes
        out += struct.pack("<B", array.ndim)
        out += struct.pack(f"<{array.ndim}I", *array.shape)
        out += array.tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise TruncatedFileError(
                f"Container truncated while reading {what} at byte {self.offset} "
                f"(need {size}, have {len(self.data) - self.offset})"
            )
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk


def decode_records(data: bytes, tensors_per_layer: int = WEIGHT_TENSORS_PER_LAYER) -> List[Record]:
    """Parse the container format; the header's count is in layers of ``tensors_per_layer``.

    Raises:
        BadMagicError: If the magic bytes are wrong
        VersionMismatchError: If the version is not supported
        TruncatedFileError: If data ends early
        DimensionOverflowError: If a record declares an impossible shape
    """
    reader = _Reader(data)
    if len(data) < len(MAGIC) and MAGIC.startswith(data):
        raise TruncatedFileError(f"Container truncated inside the magic ({len(data)} bytes)")
    magic = reader.take(len(MAGIC), "magic") if len(data) >= len(MAGIC) else data
    if magic != MAGIC:
        raise BadMagicError(f"Bad magic {magic!r}, expected {MAGIC!r}")
    version, layer_count = struct.unpack("<II", reader.take(8, "header"))
    if version != VERSION:
        raise VersionMismatchError(f"Container version {version} is not supported (expected {VERSION})")

    records: List[Record] = []
    for index in range(layer_count * tensors_per_layer):
        (name_len,) = struct.unpack("<H", reader.take(2, f"record {index} name length"))
        name = reader.take(name_len, f"record {index} name").decode("utf-8")
        (rank,) = struct.unpack("<B", reader.take(1, f"record {index} rank"))
        if rank > MAX_RANK:
            raise DimensionOverflowError(f"Record '{name}' declares rank {rank} (max {MAX_RANK})")
        dims = struct.unpack(f"<{rank}I", reader.take(4 * rank, f"record {index} dims"))
        size = 1
        for d in dims:
            size *= d
        if size > MAX_ELEMENTS or 0 in dims:
            raise DimensionOverflowError(f"Record '{name}' declares invalid dims {dims}")
        values = np.frombuffer(reader.take(4 * size, f"record '{name}' values"), dtype="<f4")
        records.append((name, values.reshape(dims).astype(np.float32)))

    if reader.offset != len(data):
        logger.warning(f"Ignoring {len(data) - reader.offset} trailing bytes after {layer_count} layers")
    return records


def save_weights(params: ParameterStore, path: Union[str, Path]) -> Path:
    """Write a ParameterStore; each layer becomes a weights record and a bias record."""
    path = Path(path)
    records: List[Record] = []
    for name, (weights, bias) in params.items():
        records += [(name, weights), (name, bias)]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_records(records))
    logger.info(f"Saved {len(params)} layers ({params.count()} parameters) to {path}")
    return path


def load_weights(path: Union[str, Path]) -> ParameterStore:
    """Read a ParameterStore written by :func:`save_weights`.

    Raises:
        WeightFormatError: On any format violation, including mismatched weights/bias names
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise WeightFormatError(f"Cannot read weight file '{path}': {e}") from e
    records = decode_records(data)

    tensors = {}
    for i in range(0, len(records), 2):
        (w_name, weights), (b_name, bias) = records[i], records[i + 1]
        if w_name != b_name:
            raise WeightFormatError(f"Records '{w_name}' and '{b_name}' do not form a weights/bias pair")
        if w_name in tensors:
            raise WeightFormatError(f"Layer '{w_name}' appears twice in '{path}'")
        tensors[w_name] = (weights, bias)
    logger.debug(f"Loaded {len(tensors)} layers from {path}")
    return ParameterStore(tensors)


def save_features(features: np.ndarray, path: Union[str, Path]) -> Path:
    """Write a precomputed feature tensor."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_records([(FEATURES_NAME, features)], tensors_per_layer=1))
    return path


def load_features(path: Union[str, Path]) -> np.ndarray:
    """Read a feature tensor written by :func:`save_features`.

    Raises:
        WeightFormatError: If the file does not hold exactly one "features" record
    """
    records = decode_records(Path(path).read_bytes(), tensors_per_layer=1)
    if len(records) != 1 or records[0][0] != FEATURES_NAME:
        raise WeightFormatError(f"'{path}' is not a feature file")
    return records[0][1]
