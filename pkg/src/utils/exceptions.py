"""Exception hierarchy shared across the recognition pipeline."""


class BLPnetError(Exception):
    """Base class for all pipeline errors."""

    pass


class ValidationError(BLPnetError):
    """Custom exception for validation errors."""

    pass


class ShapeMismatchError(ValidationError):
    """Tensor shapes or spatial extents are incompatible."""

    pass


class NonFiniteError(ValidationError):
    """A tensor contains NaN or infinite values."""

    def __init__(self, message: str, layer_index: int = -1):
        super().__init__(message)
        self.layer_index = layer_index


class ConfigError(BLPnetError):
    """Configuration file is missing, malformed or inconsistent."""

    pass


class DataError(BLPnetError):
    """Input data (frames, corpora, fixtures) cannot be used."""

    pass


class FrameDecodeError(DataError):
    """Image bytes could not be decoded."""

    pass


class DegenerateCropError(ValidationError):
    """A crop rectangle has zero area after rounding."""

    pass


class StaleActivationError(BLPnetError):
    """Activation cache does not belong to the network being differentiated."""

    pass


class DivergenceError(BLPnetError):
    """An iterative method produced non-finite or exploding values."""

    def __init__(self, message: str, checkpoint=None, history=None):  # type: ignore
        super().__init__(message)
        self.checkpoint = checkpoint
        self.history = history


class WeightFormatError(BLPnetError):
    """Weight container could not be parsed."""

    pass


class BadMagicError(WeightFormatError):
    """Container does not start with the expected magic bytes."""

    pass


class VersionMismatchError(WeightFormatError):
    """Container version is not supported."""

    pass


class TruncatedFileError(WeightFormatError):
    """Container ended before all declared data was read."""

    pass


class DimensionOverflowError(WeightFormatError):
    """Declared tensor dimensions exceed what the container can hold."""

    pass


class WordMapParseError(BLPnetError):
    """Word-map table line could not be parsed."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class DuplicateKeyError(WordMapParseError):
    """Word-map table declares the same key twice."""

    pass
