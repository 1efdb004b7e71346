"""Character class inventory loaded from a class-map file."""
from pathlib import Path
from typing import Dict, List, Sequence, Union

from src.core.nn.architectures import NUM_CLASSES
from src.utils.logger import get_logger
from src.utils.validators import ConfigError

logger = get_logger(__name__)


class CharClassSet:
    """Ordered, unique class labels; list position is the class index."""

    def __init__(self, labels: Sequence[str], expected: int = NUM_CLASSES):
        """Initialize class set.

        Args:
            labels: Labels in class-index order
            expected: Required number of labels

        Raises:
            ConfigError: If the count is wrong or labels repeat
        """
        labels = [str(label) for label in labels]
        if len(labels) != expected:
            raise ConfigError(f"Class map must hold exactly {expected} labels, got {len(labels)}")
        seen: Dict[str, int] = {}
        for index, label in enumerate(labels):
            if not label:
                raise ConfigError(f"Class map line {index + 1} is empty")
            if label in seen:
                raise ConfigError(f"Class label '{label}' repeats on lines {seen[label] + 1} and {index + 1}")
            seen[label] = index
        self.labels: List[str] = labels
        self._index = seen

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, index: int) -> str:
        return self.labels[index]

    def index_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError as e:
            raise ConfigError(f"Unknown class label '{label}'") from e

    def is_digit(self, index: int) -> bool:
        return self.labels[index].isdigit()

    @classmethod
    def load(cls, path: Union[str, Path], expected: int = NUM_CLASSES) -> "CharClassSet":
        """Read a UTF-8 class map, one label per line.

        Raises:
            ConfigError: If the file is missing or invalid
        """
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise ConfigError(f"Cannot read class map '{path}': {e}") from e
        labels = [line.strip() for line in text.splitlines()]
        while labels and not labels[-1]:
            labels.pop()
        class_set = cls(labels, expected)
        logger.debug(f"Loaded {len(class_set)} classes from {path}")
        return class_set

    @classmethod
    def default(cls) -> "CharClassSet":
        """Stand-in inventory: 50 letter labels followed by the digits 0-9."""
        letters = [f"{a}{b}" if b else a for a in "ABCDEFGHIJKLMNOPQRSTUVWXY" for b in ("", "H")]
        return cls(letters[:50] + [str(d) for d in range(10)])

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.labels) + "\n", encoding="utf-8")
        return path
