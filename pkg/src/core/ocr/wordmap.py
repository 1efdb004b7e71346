"""Word mapping: replace recognized key-character groups with predefined words."""
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from src.utils.logger import get_logger
from src.utils.validators import ConfigError, DuplicateKeyError, WordMapParseError

logger = get_logger(__name__)

Key = Tuple[str, ...]


def parse_key(text: str) -> Key:
    """Split a rule key into labels.

    Keys with spaces list one label per token (for multi-character labels);
    otherwise every character is a label.
    """
    text = text.strip()
    return tuple(text.split()) if " " in text else tuple(text)


class WordMapTable:
    """Immutable key -> word rules with the plate formatting conventions."""

    def __init__(
        self,
        rules: Optional[Dict[Key, str]] = None,
        separator: str = " ",
        digit_separator: str = "-",
        digit_lead: int = 2,
        group_min_digits: int = 4,
    ):
        """Initialize table.

        Args:
            rules: Mapping from label sequences to replacement words
            separator: Joins words, passthrough labels and the digit group
            digit_separator: Inserted after the leading digits
            digit_lead: Number of leading digits before ``digit_separator``
            group_min_digits: Digit runs shorter than this are not split
        """
        self._rules: Dict[Key, str] = dict(rules or {})
        self.separator = separator
        self.digit_separator = digit_separator
        self.digit_lead = digit_lead
        self.group_min_digits = group_min_digits
        self.max_key_length = max((len(k) for k in self._rules), default=0)

    def __len__(self) -> int:
        return len(self._rules)

    def __contains__(self, key: Key) -> bool:
        return key in self._rules

    def word(self, key: Key) -> Optional[str]:
        return self._rules.get(key)

    def keys(self) -> List[Key]:
        return list(self._rules)


def load_table(path: Union[str, Path], **conventions: object) -> WordMapTable:
    """Read a tab-separated word map.

    Each non-blank line not starting with ``#`` holds ``key<TAB>word``.

    Args:
        path: UTF-8 table file
        **conventions: Formatting options forwarded to :class:`WordMapTable`

    Returns:
        WordMapTable (empty for an empty file)

    Raises:
        WordMapParseError: On a malformed line (the message names the line)
        DuplicateKeyError: When a key appears twice
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read word map '{path}': {e}") from e
    except UnicodeDecodeError as e:
        raise WordMapParseError(f"'{path}' is not UTF-8: {e}", 0) from e

    rules: Dict[Key, str] = {}
    first_seen: Dict[Key, int] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != 2:
            raise WordMapParseError(f"expected 'key<TAB>word', got {line!r}", line_number)
        key, word = parse_key(parts[0]), parts[1].strip()
        if not key or not word:
            raise WordMapParseError(f"empty key or word in {line!r}", line_number)
        if key in rules:
            raise DuplicateKeyError(
                f"key '{parts[0].strip()}' already defined on line {first_seen[key]}", line_number
            )
        rules[key] = word
        first_seen[key] = line_number

    logger.debug(f"Loaded {len(rules)} word-map rules from {path}")
    return WordMapTable(rules, **conventions)  # type: ignore[arg-type]


def _format_digits(digits: str, table: WordMapTable) -> str:
    if len(digits) >= table.group_min_digits and table.digit_lead < len(digits):
        return digits[: table.digit_lead] + table.digit_separator + digits[table.digit_lead:]
    return digits


def _split_rows(labels: Sequence[str], rows: Sequence[int]) -> Tuple[List[str], List[str]]:
    """Key part and number part of a plate.

    Two-line plates use the line index; one-line plates take the trailing
    run of digit labels as the number.
    """
    if any(r > 0 for r in rows):
        top = [label for label, r in zip(labels, rows) if r == 0]
        bottom = [label for label, r in zip(labels, rows) if r > 0]
        return top, bottom
    cut = len(labels)
    while cut > 0 and labels[cut - 1].isdigit():
        cut -= 1
    return list(labels[:cut]), list(labels[cut:])


def map_labels(labels: Sequence[str], rows: Sequence[int], table: WordMapTable) -> str:
    """Map an ordered label sequence to the plate string.

    Greedy longest-prefix replacement runs over the key part. When no rule
    fires the raw concatenation is returned unchanged; otherwise words and
    unmatched labels are joined by the separator, followed by the number part
    in the grouped digit format.
    """
    labels = [str(label) for label in labels]
    rows = list(rows) if rows else [0] * len(labels)
    raw = "".join(labels)
    if not labels or len(table) == 0:
        return raw

    top, bottom = _split_rows(labels, rows)
    tokens: List[str] = []
    matched = False
    i = 0
    while i < len(top):
        for length in range(min(table.max_key_length, len(top) - i), 0, -1):
            word = table.word(tuple(top[i:i + length]))
            if word is not None:
                tokens.append(word)
                i += length
                matched = True
                break
        else:
            tokens.append(top[i])
            i += 1

    if not matched:
        return raw
    number = "".join(bottom)
    if number:
        tokens.append(_format_digits(number, table) if number.isdigit() else number)
    return table.separator.join(tokens)


def map_plate(recognitions: Sequence[object], table: WordMapTable) -> str:
    """Map recognitions (anything with ``label`` and ``row``) to the plate string."""
    labels = [getattr(r, "label") for r in recognitions]
    rows = [int(getattr(r, "row", 0)) for r in recognitions]
    return map_labels(labels, rows, table)
