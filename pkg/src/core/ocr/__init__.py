"""Character recognition and word mapping."""
from src.core.ocr.classes import CharClassSet
from src.core.ocr.recognizer import PlateReading, Recognition, RecognizerConfig, recognize_char, recognize_plate
from src.core.ocr.wordmap import WordMapTable, load_table, map_plate

__all__ = [
    "CharClassSet",
    "PlateReading",
    "Recognition",
    "RecognizerConfig",
    "WordMapTable",
    "load_table",
    "map_plate",
    "recognize_char",
    "recognize_plate",
]
