"""Network builders for the OCR engine and detector heads, plus parameter accounting."""
from typing import Dict, List, Optional, Sequence, Tuple

from src.core.nn.network import LayerKind, LayerSpec, NetworkSpec
from src.core.nn.tensor_ops import conv_param_count, dense_param_count
from src.utils.logger import get_logger
from src.utils.validators import ValidationError

logger = get_logger(__name__)

NUM_CLASSES = 60
OCR_CONV_CHANNELS: Tuple[int, ...] = (16, 32, 64, 128, 256)
PROSE_CONV_CHANNELS: Tuple[int, ...] = (16, 32, 64)
HEAD_UNITS: Tuple[int, ...] = (256, 128, 64, 32)
VEHICLE_FEATURE_DIM = 1056
PLATE_FEATURE_DIM = 2048

# Printed per-layer counts of the reference OCR table; only the last dense row
# disagrees with (in + 1) * out.
OCR_PRINTED_COUNTS: Dict[str, int] = {
    "conv2d_1": 80,
    "conv2d_2": 2080,
    "conv2d_3": 8256,
    "conv2d_4": 32896,
    "conv2d_5": 131328,
    "dense_1": 65792,
    "dense_2": 131584,
    "dense_3": 25650,
}
HEAD_PRINTED_COUNTS: Tuple[int, ...] = (270592, 32896, 8256, 2080)
HEAD_PRINTED_OUTPUTS = {"class": 66, "bbox": 132}
HEAD_REPORTED_TOTAL = "627k"
OCR_REPORTED_TOTAL = "397K"


class LayerCount:
    """Parameter count of one layer."""

    def __init__(self, name: str, kind: str, output_shape: Tuple[int, ...], count: int):
        self.name = name
        self.kind = kind
        self.output_shape = output_shape
        self.count = count

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "output_shape": list(self.output_shape),
            "count": self.count,
        }


class ParamCount:
    """Per-layer counts and their total."""

    def __init__(self, rows: List[LayerCount]):
        self.rows = rows
        self.total = sum(row.count for row in rows)

    def by_name(self) -> Dict[str, int]:
        return {row.name: row.count for row in self.rows}

    def to_dict(self) -> Dict:
        return {"rows": [row.to_dict() for row in self.rows], "total": self.total}


def param_count(spec: NetworkSpec) -> ParamCount:
    """Count learnable parameters layer by layer.

    Dense layers hold ``(in + 1) * out`` and convolutions
    ``(kh * kw * in_ch + 1) * out_ch``; every other layer holds none.

    Args:
        spec: A shape-propagated network spec

    Returns:
        ParamCount with one row per layer
    """
    rows = []
    for index, layer in enumerate(spec.layers):
        in_shape = spec.shapes[index]
        if layer.kind == LayerKind.CONV2D:
            count = conv_param_count(layer.kernel_size, layer.kernel_size, in_shape[-1], layer.units)
        elif layer.kind == LayerKind.DENSE:
            count = dense_param_count(in_shape[0], layer.units)
        else:
            count = 0
        rows.append(LayerCount(layer.name, layer.kind.value, spec.shapes[index + 1], count))
    return ParamCount(rows)


def build_ocr_spec(
    input_size: int = 64,
    num_classes: int = NUM_CLASSES,
    conv_channels: Sequence[int] = OCR_CONV_CHANNELS,
    dropout_rate: float = 0.2,
) -> NetworkSpec:
    """Build the character classifier.

    Each conv block is Conv(2x2) -> ReLU -> MaxPool(2) -> Dropout, followed by
    Flatten -> Dense(256) -> ReLU -> Dense(512) -> ReLU -> Dropout ->
    Dense(num_classes) -> Softmax. With the defaults a 64x64x1 input runs
    through the spatial chain 64, 63, 31, 30, 15, 14, 7, 6, 3, 2, 1.

    Args:
        input_size: Square input side length
        num_classes: Number of output classes
        conv_channels: Output channels of each conv block
        dropout_rate: Dropout rate used after every block

    Returns:
        NetworkSpec of the OCR network

    Raises:
        ShapeMismatchError: If the input is too small for the conv stack
    """
    layers: List[LayerSpec] = []
    for channels in conv_channels:
        layers += [
            LayerSpec.conv(channels),
            LayerSpec.of(LayerKind.RELU),
            LayerSpec.of(LayerKind.MAXPOOL2),
            LayerSpec.dropout(dropout_rate),
        ]
    layers += [
        LayerSpec.of(LayerKind.FLATTEN),
        LayerSpec.dense(256),
        LayerSpec.of(LayerKind.RELU),
        LayerSpec.dense(512),
        LayerSpec.of(LayerKind.RELU),
        LayerSpec.dropout(dropout_rate),
        LayerSpec.dense(num_classes),
        LayerSpec.of(LayerKind.SOFTMAX),
    ]
    return NetworkSpec((input_size, input_size, 1), layers, name="ocr")


def build_prose_ocr_spec(num_classes: int = NUM_CLASSES, dropout_rate: float = 0.2) -> NetworkSpec:
    """16x16 variant: three conv blocks bring 16 -> 15 -> 7 -> 6 -> 3 -> 2 -> 1."""
    return build_ocr_spec(16, num_classes, PROSE_CONV_CHANNELS, dropout_rate)


def _head_branch(output: str, dropout_rate: float) -> List[LayerSpec]:
    layers: List[LayerSpec] = []
    for i, units in enumerate(HEAD_UNITS):
        layers += [
            LayerSpec.dense(units, name=f"{output}_dense_{i + 1}"),
            LayerSpec.of(LayerKind.RELU, f"{output}_relu_{i + 1}"),
        ]
        if i < len(HEAD_UNITS) - 1:
            layers.append(LayerSpec.dropout(dropout_rate, name=f"{output}_dropout_{i + 1}"))
    if output == "class":
        layers += [LayerSpec.dense(2, name="class_out"), LayerSpec.of(LayerKind.SOFTMAX, "class_softmax")]
    else:
        layers.append(LayerSpec.dense(4, name="bbox_out"))
    return layers


def build_detector_head(
    feature_dim: int,
    spatial: Tuple[int, int] = (1, 1),
    dropout_rate: float = 0.2,
) -> Tuple[NetworkSpec, NetworkSpec]:
    """Build the dual-branch detector head over a ``spatial x feature_dim`` feature map.

    Both branches start with global average pooling, then
    Dense(256) -> Dense(128) -> Dense(64) -> Dense(32) with ReLU and dropout
    between them. The class branch ends in Dense(2) + softmax, the bbox branch
    in a linear Dense(4).

    Args:
        feature_dim: Channels of the backbone feature map
        spatial: Height and width of the feature map
        dropout_rate: Dropout rate between dense layers

    Returns:
        Tuple ``(class_spec, bbox_spec)``

    Raises:
        ValidationError: If feature_dim < 1
    """
    if feature_dim < 1:
        raise ValidationError(f"feature_dim must be >= 1, got {feature_dim}")
    input_shape = (spatial[0], spatial[1], feature_dim)
    branches = []
    for output in ("class", "bbox"):
        layers = [LayerSpec.of(LayerKind.GLOBAL_AVG_POOL, f"{output}_gap")] + _head_branch(output, dropout_rate)
        branches.append(NetworkSpec(input_shape, layers, name=f"head_{output}"))
    return branches[0], branches[1]


class ReportRow:
    """One row of the parameter reconciliation report."""

    def __init__(
        self,
        table: str,
        layer: str,
        output_shape: str,
        computed: int,
        printed: Optional[int],
    ):
        self.table = table
        self.layer = layer
        self.output_shape = output_shape
        self.computed = computed
        self.printed = printed

    @property
    def mismatch(self) -> bool:
        return self.printed is not None and self.printed != self.computed

    def to_dict(self) -> Dict:
        return {
            "table": self.table,
            "layer": self.layer,
            "output_shape": self.output_shape,
            "computed": self.computed,
            "printed": self.printed,
            "mismatch": self.mismatch,
        }


class ParamReport:
    """Reconciliation of computed parameter counts against the reference tables."""

    def __init__(self, rows: List[ReportRow], totals: Dict[str, int]):
        self.rows = rows
        self.totals = totals

    @property
    def mismatches(self) -> List[ReportRow]:
        return [row for row in self.rows if row.mismatch]

    def to_dict(self) -> Dict:
        return {"rows": [row.to_dict() for row in self.rows], "totals": dict(self.totals)}


def _shape_str(shape: Tuple[int, ...]) -> str:
    return "(None, " + ", ".join(str(d) for d in shape) + ")"


def head_report(feature_dim: int = VEHICLE_FEATURE_DIM) -> ParamReport:
    """Per-layer counts of both head branches."""
    class_spec, bbox_spec = build_detector_head(feature_dim)
    rows: List[ReportRow] = []
    for spec in (class_spec, bbox_spec):
        dense_index = 0
        for row in param_count(spec).rows:
            if row.kind != LayerKind.DENSE.value:
                continue
            if row.name.endswith("_out"):
                printed = HEAD_PRINTED_OUTPUTS[row.name.split("_")[0]] if feature_dim == VEHICLE_FEATURE_DIM else None
            else:
                printed = HEAD_PRINTED_COUNTS[dense_index] if feature_dim == VEHICLE_FEATURE_DIM else None
                dense_index += 1
            rows.append(ReportRow("head", row.name, _shape_str(row.output_shape), row.count, printed))
    total = param_count(class_spec).total + param_count(bbox_spec).total
    return ParamReport(rows, {"head_computed": total})


def ocr_report(input_size: int = 64) -> ParamReport:
    """Per-layer counts of the OCR net next to the reference table."""
    spec = build_ocr_spec(input_size)
    rows: List[ReportRow] = []
    for row in param_count(spec).rows:
        if row.kind in (LayerKind.RELU.value, LayerKind.SOFTMAX.value):
            continue
        printed = OCR_PRINTED_COUNTS.get(row.name) if input_size == 64 else None
        if printed is None and row.kind not in (LayerKind.CONV2D.value, LayerKind.DENSE.value):
            printed = 0 if input_size == 64 else None
        rows.append(ReportRow("ocr", row.name, _shape_str(row.output_shape), row.count, printed))
    computed = sum(r.computed for r in rows)
    totals = {"ocr_computed": computed}
    if input_size == 64:
        totals["ocr_printed"] = sum(OCR_PRINTED_COUNTS.values())
    return ParamReport(rows, totals)


def param_report(spec_name: str = "all") -> ParamReport:
    """Build the reconciliation report for ``head``, ``ocr`` or ``all``.

    Raises:
        ValidationError: If spec_name is unknown
    """
    if spec_name not in ("head", "ocr", "all"):
        raise ValidationError(f"Unknown spec '{spec_name}', expected head, ocr or all")
    rows: List[ReportRow] = []
    totals: Dict[str, int] = {}
    if spec_name in ("head", "all"):
        report = head_report()
        rows += report.rows
        totals.update(report.totals)
    if spec_name in ("ocr", "all"):
        report = ocr_report()
        rows += report.rows
        totals.update(report.totals)
    result = ParamReport(rows, totals)
    for row in result.mismatches:
        logger.warning(
            f"Layer {row.layer}: computed {row.computed} parameters, reference table prints {row.printed}"
        )
    return result
