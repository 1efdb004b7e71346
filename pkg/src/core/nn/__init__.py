"""Framework-free neural network kernels, graphs, optimizers and weight files."""
from src.core.nn.architectures import build_detector_head, build_ocr_spec, param_count, param_report
from src.core.nn.network import LayerKind, LayerSpec, Network, NetworkSpec, ParameterStore, backward, forward
from src.core.nn.optimizers import Optimizer, OptimizerKind, TrainingConfig
from src.core.nn.weights_io import load_weights, save_weights

__all__ = [
    "LayerKind",
    "LayerSpec",
    "Network",
    "NetworkSpec",
    "Optimizer",
    "OptimizerKind",
    "ParameterStore",
    "TrainingConfig",
    "backward",
    "build_detector_head",
    "build_ocr_spec",
    "forward",
    "load_weights",
    "param_count",
    "param_report",
    "save_weights",
]
