"""End-to-end cascade over frame streams, with benchmarking."""
from src.core.pipeline.benchmark import BenchmarkReport, benchmark
from src.core.pipeline.models import ModelBundle
from src.core.pipeline.orchestrator import (
    FrameResult,
    StreamRun,
    TimingStats,
    iter_frames,
    process_frame,
    run_stream,
)

__all__ = [
    "BenchmarkReport",
    "FrameResult",
    "ModelBundle",
    "StreamRun",
    "TimingStats",
    "benchmark",
    "iter_frames",
    "process_frame",
    "run_stream",
]
