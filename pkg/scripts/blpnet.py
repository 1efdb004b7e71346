"""BLPnet command-line interface: stream detection, OCR training, benchmark and parameter report."""
import sys
from pathlib import Path
from typing import NoReturn, Optional

import click
from tabulate import tabulate

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.nn.architectures import build_ocr_spec, param_report
from src.core.nn.optimizers import TrainingConfig
from src.core.nn.weights_io import save_weights
from src.core.ocr.classes import CharClassSet
from src.core.pipeline.benchmark import benchmark as run_benchmark
from src.core.pipeline.fixtures import load_plate_fixtures, write_demo_models, write_frames, write_plate_fixtures
from src.core.pipeline.models import ModelBundle
from src.core.pipeline.orchestrator import run_stream, write_jsonl
from src.core.training.augment import AugmentConfig
from src.core.training.dataset import GlyphDataset, load_pgm_corpus, split
from src.core.training.trainer import evaluate, train
from src.utils.config import PipelineConfig, get_settings, load_pipeline_config
from src.utils.logger import get_logger, setup_logging
from src.utils.validators import BLPnetError, ConfigError, DataError

setup_logging()
logger = get_logger(__name__)
settings = get_settings()

EXIT_CONFIG = 1
EXIT_DATA = 2


def fail(error: BLPnetError) -> NoReturn:
    """Report an error and exit with its code (2 for data errors, else 1)."""
    logger.error(f"{type(error).__name__}: {error}")
    click.echo(f"Error: {error}", err=True)
    sys.exit(EXIT_DATA if isinstance(error, DataError) else EXIT_CONFIG)


def class_set_for(config: PipelineConfig) -> CharClassSet:
    if Path(config.class_map_path).exists():
        return CharClassSet.load(config.class_map_path)
    logger.warning(f"Class map '{config.class_map_path}' not found; using the default inventory")
    return CharClassSet.default()


@click.group()
def cli():
    """BLPnet - cascaded license-plate recognition.

    Detect vehicles and plates in frame sequences, read the characters and
    map them to plate strings.
    """
    pass


@cli.command()
@click.argument("source", type=click.Path(path_type=Path))
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="Pipeline YAML")
@click.option("--deterministic", is_flag=True, default=False, help="Byte-identical output for identical input")
@click.option("--seed", type=int, default=None, help="Override the configured seed")
@click.option("--pipeline/--sequential", "pipelined", default=None, help="Stage-parallel or sequential run")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="JSON-lines output file (stdout if omitted)")
def detect(
    source: Path,
    config_path: Optional[Path],
    deterministic: bool,
    seed: Optional[int],
    pipelined: Optional[bool],
    out: Optional[Path],
):
    """Run the cascade over a frame directory or raw frame file."""
    try:
        config = load_pipeline_config(config_path or settings.CONFIG_PATH)
        updates = {}
        if seed is not None:
            updates["seed"] = seed
        if pipelined is not None:
            updates["pipelined"] = pipelined
        config = config.model_copy(update=updates)
        deterministic = deterministic or config.deterministic or settings.DETERMINISTIC

        models = ModelBundle.from_config(config)
        run = run_stream(source, models, config.pipelined, config.queue_depth)
        if out is not None:
            out.parent.mkdir(parents=True, exist_ok=True)
            with open(out, "w", encoding="utf-8") as fh:
                count = write_jsonl(run, fh, deterministic)
            logger.info(f"Wrote {count} results to {out}")
        else:
            for result in run:
                click.echo(result.to_json(deterministic))
    except BLPnetError as e:
        fail(e)

    click.echo(run.stats.render(), err=True)


@cli.command("train-ocr")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True, help="<label>/<image> corpus")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="Pipeline YAML")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output weight file")
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--no-augment", is_flag=True, default=False)
def train_ocr(
    data_dir: Path,
    config_path: Optional[Path],
    out: Path,
    epochs: int,
    batch_size: int,
    seed: Optional[int],
    no_augment: bool,
):
    """Train the character network on a labelled image corpus.

    Sub-directory names must be labels of the configured class map; the
    network keeps the class map's output order.
    """
    try:
        config = load_pipeline_config(config_path or settings.CONFIG_PATH, check_files=False)
        seed = config.seed if seed is None else seed
        classes = class_set_for(config)
        corpus, encoder = load_pgm_corpus(data_dir, config.ocr_input_size)
        try:
            remap = [classes.index_of(label) for label in encoder.classes]
        except ConfigError as e:
            raise DataError(f"Corpus label outside the class map: {e}") from e
        dataset = GlyphDataset(corpus.images, [remap[i] for i in corpus.labels], list(classes.labels))

        parts = split(len(dataset), (0.8, 0.2), seed)
        train_set, validation_set = dataset.subset(parts.train), dataset.subset(parts.validation)
        spec = build_ocr_spec(config.ocr_input_size, len(classes), config.ocr_conv_channels)
        training = TrainingConfig.plate_stage(
            epochs=epochs, batch_size=batch_size, input_shape=spec.input_shape, seed=seed
        )
        augment = None if no_augment else AugmentConfig.ocr_recipe(seed=seed)
        result = train(
            spec, train_set, validation_set, training, augment, history_path=out.with_suffix(".history.csv")
        )
        save_weights(result.params, out)
        encoder.save(out.with_suffix(".labels.txt"))
    except BLPnetError as e:
        fail(e)

    loss, accuracy = evaluate(spec, result.params, validation_set)
    click.echo(
        tabulate(
            [
                ["Epochs run", result.epochs_run],
                ["Best epoch", result.best_epoch],
                ["Stopped early", result.stopped_early],
                ["Validation loss", f"{loss:.4f}"],
                ["Validation accuracy", f"{accuracy:.2%}"],
                ["Weights", str(out)],
            ],
            tablefmt="grid",
        )
    )


@cli.command()
@click.option("--fixtures", "fixtures_dir", type=click.Path(path_type=Path), required=True, help="Plate fixture set")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="Pipeline YAML")
@click.option("--export", type=click.Path(path_type=Path), default=None, help="Export the table to CSV")
def benchmark(fixtures_dir: Path, config_path: Optional[Path], export: Optional[Path]):
    """OCR accuracy and time per segmentation model and character count."""
    try:
        models = ModelBundle.from_config(load_pipeline_config(config_path or settings.CONFIG_PATH))
        report = run_benchmark(models, load_plate_fixtures(fixtures_dir))
    except BLPnetError as e:
        fail(e)

    click.echo(report.render())
    if export is not None:
        report.to_csv(export)
        click.echo(f"\nResults exported to: {export}")


@cli.command("param-report")
@click.option(
    "--spec", "spec_name", type=click.Choice(["head", "ocr", "all"]), default="all", show_default=True
)
def param_report_cmd(spec_name: str):
    """Per-layer parameter counts next to the reference tables."""
    report = param_report(spec_name)
    rows = [
        [row.table, row.layer, row.output_shape, f"{row.computed:,}",
         "-" if row.printed is None else f"{row.printed:,}", "MISMATCH" if row.mismatch else ""]
        for row in report.rows
    ]
    click.echo(tabulate(rows, headers=["Table", "Layer", "Output shape", "Computed", "Printed", ""], tablefmt="grid"))
    for name, total in report.totals.items():
        click.echo(f"{name}: {total:,}")


@cli.command()
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--frames", type=int, default=200, show_default=True)
@click.option("--per-count", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def fixtures(out_dir: Path, frames: int, per_count: int, seed: int):
    """Write demo models, a frame stream and a benchmark plate set."""
    try:
        config_path = write_demo_models(out_dir / "models", seed)
        write_frames(out_dir / "frames", frames, seed)
        write_plate_fixtures(out_dir / "plates", per_count=per_count, seed=seed)
    except BLPnetError as e:
        fail(e)
    click.echo(f"Config: {config_path}\nFrames: {out_dir / 'frames'}\nPlates: {out_dir / 'plates'}")


if __name__ == "__main__":
    cli()
