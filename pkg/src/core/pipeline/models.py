"""Loading every model the cascade needs at startup."""
from typing import Optional, Tuple

from src.core.deblur.fista import FistaConfig
from src.core.detection.backbone import FeatureProvider, build_provider, describe
from src.core.detection.heads import DetectorHead, handcrafted_params
from src.core.nn.architectures import PROSE_CONV_CHANNELS, build_ocr_spec
from src.core.nn.network import Network, init_params
from src.core.nn.weights_io import load_weights
from src.core.ocr.classes import CharClassSet
from src.core.ocr.recognizer import RecognizerConfig
from src.core.ocr.wordmap import WordMapTable, load_table
from src.core.segmentation.segmenter import SegmentConfig
from src.utils.config import PipelineConfig
from src.utils.helpers import make_rng
from src.utils.logger import get_logger
from src.utils.validators import BLPnetError, ConfigError

logger = get_logger(__name__)


class ModelBundle:
    """Providers, heads, OCR network and tables of one cascade."""

    def __init__(
        self,
        vehicle_provider: FeatureProvider,
        vehicle_head: DetectorHead,
        plate_provider: FeatureProvider,
        plate_head: DetectorHead,
        ocr_net: Network,
        classes: CharClassSet,
        table: WordMapTable,
        recognizer_config: RecognizerConfig,
        vehicle_threshold: float = 0.5,
        plate_threshold: float = 0.5,
    ):
        self.vehicle_provider = vehicle_provider
        self.vehicle_head = vehicle_head
        self.plate_provider = plate_provider
        self.plate_head = plate_head
        self.ocr_net = ocr_net
        self.classes = classes
        self.table = table
        self.recognizer_config = recognizer_config
        self.vehicle_threshold = vehicle_threshold
        self.plate_threshold = plate_threshold

    @classmethod
    def from_config(cls, config: PipelineConfig) -> "ModelBundle":
        """Load weights, class map and word map named by the config.

        Raises:
            ConfigError: If any referenced file is missing or does not match
                the configured architecture
        """
        vehicle_provider, plate_provider = build_providers(config)
        try:
            vehicle_head = DetectorHead.load(
                config.vehicle_head_path, vehicle_provider.feature_dim, vehicle_provider.spatial, config.head_dropout
            )
            plate_head = DetectorHead.load(
                config.plate_head_path, plate_provider.feature_dim, plate_provider.spatial, config.head_dropout
            )
            classes = CharClassSet.load(config.class_map_path)
            spec = build_ocr_spec(config.ocr_input_size, len(classes), config.ocr_conv_channels)
            ocr_net = Network(spec, load_weights(config.ocr_net_path))
            table = load_table(config.word_map_path) if config.word_map_path else WordMapTable()
        except ConfigError:
            raise
        except (BLPnetError, OSError) as e:
            raise ConfigError(f"Cannot load models: {e}") from e

        logger.info(
            f"Loaded cascade: vehicle {describe(vehicle_provider)}, plate {describe(plate_provider)}, "
            f"OCR {ocr_net}, {len(table)} word-map rules"
        )
        return cls(
            vehicle_provider,
            vehicle_head,
            plate_provider,
            plate_head,
            ocr_net,
            classes,
            table,
            recognizer_config(config),
            config.vehicle_threshold,
            config.plate_threshold,
        )

    @classmethod
    def demo(cls, config: Optional[PipelineConfig] = None, seed: int = 0, ocr_net: Optional[Network] = None) -> "ModelBundle":
        """Deterministic bundle needing no files.

        Intensity-band providers with hand-set heads locate the dark vehicle
        block and the light plate card of synthetic scenes. The OCR network
        is the 16x16 variant, Glorot-initialized from ``seed`` unless given.
        """
        config = config or demo_config()
        vehicle_provider, plate_provider = build_providers(config.model_copy(update={"provider": "intensity"}))
        vehicle_head = DetectorHead(
            vehicle_provider.feature_dim, params=handcrafted_params(vehicle_provider.feature_dim, dropout_rate=config.head_dropout),
            dropout_rate=config.head_dropout,
        )
        plate_head = DetectorHead(
            plate_provider.feature_dim, params=handcrafted_params(plate_provider.feature_dim, dropout_rate=config.head_dropout),
            dropout_rate=config.head_dropout,
        )
        classes = CharClassSet.default()
        if ocr_net is None:
            spec = build_ocr_spec(config.ocr_input_size, len(classes), config.ocr_conv_channels)
            ocr_net = Network(spec, init_params(spec, make_rng(seed)))
        return cls(
            vehicle_provider,
            vehicle_head,
            plate_provider,
            plate_head,
            ocr_net,
            classes,
            WordMapTable(),
            recognizer_config(config),
            config.vehicle_threshold,
            config.plate_threshold,
        )


def demo_config(**overrides: object) -> PipelineConfig:
    """Pipeline settings for the file-free demo bundle."""
    values = dict(
        vehicle_head_path="vehicle_head.blpw",
        plate_head_path="plate_head.blpw",
        ocr_net_path="ocr_net.blpw",
        class_map_path="class_map.txt",
        provider="intensity",
        ocr_input_size=16,
        ocr_conv_channels=PROSE_CONV_CHANNELS,
    )
    values.update(overrides)
    return PipelineConfig(**values)  # type: ignore[arg-type]


def build_providers(config: PipelineConfig) -> Tuple[FeatureProvider, FeatureProvider]:
    """Vehicle-stage and plate-stage feature providers.

    Raises:
        ConfigError: If the provider settings are invalid
    """
    try:
        if config.provider == "intensity":
            return (
                build_provider("intensity", low=config.vehicle_band[0], high=config.vehicle_band[1]),
                build_provider("intensity", low=config.plate_band[0], high=config.plate_band[1]),
            )
        if config.provider == "toy":
            return (
                build_provider("toy", channels=config.backbone_channels, seed=config.seed),
                build_provider("toy", channels=config.backbone_channels, seed=config.seed + 1),
            )
        if config.feature_dir is None:
            raise ConfigError("provider 'file' needs feature_dir")
        return (
            build_provider("file", directory=config.feature_dir / "vehicle", shape=config.vehicle_feature_shape),
            build_provider("file", directory=config.feature_dir / "plate", shape=config.plate_feature_shape),
        )
    except ConfigError:
        raise
    except BLPnetError as e:
        raise ConfigError(f"Invalid feature provider settings: {e}") from e


def recognizer_config(config: PipelineConfig) -> RecognizerConfig:
    """Recognition-loop settings derived from the pipeline config."""
    return RecognizerConfig(
        min_chars=config.min_chars,
        max_retries=config.max_retries,
        sharpness_threshold=config.sharpness_threshold,
        fista=FistaConfig(lam=config.fista_lambda, decay=config.fista_decay, max_iter=config.fista_max_iter),
        segment=SegmentConfig(min_chars=config.min_chars, target_size=config.ocr_input_size),
    )
