"""Integration tests for the per-frame cascade."""
from pathlib import Path

import numpy as np
import pytest
import yaml

from src.core.detection.backbone import ToyBackbone
from src.core.detection.heads import BBox, DetectorHead, crop
from src.core.imaging.image import encode_pgm
from src.core.imaging.synthetic import plate_classes, render_frame
from src.core.pipeline import orchestrator
from src.core.nn.optimizers import OptimizerKind, TrainingConfig
from src.core.pipeline.models import ModelBundle, build_providers
from src.core.pipeline.orchestrator import STAGES, Frame, process_frame
from src.core.training.detector_trainer import combined_loss, train_detector_head
from src.utils.config import load_pipeline_config


@pytest.mark.integration
class TestProcessFrame:
    """Test vehicle, plate and reader stages on rendered scenes."""

    def test_vehicle_with_plate(self, demo_models: ModelBundle) -> None:
        """Test both boxes match the scene and the plate is read."""
        image, truth = render_frame(plate_classes(4), np.random.default_rng(3))
        result = process_frame(image, demo_models, frame_id=5)

        assert result.error is None
        np.testing.assert_allclose(result.vehicle.bbox.as_array(), truth.vehicle_bbox, atol=1e-5)
        np.testing.assert_allclose(result.plate.bbox.as_array(), truth.plate_bbox, atol=1e-5)
        assert result.reading is not None
        assert result.reading.char_count == 4

        record = result.to_dict()
        assert record["frame"] == 5
        assert len(record["chars"]) == 4
        assert set(record["timings_ms"]) == set(STAGES)
        vx0, vy0, vx1, vy1 = record["vehicle_bbox"]
        px0, py0, px1, py1 = record["plate_bbox"]
        assert vx0 <= px0 < px1 <= vx1 and vy0 <= py0 < py1 <= vy1

    def test_plate_head_sees_vehicle_crop_only(self, demo_models: ModelBundle, mocker) -> None:
        """Test the plate stage runs on the vehicle crop, not the frame."""
        spy = mocker.spy(orchestrator, "detect")
        image, truth = render_frame(plate_classes(4), np.random.default_rng(4))
        result = process_frame(image, demo_models)

        assert spy.call_count == 2
        assert spy.call_args_list[0].args[0] is image
        plate_input = spy.call_args_list[1].args[0]
        y0, x0, y1, x1 = result.vehicle.bbox.pixel_bounds(image.height, image.width)
        assert plate_input.shape == (y1 - y0, x1 - x0)
        assert plate_input.shape != image.shape

    def test_empty_road_short_circuits(self, demo_models: ModelBundle, mocker) -> None:
        """Test no vehicle means no plate search and no reading."""
        detect_spy = mocker.spy(orchestrator, "detect")
        reader = mocker.spy(orchestrator, "recognize_plate")
        image, _ = render_frame(None, np.random.default_rng(0))
        result = process_frame(image, demo_models)

        assert detect_spy.call_count == 1
        reader.assert_not_called()
        record = result.to_dict()
        assert record["vehicle_bbox"] is None and record["plate_bbox"] is None
        assert record["chars"] == [] and record["plate_string"] == ""
        assert record["error"] is None

    def test_encoded_frame(self, demo_models: ModelBundle) -> None:
        """Test an encoded frame is decoded and keeps its id."""
        image, _ = render_frame(plate_classes(5), np.random.default_rng(6))
        result = process_frame(Frame(12, encode_pgm(image.pixels)), demo_models)
        assert result.frame_id == 12
        assert result.plate is not None
        assert result.timings_ms["decode"] >= 0.0
        assert result.timings_ms["total"] >= result.timings_ms["ocr"]

    def test_corrupt_frame_recorded(self, demo_models: ModelBundle) -> None:
        """Test undecodable bytes become an error record, not an exception."""
        result = process_frame(Frame(7, b"not an image"), demo_models)
        assert result.frame_id == 7
        assert result.vehicle is None
        assert result.error.startswith("FrameDecodeError")
        assert result.to_dict(deterministic=True)["timings_ms"] == {stage: 0.0 for stage in STAGES}



def _head_config(head: DetectorHead) -> TrainingConfig:
    return TrainingConfig(
        optimizer=OptimizerKind.ADAM, learning_rate=1e-2, batch_size=8, epochs=40, input_shape=head.input_shape, seed=0
    )


@pytest.mark.integration
class TestTrainedToyCascade:
    """Test the cascade with toy-backbone features and heads trained on rendered scenes."""

    def test_config_loaded_cascade(self, model_dir: Path) -> None:
        """Test heads trained on toy features run end to end after a save and a config load."""
        config_path = model_dir / "config.yaml"
        raw = yaml.safe_load(config_path.read_text(encoding="utf-8"))
        raw["pipeline"].update(provider="toy", backbone_channels=8)
        config_path.write_text(yaml.safe_dump(raw, sort_keys=False), encoding="utf-8")
        config = load_pipeline_config(config_path)
        vehicle_provider, plate_provider = build_providers(config)

        rng = np.random.default_rng(11)
        scenes = [render_frame(plate_classes(4) if n % 2 == 0 else None, rng) for n in range(16)]
        presence = np.array([truth.has_vehicle for _, truth in scenes], dtype=np.int64)
        vehicle_features = np.stack([vehicle_provider.extract(image) for image, _ in scenes])
        vehicle_boxes = np.array([truth.vehicle_bbox or (0.0, 0.0, 0.0, 0.0) for _, truth in scenes], dtype=np.float32)
        vehicle_crops = [crop(image, BBox(*truth.vehicle_bbox)) for image, truth in scenes if truth.has_vehicle]
        plate_features = np.stack([plate_provider.extract(c) for c in vehicle_crops])
        plate_boxes = np.array([truth.plate_bbox for _, truth in scenes if truth.has_vehicle], dtype=np.float32)

        heads = {}
        for name, provider, features, boxes, present in (
            ("vehicle", vehicle_provider, vehicle_features, vehicle_boxes, presence),
            ("plate", plate_provider, plate_features, plate_boxes, np.ones(len(plate_boxes), dtype=np.int64)),
        ):
            head = DetectorHead.initialized(provider.feature_dim, np.random.default_rng(0), provider.spatial, config.head_dropout)
            history = train_detector_head(head, features, boxes, present, _head_config(head))
            losses = [record["train_loss"] for record in history.records]
            assert combined_loss(head, features, boxes, present) <= losses[0] + 1e-9
            head.save(getattr(config, f"{name}_head_path"))
            heads[name] = head

        bundle = ModelBundle.from_config(load_pipeline_config(config_path))
        assert isinstance(bundle.vehicle_provider, ToyBackbone)
        assert isinstance(bundle.plate_provider, ToyBackbone)
        assert bundle.vehicle_head.params.equals(heads["vehicle"].params)
        assert bundle.plate_head.params.equals(heads["plate"].params)

        for frame_id, (image, _) in enumerate(scenes[:6]):
            result = process_frame(image, bundle, frame_id=frame_id)
            assert result.error is None
            probs, _ = heads["vehicle"].predict(vehicle_provider.extract(image))
            assert (result.vehicle is not None) == (float(probs[0]) >= config.vehicle_threshold)
            if result.plate is not None:
                assert result.vehicle is not None
                vx0, vy0, vx1, vy1 = result.vehicle.bbox.as_array()
                px0, py0, px1, py1 = result.plate_bbox.as_array()
                assert vx0 - 1e-6 <= px0 <= px1 <= vx1 + 1e-6
                assert vy0 - 1e-6 <= py0 <= py1 <= vy1 + 1e-6
            assert result.timings_ms["total"] >= sum(v for k, v in result.timings_ms.items() if k != "total")
