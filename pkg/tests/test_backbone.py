import json

import numpy as np
import pytest
import torch

from resad.backbone import extract_features, fuse_levels, load_model
from resad.errors import ModelLoadError, OutputMismatch, ShapeError


def _resave_with_manifest(src, dst, mutate):
    extra = {"manifest.json": ""}
    module = torch.jit.load(str(src), _extra_files=extra)
    manifest = json.loads(extra["manifest.json"])
    mutate(manifest)
    torch.jit.save(module, str(dst), _extra_files={"manifest.json": json.dumps(manifest)})


class TestLoadModel:
    def test_loads_tiny_backbone(self, tiny_model_224):
        handle = load_model(tiny_model_224)
        assert handle.output_names == ("stage2", "stage3")
        assert handle.strides == (8, 16)
        assert handle.side == 224

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelLoadError):
            load_model(tmp_path / "nope.pt")

    def test_garbage_file(self, tmp_path):
        path = tmp_path / "bad.pt"
        path.write_bytes(b"not a torchscript archive")
        with pytest.raises(ModelLoadError):
            load_model(path)

    def test_renamed_output_rejected(self, tiny_model_224, tmp_path):
        bad = tmp_path / "renamed.pt"
        _resave_with_manifest(
            tiny_model_224, bad,
            lambda m: m.__setitem__("output_names", ["stage2", "stage4"]),
        )
        with pytest.raises(OutputMismatch):
            load_model(bad)

    def test_missing_output_rejected(self, tiny_model_224, tmp_path):
        bad = tmp_path / "missing.pt"
        _resave_with_manifest(
            tiny_model_224, bad, lambda m: m.__setitem__("output_names", ["stage2"])
        )
        with pytest.raises(OutputMismatch):
            load_model(bad)

    def test_expected_channels_enforced(self, tiny_model_224):
        from resad.errors import ChannelMismatch

        with pytest.raises(ChannelMismatch):
            load_model(tiny_model_224, expected_channels=(512, 1024))


class TestExtractFeatures:
    def test_stride_arithmetic_at_224(self, tiny_model_224):
        handle = load_model(tiny_model_224)
        x = np.random.default_rng(0).standard_normal((3, 224, 224)).astype(np.float32)
        f2, f3 = extract_features(handle, x)
        assert f2.shape == (28, 28, handle.channels[0])
        assert f3.shape == (14, 14, handle.channels[1])

    def test_deterministic(self, tiny_model_224):
        handle = load_model(tiny_model_224)
        x = np.random.default_rng(1).standard_normal((3, 224, 224)).astype(np.float32)
        a2, a3 = extract_features(handle, x)
        b2, b3 = extract_features(handle, x)
        assert np.array_equal(a2, b2) and np.array_equal(a3, b3)

    def test_wrong_input_shape(self, tiny_model_224):
        handle = load_model(tiny_model_224)
        with pytest.raises(ShapeError):
            extract_features(handle, np.zeros((3, 96, 96), np.float32))


class TestFuseLevels:
    def test_shapes_and_verbatim_low_level(self):
        rng = np.random.default_rng(2)
        f2 = rng.standard_normal((28, 28, 8)).astype(np.float32)
        f3 = rng.standard_normal((14, 14, 16)).astype(np.float32)
        fused = fuse_levels(f2, f3)
        assert fused.shape == (28, 28, 24)
        assert np.array_equal(fused[:, :, :8], f2)

    def test_constant_upscale_preserved(self):
        f2 = np.zeros((10, 10, 2), dtype=np.float32)
        f3 = np.full((5, 5, 3), 4.5, dtype=np.float32)
        fused = fuse_levels(f2, f3)
        assert np.allclose(fused[:, :, 2:], 4.5, atol=1e-6)

    def test_channel_bookkeeping(self):
        for c2, c3 in [(4, 8), (512, 1024)]:
            f2 = np.zeros((4, 4, c2), dtype=np.float32)
            f3 = np.zeros((2, 2, c3), dtype=np.float32)
            assert fuse_levels(f2, f3).shape[2] == c2 + c3

    def test_incompatible_spatial_shapes(self):
        with pytest.raises(ShapeError):
            fuse_levels(np.zeros((28, 28, 4)), np.zeros((10, 10, 8)))
