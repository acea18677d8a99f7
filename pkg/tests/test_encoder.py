import numpy as np
import pytest
import torch

from gaitlab.checkpoint import (load_checkpoint, load_into_module,
                                save_checkpoint)
from gaitlab.encoder import (EncoderConfig, GaitEncoder, Predictor,
                             backbone_parameter_count, encode_clip,
                             horizontal_pool, temporal_pool)
from gaitlab.errors import (CheckpointVersionMismatch, IndivisibleHeight,
                            ShapeMismatch)


@pytest.fixture(scope="module")
def full_encoder():
    torch.manual_seed(0)
    enc = GaitEncoder(EncoderConfig())
    enc.eval()
    return enc


@pytest.fixture(scope="module")
def small_encoder():
    torch.manual_seed(0)
    enc = GaitEncoder(EncoderConfig().small())
    enc.eval()
    return enc


def binary_clip(n=1, t=4, seed=0):
    rng = np.random.default_rng(seed)
    return torch.as_tensor((rng.random((n, t, 64, 44)) < 0.3).astype(np.float32))


class TestBackbone:
    def test_output_shape(self, full_encoder):
        maps = full_encoder.forward_backbone(binary_clip(t=16))
        assert tuple(maps.shape) == (1, 16, 512, 16, 11)

    def test_all_zero_input_finite(self, full_encoder):
        maps = full_encoder.forward_backbone(torch.zeros(1, 3, 64, 44))
        assert torch.isfinite(maps).all()

    def test_frame_independence(self, small_encoder):
        a = binary_clip(t=6, seed=1)
        b = a.clone()
        b[0, 3] = (b[0, 3] + 1) % 2  # change exactly one frame
        ma = small_encoder.forward_backbone(a)
        mb = small_encoder.forward_backbone(b)
        for t in range(6):
            same = torch.equal(ma[0, t], mb[0, t])
            assert same == (t != 3)

    def test_shape_mismatch(self, small_encoder):
        with pytest.raises(ShapeMismatch):
            small_encoder.forward_backbone(torch.zeros(1, 2, 32, 44))


class TestTemporalPool:
    def test_single_frame_identity(self):
        maps = torch.randn(2, 1, 8, 4, 3)
        assert torch.equal(temporal_pool(maps), maps[:, 0])

    def test_permutation_invariance(self):
        maps = torch.randn(2, 5, 8, 4, 3)
        perm = maps[:, [3, 1, 4, 0, 2]]
        assert torch.equal(temporal_pool(maps), temporal_pool(perm))

    def test_duplication_invariance(self):
        maps = torch.randn(1, 4, 8, 4, 3)
        dup = torch.cat([maps, maps[:, 2:3]], dim=1)
        assert torch.equal(temporal_pool(maps), temporal_pool(dup))


class TestHorizontalPool:
    def test_constant_map(self):
        c = 0.7
        out = horizontal_pool(torch.full((1, 8, 16, 11), c), parts=16)
        assert torch.allclose(out, torch.full((1, 16, 8), 2 * c))

    def test_output_shape(self):
        out = horizontal_pool(torch.randn(3, 512, 16, 11), parts=16)
        assert tuple(out.shape) == (3, 16, 512)

    def test_mean_plus_max(self):
        m = torch.zeros(1, 1, 16, 2)
        m[0, 0, 0, 0] = 4.0  # strip 0 holds {4, 0}: mean 2 + max 4 = 6
        out = horizontal_pool(m, parts=16)
        assert out[0, 0, 0] == pytest.approx(6.0)
        assert out[0, 1, 0] == pytest.approx(0.0)

    def test_indivisible_height(self):
        with pytest.raises(IndivisibleHeight):
            horizontal_pool(torch.randn(1, 4, 15, 11), parts=16)

    def test_part_locality(self):
        # zeroing the feature rows feeding part p changes only part p
        maps = torch.randn(1, 4, 16, 11)
        base = horizontal_pool(maps, parts=16)
        zeroed = maps.clone()
        zeroed[:, :, 5, :] = 0
        out = horizontal_pool(zeroed, parts=16)
        diff = (out != base).any(dim=2)[0]
        assert diff[5]
        assert not diff[torch.arange(16) != 5].any()

    def test_cat_combiner(self):
        out = horizontal_pool(torch.randn(2, 8, 16, 4), parts=16, combine="cat")
        assert tuple(out.shape) == (2, 16, 16)


class TestProjection:
    def test_zero_input_zero_output(self, small_encoder):
        parts, dim = small_encoder.cfg.parts, small_encoder.cfg.embed_dim
        out = small_encoder.project(torch.zeros(2, parts, dim))
        assert torch.allclose(out, torch.zeros_like(out))

    def test_part_independence(self, small_encoder):
        parts, dim = small_encoder.cfg.parts, small_encoder.cfg.embed_dim
        x = torch.randn(3, parts, dim)
        y = x.clone()
        y[:, 3] += 1.0
        with torch.no_grad():
            ox, oy = small_encoder.project(x), small_encoder.project(y)
        changed = (ox != oy).any(dim=(0, 2))
        assert changed[3]
        assert not changed[torch.arange(parts) != 3].any()

    def test_shape_preserved(self, full_encoder):
        out = full_encoder.project(torch.randn(1, 16, 512))
        assert tuple(out.shape) == (1, 16, 512)


class TestEncode:
    def test_output_shape_full(self, full_encoder):
        with torch.no_grad():
            emb = full_encoder(binary_clip(t=3))
        assert tuple(emb.shape) == (1, 16, 512)

    def test_frame_permutation_invariance(self, small_encoder):
        clip = binary_clip(t=6, seed=2)
        perm = clip[:, [5, 0, 3, 1, 4, 2]]
        with torch.no_grad():
            assert torch.equal(small_encoder(clip), small_encoder(perm))

    def test_frame_duplication_invariance(self, small_encoder):
        clip = binary_clip(t=4, seed=3)
        dup = torch.cat([clip, clip[:, 1:2]], dim=1)
        with torch.no_grad():
            assert torch.equal(small_encoder(clip), small_encoder(dup))

    def test_deterministic(self, small_encoder):
        clip = binary_clip(t=4, seed=4)
        with torch.no_grad():
            a, b = small_encoder(clip), small_encoder(clip)
        assert torch.equal(a, b)

    def test_no_nan_on_degenerate_inputs(self, small_encoder):
        for clip in (torch.zeros(1, 2, 64, 44), torch.ones(1, 2, 64, 44),
                     binary_clip(t=2, seed=5)):
            with torch.no_grad():
                emb = small_encoder(clip)
            assert torch.isfinite(emb).all()

    def test_encode_clip_numpy(self, small_encoder):
        frames = (np.random.default_rng(0).random((5, 64, 44)) < 0.3).astype(np.uint8)
        emb = encode_clip(small_encoder, frames)
        assert emb.shape == (16, small_encoder.cfg.embed_dim)


class TestParameterCount:
    def test_backbone_matches_closed_form(self):
        for cfg in (EncoderConfig(), EncoderConfig().small()):
            enc = GaitEncoder(cfg)
            actual = sum(p.numel() for n, p in enc.backbone.named_parameters())
            assert actual == backbone_parameter_count(cfg)

    def test_full_size_value_anchor(self):
        # regression anchor for the default architecture
        assert backbone_parameter_count(EncoderConfig()) == 4_901_184


class TestPredictor:
    def test_shape_and_part_independence(self):
        torch.manual_seed(0)
        pred = Predictor(parts=16, dim=32).eval()
        x = torch.randn(2, 16, 32)
        y = x.clone()
        y[:, 7] *= 2.0
        with torch.no_grad():
            ox, oy = pred(x), pred(y)
        assert tuple(ox.shape) == (2, 16, 32)
        changed = (ox != oy).any(dim=(0, 2))
        assert changed[7] and not changed[torch.arange(16) != 7].any()

    def test_zero_input_zero_output(self):
        torch.manual_seed(0)
        pred = Predictor(parts=4, dim=8).eval()
        out = pred(torch.zeros(3, 4, 8))
        assert torch.allclose(out, torch.zeros_like(out))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        torch.manual_seed(1)
        enc = GaitEncoder(EncoderConfig().small())
        pred = Predictor(enc.cfg.parts, enc.cfg.embed_dim)
        path = tmp_path / "w.gsck"
        save_checkpoint(path, {"": enc, "predictor": pred}, {"step": 7})
        meta, arrays = load_checkpoint(path)
        assert meta["step"] == 7
        enc2 = GaitEncoder(EncoderConfig().small())
        load_into_module(enc2, arrays)
        for (n1, p1), (n2, p2) in zip(enc.state_dict().items(),
                                      enc2.state_dict().items()):
            assert n1 == n2
            assert torch.equal(p1.float(), p2.float())

    def test_canonical_names(self, tmp_path):
        enc = GaitEncoder(EncoderConfig().small())
        pred = Predictor(enc.cfg.parts, enc.cfg.embed_dim)
        path = tmp_path / "w.gsck"
        save_checkpoint(path, {"": enc, "predictor": pred})
        _, arrays = load_checkpoint(path)
        names = set(arrays)
        assert "backbone.stem.conv.weight" in names
        for i in (1, 2, 3, 4):
            assert f"backbone.rb{i}.conv1.conv.weight" in names
        assert "head.fc0.weight" in names and "head.fc1.weight" in names
        assert "predictor.fc0.weight" in names and "predictor.fc1.weight" in names

    def test_version_mismatch(self, tmp_path):
        enc = GaitEncoder(EncoderConfig().small())
        path = tmp_path / "w.gsck"
        save_checkpoint(path, {"": enc})
        blob = bytearray(path.read_bytes())
        blob[4] = 99  # corrupt the version field
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointVersionMismatch):
            load_checkpoint(path)

    def test_float32_little_endian_payload(self, tmp_path):
        enc = GaitEncoder(EncoderConfig().small())
        path = tmp_path / "w.gsck"
        save_checkpoint(path, {"": enc})
        _, arrays = load_checkpoint(path)
        for arr in arrays.values():
            assert arr.dtype == np.dtype("<f4")
