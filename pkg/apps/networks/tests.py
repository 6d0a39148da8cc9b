import numpy as np
import pytest
import torch

from apps.core.exceptions import (
    CheckpointVersionError,
    ConfigError,
    CorruptCheckpointError,
    ShapeError,
    UnsupportedScaleError,
)
from apps.networks.blocks import count_parameters
from apps.networks.bundle import build_bundle
from apps.networks.config import ModelConfig, NetworkConfig
from apps.networks.container import dumps_tensors, load_tensors, loads_tensors, save_tensors
from apps.networks.discriminators import build_hr_discriminator, build_lr_discriminator, hr_strides
from apps.networks.generators import (
    build_correction_generator,
    build_degradation_generator,
    build_sr_network,
    draw_noise,
)
from apps.networks.serializers import ModelConfigSerializer


class TestSizes:
    def test_correction_generator_parameter_count(self):
        assert count_parameters(build_correction_generator(ModelConfig().correction)) == 3_946_891

    @pytest.mark.parametrize("scale, expected", [(4, 7_964_115), (2, 7_816_403)])
    def test_sr_network_parameter_count(self, scale, expected):
        assert count_parameters(build_sr_network(ModelConfig(scale=scale).sr)) == expected

    def test_lr_discriminator_receptive_field(self):
        assert build_lr_discriminator(NetworkConfig()).receptive_field() == 11

    @pytest.mark.parametrize("scale, expected", [(2, 19), (4, 31)])
    def test_hr_discriminator_receptive_field(self, scale, expected):
        assert build_hr_discriminator(NetworkConfig(), scale).receptive_field() == expected

    @pytest.mark.parametrize("scale", [3, 8])
    def test_unsupported_scale(self, scale):
        with pytest.raises(UnsupportedScaleError):
            hr_strides(scale)
        with pytest.raises(UnsupportedScaleError):
            NetworkConfig(scale=scale)

    def test_non_positive_sizes(self):
        with pytest.raises(ConfigError):
            NetworkConfig(base_channels=0)


class TestShapes:
    @pytest.fixture
    def net_cfg(self):
        return NetworkConfig(n_residual_groups=1, rcabs_per_group=1, base_channels=8, residual_blocks=1)

    def test_correction_preserves_size(self, net_cfg):
        out = build_correction_generator(net_cfg)(torch.rand(2, 3, 9, 13))
        assert out.shape == (2, 3, 9, 13)

    @pytest.mark.parametrize("scale", [2, 4])
    def test_sr_upscales(self, net_cfg, scale):
        out = build_sr_network(net_cfg.replace(scale=scale))(torch.rand(1, 3, 8, 6))
        assert out.shape == (1, 3, 8 * scale, 6 * scale)

    def test_degradation_preserves_size(self, net_cfg):
        x = torch.rand(2, 3, 10, 10)
        out = build_degradation_generator(net_cfg)(x, draw_noise(x))
        assert out.shape == x.shape

    def test_degradation_rejects_mismatched_noise(self, net_cfg):
        x = torch.rand(2, 3, 10, 10)
        with pytest.raises(ShapeError):
            build_degradation_generator(net_cfg)(x, torch.randn(2, 1, 8, 10))
        with pytest.raises(ShapeError):
            build_degradation_generator(net_cfg)(x, torch.randn(2, 3, 10, 10))

    def test_noise_is_one_channel_and_seeded(self):
        like = torch.zeros(3, 3, 5, 7)
        first = draw_noise(like, torch.Generator().manual_seed(1))
        second = draw_noise(like, torch.Generator().manual_seed(1))
        assert first.shape == (3, 1, 5, 7)
        assert torch.equal(first, second)

    def test_zero_tail_correction_is_identity(self, net_cfg):
        x = torch.rand(1, 3, 6, 6)
        assert torch.equal(build_correction_generator(net_cfg.replace(zero_tail=True))(x), x)

    @pytest.mark.parametrize("scale", [2, 4])
    def test_hr_score_map_matches_lr_score_map(self, net_cfg, scale):
        lr = torch.rand(1, 3, 16, 16)
        hr = torch.rand(1, 3, 16 * scale, 16 * scale)
        lr_scores = build_lr_discriminator(net_cfg)(lr)
        hr_scores = build_hr_discriminator(net_cfg, scale)(hr)
        assert lr_scores.shape == hr_scores.shape == (1, 1, 16, 16)


class TestNumerics:
    @pytest.fixture
    def net_cfg(self):
        return NetworkConfig(n_residual_groups=1, rcabs_per_group=1, base_channels=4, residual_blocks=1)

    def _double(self, network):
        return network.double().eval()

    def test_correction_gradients(self, net_cfg):
        torch.manual_seed(0)
        network = self._double(build_correction_generator(net_cfg))
        x = torch.rand(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(network, (x,))

    def test_sr_gradients(self, net_cfg):
        torch.manual_seed(0)
        network = self._double(build_sr_network(net_cfg.replace(scale=2)))
        x = torch.rand(1, 3, 3, 3, dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(network, (x,))

    def test_degradation_gradients(self, net_cfg):
        torch.manual_seed(0)
        network = self._double(build_degradation_generator(net_cfg))
        x = torch.rand(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)
        noise = torch.randn(1, 1, 4, 4, dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(network, (x, noise))

    def test_hr_discriminator_gradients(self, net_cfg):
        torch.manual_seed(0)
        network = self._double(build_hr_discriminator(net_cfg, 2))
        x = torch.rand(1, 3, 6, 6, dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(network, (x,))

    def test_outputs_are_finite(self, tiny_bundle):
        generator = torch.Generator().manual_seed(5)
        x = torch.rand(100, 3, 8, 8, generator=generator)
        hr = torch.rand(100, 3, 16, 16, generator=generator)
        noise = draw_noise(x, generator)
        with torch.no_grad():
            for name, network in tiny_bundle.named_networks().items():
                network.eval()
                if name == "g_degrade":
                    out = network(x, noise)
                elif name == "d_hr":
                    out = network(hr)
                else:
                    out = network(x)
                assert torch.isfinite(out).all(), name


class TestBundle:
    def test_scale_is_shared(self, tiny_bundle, tiny_model_cfg):
        assert tiny_bundle.scale == tiny_model_cfg.scale == tiny_bundle.config.scale
        assert set(tiny_bundle.named_networks()) == {
            "g_correct", "g_degrade", "sr", "d_lr_x", "d_lr_yd", "d_hr"
        }

    def test_state_dict_round_trip(self, tiny_bundle, tiny_model_cfg):
        torch.manual_seed(99)
        other = build_bundle(tiny_model_cfg)
        assert other.parameter_digest() != tiny_bundle.parameter_digest()
        other.load_state_dict(tiny_bundle.state_dict())
        assert other.parameter_digest() == tiny_bundle.parameter_digest()

    def test_model_config_dict_round_trip(self, tiny_model_cfg):
        assert ModelConfig.from_dict(tiny_model_cfg.to_dict()) == tiny_model_cfg

    def test_serializer_keeps_unspecified_sizes(self):
        serializer = ModelConfigSerializer(data={"scale": 2, "sr": {"n_residual_groups": 1}})
        assert serializer.is_valid(), serializer.errors
        cfg = serializer.save()
        assert cfg.sr.n_residual_groups == 1
        assert cfg.sr.rcabs_per_group == 20
        assert cfg.correction.scale == 2


class TestContainer:
    @pytest.fixture
    def tensors(self):
        return {
            "b/weight": torch.arange(6, dtype=torch.float32).reshape(2, 3),
            "a/step": torch.tensor(3.0),
            "c/count": np.array([1, 2, 3], dtype=np.int64),
        }

    def test_round_trip(self, tmp_path, tensors):
        save_tensors(tmp_path / "t.ckpt", tensors, {"iteration": 3})
        loaded, meta = load_tensors(tmp_path / "t.ckpt")
        assert meta == {"iteration": 3}
        for name, value in tensors.items():
            np.testing.assert_array_equal(loaded[name], np.asarray(value))
        assert loaded["c/count"].dtype == np.int64

    def test_rewrite_is_byte_identical(self, tensors):
        blob = dumps_tensors(tensors, {"x": [1, 2]})
        assert dumps_tensors(*loads_tensors(blob)) == blob

    def test_truncated_file(self, tmp_path, tensors):
        path = save_tensors(tmp_path / "t.ckpt", tensors)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CorruptCheckpointError):
            load_tensors(path)

    def test_flipped_byte(self, tensors):
        blob = bytearray(dumps_tensors(tensors))
        blob[-40] ^= 0xFF
        with pytest.raises(CorruptCheckpointError):
            loads_tensors(bytes(blob))

    def test_bad_magic(self, tensors):
        with pytest.raises(CorruptCheckpointError):
            loads_tensors(b"XXXX" + dumps_tensors(tensors)[4:])

    def test_unknown_version(self, tensors):
        blob = bytearray(dumps_tensors(tensors))
        blob[4:8] = (2).to_bytes(4, "little")
        with pytest.raises(CheckpointVersionError):
            loads_tensors(bytes(blob))
