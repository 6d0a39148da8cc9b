import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from torch.autograd import gradcheck

from apps.core.exceptions import ConfigError, LossError, ShapeError
from apps.imaging.ops import DIHEDRAL_INDICES, dihedral, inverse_dihedral
from apps.imaging.sampling import UnalignedBatch
from apps.losses.functional import (
    RECONSTRUCTION_LOSSES,
    adversarial_loss,
    adversarial_value,
    cycle_loss,
    discriminator_loss,
    frozen_forward,
    generator_loss,
    geometric_ensemble_loss,
    hr_adversarial_loss,
    identity_loss,
    reconstruction_loss,
    register_reconstruction_loss,
    total_translation_loss,
)
from apps.losses.report import TRANSLATION_TERMS, LossReport
from apps.losses.serializers import LossWeightsSerializer
from apps.losses.weights import GanForm, IdentityMode, LossWeights
from apps.networks.generators import draw_noise


def _log_sigmoid(v):
    return -math.log1p(math.exp(-v))


def _rand(*shape, seed=0):
    return torch.rand(*shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


class TestAdversarial:
    def test_undecided_discriminator(self):
        zeros = torch.zeros(2, 1, 3, 3)
        assert adversarial_value(zeros, zeros).item() == pytest.approx(2 * math.log(0.5))

    def test_discriminator_optimum(self):
        value = adversarial_value(torch.full((1, 1, 2, 2), 40.0), torch.full((1, 1, 2, 2), -40.0))
        assert value.item() == pytest.approx(0.0, abs=1e-12)

    def test_matches_scalar_oracle(self):
        real = torch.randn(3, 1, 2, 2, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
        fake = torch.randn(3, 1, 2, 2, dtype=torch.float64, generator=torch.Generator().manual_seed(2))
        expected = np.mean([_log_sigmoid(v) for v in real.flatten().tolist()]) + np.mean(
            [_log_sigmoid(-v) for v in fake.flatten().tolist()]
        )
        assert adversarial_value(real, fake).item() == pytest.approx(expected, abs=1e-7)

    def test_generator_forms(self):
        fake = torch.tensor([[-1.0, 0.5]], dtype=torch.float64)
        nonsat = np.mean([-_log_sigmoid(v) for v in (-1.0, 0.5)])
        minimax = np.mean([_log_sigmoid(-v) for v in (-1.0, 0.5)])
        assert generator_loss(fake).item() == pytest.approx(nonsat)
        assert generator_loss(fake, GanForm.MINIMAX).item() == pytest.approx(minimax)
        assert generator_loss(fake, GanForm.MINIMAX).item() < 0
        assert generator_loss(fake, "lsgan").item() == pytest.approx((4.0 + 0.25) / 2)

    @pytest.mark.parametrize("form", list(GanForm))
    def test_discriminator_loss_is_non_negative(self, form):
        real, fake = torch.randn(4, 1, 3, 3), torch.randn(4, 1, 3, 3)
        assert discriminator_loss(real, fake, form).item() >= 0

    def test_fake_scores_are_detached_for_discriminator(self):
        real = torch.randn(2, 1, 2, 2)
        fake = torch.randn(2, 1, 2, 2, requires_grad=True)
        d_loss, g_loss = adversarial_loss(real, fake)
        assert not d_loss.requires_grad
        assert g_loss.requires_grad

    def test_empty_batch(self):
        with pytest.raises(LossError):
            adversarial_loss(torch.zeros(0, 1, 2, 2), torch.zeros(0, 1, 2, 2))

    def test_gradients(self):
        real = torch.randn(2, 1, 2, 2, dtype=torch.float64, requires_grad=True)
        fake = torch.randn(2, 1, 2, 2, dtype=torch.float64, requires_grad=True)
        assert gradcheck(lambda r, f: discriminator_loss(r, f), (real, fake))
        assert gradcheck(lambda f: generator_loss(f), (fake,))


class TestHrAdversarial:
    @pytest.fixture
    def inputs(self, tiny_bundle):
        tiny_bundle.to(torch.float64)
        x = _rand(2, 3, 8, 8, seed=3)
        y_down = _rand(2, 3, 8, 8, seed=4)
        noise = draw_noise(y_down, torch.Generator().manual_seed(5))
        return tiny_bundle, x, y_down, noise

    def test_sr_network_gets_no_gradient(self, inputs):
        bundle, x, y_down, noise = inputs
        _, g_loss = hr_adversarial_loss(bundle, x, y_down, noise)
        g_loss.backward()
        assert all(p.grad is None for p in bundle.sr.parameters())
        assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in bundle.g_degrade.parameters())
        assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in bundle.g_correct.parameters())

    def test_degradation_gradient_matches_finite_difference(self, inputs):
        bundle, x, y_down, noise = inputs
        bundle.eval()
        param = bundle.g_degrade.tail.weight
        _, g_loss = hr_adversarial_loss(bundle, x, y_down, noise)
        (grad,) = torch.autograd.grad(g_loss, param)

        eps = 1e-6
        index = (0, 0, 0, 0)
        with torch.no_grad():
            param[index] += eps
            plus = hr_adversarial_loss(bundle, x, y_down, noise)[1].item()
            param[index] -= 2 * eps
            minus = hr_adversarial_loss(bundle, x, y_down, noise)[1].item()
            param[index] += eps
        numeric = (plus - minus) / (2 * eps)
        assert numeric == pytest.approx(grad[index].item(), rel=1e-3, abs=1e-8)

    def test_shape_mismatch(self, inputs):
        bundle, x, y_down, noise = inputs
        with pytest.raises(ShapeError):
            hr_adversarial_loss(bundle, x, y_down[:, :, :4], noise)

    def test_frozen_forward_matches_plain_forward(self, tiny_bundle):
        x = torch.rand(1, 3, 6, 6, requires_grad=True)
        torch.testing.assert_close(frozen_forward(tiny_bundle.sr, x), tiny_bundle.sr(x))


class TestCycle:
    def test_equal(self):
        a = torch.rand(2, 3, 4, 4)
        assert cycle_loss(a, a.clone()).item() == 0.0

    def test_uniform_gap(self):
        a = torch.full((2, 3, 4, 4), 0.25, dtype=torch.float64)
        assert cycle_loss(a, a + 0.1).item() == pytest.approx(0.1, abs=1e-12)

    def test_scalar_oracle(self):
        a, b = _rand(2, 3, 4, 4, seed=1), _rand(2, 3, 4, 4, seed=2)
        expected = np.mean([abs(p - q) for p, q in zip(a.flatten().tolist(), b.flatten().tolist())])
        assert cycle_loss(a, b).item() == pytest.approx(expected, abs=1e-7)

    def test_batch_permutation_invariant(self):
        a, b = _rand(4, 3, 4, 4, seed=1), _rand(4, 3, 4, 4, seed=2)
        perm = torch.tensor([2, 0, 3, 1])
        assert cycle_loss(a[perm], b[perm]).item() == pytest.approx(cycle_loss(a, b).item(), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cycle_loss(torch.rand(1, 3, 4, 4), torch.rand(1, 3, 4, 5))

    def test_gradients(self):
        a = _rand(1, 3, 3, 3, seed=1).requires_grad_()
        b = _rand(1, 3, 3, 3, seed=2)
        assert gradcheck(lambda t: cycle_loss(b, t), (a,))


class TestIdentity:
    @pytest.fixture
    def batch(self):
        return UnalignedBatch(
            x=torch.zeros(2, 3, 4, 4), y=torch.zeros(2, 3, 8, 8), y_down=torch.ones(2, 3, 4, 4)
        )

    @pytest.mark.parametrize("mode", list(IdentityMode))
    def test_identity_map(self, batch, mode):
        assert identity_loss(lambda t: t, batch, mode).item() == 0.0

    def test_mode_selects_domain(self, batch):
        double = lambda t: 2 * t  # noqa: E731
        assert identity_loss(double, batch, IdentityMode.CLEAN_LR).item() == 1.0
        assert identity_loss(double, batch, IdentityMode.SOURCE_LR).item() == 0.0

    def test_scalar_oracle(self):
        y_down = _rand(2, 3, 4, 4, seed=7)
        batch = UnalignedBatch(x=None, y=None, y_down=y_down)
        shift = lambda t: t ** 2  # noqa: E731
        expected = np.mean([abs(v * v - v) for v in y_down.flatten().tolist()])
        assert identity_loss(shift, batch, "clean_lr").item() == pytest.approx(expected, abs=1e-7)


def _enumerated_geo(fn, x):
    """Numpy enumeration over the eight transforms of one H×W×3 raster."""
    out = fn(x)
    branches = [dihedral(fn(dihedral(x, i)), inverse_dihedral(i)) for i in DIHEDRAL_INDICES]
    return np.mean(np.abs(out - np.mean(branches, axis=0)))


class TestGeometricEnsemble:
    def test_equivariant_map(self):
        assert geometric_ensemble_loss(lambda t: 2 * t, torch.rand(2, 3, 5, 5)).item() == pytest.approx(0.0, abs=1e-7)

    def test_constant_output(self):
        const = lambda t: torch.full_like(t, 0.3)  # noqa: E731
        assert geometric_ensemble_loss(const, torch.rand(2, 3, 5, 5)).item() == pytest.approx(0.0)

    def test_horizontal_flip_matches_enumeration(self):
        x = _rand(1, 3, 4, 4, seed=11)
        loss = geometric_ensemble_loss(lambda t: torch.flip(t, dims=(3,)), x).item()
        raster = x[0].numpy().transpose(1, 2, 0)
        assert loss == pytest.approx(_enumerated_geo(lambda r: r[:, ::-1], raster), abs=1e-7)

    def test_non_square(self):
        with pytest.raises(ShapeError):
            geometric_ensemble_loss(lambda t: t, torch.rand(1, 3, 4, 5))

    def test_gradients_reach_all_branches(self):
        x = _rand(1, 3, 4, 4, seed=12)
        weight = (_rand(3, 3, 3, 3, seed=13) - 0.5).requires_grad_()
        assert gradcheck(
            lambda w: geometric_ensemble_loss(lambda t: F.conv2d(t, w, padding=1), x), (weight,)
        )


class TestReconstruction:
    def test_identical(self):
        a = torch.rand(1, 3, 8, 8)
        assert reconstruction_loss(a, a).item() == 0.0

    def test_uniform_gap(self):
        a = torch.zeros(1, 3, 8, 8, dtype=torch.float64)
        assert reconstruction_loss(a + 0.25, a).item() == pytest.approx(0.25)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            reconstruction_loss(torch.zeros(1), torch.zeros(1), kind="perceptual")

    def test_registered_kind(self):
        register_reconstruction_loss("l2_test", lambda a, b: ((a - b) ** 2).mean())
        try:
            a = torch.zeros(1, 3, 2, 2, dtype=torch.float64)
            assert reconstruction_loss(a + 0.5, a, "l2_test").item() == pytest.approx(0.25)
        finally:
            RECONSTRUCTION_LOSSES.pop("l2_test")


class TestTotal:
    @pytest.fixture
    def parts(self):
        return {"adv_x": 0.7, "adv_yd": 0.4, "adv_hr": 2.0, "cyc": 0.3, "idt": 0.2, "geo": 0.1}

    def test_div2k_wild_weights(self, parts):
        weights = LossWeights(lambda_cyc=1, lambda_idt=1, lambda_geo=1, gamma=0.1)
        assert total_translation_loss(parts, weights) == pytest.approx(0.7 + 0.4 + 0.2 + 0.3 + 0.2 + 0.1)

    def test_zero_weights(self, parts):
        weights = LossWeights(lambda_cyc=0, lambda_idt=0, lambda_geo=0, gamma=0)
        assert total_translation_loss(parts, weights) == pytest.approx(1.1)

    def test_random_weights(self, rng):
        parts = dict(zip(TRANSLATION_TERMS, rng.random(6)))
        w = rng.random(4)
        weights = LossWeights(lambda_cyc=w[0], lambda_idt=w[1], lambda_geo=w[2], gamma=w[3])
        expected = (
            parts["adv_x"] + parts["adv_yd"] + w[3] * parts["adv_hr"]
            + w[0] * parts["cyc"] + w[1] * parts["idt"] + w[2] * parts["geo"]
        )
        assert total_translation_loss(parts, weights) == pytest.approx(expected, abs=1e-9)

    def test_missing_component(self, parts):
        del parts["geo"]
        with pytest.raises(LossError):
            total_translation_loss(parts, LossWeights())


class TestWeights:
    def test_negative_weight(self):
        with pytest.raises(ConfigError):
            LossWeights(lambda_idt=-1.0)

    def test_non_finite_weight(self):
        with pytest.raises(ConfigError):
            LossWeights(gamma=math.inf)

    def test_serializer(self):
        serializer = LossWeightsSerializer(data={"lambda_idt": 5, "idt_mode": "source_lr"})
        assert serializer.is_valid(), serializer.errors
        weights = serializer.save()
        assert weights.lambda_idt == 5.0
        assert weights.idt_mode is IdentityMode.SOURCE_LR

    def test_report_fields(self):
        assert list(LossReport().to_dict())[:8] == [
            "adv_x", "adv_yd", "adv_hr", "cyc", "idt", "geo", "rec", "total_trans"
        ]
