import json
import math

import numpy as np
import pytest
import torch
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError

from apps.core.exceptions import DimensionError, EvaluationError
from apps.core.utils import read_json
from apps.evaluation.dumps import dump_intermediates, intermediates
from apps.evaluation.inference import infer, self_ensemble_infer
from apps.evaluation.metrics import (
    MetricReport,
    bicubic_baseline,
    evaluate_directories,
    evaluate_pairs,
    psnr,
    ssim,
    ssim_window,
)
from apps.imaging.files import list_images, load_image, save_image
from apps.imaging.ops import DIHEDRAL_INDICES, dihedral, inverse_dihedral, predetermined_downscale
from apps.imaging.sampling import to_array, to_tensor
from apps.training.state import TrainState, build_optimizers, checkpoint_save


@pytest.fixture
def eval_bundle(tiny_bundle):
    tiny_bundle.eval()
    return tiny_bundle


@pytest.fixture
def checkpoint(tiny_bundle, tmp_path):
    state = TrainState.fresh(0, build_optimizers(tiny_bundle), config={"variant": "full"})
    return checkpoint_save(tiny_bundle, state, tmp_path / "model.ckpt")


class TestPsnr:
    def test_uniform_gap(self):
        a = np.full((8, 8, 3), 0.5)
        assert psnr(a, a + 0.1) == pytest.approx(20.0)

    def test_identical_is_infinite(self, image):
        assert psnr(image, image) == math.inf

    def test_symmetric(self, rng):
        a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
        assert psnr(a, b) == psnr(b, a)

    def test_crop_ignores_border(self, rng):
        a = rng.random((16, 16, 3))
        b = a.copy()
        b[0] = 1.0 - b[0]
        assert psnr(a, b, crop=1) == math.inf
        assert psnr(a, b) < math.inf

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            psnr(rng.random((8, 8, 3)), rng.random((8, 9, 3)))


class TestSsim:
    def test_window_is_normalized(self):
        window = ssim_window()
        assert window.shape == (11, 11)
        assert window.sum() == pytest.approx(1.0)

    def test_identical(self, rng):
        a = rng.random((24, 24, 3))
        assert ssim(a, a) == pytest.approx(1.0)

    def test_inverted_is_negative(self, rng):
        a = rng.random((32, 32, 3))
        assert ssim(a, 1.0 - a) < 0

    def test_noise_lowers_score(self, rng):
        a = rng.random((32, 32, 3))
        noisy = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
        assert 0 < ssim(a, noisy) < 1

    def test_too_small(self, image):
        with pytest.raises(DimensionError):
            ssim(image[:10, :10], image[:10, :10])


class TestInference:
    def test_output_size(self, eval_bundle, rng):
        out = infer(eval_bundle, rng.random((10, 12, 3)))
        assert out.shape == (20, 24, 3)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_uses_only_correction_and_sr(self, eval_bundle, image):
        calls = {name: 0 for name in eval_bundle.named_networks()}

        def counter(name):
            def hook(module, args, output):
                calls[name] += 1

            return hook

        for name, net in eval_bundle.named_networks().items():
            net.register_forward_hook(counter(name))
        infer(eval_bundle, image)
        assert calls == {
            "g_correct": 1,
            "g_degrade": 0,
            "sr": 1,
            "d_lr_x": 0,
            "d_lr_yd": 0,
            "d_hr": 0,
        }

    def test_skip_correction(self, eval_bundle, image):
        calls = []
        eval_bundle.g_correct.register_forward_hook(lambda *args: calls.append(1))
        infer(eval_bundle, image, skip_correction=True)
        assert calls == []

    def test_matches_composition(self, eval_bundle, image):
        with torch.no_grad():
            t = torch.from_numpy(image.transpose(2, 0, 1)[None].copy()).float()
            expected = eval_bundle.sr(eval_bundle.g_correct(t))[0].clamp(0, 1)
        out = infer(eval_bundle, image)
        np.testing.assert_allclose(out, expected.numpy().transpose(1, 2, 0), atol=1e-6)

    def test_self_ensemble_is_mean_over_transforms(self, eval_bundle, image):
        expected = np.mean(
            [
                dihedral(infer(eval_bundle, dihedral(image, i)), inverse_dihedral(i))
                for i in DIHEDRAL_INDICES
            ],
            axis=0,
        )
        np.testing.assert_allclose(self_ensemble_infer(eval_bundle, image), expected)

    @pytest.mark.parametrize("index", DIHEDRAL_INDICES)
    def test_self_ensemble_is_equivariant(self, eval_bundle, image, index):
        transformed = self_ensemble_infer(eval_bundle, dihedral(image, index))
        np.testing.assert_allclose(
            transformed, dihedral(self_ensemble_infer(eval_bundle, image), index), atol=1e-5
        )

    def test_self_ensemble_non_square(self, eval_bundle, rng):
        assert self_ensemble_infer(eval_bundle, rng.random((8, 12, 3))).shape == (16, 24, 3)


class TestIntermediates:
    def test_shapes(self, eval_bundle, rng):
        x, y = rng.random((10, 10, 3)), rng.random((16, 16, 3))
        rasters = intermediates(eval_bundle, x, y)
        assert rasters["x_corrected"].shape == (10, 10, 3)
        assert rasters["x_sr"].shape == (20, 20, 3)
        for key in ("y_down", "y_down_degraded", "y_down_pseudo_clean"):
            assert rasters[key].shape == (8, 8, 3)
        assert rasters["y_pseudo_sr"].shape == (16, 16, 3)
        expected = predetermined_downscale(y, 2).clip(0.0, 1.0)
        np.testing.assert_allclose(rasters["y_down"], expected, atol=0.5 / 255 + 1e-9)

    def test_noise_seed_is_reproducible(self, eval_bundle, rng):
        x, y = rng.random((8, 8, 3)), rng.random((16, 16, 3))
        first = intermediates(eval_bundle, x, y, noise_seed=3)
        second = intermediates(eval_bundle, x, y, noise_seed=3)
        np.testing.assert_array_equal(first["y_down_degraded"], second["y_down_degraded"])

    def test_saved_images_recompute(self, eval_bundle, rng, tmp_path):
        y = rng.random((16, 16, 3))
        dump_intermediates(eval_bundle, rng.random((8, 8, 3)), y, tmp_path)
        names = settings.INTERMEDIATE_NAMES

        y_down = load_image(tmp_path / names["y_down"])
        expected = predetermined_downscale(y, 2).clip(0.0, 1.0)
        np.testing.assert_allclose(y_down, expected, atol=0.5 / 255 + 1e-6)

        degraded = load_image(tmp_path / names["y_down_degraded"])
        with torch.no_grad():
            recomputed = to_array(eval_bundle.g_correct(to_tensor(degraded)))[0].clip(0.0, 1.0)
        pseudo = load_image(tmp_path / names["y_down_pseudo_clean"])
        assert np.abs(recomputed - pseudo).max() <= 1.5 / 255

    def test_dump_writes_eight_images(self, eval_bundle, rng, tmp_path):
        paths = dump_intermediates(
            eval_bundle, rng.random((8, 8, 3)), rng.random((16, 16, 3)), tmp_path / "dump"
        )
        assert len(paths) == 8
        assert sorted(p.name for p in list_images(tmp_path / "dump"))[0] == "01_x.png"


class TestEvaluateDirectories:
    @pytest.fixture
    def pairs(self, tmp_path, rng):
        refs, results = tmp_path / "refs", tmp_path / "results"
        for name in ("a", "b", "c"):
            ref = rng.random((16, 16, 3))
            save_image(refs / f"{name}.png", ref)
            save_image(results / f"{name}_sr.png", np.clip(ref + 0.05, 0, 1))
        return results, refs

    def test_aggregate_is_mean(self, pairs):
        report = evaluate_directories(*pairs, suffix="_sr")
        assert [row["name"] for row in report.per_image] == ["a", "b", "c"]
        assert report.psnr_db == pytest.approx(np.mean([r["psnr_db"] for r in report.per_image]))
        assert report.ssim == pytest.approx(np.mean([r["ssim"] for r in report.per_image]))

    def test_unmatched_names(self, pairs):
        results, refs = pairs
        save_image(refs / "d.png", np.zeros((16, 16, 3)))
        with pytest.raises(EvaluationError) as excinfo:
            evaluate_directories(results, refs, suffix="_sr")
        assert excinfo.value.details["unmatched_references"] == [str(refs / "d.png")]
        assert excinfo.value.details["unmatched_results"] == []

    def test_empty(self):
        with pytest.raises(EvaluationError):
            evaluate_pairs([])

    def test_infinite_psnr_serializes(self, image):
        report = evaluate_pairs([("same", image, image)])
        data = report.to_dict()
        assert data["psnr_db"] == "inf"
        assert data["per_image"][0]["psnr_db"] == "inf"
        json.dumps(data)

    def test_report_to_dict_keeps_finite_values(self):
        assert MetricReport(psnr_db=25.0, ssim=0.8).to_dict()["psnr_db"] == 25.0

    def test_bicubic_baseline(self, tmp_path, rng):
        hr = rng.random((16, 16, 3))
        save_image(tmp_path / "hr" / "a.png", hr)
        save_image(tmp_path / "lr" / "a.png", predetermined_downscale(hr, 2))
        report = bicubic_baseline(tmp_path / "lr", tmp_path / "hr", scale=2)
        assert math.isfinite(report.psnr_db)


class TestCommands:
    def test_infer(self, checkpoint, tmp_path, rng):
        save_image(tmp_path / "lr" / "a.png", rng.random((8, 10, 3)))
        call_command(
            "infer", checkpoint=str(checkpoint), input=str(tmp_path / "lr"), output=str(tmp_path / "sr")
        )
        assert load_image(tmp_path / "sr" / "a_sr.png").shape == (16, 20, 3)
        assert (tmp_path / "sr" / "manifest.json").is_file()
        snapshot = read_json(tmp_path / "sr" / "config.json")
        assert snapshot["variant"] == "full"
        assert snapshot["ensemble"] is False
        assert snapshot["checkpoint"] == str(checkpoint)

    def test_infer_ensemble_single_file(self, checkpoint, tmp_path, rng):
        save_image(tmp_path / "one.png", rng.random((8, 8, 3)))
        call_command(
            "infer",
            checkpoint=str(checkpoint),
            input=str(tmp_path / "one.png"),
            output=str(tmp_path / "sr"),
            ensemble=True,
            suffix="",
        )
        assert load_image(tmp_path / "sr" / "one.png").shape == (16, 16, 3)

    def test_infer_scale_mismatch(self, checkpoint, tmp_path, rng):
        save_image(tmp_path / "one.png", rng.random((8, 8, 3)))
        with pytest.raises(CommandError) as excinfo:
            call_command(
                "infer",
                checkpoint=str(checkpoint),
                input=str(tmp_path / "one.png"),
                output=str(tmp_path / "sr"),
                scale=4,
            )
        assert excinfo.value.returncode == 2

    def test_infer_missing_checkpoint(self, tmp_path):
        with pytest.raises(CommandError) as excinfo:
            call_command(
                "infer",
                checkpoint=str(tmp_path / "missing.ckpt"),
                input=str(tmp_path),
                output=str(tmp_path / "sr"),
            )
        assert excinfo.value.returncode == 2

    def test_eval(self, tmp_path, rng):
        for name in ("a", "b"):
            img = rng.random((16, 16, 3))
            save_image(tmp_path / "refs" / f"{name}.png", img)
            save_image(tmp_path / "results" / f"{name}.png", img)
        call_command(
            "eval",
            results=str(tmp_path / "results"),
            references=str(tmp_path / "refs"),
            output=str(tmp_path / "metrics.json"),
        )
        report = read_json(tmp_path / "metrics.json")
        assert report["psnr_db"] == "inf"
        assert report["ssim"] == pytest.approx(1.0)
        assert read_json(tmp_path / "config.json")["quantized"] is True
        assert (tmp_path / "manifest.json").is_file()

    def test_eval_default_output(self, tmp_path, rng):
        img = rng.random((16, 16, 3))
        save_image(tmp_path / "refs" / "a.png", img)
        save_image(tmp_path / "results" / "a_sr.png", img)
        call_command(
            "eval",
            results=str(tmp_path / "results"),
            references=str(tmp_path / "refs"),
            suffix="_sr",
        )
        run_dir = tmp_path / "results" / "eval"
        assert read_json(run_dir / "metrics.json")["ssim"] == pytest.approx(1.0)
        assert read_json(run_dir / "config.json")["suffix"] == "_sr"
        assert (run_dir / "manifest.json").is_file()

    def test_eval_mismatch(self, tmp_path, rng):
        save_image(tmp_path / "refs" / "a.png", rng.random((16, 16, 3)))
        save_image(tmp_path / "results" / "b.png", rng.random((16, 16, 3)))
        with pytest.raises(CommandError) as excinfo:
            call_command(
                "eval", results=str(tmp_path / "results"), references=str(tmp_path / "refs")
            )
        assert excinfo.value.returncode == 3
        assert "b.png" in str(excinfo.value)

    def test_dump_intermediates(self, checkpoint, tmp_path, rng):
        save_image(tmp_path / "x.png", rng.random((8, 8, 3)))
        save_image(tmp_path / "y.png", rng.random((16, 16, 3)))
        call_command(
            "dump_intermediates",
            checkpoint=str(checkpoint),
            lr=str(tmp_path / "x.png"),
            hr=str(tmp_path / "y.png"),
            output=str(tmp_path / "dump"),
        )
        assert len(list_images(tmp_path / "dump")) == 8
        assert read_json(tmp_path / "dump" / "config.json")["noise_seed"] == 0
        assert (tmp_path / "dump" / "manifest.json").is_file()
