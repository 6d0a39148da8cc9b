import numpy as np
import pytest
import torch
from django.core.management import call_command
from django.core.management.base import CommandError
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from apps.core.exceptions import (
    DatasetError,
    DimensionError,
    SamplingError,
    UnsupportedScaleError,
)
from apps.core.utils import read_json, write_json
from apps.imaging.datasets import UnpairedDataset, build_unpaired_dataset
from apps.imaging.degrade import (
    BlurSpec,
    DegradationRanges,
    DegradationSpec,
    blur_kernel,
    random_degradation,
    synth_degrade,
)
from apps.imaging.files import list_images, load_image, read_manifest, save_image
from apps.imaging.ops import (
    DIHEDRAL_INDICES,
    IDENTITY,
    bicubic_resize,
    compose_dihedral,
    cubic,
    dihedral,
    dihedral_tensor,
    gaussian_kernel,
    inverse_dihedral,
    predetermined_downscale,
    quantize,
)
from apps.imaging.sampling import sample_unaligned_batch, to_array, to_tensor
from apps.imaging.serializers import DegradationRangesSerializer

unit_images = arrays(
    np.float64,
    st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3)),
    elements=st.floats(0.0, 1.0),
)


def _symmetric(t, n):
    if t < 0:
        return -t - 1
    if t >= n:
        return 2 * n - 1 - t
    return t


def _reference_downscale(img, scale):
    """Dense 2D Gaussian convolution followed by a pixel-by-pixel bicubic."""
    sigma = scale / 2
    kernel = gaussian_kernel(sigma)
    radius = kernel.shape[0] // 2
    h, w, c = img.shape
    padded = np.pad(img, ((radius, radius), (radius, radius), (0, 0)), mode="symmetric")
    blurred = np.zeros_like(img)
    for i in range(h):
        for j in range(w):
            window = padded[i : i + kernel.shape[0], j : j + kernel.shape[1]]
            blurred[i, j] = np.tensordot(kernel, window, axes=([0, 1], [0, 1]))

    def weights(center, n):
        taps = [int(np.floor(center)) - 1 + k for k in range(4)]
        wts = np.array([float(cubic(center - t)) for t in taps])
        return [_symmetric(t, n) for t in taps], wts / wts.sum()

    out = np.zeros((h // scale, w // scale, c))
    for i in range(h // scale):
        rows, wr = weights((i + 0.5) * scale - 0.5, h)
        for j in range(w // scale):
            cols, wc = weights((j + 0.5) * scale - 0.5, w)
            for a, r in enumerate(rows):
                for b, q in enumerate(cols):
                    out[i, j] += wr[a] * wc[b] * blurred[r, q]
    return np.clip(out, 0.0, 1.0)


class TestPredeterminedDownscale:
    def test_output_size(self, rng):
        assert predetermined_downscale(rng.random((16, 24, 3)), 4).shape == (4, 6, 3)

    def test_constant_is_preserved(self):
        out = predetermined_downscale(np.full((16, 16, 3), 0.5), 2)
        np.testing.assert_allclose(out, 0.5, atol=1e-12)

    def test_impulse_matches_dense_reference(self):
        img = np.zeros((16, 16, 3))
        img[8, 8] = 1.0
        np.testing.assert_allclose(
            predetermined_downscale(img, 2), _reference_downscale(img, 2), atol=1e-6
        )

    def test_scale_four_uses_sigma_two(self, rng):
        img = rng.random((16, 16, 3))
        np.testing.assert_allclose(
            predetermined_downscale(img, 4), _reference_downscale(img, 4), atol=1e-6
        )

    def test_linear_in_intensity(self, rng):
        img = rng.random((16, 16, 3))
        np.testing.assert_allclose(
            predetermined_downscale(0.3 * img, 2),
            0.3 * predetermined_downscale(img, 2),
            atol=1e-6,
        )

    def test_indivisible_size(self, rng):
        with pytest.raises(DimensionError):
            predetermined_downscale(rng.random((15, 16, 3)), 2)

    @pytest.mark.parametrize("scale", [1, 3, 8])
    def test_unsupported_scale(self, rng, scale):
        with pytest.raises(UnsupportedScaleError):
            predetermined_downscale(rng.random((24, 24, 3)), scale)


def test_bicubic_identity_resize(rng):
    img = rng.random((5, 7, 3))
    np.testing.assert_allclose(bicubic_resize(img, 5, 7), img, atol=1e-12)


class TestDihedral:
    def test_identity(self, image):
        np.testing.assert_array_equal(dihedral(image, IDENTITY), image)

    def test_quarter_turn_is_counter_clockwise(self):
        img = np.array([[1, 2], [3, 4]], dtype=float)[..., None].repeat(3, axis=2)
        np.testing.assert_array_equal(dihedral(img, 2)[..., 0], [[2, 4], [1, 3]])

    def test_eight_distinct_operators(self, rng):
        img = rng.random((4, 4, 3))
        outputs = {dihedral(img, i).tobytes() for i in DIHEDRAL_INDICES}
        assert len(outputs) == 8

    @pytest.mark.parametrize("index", DIHEDRAL_INDICES)
    def test_inverse_restores_input(self, rng, index):
        img = rng.random((5, 7, 3))
        restored = dihedral(dihedral(img, index), inverse_dihedral(index))
        np.testing.assert_array_equal(restored, img)

    @pytest.mark.parametrize("first", DIHEDRAL_INDICES)
    @pytest.mark.parametrize("second", DIHEDRAL_INDICES)
    def test_group_closure(self, rng, first, second):
        img = rng.random((5, 7, 3))
        composed = compose_dihedral(first, second)
        assert composed in DIHEDRAL_INDICES
        np.testing.assert_array_equal(
            dihedral(dihedral(img, second), first), dihedral(img, composed)
        )

    @pytest.mark.parametrize("index", DIHEDRAL_INDICES)
    def test_tensor_version_matches(self, rng, index):
        img = rng.random((5, 7, 3))
        tensor = to_tensor(img, dtype=torch.float64)
        np.testing.assert_array_equal(to_array(dihedral_tensor(tensor, index))[0], dihedral(img, index))

    def test_invalid_index(self, image):
        with pytest.raises(ValueError):
            dihedral(image, 0)

    @settings(max_examples=30, deadline=None)
    @given(unit_images, st.sampled_from(DIHEDRAL_INDICES))
    def test_round_trip_property(self, img, index):
        np.testing.assert_array_equal(dihedral(dihedral(img, index), inverse_dihedral(index)), img)


class TestSampling:
    def test_shapes(self, rng):
        lr_pool = [rng.random((40, 40, 3))]
        hr_pool = [rng.random((160, 160, 3))]
        batch = sample_unaligned_batch(lr_pool, hr_pool, 32, 4, 16, rng)
        assert batch.x.shape == (16, 32, 32, 3)
        assert batch.y.shape == (16, 128, 128, 3)
        assert batch.y_down.shape == (16, 32, 32, 3)

    def test_y_down_is_downscale_of_y(self, rng):
        batch = sample_unaligned_batch([rng.random((12, 12, 3))], [rng.random((24, 24, 3))], 8, 2, 3, rng)
        for y, y_down in zip(batch.y, batch.y_down):
            np.testing.assert_allclose(
                y_down, predetermined_downscale(y, 2).astype(np.float32), atol=1e-6
            )

    def test_fixed_seed_is_deterministic(self, rng):
        lr_pool = [rng.random((20, 20, 3))]
        hr_pool = [rng.random((40, 40, 3))]
        first = sample_unaligned_batch(lr_pool, hr_pool, 8, 2, 1, np.random.default_rng(5))
        second = sample_unaligned_batch(lr_pool, hr_pool, 8, 2, 1, np.random.default_rng(5))
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    def test_lr_draws_ignore_hr_pool(self, rng):
        lr_pool = [rng.random((20, 20, 3))]
        one = sample_unaligned_batch(lr_pool, [rng.random((40, 40, 3))], 8, 2, 4, np.random.default_rng(9))
        other = sample_unaligned_batch(
            lr_pool, [rng.random((64, 48, 3)), rng.random((40, 40, 3))], 8, 2, 4, np.random.default_rng(9)
        )
        np.testing.assert_array_equal(one.x, other.x)
        assert not np.array_equal(one.y, other.y)

    def test_patch_too_large(self, rng):
        with pytest.raises(SamplingError):
            sample_unaligned_batch([rng.random((8, 8, 3))], [rng.random((64, 64, 3))], 16, 2, 1, rng)

    def test_empty_pool(self, rng):
        with pytest.raises(SamplingError):
            sample_unaligned_batch([], [rng.random((64, 64, 3))], 8, 2, 1, rng)


class TestSynthDegrade:
    def test_identity_spec(self, image):
        np.testing.assert_array_equal(synth_degrade(image, DegradationSpec()), image)

    def test_noise_level(self):
        img = np.full((64, 64, 3), 0.5)
        out = synth_degrade(img, DegradationSpec(noise_sigma=0.1, seed=3))
        assert abs(out.std() - 0.1) < 0.01

    def test_same_seed_is_bit_identical(self, image):
        spec = DegradationSpec(
            blur=BlurSpec(kind="gaussian", sigma=1.0), noise_sigma=0.05, shift=(0.3, -0.4), seed=11
        )
        np.testing.assert_array_equal(synth_degrade(image, spec), synth_degrade(image, spec))

    @pytest.mark.parametrize(
        "blur",
        [BlurSpec(kind="gaussian", sigma=1.3), BlurSpec(kind="motion", length=5, angle=30.0)],
    )
    def test_kernel_has_unit_mass(self, blur):
        assert blur_kernel(blur).sum() == pytest.approx(1.0)

    def test_output_is_clamped(self, image):
        out = synth_degrade(image, DegradationSpec(noise_sigma=0.5, seed=1))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_random_degradation_respects_ranges(self, rng):
        ranges = DegradationRanges(noise_sigma=(0.01, 0.02), blur_sigma=(0.5, 1.5), shift_max=0.5)
        for _ in range(20):
            spec = random_degradation(rng, ranges)
            assert 0.01 <= spec.noise_sigma <= 0.02
            assert 0.5 <= spec.blur.sigma <= 1.5
            assert all(abs(v) <= 0.5 for v in spec.shift)


class TestDataset:
    def test_build_and_load(self, hr_sources, tmp_path):
        root = build_unpaired_dataset(
            list_images(hr_sources), tmp_path / "data", scale=2, multiplicity=2, holdout=1, seed=1
        )
        entries = read_manifest(root)
        assert sum(1 for split, _, _ in entries if split == "train") == 10
        assert sum(1 for split, _, _ in entries if split == "val") == 1
        assert len(read_json(root / "degradations.json")) == 11

        dataset = UnpairedDataset.load(root)
        assert len(dataset.lr_pool) == 10
        assert len(dataset.hr_pool) == 5
        assert len(dataset.val_pairs) == 1
        lr, hr = dataset.val_pairs[0]
        assert hr.shape == (32, 32, 3) and lr.shape == (16, 16, 3)

    def test_plain_downscale_without_degradation(self, hr_sources, tmp_path):
        root = build_unpaired_dataset(list_images(hr_sources), tmp_path / "data", scale=2)
        hr = load_image(root / "hr" / "img00.png")
        lr = load_image(root / "lr" / "img00_0.png")
        np.testing.assert_allclose(lr, quantize(predetermined_downscale(hr, 2)), atol=1e-6)

    def test_same_seed_is_byte_identical(self, hr_sources, tmp_path):
        ranges = DegradationRanges(noise_sigma=(0.0, 0.1), blur_sigma=(0.0, 1.0))
        for name in ("a", "b"):
            build_unpaired_dataset(
                list_images(hr_sources), tmp_path / name, scale=2, ranges=ranges, multiplicity=2, seed=4
            )
        for path in sorted((tmp_path / "a").rglob("*.*")):
            assert path.read_bytes() == (tmp_path / "b" / path.relative_to(tmp_path / "a")).read_bytes()

    def test_degradation_records_are_validated(self, hr_sources, tmp_path):
        ranges = DegradationRanges(noise_sigma=(0.0, 0.1), blur_sigma=(0.5, 1.0))
        root = build_unpaired_dataset(
            list_images(hr_sources), tmp_path / "data", scale=2, ranges=ranges, seed=2
        )
        dataset = UnpairedDataset.load(root)
        assert set(dataset.degradations) == set(read_json(root / "degradations.json"))
        spec = dataset.degradations["lr/img00_0.png"]
        assert isinstance(spec, DegradationSpec)
        assert spec.blur.kind == "gaussian"

        records = read_json(root / "degradations.json")
        records["lr/img00_0.png"]["noise_sigma"] = -1.0
        write_json(root / "degradations.json", records)
        with pytest.raises(DatasetError) as excinfo:
            UnpairedDataset.load(root)
        assert "noise_sigma" in excinfo.value.details["errors"]

    def test_lr_prescale(self, hr_sources, tmp_path):
        root = build_unpaired_dataset(list_images(hr_sources), tmp_path / "data", scale=2)
        dataset = UnpairedDataset.load(root, lr_prescale=2)
        assert dataset.lr_pool[0].shape == (32, 32, 3)


def test_png_round_trip_is_8_bit(tmp_path, image):
    path = save_image(tmp_path / "img.png", image)
    np.testing.assert_allclose(load_image(path), quantize(image), atol=1e-6)


def test_ranges_serializer_rejects_inverted_bounds():
    serializer = DegradationRangesSerializer(data={"noise_sigma": [0.2, 0.1]})
    assert not serializer.is_valid()
    assert "noise_sigma" in serializer.errors


class TestMakeDatasetCommand:
    def test_missing_source_exits_with_usage_code(self, tmp_path):
        with pytest.raises(CommandError) as excinfo:
            call_command("make_dataset", source=str(tmp_path / "none"), output=str(tmp_path / "out"))
        assert excinfo.value.returncode == 2
        assert "none" in str(excinfo.value)

    def test_multiplicity(self, hr_sources, tmp_path):
        out = tmp_path / "out"
        call_command(
            "make_dataset",
            source=str(hr_sources),
            output=str(out),
            multiplicity=4,
            noise_sigma=[0.0, 0.05],
            seed=3,
        )
        assert len(list_images(out / "lr")) == 24
        assert (out / "manifest.json").is_file()
