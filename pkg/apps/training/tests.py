import json
import warnings

import numpy as np
import pytest
import torch
from django.core.management import call_command
from django.core.management.base import CommandError
from torch import nn

from apps.core.exceptions import ConfigError, CorruptCheckpointError, DivergenceError
from apps.core.jsonlog import read_json_lines
from apps.core.utils import read_json
from apps.evaluation.inference import infer
from apps.evaluation.metrics import psnr
from apps.imaging.datasets import UnpairedDataset, build_unpaired_dataset
from apps.imaging.files import list_images
from apps.imaging.ops import bicubic_upscale, gaussian_blur, predetermined_downscale
from apps.imaging.sampling import sample_unaligned_batch, to_array, to_tensor
from apps.losses.weights import IdentityMode, LossWeights
from apps.networks.bundle import build_bundle
from apps.networks.config import ModelConfig
from apps.networks.generators import draw_noise
from apps.training.config import GeoRamp, OptimSpec, TrainConfig, Variant
from apps.training.profiles import PROFILES, profile_defaults
from apps.training.runner import checkpoint_name, run_training
from apps.training.schedules import apply_lr_schedule, geo_weight, lr_schedule
from apps.training.serializers import load_train_config, resolve_train_config
from apps.training.state import TrainState, build_optimizers, checkpoint_load, checkpoint_save
from apps.training.steps import (
    discriminator_step,
    generator_step,
    sr_input_for,
    sr_step,
    train_step,
    translate,
)


def tiny_config(**changes):
    base = dict(
        model=ModelConfig.tiny(scale=2, channels=8, groups=1, rcabs=1, blocks=1),
        scale=2,
        batch=2,
        lr_patch=8,
        total_iters=4,
        lr_milestones=(2,),
        checkpoint_every=2,
        seed=0,
    )
    return TrainConfig(**{**base, **changes})


@pytest.fixture
def dataset(tmp_path, rng):
    return UnpairedDataset(
        root=tmp_path,
        lr_pool=[rng.random((16, 16, 3)) for _ in range(3)],
        hr_pool=[rng.random((32, 32, 3)) for _ in range(3)],
        val_pairs=[(rng.random((12, 12, 3)), rng.random((24, 24, 3)))],
    )


def _setup(cfg, dataset):
    torch.manual_seed(cfg.seed)
    bundle = build_bundle(cfg.model)
    state = TrainState.fresh(cfg.seed, build_optimizers(bundle, cfg.optim_gan, cfg.optim_sr))
    batch = sample_unaligned_batch(
        dataset.lr_pool, dataset.hr_pool, cfg.lr_patch, cfg.scale, cfg.batch, state.data_rng
    ).to_tensors()
    return bundle, state, batch


class TestSchedules:
    @pytest.mark.parametrize(
        "iteration, expected", [(0, 1e-4), (99_999, 1e-4), (100_000, 5e-5), (300_000, 6.25e-6)]
    )
    def test_lr_schedule(self, iteration, expected):
        milestones = TrainConfig().lr_milestones
        assert lr_schedule(1e-4, iteration, milestones) == pytest.approx(expected)

    def test_sr_rate_is_constant(self, tiny_bundle):
        cfg = tiny_config()
        optimizers = build_optimizers(tiny_bundle)
        lr_gan, lr_sr = apply_lr_schedule(optimizers, 3, cfg)
        assert lr_gan == pytest.approx(5e-5)
        assert lr_sr == cfg.optim_sr.lr
        assert optimizers["discriminators"].param_groups[0]["lr"] == pytest.approx(5e-5)
        assert optimizers["sr"].param_groups[0]["lr"] == cfg.optim_sr.lr

    def test_geo_ramp(self):
        cfg = tiny_config(total_iters=100, geo_ramp=GeoRamp(enabled=True))
        values = [geo_weight(k, cfg) for k in range(100)]
        assert values[0] == 0.0
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert values[10] == cfg.weights.lambda_geo
        assert values[9] < cfg.weights.lambda_geo

    def test_no_ramp(self):
        assert geo_weight(0, tiny_config()) == tiny_config().weights.lambda_geo


class TestConfig:
    def test_full_scale_defaults(self):
        data = TrainConfig().to_dict()
        assert (data["total_iters"], data["batch"], data["lr_patch"]) == (300_000, 16, 32)
        assert data["optim_gan"]["beta1"] == 0.5
        assert data["optim_sr"]["beta1"] == 0.9

    def test_dict_round_trip(self):
        cfg = tiny_config(variant="no_d_hr")
        assert load_train_config(cfg.to_dict()) == cfg
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_no_d_hr_zeroes_gamma(self):
        assert tiny_config(variant=Variant.NO_D_HR).weights_at(0).gamma == 0.0
        assert tiny_config().weights_at(0).gamma == 0.1

    def test_milestones_must_increase(self):
        with pytest.raises(ConfigError):
            tiny_config(lr_milestones=(5, 5))
        with pytest.raises(ConfigError):
            load_train_config({"lr_milestones": [3, 2]})

    def test_unknown_reconstruction(self):
        with pytest.raises(ConfigError):
            load_train_config({"reconstruction": "perceptual"})

    @pytest.mark.parametrize("name", sorted(PROFILES))
    def test_profiles_resolve(self, name):
        cfg, _ = resolve_train_config(profile=name)
        assert cfg.model.scale == cfg.scale

    def test_face_profile(self):
        cfg, _ = resolve_train_config(profile="face")
        assert cfg.lr_prescale == 2
        assert cfg.weights.idt_mode.value == "source_lr"

    def test_unknown_profile(self):
        with pytest.raises(ConfigError):
            profile_defaults("nope")

    def test_precedence(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"profile": "desk", "batch": 8, "total_iters": 50, "dataset": "/d"}))
        cfg, paths = resolve_train_config(path, overrides={"total_iters": 7, "seed": None})
        assert cfg.lr_patch == 16  # profile
        assert cfg.batch == 8  # file
        assert cfg.total_iters == 7  # flag
        assert cfg.model.sr.rcabs_per_group == 2
        assert paths == {"dataset": "/d", "output": None}

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError):
            resolve_train_config(tmp_path / "missing.json")


class TestStep:
    def test_update_isolation(self, dataset):
        cfg = tiny_config()
        bundle, state, batch = _setup(cfg, dataset)
        noise = draw_noise(batch.y_down, state.noise_rng)
        generators = {"g_correct", "g_degrade"}
        discriminators = {"d_lr_x", "d_lr_yd", "d_hr"}

        def changed(before):
            after = bundle.parameter_digest()
            return {name for name in after if after[name] != before[name]}

        before = bundle.parameter_digest()
        fakes = translate(bundle, batch, noise)
        discriminator_step(bundle, batch, fakes, cfg, state, use_hr=True)
        assert changed(before) == discriminators

        before = bundle.parameter_digest()
        _, fake_x, pseudo = generator_step(bundle, batch, fakes, cfg.weights_at(0), cfg, state)
        assert changed(before) == generators

        before = bundle.parameter_digest()
        sr_step(bundle, pseudo, batch, cfg, state)
        assert changed(before) == {"sr"}

    def test_no_d_hr_never_touches_hr_discriminator(self, dataset):
        cfg = tiny_config(variant="no_d_hr")
        bundle, state, batch = _setup(cfg, dataset)
        before = bundle.parameter_digest()["d_hr"]
        for _ in range(2):
            state, report = train_step(bundle, batch, cfg, state)
            assert report.adv_hr == 0.0
            assert report.d_hr == 0.0
            assert all(p.grad is None or not p.grad.any() for p in bundle.d_hr.parameters())
        assert bundle.parameter_digest()["d_hr"] == before

    def test_generators_run_once_per_step(self, dataset):
        cfg = tiny_config(weights=LossWeights(lambda_geo=0.0, idt_mode=IdentityMode.SOURCE_LR))
        bundle, state, batch = _setup(cfg, dataset)
        calls = {"g_correct": 0, "g_degrade": 0}

        def count(name):
            def hook(module, args, output):
                calls[name] += 1

            return hook

        for name in calls:
            getattr(bundle, name).register_forward_hook(count(name))
        norm = next(m for m in bundle.g_degrade.modules() if isinstance(m, nn.BatchNorm2d))
        tracked = norm.num_batches_tracked.item()

        train_step(bundle, batch, cfg, state)
        assert calls == {"g_correct": 2, "g_degrade": 1}
        assert norm.num_batches_tracked.item() == tracked + 1

    def test_finite_check_does_not_warn(self, dataset):
        cfg = tiny_config()
        bundle, state, batch = _setup(cfg, dataset)
        with warnings.catch_warnings():
            warnings.filterwarnings("error", message=".*requires_grad.*")
            train_step(bundle, batch, cfg, state)

    def test_degradation_depends_on_noise_after_training(self, dataset):
        cfg = tiny_config()
        bundle, state, batch = _setup(cfg, dataset)
        state, _ = train_step(bundle, batch, cfg, state)
        bundle.eval()
        generator = torch.Generator().manual_seed(7)
        with torch.no_grad():
            first = bundle.g_degrade(batch.y_down, draw_noise(batch.y_down, generator))
            second = bundle.g_degrade(batch.y_down, draw_noise(batch.y_down, generator))
        assert (first - second).abs().mean().item() > 1e-4

    def test_report_total_is_weighted_sum(self, dataset):
        cfg = tiny_config()
        bundle, state, batch = _setup(cfg, dataset)
        _, report = train_step(bundle, batch, cfg, state)
        w = cfg.weights_at(0)
        expected = (
            report.adv_x + report.adv_yd + w.gamma * report.adv_hr + w.lambda_cyc * report.cyc
            + w.lambda_idt * report.idt + w.lambda_geo * report.geo
        )
        assert report.total_trans == pytest.approx(expected, abs=1e-6)
        assert state.iteration == 1

    def test_sr_inputs_per_variant(self, dataset):
        _, _, batch = _setup(tiny_config(), dataset)
        fake_x, pseudo = torch.zeros(1), torch.ones(1)
        assert sr_input_for(Variant.FULL, batch, fake_x, pseudo) is pseudo
        assert sr_input_for(Variant.NO_D_HR, batch, fake_x, pseudo) is pseudo
        assert sr_input_for(Variant.TRAIN_ON_CLEAN, batch, fake_x, pseudo) is batch.y_down
        assert sr_input_for(Variant.TRAIN_ON_DEGRADED, batch, fake_x, pseudo) is fake_x

    def test_nan_aborts(self, dataset):
        cfg = tiny_config()
        bundle, state, batch = _setup(cfg, dataset)
        with torch.no_grad():
            bundle.g_correct.tail.weight.fill_(float("nan"))
        with pytest.raises(DivergenceError):
            train_step(bundle, batch, cfg, state)


class TestCheckpoint:
    def test_round_trip(self, dataset, tmp_path):
        cfg = tiny_config()
        bundle, state, batch = _setup(cfg, dataset)
        state, _ = train_step(bundle, batch, cfg, state)
        first = checkpoint_save(bundle, state, tmp_path / "a.ckpt")

        loaded_bundle, loaded_state = checkpoint_load(first)
        assert loaded_state.iteration == 1
        for key, value in bundle.state_dict().items():
            assert torch.equal(loaded_bundle.state_dict()[key], value)

        second = checkpoint_save(loaded_bundle, loaded_state, tmp_path / "b.ckpt")
        assert first.read_bytes() == second.read_bytes()

    def test_random_streams_restored(self, dataset, tmp_path):
        cfg = tiny_config()
        bundle, state, _ = _setup(cfg, dataset)
        path = checkpoint_save(bundle, state, tmp_path / "s.ckpt")
        _, loaded = checkpoint_load(path)
        assert loaded.data_rng.random() == state.data_rng.random()
        assert torch.equal(
            torch.randn(3, generator=loaded.noise_rng), torch.randn(3, generator=state.noise_rng)
        )

    def test_truncated(self, dataset, tmp_path):
        bundle, state, _ = _setup(tiny_config(), dataset)
        path = checkpoint_save(bundle, state, tmp_path / "t.ckpt")
        path.write_bytes(path.read_bytes()[: len(path.read_bytes()) // 2])
        with pytest.raises(CorruptCheckpointError):
            checkpoint_load(path)


class TestRunTraining:
    def test_checkpoint_cadence(self, dataset, tmp_path):
        cfg = tiny_config(total_iters=10, checkpoint_every=5)
        artifacts = run_training(cfg, dataset, tmp_path / "run")
        names = sorted(p.name for p in (tmp_path / "run" / "checkpoints").iterdir())
        assert names == [checkpoint_name(5), checkpoint_name(10)]
        assert artifacts.final_checkpoint.is_file()
        records = read_json_lines(artifacts.loss_log)
        assert [r["iter"] for r in records] == list(range(10))
        assert {"lr_gan", "lr_sr", "lambda_geo", "rec", "total_trans"} <= set(records[0])

    def test_seeded_runs_are_identical(self, dataset, tmp_path):
        cfg = tiny_config()
        first = run_training(cfg, dataset, tmp_path / "a")
        second = run_training(cfg, dataset, tmp_path / "b")
        assert first.loss_log.read_bytes() == second.loss_log.read_bytes()

    def test_resume_reproduces_trajectory(self, dataset, tmp_path):
        cfg = tiny_config()
        full = run_training(cfg, dataset, tmp_path / "full")
        resumed = run_training(
            cfg,
            dataset,
            tmp_path / "resumed",
            resume=tmp_path / "full" / "checkpoints" / checkpoint_name(2),
        )
        expected = read_json_lines(full.loss_log)[2:]
        actual = read_json_lines(resumed.loss_log)
        assert [r["iter"] for r in actual] == [2, 3]
        for want, got in zip(expected, actual):
            for key, value in want.items():
                assert got[key] == pytest.approx(value, abs=1e-6)

    def test_validation_keeps_best(self, dataset, tmp_path):
        cfg = tiny_config(validate_every=2)
        artifacts = run_training(cfg, dataset, tmp_path / "run")
        assert [r["iter"] for r in read_json_lines(artifacts.validation_log)] == [2, 4]
        assert artifacts.best_checkpoint.is_file()

    def test_losses_fall_over_a_short_run(self, tmp_path):
        rng = np.random.default_rng(0)
        images = [_smooth_image(rng, size=32) for _ in range(8)]
        dataset = UnpairedDataset(
            root=tmp_path,
            lr_pool=[_real_lr(hr, rng) for hr in images[:4]],
            hr_pool=images[4:],
        )
        cfg = tiny_config(
            total_iters=150,
            batch=4,
            lr_milestones=(),
            checkpoint_every=150,
            optim_gan=OptimSpec(lr=5e-4),
            optim_sr=OptimSpec(lr=1e-3, beta1=0.9),
        )
        records = read_json_lines(run_training(cfg, dataset, tmp_path / "run").loss_log)
        first, last = records[:10], records[-10:]
        assert np.mean([r["cyc"] for r in last]) < np.mean([r["cyc"] for r in first])
        assert np.mean([r["rec"] for r in last]) < records[0]["rec"]

    def test_divergence_writes_snapshot(self, dataset, tmp_path, monkeypatch):
        def diverge(bundle, batch, cfg, state):
            raise DivergenceError("Non-finite loss", losses={"rec": float("nan")})

        monkeypatch.setattr("apps.training.runner.train_step", diverge)
        with pytest.raises(DivergenceError):
            run_training(tiny_config(), dataset, tmp_path / "run")
        assert (tmp_path / "run" / "diverged.ckpt").is_file()
        assert not (tmp_path / "run" / "final.ckpt").exists()


class TestTrainCommand:
    @pytest.fixture
    def dataset_dir(self, hr_sources, tmp_path):
        return build_unpaired_dataset(list_images(hr_sources), tmp_path / "data", scale=2, holdout=1)

    @pytest.fixture
    def config_file(self, tmp_path):
        path = tmp_path / "tiny.json"
        data = tiny_config().to_dict()
        data["lr_milestones"] = [1]
        path.write_text(json.dumps(data))
        return path

    def test_missing_dataset(self, tmp_path, config_file):
        with pytest.raises(CommandError) as excinfo:
            call_command("train", config=str(config_file), dataset=str(tmp_path / "nowhere"))
        assert excinfo.value.returncode == 2
        assert "nowhere" in str(excinfo.value)

    def test_invalid_config(self, tmp_path, dataset_dir):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"batch": 0}))
        with pytest.raises(CommandError) as excinfo:
            call_command("train", config=str(path), dataset=str(dataset_dir))
        assert excinfo.value.returncode == 2

    def test_short_run(self, tmp_path, dataset_dir, config_file):
        out = tmp_path / "run"
        call_command(
            "train",
            config=str(config_file),
            dataset=str(dataset_dir),
            output=str(out),
            iters=2,
            variant="no_d_hr",
        )
        snapshot = read_json(out / "config.json")
        assert snapshot["variant"] == "no_d_hr"
        assert snapshot["total_iters"] == 2
        assert (out / "final.ckpt").is_file()
        assert (out / "manifest.json").is_file()

        call_command("train", resume=str(out / "checkpoints" / checkpoint_name(2)), iters=4)
        assert [r["iter"] for r in read_json_lines(out / "losses.jsonl")] == [0, 1, 2, 3]



def _smooth_image(rng, size=64):
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    img = np.zeros((size, size, 3))
    for _ in range(4):
        fx, fy = rng.uniform(0.5, 3.0, 2)
        img += rng.uniform(0.05, 0.15, 3) * np.sin(
            2 * np.pi * (fx * xx + fy * yy)[..., None] + rng.uniform(0, 2 * np.pi, 3)
        )
    return np.clip(0.5 + img, 0.0, 1.0)


def _real_lr(hr, rng):
    lr = predetermined_downscale(gaussian_blur(hr, 2.0), 2)
    return np.clip(lr + 0.1 * rng.standard_normal(lr.shape), 0.0, 1.0)


def _desk_experiment(seed, variant, tmp_path):
    rng = np.random.default_rng(seed)
    images = [_smooth_image(rng) for _ in range(72)]
    dataset = UnpairedDataset(
        root=tmp_path,
        lr_pool=[_real_lr(hr, rng) for hr in images[:32]],
        hr_pool=images[32:64],
    )
    cfg, _ = resolve_train_config(
        profile="desk", overrides={"seed": seed, "variant": variant, "validate_every": 0}
    )
    artifacts = run_training(cfg, dataset, tmp_path / f"{variant}-{seed}")
    bundle, _ = checkpoint_load(artifacts.final_checkpoint)
    bundle.eval()

    scores = {"input": [], "corrected": [], "bicubic": [], "pipeline": []}
    for hr in images[64:]:
        x = _real_lr(hr, rng)
        clean = predetermined_downscale(hr, 2)
        with torch.no_grad():
            corrected = to_array(bundle.g_correct(to_tensor(x)))[0].clip(0.0, 1.0)
        scores["input"].append(psnr(x, clean))
        scores["corrected"].append(psnr(corrected, clean))
        scores["bicubic"].append(psnr(bicubic_upscale(x, 2).clip(0.0, 1.0), hr))
        scores["pipeline"].append(psnr(infer(bundle, x), hr))
    return {name: float(np.mean(values)) for name, values in scores.items()}


@pytest.mark.slow
def test_desk_scale_pipeline_beats_noisy_input(tmp_path):
    passes = 0
    for seed in (0, 1, 2):
        scores = _desk_experiment(seed, "full", tmp_path)
        passes += (
            scores["corrected"] - scores["input"] >= 1.0
            and scores["pipeline"] - scores["bicubic"] >= 0.5
        )
    assert passes >= 2


@pytest.mark.slow
def test_desk_scale_full_not_worse_than_clean_training(tmp_path):
    wins = sum(
        _desk_experiment(seed, "full", tmp_path)["pipeline"]
        >= _desk_experiment(seed, "train_on_clean", tmp_path)["pipeline"]
        for seed in (0, 1, 2)
    )
    assert wins >= 2
