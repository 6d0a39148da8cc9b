"""The training loop: sampling, steps, schedules, checkpoints and logs."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from torch.utils.data import DataLoader
from tqdm import tqdm

from apps.core.exceptions import DatasetError, DivergenceError
from apps.core.jsonlog import JsonLinesWriter, truncate_json_lines
from apps.core.utils import resolve_device, seed_everything
from apps.evaluation.inference import infer
from apps.evaluation.metrics import psnr
from apps.imaging.sampling import PatchStream, sample_unaligned_batch
from apps.networks.bundle import build_bundle

from .config import TrainConfig, Variant
from .schedules import apply_lr_schedule, geo_weight
from .state import TrainState, build_optimizers, checkpoint_load, checkpoint_save
from .steps import train_step

logger = logging.getLogger(__name__)

LOSS_LOG = "losses.jsonl"
VALIDATION_LOG = "validation.jsonl"
CHECKPOINT_DIR = "checkpoints"
FINAL_CHECKPOINT = "final.ckpt"
BEST_CHECKPOINT = "best.ckpt"
DIVERGED_CHECKPOINT = "diverged.ckpt"


@dataclass
class TrainingArtifacts:
    output_dir: Path
    final_checkpoint: Path
    loss_log: Path
    checkpoints: list = field(default_factory=list)
    validation_log: Path = None
    best_checkpoint: Path = None


def checkpoint_name(iteration):
    return f"iter_{iteration:07d}.ckpt"


def _passthrough(batch):
    return batch


def batch_source(cfg, dataset, state):
    """
    Endless iterator of unaligned numpy batches. With ``workers == 0`` draws
    come from ``state.data_rng``, which checkpoints capture; prefetch
    workers use their own seeded streams.
    """
    if cfg.workers > 0:
        stream = PatchStream(
            dataset.lr_pool, dataset.hr_pool, cfg.lr_patch, cfg.scale, cfg.batch, cfg.seed
        )
        loader = DataLoader(
            stream, batch_size=None, num_workers=cfg.workers, collate_fn=_passthrough
        )
        yield from loader
        return
    while True:
        yield sample_unaligned_batch(
            dataset.lr_pool, dataset.hr_pool, cfg.lr_patch, cfg.scale, cfg.batch, state.data_rng
        )


def validate(bundle, cfg, val_pairs):
    """Mean PSNR of plain inference over the validation pairs."""
    skip = cfg.variant is Variant.TRAIN_ON_DEGRADED
    bundle.eval()
    try:
        scores = [psnr(infer(bundle, lr, skip), hr) for lr, hr in val_pairs]
    finally:
        bundle.train()
    return float(np.mean(scores))


def run_training(cfg: TrainConfig, dataset, output_dir, resume=None, progress=False):
    """
    Run ``train_step`` until ``cfg.total_iters``. Writes a JSON-lines loss log,
    a checkpoint every ``checkpoint_every`` iterations and ``final.ckpt``.
    With ``resume`` the run continues from that checkpoint's iteration and
    the logs are cut back to it.
    """
    if not dataset.lr_pool or not dataset.hr_pool:
        raise DatasetError(f"Dataset at {dataset.root} has an empty LR or HR pool")

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    device = resolve_device(cfg.device or None)
    seed_everything(cfg.seed)
    if resume:
        bundle, state = checkpoint_load(resume, device=device)
        state.config = cfg.to_dict()
        logger.info(f"Resuming from {resume} at iteration {state.iteration}")
    else:
        bundle = build_bundle(cfg.model).to(device)
        state = TrainState.fresh(
            cfg.seed,
            build_optimizers(bundle, cfg.optim_gan, cfg.optim_sr),
            config=cfg.to_dict(),
        )
    bundle.train()

    loss_log = output_dir / LOSS_LOG
    validation_log = output_dir / VALIDATION_LOG
    truncate_json_lines(loss_log, state.iteration - 1)
    truncate_json_lines(validation_log, state.iteration)
    artifacts = TrainingArtifacts(
        output_dir=output_dir,
        final_checkpoint=output_dir / FINAL_CHECKPOINT,
        loss_log=loss_log,
    )

    def save(path):
        return checkpoint_save(bundle, state, path)

    batches = batch_source(cfg, dataset, state)
    steps = tqdm(
        range(state.iteration, cfg.total_iters),
        initial=state.iteration,
        total=cfg.total_iters,
        disable=not progress,
        desc="train",
    )
    with JsonLinesWriter(loss_log, append=bool(resume)) as log:
        for _ in steps:
            iteration = state.iteration
            lr_gan, lr_sr = apply_lr_schedule(state.optimizers, iteration, cfg)
            batch = next(batches).to_tensors(device)
            try:
                state, report = train_step(bundle, batch, cfg, state)
            except DivergenceError:
                save(output_dir / DIVERGED_CHECKPOINT)
                logger.error(f"Training diverged at iteration {iteration}")
                raise

            log.write(
                {
                    "iter": iteration,
                    "lr_gan": lr_gan,
                    "lr_sr": lr_sr,
                    "lambda_geo": geo_weight(iteration, cfg),
                    **report.to_dict(),
                }
            )

            if state.iteration % cfg.checkpoint_every == 0:
                path = output_dir / CHECKPOINT_DIR / checkpoint_name(state.iteration)
                artifacts.checkpoints.append(save(path))

            if (
                cfg.validate_every
                and dataset.val_pairs
                and state.iteration % cfg.validate_every == 0
            ):
                score = validate(bundle, cfg, dataset.val_pairs)
                with JsonLinesWriter(validation_log, append=True) as vlog:
                    vlog.write({"iter": state.iteration, "psnr_db": score})
                artifacts.validation_log = validation_log
                if state.best_metric is None or score > state.best_metric:
                    state.best_metric, state.best_iter = score, state.iteration
                    artifacts.best_checkpoint = save(output_dir / BEST_CHECKPOINT)
                    logger.info(f"New best validation PSNR {score:.3f} dB at {state.iteration}")

    save(artifacts.final_checkpoint)
    logger.info(f"Finished training at iteration {state.iteration}")
    return artifacts
