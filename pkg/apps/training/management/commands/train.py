"""Management command to train the correction, degradation and SR networks.

Config precedence is profile < --config file < flags. A resumed run takes
its config, dataset and output directory from the checkpoint's run unless
flags say otherwise.
"""

import logging
from pathlib import Path

from apps.core.commands import RunCommand
from apps.core.exceptions import ConfigError
from apps.core.manifest import MANIFEST_NAME, RunManifest, default_run_dir
from apps.imaging.datasets import UnpairedDataset
from apps.training.config import Variant
from apps.training.profiles import PROFILES, deep_merge
from apps.training.runner import CHECKPOINT_DIR, run_training
from apps.training.serializers import load_train_config, resolve_train_config
from apps.training.state import checkpoint_meta

logger = logging.getLogger(__name__)


def _run_dir_of(checkpoint):
    checkpoint = Path(checkpoint).resolve()
    parent = checkpoint.parent
    return parent.parent if parent.name == CHECKPOINT_DIR else parent


class Command(RunCommand):
    help = "Train the pseudo-supervised SR pipeline on an unpaired dataset"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--config", help="JSON run config")
        parser.add_argument("--profile", choices=sorted(PROFILES), help="Named preset")
        parser.add_argument("--dataset", help="Dataset root written by make_dataset")
        parser.add_argument("--output", help="Run directory (default: under SR_OUTPUT_ROOT)")
        parser.add_argument("--variant", choices=[v.value for v in Variant])
        parser.add_argument("--iters", type=int, help="Total training iterations")
        parser.add_argument("--batch", type=int, help="Mini-batch size")
        parser.add_argument("--checkpoint-every", type=int)
        parser.add_argument("--device", help="Torch device, e.g. cpu or cuda:0")
        parser.add_argument("--resume", help="Checkpoint to continue from")

    def _overrides(self, options):
        return {
            "seed": options["seed"],
            "variant": options["variant"],
            "total_iters": options["iters"],
            "batch": options["batch"],
            "checkpoint_every": options["checkpoint_every"],
            "device": options["device"],
            "dataset": options["dataset"],
            "output": options["output"],
        }

    def _resolve(self, options):
        overrides = self._overrides(options)
        resume = options["resume"]
        if not resume or options["config"] or options["profile"]:
            return resolve_train_config(options["config"], options["profile"], overrides)

        run_dir = _run_dir_of(resume)
        base = checkpoint_meta(resume)["config"]
        if (run_dir / MANIFEST_NAME).is_file():
            manifest = RunManifest.read(run_dir)
            base["dataset"] = manifest.dataset_paths[0] if manifest.dataset_paths else None
        base["output"] = str(run_dir)
        merged = deep_merge(base, {k: v for k, v in overrides.items() if v is not None})
        cfg = load_train_config(merged)
        return cfg, {"dataset": merged.get("dataset"), "output": merged["output"]}

    def run(self, **options):
        cfg, paths = self._resolve(options)
        if not paths["dataset"]:
            raise ConfigError("No dataset given; pass --dataset or set it in the config")
        output = Path(
            paths["output"] or default_run_dir(f"train-{cfg.variant.value}-seed{cfg.seed}")
        )

        if options["resume"] and cfg.workers > 0:
            self.warn("Prefetch workers restart their patch streams; resumed batches will differ")

        dataset = UnpairedDataset.load(paths["dataset"], lr_prescale=cfg.lr_prescale)
        RunManifest(
            command="train",
            output_dir=str(output),
            seed=cfg.seed,
            config_path=options["config"] or "",
            dataset_paths=[str(paths["dataset"])],
        ).write(resolved_config={**cfg.to_dict(), "dataset": str(paths["dataset"]), "output": str(output)})

        self.stdout.write(
            f"Training variant {cfg.variant.value} for {cfg.total_iters} iterations into {output}"
        )
        artifacts = run_training(
            cfg,
            dataset,
            output,
            resume=options["resume"],
            progress=options["verbosity"] > 1,
        )
        self.success(f"Final checkpoint: {artifacts.final_checkpoint}")
        if artifacts.best_checkpoint:
            self.success(f"Best checkpoint: {artifacts.best_checkpoint}")
