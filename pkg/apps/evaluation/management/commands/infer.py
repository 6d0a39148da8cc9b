"""Management command to upscale LR images with a trained checkpoint."""

import logging
from pathlib import Path

from apps.core.commands import RunCommand
from apps.core.exceptions import ConfigError
from apps.core.manifest import RunManifest
from apps.core.utils import resolve_device
from apps.evaluation.inference import infer, self_ensemble_infer
from apps.imaging.files import list_images, load_image, save_image
from apps.training.config import Variant
from apps.training.state import load_bundle

logger = logging.getLogger(__name__)


def input_images(path):
    path = Path(path)
    return [path] if path.is_file() else list_images(path)


def uses_correction(meta):
    """Models trained on G_Y↓X outputs are tested with U alone."""
    return meta.get("config", {}).get("variant") != Variant.TRAIN_ON_DEGRADED.value


class Command(RunCommand):
    help = "Super-resolve LR images with U ∘ G_XY↓ from a checkpoint"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--checkpoint", required=True)
        parser.add_argument("--input", required=True, help="PNG file or directory of PNGs")
        parser.add_argument("--output", required=True, help="Directory for SR outputs")
        parser.add_argument(
            "--ensemble", action="store_true", help="Average over the 8 flips/rotations"
        )
        parser.add_argument("--scale", type=int, choices=[2, 4], help="Expected scale")
        parser.add_argument("--suffix", default="_sr", help="Appended to output stems")
        parser.add_argument("--device")

    def run(self, **options):
        sources = input_images(options["input"])
        bundle, meta = load_bundle(
            options["checkpoint"], device=resolve_device(options["device"])
        )
        if options["scale"] and options["scale"] != bundle.scale:
            raise ConfigError(
                f"Checkpoint is trained for ×{bundle.scale}, not ×{options['scale']}"
            )
        bundle.eval()

        skip_correction = not uses_correction(meta)
        upscale = self_ensemble_infer if options["ensemble"] else infer
        out_dir = Path(options["output"])
        for source in sources:
            result = upscale(bundle, load_image(source), skip_correction)
            save_image(out_dir / f"{source.stem}{options['suffix']}.png", result)
            logger.debug(f"Upscaled {source}")

        RunManifest(
            command="infer",
            output_dir=str(out_dir),
            seed=options["seed"] or 0,
            config_path=options["checkpoint"],
            dataset_paths=[str(options["input"])],
        ).write(
            resolved_config={
                **meta.get("config", {}),
                "checkpoint": options["checkpoint"],
                "input": str(options["input"]),
                "output": str(out_dir),
                "scale": bundle.scale,
                "ensemble": options["ensemble"],
                "suffix": options["suffix"],
                "skip_correction": skip_correction,
                "device": options["device"] or "",
            }
        )
        self.success(f"Wrote {len(sources)} images to {out_dir}")
