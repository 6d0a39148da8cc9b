"""Management command to synthesise an unpaired dataset from HR images.

Every LR image is ``synth_degrade(predetermined_downscale(hr))`` with
degradation parameters drawn per image. Rerunning with the same seed and
sources reproduces the dataset byte for byte.
"""

import logging
from pathlib import Path

from apps.core.commands import RunCommand
from apps.core.exceptions import ConfigError, DatasetError
from apps.core.manifest import RunManifest
from apps.core.utils import read_json
from apps.imaging.datasets import build_unpaired_dataset
from apps.imaging.files import list_images, read_manifest
from apps.imaging.serializers import DegradationRangesSerializer

logger = logging.getLogger(__name__)


class Command(RunCommand):
    help = "Build an unpaired LR/HR dataset from a directory of HR PNGs"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--source", required=True, help="Directory of HR PNGs")
        parser.add_argument("--output", required=True, help="Dataset root to write")
        parser.add_argument("--scale", type=int, default=2, choices=[2, 4])
        parser.add_argument(
            "--multiplicity",
            type=int,
            default=1,
            help="Degraded LR images generated per HR image (default: 1)",
        )
        parser.add_argument(
            "--holdout",
            type=int,
            default=0,
            help="HR sources kept aside as validation pairs (default: 0)",
        )
        parser.add_argument(
            "--options",
            help="JSON file with degradation ranges; flags below override it",
        )
        parser.add_argument("--noise-sigma", type=float, nargs=2, metavar=("LOW", "HIGH"))
        parser.add_argument("--blur-sigma", type=float, nargs=2, metavar=("LOW", "HIGH"))
        parser.add_argument("--motion-prob", type=float)
        parser.add_argument("--shift-max", type=float)

    def run(self, **options):
        source = Path(options["source"])
        if not source.is_dir():
            raise DatasetError(f"Source directory not found: {source}", path=str(source))
        if options["multiplicity"] < 1:
            raise ConfigError("--multiplicity must be at least 1")

        ranges_data = read_json(options["options"]) if options["options"] else {}
        for flag in ("noise_sigma", "blur_sigma", "motion_prob", "shift_max"):
            if options[flag] is not None:
                ranges_data[flag] = options[flag]

        serializer = DegradationRangesSerializer(data=ranges_data)
        if not serializer.is_valid():
            raise ConfigError("Invalid degradation ranges", **serializer.errors)
        ranges = serializer.save()

        seed = options["seed"] if options["seed"] is not None else 0
        sources = list_images(source)
        root = build_unpaired_dataset(
            sources,
            options["output"],
            scale=options["scale"],
            ranges=ranges,
            multiplicity=options["multiplicity"],
            holdout=options["holdout"],
            seed=seed,
            progress=options["verbosity"] > 1,
        )
        RunManifest(
            command="make_dataset",
            output_dir=str(root),
            seed=seed,
            config_path=options["options"] or "",
            dataset_paths=[str(source)],
        ).write(resolved_config=serializer.data)

        self.success(f"Wrote dataset with {len(read_manifest(root))} LR images to {root}")
