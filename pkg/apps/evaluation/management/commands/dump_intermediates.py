"""Management command to write the intermediate images of both pipeline paths."""

from apps.core.commands import RunCommand
from apps.core.manifest import RunManifest
from apps.core.utils import resolve_device
from apps.evaluation.dumps import dump_intermediates
from apps.imaging.files import load_image
from apps.training.state import load_bundle


class Command(RunCommand):
    help = "Dump x, G_XY↓(x), U(G_XY↓(x)), y, y↓, G_Y↓X(y↓), ẙ↓ and U(ẙ↓) as PNGs"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--checkpoint", required=True)
        parser.add_argument("--lr", required=True, help="Real LR image x")
        parser.add_argument("--hr", required=True, help="HR image y, divisible by the scale")
        parser.add_argument("--output", required=True)
        parser.add_argument("--device")

    def run(self, **options):
        bundle, meta = load_bundle(options["checkpoint"], device=resolve_device(options["device"]))
        bundle.eval()
        noise_seed = options["seed"] or 0
        paths = dump_intermediates(
            bundle,
            load_image(options["lr"]),
            load_image(options["hr"]),
            options["output"],
            noise_seed=noise_seed,
        )
        RunManifest(
            command="dump_intermediates",
            output_dir=options["output"],
            seed=noise_seed,
            config_path=options["checkpoint"],
            dataset_paths=[options["lr"], options["hr"]],
        ).write(
            resolved_config={
                **meta.get("config", {}),
                "checkpoint": options["checkpoint"],
                "lr": options["lr"],
                "hr": options["hr"],
                "output": options["output"],
                "noise_seed": noise_seed,
                "device": options["device"] or "",
            }
        )
        for path in paths:
            self.stdout.write(str(path))
        self.success(f"Wrote {len(paths)} images to {options['output']}")
