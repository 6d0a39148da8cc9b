"""Management command to score SR results against references."""

from pathlib import Path

from apps.core.commands import RunCommand
from apps.core.manifest import RunManifest
from apps.core.utils import write_json
from apps.evaluation.metrics import bicubic_baseline, evaluate_directories


class Command(RunCommand):
    help = "Compute per-image and mean PSNR/SSIM of results against references"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--results", required=True)
        parser.add_argument("--references", required=True)
        parser.add_argument("--output", help="Metric report JSON (default: <results>/eval/metrics.json)")
        parser.add_argument("--suffix", default="", help="Stripped from result stems, e.g. _sr")
        parser.add_argument("--crop", type=int, default=0, help="Border pixels to ignore")
        parser.add_argument(
            "--raw",
            action="store_true",
            help="Score float rasters without 8-bit quantization",
        )
        parser.add_argument(
            "--baseline", metavar="LR_DIR", help="Also score bicubic upscaling of LR_DIR"
        )
        parser.add_argument("--scale", type=int, choices=[2, 4], default=4)

    def run(self, **options):
        quantized = not options["raw"]
        report = evaluate_directories(
            options["results"],
            options["references"],
            quantized=quantized,
            crop=options["crop"],
            suffix=options["suffix"],
        )
        payload = report.to_dict()
        self.success(f"PSNR {report.psnr_db:.3f} dB, SSIM {report.ssim:.4f}")

        if options["baseline"]:
            baseline = bicubic_baseline(
                options["baseline"],
                options["references"],
                options["scale"],
                quantized=quantized,
                crop=options["crop"],
            )
            payload["baseline"] = baseline.to_dict()
            self.stdout.write(
                f"Bicubic baseline: PSNR {baseline.psnr_db:.3f} dB, SSIM {baseline.ssim:.4f}"
            )

        output = Path(options["output"] or Path(options["results"]) / "eval" / "metrics.json")
        write_json(output, payload)
        RunManifest(
            command="eval",
            output_dir=str(output.parent),
            seed=options["seed"] or 0,
            dataset_paths=[options["results"], options["references"]],
        ).write(
            resolved_config={
                "results": options["results"],
                "references": options["references"],
                "output": str(output),
                "suffix": options["suffix"],
                "crop": options["crop"],
                "quantized": quantized,
                "baseline": options["baseline"] or "",
                "scale": options["scale"],
            }
        )
        self.success(f"Wrote {output}")
