"""Run manifests: what produced a run directory."""

from dataclasses import asdict, dataclass, field
from pathlib import Path

from django.conf import settings

from .utils import read_json, version_stamp, write_json

MANIFEST_NAME = "manifest.json"
CONFIG_SNAPSHOT_NAME = "config.json"


@dataclass
class RunManifest:
    """
    Provenance of a run. Every run directory holds the manifest next to the
    resolved config snapshot it was produced with.
    """

    command: str
    output_dir: str
    seed: int
    config_path: str = ""
    dataset_paths: list = field(default_factory=list)
    version: str = ""

    def __post_init__(self):
        if not self.version:
            self.version = version_stamp()

    def write(self, resolved_config=None):
        out = Path(self.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / MANIFEST_NAME, asdict(self))
        if resolved_config is not None:
            write_json(out / CONFIG_SNAPSHOT_NAME, resolved_config)
        return out / MANIFEST_NAME

    @classmethod
    def read(cls, run_dir):
        return cls(**read_json(Path(run_dir) / MANIFEST_NAME))


def default_run_dir(name):
    """Directory under SR_OUTPUT_ROOT for a named run."""
    return Path(settings.OUTPUT_ROOT) / name
